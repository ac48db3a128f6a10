//! On-disk layout of a result directory.
//!
//! ```text
//! manifest.json
//! summary.tsv
//! <dataset>.tsv
//! snapshots/index.tsv
//! snapshots/<label>_<frame>.bin
//! checksums.sha256
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Bound, Comparison, Dataset, ExperimentResult};
use crate::error::{Error, Result};
use crate::propagator::write_snapshot;

pub const CHECKSUM_FILE: &str = "checksums.sha256";

pub fn write_dataset<W: Write>(mut w: W, d: &Dataset) -> Result<()> {
    writeln!(w, "{}", d.columns.join("\t"))?;
    for row in &d.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(mut w: W, rows: &[Comparison]) -> Result<()> {
    writeln!(w, "quantity\tpredicted\tmeasured\tdiscrepancy\ttolerance\tbound\tpass")?;
    for c in rows {
        let tol = c.tolerance.map_or("-".to_string(), |t| format!("{t:.6e}"));
        let bound = match c.bound {
            Bound::Band => "band",
            Bound::AtMost => "at_most",
        };
        let pass = c.pass().map_or("-", |p| if p { "yes" } else { "no" });
        writeln!(
            w,
            "{}\t{:.12e}\t{:.12e}\t{:.12e}\t{}\t{}\t{}",
            c.quantity, c.predicted, c.measured, c.discrepancy, tol, bound, pass
        )?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Write every artifact of `result` under `dir`, then the checksum file.
/// Returns the files written, checksum file last.
pub fn write_result(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for d in &result.datasets {
        let path = dir.join(format!("{}.tsv", d.name));
        let mut w = create(&path)?;
        write_dataset(&mut w, d)?;
        w.flush()?;
        files.push(path);
    }
    if !result.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        let index_path = snap_dir.join("index.tsv");
        let mut index = create(&index_path)?;
        writeln!(index, "file\tlabel\tframe\ttime\tnx\tny")?;
        for series in &result.snapshots {
            for (i, frame) in series.frames.iter().enumerate() {
                let name = format!("{}_{i:05}.bin", series.label);
                let path = snap_dir.join(&name);
                let mut w = create(&path)?;
                write_snapshot(&mut w, frame, series.nx, series.ny)?;
                w.flush()?;
                writeln!(index, "{name}\t{}\t{i}\t{:.12e}\t{}\t{}", series.label, frame.time, series.nx, series.ny)?;
                files.push(path);
            }
        }
        index.flush()?;
        files.push(index_path);
    }
    let summary = dir.join("summary.tsv");
    let mut w = create(&summary)?;
    write_summary(&mut w, &result.comparisons)?;
    w.flush()?;
    files.push(summary);
    let manifest = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&result.manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&manifest, text + "\n")?;
    files.push(manifest);
    let sums = dir.join(CHECKSUM_FILE);
    write_checksums(dir, &files, &sums)?;
    files.push(sums);
    Ok(files)
}

fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub fn write_checksums(dir: &Path, files: &[PathBuf], out: &Path) -> Result<()> {
    let mut w = create(out)?;
    for f in files {
        writeln!(w, "{}  {}", digest(f)?, relative(dir, f))?;
    }
    w.flush()?;
    Ok(())
}

/// Check every entry of the checksum file; returns the mismatching paths.
pub fn verify_checksums(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join(CHECKSUM_FILE))?;
    let mut bad = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| Error::Config(format!("malformed checksum line '{line}'")))?;
        match digest(&dir.join(name)) {
            Ok(h) if h == hash => {}
            _ => bad.push(name.to_string()),
        }
    }
    Ok(bad)
}
