use thiserror::Error;

/// Errors raised across the lattice, band, optics and propagation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("region map does not match lattice: {0}")]
    DimensionMismatch(String),

    #[error("column {column} is not covered by any region")]
    RegionGap { column: usize },

    #[error("columns {start}..{end} are claimed by more than one region")]
    RegionOverlap { start: usize, end: usize },

    #[error("hopping must be positive, got kappa = {0}")]
    NonPositiveHopping(f64),

    #[error("invalid GRIN profile: {0}")]
    InvalidGrin(String),

    #[error("excitation number must be at least 1")]
    ZeroExcitation,

    #[error("dense diagonalisation of dimension {dim} exceeds the cap of {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("energy {energy} sits on the atomic pole of the transmitted region")]
    AtomicPole { energy: f64 },

    #[error("transverse momentum {ky} puts the kernel on the zone edge")]
    ZoneEdge { ky: f64 },

    #[error("no refraction angle for an evanescent transmitted mode")]
    Evanescent,

    #[error("reflection denominator vanishes (k1x + k2x = 0 mod 2pi)")]
    SingularMatching,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown region '{0}'")]
    UnknownRegion(String),

    #[error("no eigenvalue within {window} of target energy {target} (nearest {nearest})")]
    NoEigenvalueInWindow { target: f64, window: f64, nearest: f64 },

    #[error("propagator: {0}")]
    Propagation(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("insufficient population in mask: {0}")]
    InsufficientPopulation(String),

    #[error("boundary guard breached: population {population:.3e} near open edge at t = {time}")]
    BoundaryGuard { population: f64, time: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("no resonance peak found in scan")]
    NoPeak,

    #[error("ray becomes evanescent in layer starting at x = {x}")]
    EvanescentRay { x: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
