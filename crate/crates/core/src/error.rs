use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Poisson source is not neutral: net charge {net:.3e} exceeds tolerance {tol:.3e}")]
    NonNeutralSource { net: f64, tol: f64 },

    #[error("preconditioner shift must be positive, got {0}")]
    NonPositiveShift(f64),

    #[error("compensating charge width {width} of species `{label}` is below twice the grid spacing ({min})")]
    WidthTooSmall { label: String, width: f64, min: f64 },

    #[error("Gram matrix is singular (condition number {cond:.3e})")]
    SingularGram { cond: f64 },

    #[error("electronic solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("density-matrix solver did not converge after {iterations} iterations (last free-energy change {delta:.3e})")]
    DmNotConverged { iterations: usize, delta: f64 },

    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),

    #[error("hydrogen positions are collinear with the oxygen; the canonical frame is undefined")]
    CollinearGeometry,

    #[error("degenerate geometry: bond length below 1e-6 Bohr")]
    DegenerateGeometry,

    #[error("snapshot matrix is empty")]
    EmptySnapshot,

    #[error("cannot place {n_occ} electron pairs in {r} states")]
    InfeasibleFilling { n_occ: usize, r: usize },

    #[error("forces are missing for the current step")]
    MissingForces,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("bad magic bytes in binary file")]
    BadMagic,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("file is truncated")]
    TruncatedFile,

    #[error("basis orthonormality lost (max deviation {0:.3e})")]
    OrthonormalityLost(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("at MD step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("at parameters (s1={s1}, s2={s2}, s_theta={s_theta}): {source}")]
    AtParameters {
        s1: f64,
        s2: f64,
        s_theta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Innermost error, skipping step and parameter context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } | Error::AtParameters { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_not_converged(&self) -> bool {
        matches!(
            self.root(),
            Error::NotConverged { .. } | Error::DmNotConverged { .. }
        )
    }
}
