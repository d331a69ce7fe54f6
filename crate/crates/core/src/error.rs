use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range (expected {expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("total radiance is zero, polarization state is undefined")]
    ZeroRadiance,

    #[error("image shapes differ: {a:?} vs {b:?} (width, height)")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },

    #[error("polarizer angles differ: {a} rad vs {b} rad")]
    AngleMismatch { a: f64, b: f64 },

    #[error("design matrix is rank deficient for polarizer angles {angles_deg:?} deg")]
    RankDeficient { angles_deg: Vec<f64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("DoLP curve is degenerate (L_R/L_E = 1): polarization cancels at every zenith angle")]
    DegenerateCurve,

    #[error("mask is empty")]
    EmptyMask,

    #[error("normal maps are in different spaces: {a:?} vs {b:?}")]
    SpaceMismatch {
        a: crate::estimation::NormalSpace,
        b: crate::estimation::NormalSpace,
    },

    #[error("PFM: {0}")]
    Pfm(String),

    #[error("OBJ line {line}: {msg}")]
    Obj { line: usize, msg: String },

    #[error("PNG: {0}")]
    Png(String),

    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }

    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }
}
