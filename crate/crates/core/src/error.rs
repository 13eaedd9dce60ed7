use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("columns not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),

    /// `A H H^H A^H` is singular or too badly conditioned to invert.
    #[error("rank-deficient Gram matrix for device ({cluster}, {device}), condition number {condition:.3e}")]
    RankDeficient {
        cluster: usize,
        device: usize,
        condition: f64,
    },

    /// An effective channel lost column rank (sigma_min < 1e-12 sigma_max).
    #[error("degenerate effective channel for device ({cluster}, {device})")]
    DegenerateChannel { cluster: usize, device: usize },

    #[error("unknown scenario `{name}` (valid: {valid})")]
    UnknownScenario { name: String, valid: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by a bad scenario or config rather than numerics or I/O.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::UnknownScenario { .. } | Error::Config(_))
    }
}
