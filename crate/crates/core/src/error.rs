use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown override key `{0}`")]
    UnknownKey(String),

    #[error("potential is self-consistent; the field must come from the PIC solver")]
    SelfConsistentPotential,

    #[error("non-finite value at particle {particle}: {what}")]
    NonFinite { particle: usize, what: &'static str },

    #[error("non-finite loss at inner iterate {iterate} (particle {particle})")]
    NonFiniteIterate { iterate: usize, particle: usize },

    #[error("non-finite gradient entry {0}")]
    NonFiniteGradient(usize),

    #[error("matrix is singular or not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("charge neutrality violated: mean density {mean} differs from background {background}")]
    Neutrality { mean: f64, background: f64 },

    #[error("position {0} lies outside the periodic domain")]
    Unwrapped(f64),

    #[error("{0} oracle is not registered for this preset")]
    MissingOracle(&'static str),

    #[error("empty sample set")]
    Empty,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
