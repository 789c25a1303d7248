use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid timestep: {0}")]
    Timestep(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("training diverged at iteration {iter}: loss {loss} exceeded 10x initial loss {initial} for 100 consecutive steps")]
    Divergence { iter: u64, loss: f64, initial: f64 },
    #[error("backward called with a tape that does not belong to this model: {0}")]
    CallOrder(String),
    #[error("negative condition equals positive condition at row {row}")]
    SameCondition { row: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl core::fmt::Display,
        actual: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
