use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A model function returned NaN or infinity.
    #[error("{function} is not finite at {point}")]
    Evaluation { function: &'static str, point: String },

    #[error("characteristic speed is not finite or not positive at x = {x}")]
    Characteristic { x: f64 },

    #[error("s = {s} is outside the curve range [{lo}, {hi}]")]
    Range { s: f64, lo: f64, hi: f64 },

    /// The solution over a determinate set diverged.
    #[error("prediction failed: {0}")]
    Prediction(String),

    #[error("control failed: {0}")]
    Control(String),

    #[error("observer failed: {0}")]
    Observer(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
