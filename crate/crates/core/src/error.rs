use thiserror::Error;

/// Errors raised anywhere in the model, inference, or simulation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocoError {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Input data violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A context slice of a joint density carried no mass.
    #[error("degenerate conditional at context index {context_index}")]
    DegenerateConditional { context_index: usize },

    /// A history had zero evidence under a conditional density.
    #[error("degenerate posterior: history has zero evidence")]
    DegeneratePosterior,

    /// Every particle assigned zero likelihood to the data.
    #[error("evidence collapse: all {particles} particle likelihoods vanished")]
    EvidenceCollapse { particles: usize },

    /// An eigensolver failed to reach the requested accuracy.
    #[error("eigendecomposition failed on axis {axis}: residual norm {residual:e}")]
    Eigen { axis: usize, residual: f64 },

    /// A kernel eigenvalue was more negative than rounding allows.
    #[error("kernel eigenvalue {value:e} is negative beyond tolerance")]
    NegativeEigenvalue { value: f64 },

    /// A paired oracle run does not follow the same user schedule.
    #[error("pairing mismatch at step {step}: {reason}")]
    Pairing { step: usize, reason: String },

    /// A failure inside the simulation loop, tagged with where it happened.
    #[error("at step t={t} (user {user_id}): {source}")]
    Simulation {
        t: usize,
        user_id: usize,
        #[source]
        source: Box<CocoError>,
    },
}

impl CocoError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CocoError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CocoError>;
