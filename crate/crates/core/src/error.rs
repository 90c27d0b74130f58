use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("singular matrix{}: condition number {cond:e}", step_suffix(*.step))]
    Singular { step: Option<usize>, cond: f64 },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("backward reachable set is empty at step {step}: {reason}\n{trace}")]
    BrsEmpty {
        step: usize,
        reason: String,
        trace: String,
    },

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("training diverged at step {step}, epoch {epoch}: {detail}")]
    Training {
        step: usize,
        epoch: usize,
        detail: String,
    },

    #[error("non-finite state at step {0}")]
    NonFinite(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            got,
            context,
        })
    }
}
