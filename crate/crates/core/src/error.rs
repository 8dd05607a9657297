use thiserror::Error;

use crate::data::{Arm, Role};

pub type Result<T, E = CcmError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcmError {
    #[error("schema error: no column `{column}` for role {role}")]
    MissingColumn { role: Role, column: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("exclusivity violation at row {row}: t1 and t2 are both 1")]
    Exclusivity { row: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("singular design: {}", describe_singular(.columns, .arm))]
    Singular {
        columns: Vec<String>,
        arm: Option<Arm>,
    },

    #[error("degenerate estimand: {0}; run the denominator gate before estimating")]
    DegenerateEstimand(String),

    #[error("denominator gate failed: {0}")]
    GateFailed(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("division-domain error: {0}")]
    DivisionDomain(String),

    #[error("unreliable resampling: only {valid} of {requested} replicates were valid")]
    UnreliableResampling { valid: usize, requested: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation aborted: {failed} of {requested} replicates failed")]
    SimulationAborted { failed: usize, requested: usize },
}

fn describe_singular(columns: &[String], arm: &Option<Arm>) -> String {
    match arm {
        Some(arm) => format!(
            "{arm} mediator constant (collinear column(s): {})",
            columns.join(", ")
        ),
        None => format!("collinear column(s): {}", columns.join(", ")),
    }
}

impl CcmError {
    pub fn is_singular(&self) -> bool {
        matches!(self, CcmError::Singular { .. })
    }

    pub(crate) fn singular_arm(arm: Arm, column: impl Into<String>) -> Self {
        CcmError::Singular {
            columns: vec![column.into()],
            arm: Some(arm),
        }
    }
}
