use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    /// No allocation satisfies the packet and energy constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The closed-form branch was requested while the energy budget is
    /// below the minimum-time energy.
    #[error("minimum-time allocation needs {required} J but the budget is {budget} J")]
    BudgetBelowMinimum { required: f64, budget: f64 },

    #[error("no strictly feasible point found (best max constraint value {best_violation:e})")]
    InfeasibleSubproblem { best_violation: f64 },

    #[error("solver stalled: {reason} (outer {outer}, newton {newton}, decrement {decrement:e})")]
    SolverStall {
        reason: String,
        outer: usize,
        newton: usize,
        decrement: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::InvalidScenario(_) | Error::BudgetBelowMinimum { .. } => {
                2
            }
            Error::SolverStall { .. } | Error::InfeasibleSubproblem { .. } | Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}
