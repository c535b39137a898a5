use crate::domain::TaskId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid task set: {0}")]
    InvalidTaskSet(String),
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("schedule deadlocked with {remaining} steps unresolved")]
    Deadlock { remaining: usize },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("non-positive duration {0} for task {1}")]
    NonPositiveDuration(f64, TaskId),
    #[error("task {0} unknown to this model")]
    UnknownTask(TaskId),
    #[error("variance estimate undefined: alpha = {0} <= 1")]
    UndefinedVariance(f64),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("insufficient demonstrations for task {task}: {count} < {required}")]
    InsufficientDemonstrations {
        task: TaskId,
        count: usize,
        required: usize,
    },
    #[error("training did not converge: validation loss {loss:.5} above {threshold:.5}")]
    NonConvergence { loss: f64, threshold: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("live session aborted: {0}")]
    LiveAborted(String),
    #[error("plan is infeasible")]
    InfeasiblePlan,
    #[error("artifact version {found} not supported (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
