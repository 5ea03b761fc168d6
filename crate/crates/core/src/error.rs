use thiserror::Error;

use crate::market::StudentId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible matching: {0}")]
    InfeasibleMatching(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "search space cap exceeded: {students} students / {schools} schools (limit {max_students} / {max_schools})"
    )]
    SearchSpaceExceeded { students: usize, schools: usize, max_students: usize, max_schools: usize },

    #[error("no movers in treated-post cell")]
    NoTreatedPostMovers,

    #[error("mover {0} has no subgroup probability")]
    MissingSubgroup(StudentId),

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("need at least 2 clusters, found {0}")]
    TooFewClusters(usize),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("equilibrium solver failed: {0}")]
    Solver(String),

    #[error("counterfactual rep {rep} (seed {seed}) failed: {source}")]
    Rep {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
