use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },

    #[error("depth {depth} out of range for a tree over {p} variables")]
    DepthOutOfRange { depth: usize, p: usize },

    #[error("unknown context {context:?} at depth {depth}")]
    UnknownContext { depth: usize, context: Vec<usize> },

    #[error("tree has no parameters")]
    MissingParams,

    #[error("invalid staged tree: {0}")]
    InvalidTree(String),

    #[error("empty stage {stage} at depth {depth}, smoothing required")]
    EmptyStage { depth: usize, stage: u32 },

    #[error("variables do not match: {0}")]
    VariableMismatch(String),

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("graph is not acyclic")]
    Cyclic,

    #[error("order is not topological for the graph: edge {0} -> {1} is reversed")]
    NotTopological(String, String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("too many variables: {p} exceeds the limit of {limit}")]
    TooManyVariables { p: usize, limit: usize },

    #[error("stratum too large: {contexts} contexts")]
    StratumTooLarge { contexts: usize },

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("no rows")]
    NoRows,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty list of graphs")]
    EmptyGraphList,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
