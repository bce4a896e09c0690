use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model dump is not well-formed JSON or a node is missing a required key.
    #[error("model parse error at {path}: {message}")]
    Parse { path: String, message: String },

    /// The dump is well-formed but violates the schema (unknown feature, bad split type, ...).
    #[error("model schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// Tabular input could not be ingested.
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    /// A row or dataset does not fit the model (missing column, NaN value, ...).
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A merged root-to-leaf path has more conditions than the configured mask width.
    #[error("tree {tree}, leaf node {leaf}: path has {conditions} merged conditions, capacity is {capacity}")]
    Capacity {
        tree: usize,
        leaf: u32,
        conditions: usize,
        capacity: usize,
    },

    #[error("degenerate model: tree {tree}, node {node}: {message}")]
    DegenerateModel {
        tree: usize,
        node: u32,
        message: String,
    },

    #[error("non-finite metric value in tree {tree}, leaf node {leaf}, consumer mask {mask:#b}")]
    Numeric { tree: usize, leaf: u32, mask: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
