use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix must be at least as tall as it is wide ({rows}x{cols})")]
    NotTall { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("{rows} rows cannot feed {domains} domains of {cols} columns each")]
    TooShort {
        rows: usize,
        cols: usize,
        domains: usize,
    },
    #[error("cannot split {rows} rows into {parts} parts")]
    Partition { rows: usize, parts: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("unknown topology preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid domain id {0}")]
    InvalidDomain(usize),
    #[error("invalid send: {0}")]
    InvalidSend(String),
    #[error("invalid model parameters: {0}")]
    Model(String),
    #[error("invalid run: {0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, Error>;
