use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("t = {t} outside admissible interval [{lo}, {hi}]")]
    InadmissibleT { t: f64, lo: f64, hi: f64 },

    #[error("eta = {0} outside (0, ln 2)")]
    EtaOutOfRange(f64),

    #[error("KL support violation: p[{index}] > 0 but q[{index}] = 0")]
    SupportViolation { index: usize },

    #[error("sample size {n} exceeds the cap of {cap}")]
    SampleSizeCap { n: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("effective sample size {ess:.1} below floor {floor}")]
    LowEffectiveSampleSize { ess: f64, floor: f64 },

    #[error("cell (N = {n}, gamma = {gamma}): {source}")]
    Cell {
        n: usize,
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("graph contains a directed cycle")]
    Cyclic,

    #[error("node {node} has in-degree {degree}, bound is {bound}")]
    InDegree {
        node: usize,
        degree: usize,
        bound: usize,
    },

    #[error("{0} nodes exceeds the limit of {1}")]
    TooManyNodes(usize, usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
