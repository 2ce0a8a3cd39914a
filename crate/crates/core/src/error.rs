use std::path::PathBuf;

use crate::session::{Emotion, Modality};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid emotion code {0} (expected 0..=6)")]
    InvalidCode(i64),

    #[error("unknown emotion name `{0}`")]
    UnknownEmotion(String),

    #[error("unknown modality token `{0}`")]
    UnknownModality(String),

    #[error("modality {0} carries no tracked-point geometry")]
    NoGeometry(Modality),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("angle undefined for coincident points ({x}, {y})")]
    DegeneratePair { x: f64, y: f64 },

    #[error("{}:{row}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}:{row}: ragged row of width {found}, expected {expected}", path.display())]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("vocabulary: {0}")]
    Vocabulary(String),

    #[error("region: {0}")]
    Region(String),

    #[error("parameter: {0}")]
    Parameter(String),

    #[error("training needs at least two classes, got histogram {}", format_histogram(.histogram))]
    DegenerateTraining { histogram: Vec<(Emotion, usize)> },

    #[error("shape mismatch: expected dimension {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("session has no frames")]
    EmptySession,

    #[error("every modality abstained; no decision possible")]
    NoDecision,

    #[error("invalid modality decision: {0}")]
    InvalidDecision(String),

    #[error("negative time measurement {0}")]
    NegativeTime(f64),

    #[error("cannot split {items} items into {k} folds")]
    Fold { items: usize, k: usize },

    #[error("benchmark: {0}")]
    Bench(String),

    #[error("model file: {0}")]
    Model(String),
}

fn format_histogram(histogram: &[(Emotion, usize)]) -> String {
    let parts: Vec<String> = histogram
        .iter()
        .map(|(e, n)| format!("{}={}", e.name(), n))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
