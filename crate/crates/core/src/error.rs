use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("unknown node token `{0}` in label file")]
    UnknownNode(String),
    #[error("node `{node}` labelled both `{first}` and `{second}`")]
    ConflictingLabel {
        node: String,
        first: String,
        second: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no TRAIN nodes with known labels")]
    NoTrainNodes,
    #[error("empty test set, macro-F1 is undefined")]
    EmptyTestSet,
    #[error("numerical error at {site}: {msg}")]
    Numerical { site: String, msg: String },
    #[error("sufficient statistics inconsistent: {0}")]
    Consistency(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn numerical(site: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            site: site.into(),
            msg: msg.into(),
        }
    }
}
