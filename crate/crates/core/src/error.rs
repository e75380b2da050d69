use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("input contains no data rows: {0}")]
    EmptyInput(PathBuf),

    #[error("expected header `user_id,basket_id,item_id`, found `{0}`")]
    BadHeader(String),

    #[error("test fraction {fraction} leaves an empty side for {baskets} baskets")]
    DegenerateSplit { fraction: f64, baskets: usize },

    #[error("log has no basket with at least two items")]
    NoEligibleBasket,

    #[error("cannot build a sampler over an empty vocabulary")]
    EmptyVocabulary,

    #[error("cannot exclude the only id in a sampling domain of size 1")]
    ExclusionImpossible,

    #[error("{kind} id {id} out of range (count {count})")]
    IdOutOfRange {
        kind: &'static str,
        id: u32,
        count: usize,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("no triples to train on")]
    EmptyTriples,

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model contains non-finite entries after epoch {epoch}")]
    NonFiniteModel { epoch: usize },

    #[error("requested k = {0}, must be at least 1")]
    InvalidK(usize),

    #[error("basket is empty")]
    EmptyBasket,

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("no evaluable baskets (all were skipped)")]
    NoEvaluableBaskets,

    #[error("catalog is empty")]
    EmptyCatalog,

    #[error("index layout {index:?} does not match query layout {query:?}")]
    LayoutMismatch { index: String, query: String },

    #[error("bad post-process config: {0}")]
    BadPostProcess(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
