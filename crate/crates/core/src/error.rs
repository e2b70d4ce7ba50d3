use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error("segmenter for `{lang}` failed: {message}")]
    Segmenter { lang: String, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("stage `{stage}` failed{}: {source}", shard.as_ref().map(|s| format!(" on shard `{s}`")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        shard: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Tags the error with the pipeline stage and shard it came from.
    pub fn in_stage(self, stage: &'static str, shard: Option<&str>) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                shard: shard.map(str::to_owned),
                source: Box::new(e),
            },
        }
    }

    /// Process exit code for this error class: 1 validation, 2 I/O, 3 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Invariant(_) => 3,
            Error::Parse { .. } | Error::Validation(_) | Error::Segmenter { .. } => 1,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
