use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown dataset format `{0}` (expected `jsonl` or `tsv`)")]
    UnknownFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no token occurs at least {min_freq} time(s) in the corpus")]
    EmptyCorpus { min_freq: usize },

    #[error("class {class} has {available} examples but {required} are needed")]
    InsufficientExamples {
        class: String,
        available: usize,
        required: usize,
    },

    #[error("input already contains the mask token at position {0}")]
    MaskInInput(usize),

    #[error("position {pos} does not hold the mask token")]
    MaskPosition { pos: usize },

    #[error("sequence length {len} exceeds the model maximum {max_len}")]
    Length { len: usize, max_len: usize },

    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no examples for class {0}")]
    EmptyClass(usize),

    #[error("requested {requested} candidates but only {available} eligible tokens exist")]
    MTooLarge { requested: usize, available: usize },

    #[error("candidate set has {size} verbalizers, above the budget of {budget}")]
    Budget { size: u128, budget: u128 },

    #[error("label word `{0}` is not in the vocabulary")]
    UnknownWord(String),

    #[error("label word `{0}` is a special token")]
    SpecialWord(String),

    #[error("verbalizer classes have unequal word counts: {0:?}")]
    UnequalLengths(Vec<usize>),

    #[error("verbalizer covers {covered} classes but example needs class {class}")]
    MissingClass { class: usize, covered: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the user's configuration or input files
    /// rather than by a failure while running.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::UnknownFormat(_)
            | Error::Parse { .. }
            | Error::UnknownWord(_)
            | Error::SpecialWord(_)
            | Error::UnequalLengths(_)
            | Error::Budget { .. }
            | Error::MTooLarge { .. } => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
