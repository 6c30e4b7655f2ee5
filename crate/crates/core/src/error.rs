use thiserror::Error;

/// Errors surfaced by the engine library.
#[derive(Debug, Clone, Error)]
pub enum XapagyError {
    #[error("unknown word `{word}` at {position}")]
    UnknownWord { word: String, position: String },
    #[error("unknown {kind} id `{id}`")]
    UnknownSymbol { kind: &'static str, id: String },
    #[error("syntax error at {position}: {message}")]
    Syntax { position: String, message: String },
    #[error("unknown macro `{name}`")]
    UnknownMacro { name: String },
    #[error("no candidate instance for reference `{reference}` in scene")]
    NoCandidate { reference: String },
    #[error("incompatible attribute: is-a would floor `{attribute}`; use `changes` instead")]
    IncompatibleAttribute { attribute: String },
    #[error("scenes do not change")]
    SceneChange,
    #[error("stale HLS: template references an expired focus instance")]
    StaleHls,
    #[error("domain file error at line {line}: {message}")]
    DomainFile { line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown mood key `{0}`")]
    UnknownMoodKey(String),
    #[error("$.// with no prior quote prefix")]
    NoQuotePrefix,
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, XapagyError>;
