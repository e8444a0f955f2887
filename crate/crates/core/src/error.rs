use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: String, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too short: {0}")]
    InputTooShort(String),

    #[error("reconstruction not exact: {0}")]
    NotCola(String),

    #[error("non-causal layer: {0}")]
    NonCausal(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("infeasible RT60: {0}")]
    InfeasibleRt60(String),

    #[error("silent signal: {0}")]
    Silent(String),

    #[error("decay too short: {0}")]
    DecayTooShort(String),

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("malformed wav: {0}")]
    WavFormat(String),

    #[error("bad magic in weight file")]
    BadMagic,

    #[error("CRC mismatch in weight file (stored {stored:08x}, computed {computed:08x})")]
    Crc { stored: u32, computed: u32 },

    #[error("tensor `{name}` has shape {found:?} in file but the model expects {expected:?}")]
    WeightShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("malformed weight file: {0}")]
    WeightFormat(String),

    #[error("unknown group: {0}")]
    UnknownGroup(String),

    #[error("run config: {0}")]
    RunConfig(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            detail: detail.into(),
        }
    }

    /// Stable machine-readable code, used by the CLI's `error: <code>: <message>` line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InputTooShort(_) => "input-too-short",
            Error::NotCola(_) => "not-cola",
            Error::NonCausal(_) => "non-causal",
            Error::NonFinite(_) => "non-finite",
            Error::InfeasibleRt60(_) => "infeasible-rt60",
            Error::Silent(_) => "silent",
            Error::DecayTooShort(_) => "decay-too-short",
            Error::UnsupportedEncoding(_) => "unsupported-encoding",
            Error::WavFormat(_) => "wav-format",
            Error::BadMagic => "bad-magic",
            Error::Crc { .. } => "crc",
            Error::WeightShape { .. } => "weight-shape",
            Error::WeightFormat(_) => "weight-format",
            Error::UnknownGroup(_) => "unknown-group",
            Error::RunConfig(_) => "run-config",
            Error::Manifest(_) => "manifest",
            Error::Io(_) => "io",
        }
    }
}
