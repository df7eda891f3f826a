use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("line {line}: {detail}")]
    ConfigSyntax { line: usize, detail: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {detail}")]
    InvalidValue { key: String, detail: String },

    #[error("unknown preset `{0}` (expected final, study, sm-baseline, tiny or ablate-tiny)")]
    UnknownPreset(String),

    #[error("{path}: not a checkpoint ({detail})")]
    NotCheckpoint { path: PathBuf, detail: String },

    #[error("{path}: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { path: PathBuf, stored: u32, computed: u32 },

    #[error("{path}: checkpoint format version {found}, this build reads version {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: malformed checkpoint: {detail}")]
    Malformed { path: PathBuf, detail: String },

    #[error("checkpoint was trained for x{checkpoint}, requested x{requested}")]
    ScaleMismatch { checkpoint: usize, requested: usize },

    #[error("invalid ablation axis `{0}` (expected n, m, m_bar, t or gate)")]
    InvalidAxis(String),

    #[error("unknown tap `{0}`")]
    UnknownTap(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] gmfn::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn invalid(key: &str, detail: impl Into<String>) -> Self {
        CliError::InvalidValue { key: key.to_string(), detail: detail.into() }
    }

    /// Stable identifier printed in front of the message on failure.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::ConfigSyntax { .. } | CliError::UnknownKey(_) | CliError::InvalidValue { .. } => "config",
            CliError::UnknownPreset(_) => "config",
            CliError::NotCheckpoint { .. } | CliError::Malformed { .. } => "checkpoint",
            CliError::Checksum { .. } => "checksum",
            CliError::Version { .. } => "version",
            CliError::ScaleMismatch { .. } => "scale_mismatch",
            CliError::InvalidAxis(_) => "invalid_axis",
            CliError::UnknownTap(_) => "unknown_tap",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                gmfn::Error::Config(_) | gmfn::Error::Topology(_) => "config",
                gmfn::Error::UnsupportedScale(_) => "config",
                gmfn::Error::Dataset(_) => "dataset",
                gmfn::Error::Image(_) | gmfn::Error::UnsupportedDepth { .. } => "image",
                gmfn::Error::NonFiniteLoss { .. } => "non_finite_loss",
                gmfn::Error::Io { .. } => "io",
                gmfn::Error::Shape { .. } | gmfn::Error::NonScalarLoss(_) | gmfn::Error::MissingParam(_) => {
                    "internal"
                }
            },
        }
    }

    /// `error: <class>: <message>` on a single line.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {msg}", self.class())
    }
}
