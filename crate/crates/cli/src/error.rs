use std::fmt;
use std::io::ErrorKind;
use std::path::Path;

use dualreport::checkpoint::CheckpointError;
use dualreport::config::ConfigError;
use dualreport::data::DataError;
use dualreport::inference::GeneratedFileError;
use dualreport::metrics::MetricsError;
use dualreport::pipeline::PipelineError;
use dualreport::selection::SelectionError;
use dualreport::train::TrainError;
use dualreport::TensorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    MissingFile,
    Config,
    Data,
    Gradcheck,
    Other,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Usage => 2,
            Kind::MissingFile => 3,
            Kind::Config => 4,
            Kind::Data => 5,
            Kind::Gradcheck => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::MissingFile => "missing_file",
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Gradcheck => "gradcheck",
            Kind::Other => "other",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl fmt::Display) -> Self {
        CliError {
            kind,
            message: message.to_string(),
        }
    }

    pub fn missing(path: &Path) -> Self {
        CliError::new(Kind::MissingFile, format!("{}: no such file or directory", path.display()))
    }

    /// The single stderr line printed on failure.
    pub fn to_line(&self) -> String {
        serde_json::json!({
            "error": self.kind.name(),
            "exit": self.kind.exit_code(),
            "message": self.message.replace('\n', " "),
        })
        .to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_kind(e: &std::io::Error) -> Kind {
    if e.kind() == ErrorKind::NotFound {
        Kind::MissingFile
    } else {
        Kind::Other
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let kind = match &e {
            DataError::Io { source, .. } => io_kind(source),
            DataError::Config(_) => Kind::Config,
            _ => Kind::Data,
        };
        CliError::new(kind, e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(Kind::Config, e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let kind = match &e {
            CheckpointError::Io { source, .. } => io_kind(source),
            CheckpointError::Format { .. } => Kind::Data,
            _ => Kind::Config,
        };
        CliError::new(kind, e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(d) => d.into(),
            PipelineError::Io { ref source, .. } => CliError::new(io_kind(source), e),
            PipelineError::Model(TensorError::Contract(_)) => CliError::new(Kind::Config, e),
            _ => CliError::new(Kind::Data, e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_) => Kind::Config,
            TrainError::Io { source, .. } => io_kind(source),
            TrainError::EmptyCorpus | TrainError::Model(_) => Kind::Data,
            _ => Kind::Other,
        };
        CliError::new(kind, e)
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        let kind = match &e {
            SelectionError::Io { source, .. } => io_kind(source),
            _ => Kind::Data,
        };
        CliError::new(kind, e)
    }
}

impl From<GeneratedFileError> for CliError {
    fn from(e: GeneratedFileError) -> Self {
        let kind = match &e {
            GeneratedFileError::Io { source, .. } => io_kind(source),
            GeneratedFileError::Parse { .. } => Kind::Data,
        };
        CliError::new(kind, e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::new(Kind::Data, e)
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::new(Kind::Data, e)
    }
}
