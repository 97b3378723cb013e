use ddig_core::analysis::AnalysisError;
use ddig_core::decompose::DecomposeError;
use ddig_core::embedstore::StoreError;
use ddig_core::manifold::ManifoldError;
use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: &'a str,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>, exit_code: i32) -> Self {
        CliError {
            kind: kind.to_owned(),
            message: message.into(),
            exit_code,
        }
    }

    pub fn usage(kind: &str, message: impl Into<String>) -> Self {
        CliError::new(kind, message, EXIT_USAGE)
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::usage("IoFailure", format!("{}: {source}", path.display()))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ErrorLine {
            error: &self.kind,
            message: &self.message,
        })
        .expect("error line serializes")
    }
}

/// Leading `Kind:` of a core error message.
fn kind_of(message: &str) -> String {
    message.split_once(':').map_or("Error", |(k, _)| k).to_owned()
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let code = match e {
            StoreError::ManifestMismatch(_) | StoreError::Io { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError::new(&kind_of(&message), message, code)
    }
}

impl From<ManifoldError> for CliError {
    fn from(e: ManifoldError) -> Self {
        let message = e.to_string();
        let code = match e {
            ManifoldError::InvalidK => EXIT_USAGE,
            ManifoldError::DimensionMismatch { .. } => EXIT_DATA,
            _ => EXIT_COMPUTE,
        };
        CliError::new(&kind_of(&message), message, code)
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let message = e.to_string();
        match e {
            AnalysisError::Store(inner) => inner.into(),
            AnalysisError::Cell { source, .. } => {
                let kind = kind_of(&source.to_string());
                CliError {
                    exit_code: CliError::from(source).exit_code,
                    kind,
                    message,
                }
            }
            AnalysisError::ConfigMismatch(_) => CliError::usage("ConfigMismatch", message),
            AnalysisError::SingleRegion(_) => {
                CliError::new("SingleRegion", message, EXIT_COMPUTE)
            }
            AnalysisError::DimensionMismatch { .. }
            | AnalysisError::RegionMissing(_)
            | AnalysisError::InvalidInput(_) => {
                CliError::new(&kind_of(&message), message, EXIT_DATA)
            }
        }
    }
}

impl From<DecomposeError> for CliError {
    fn from(e: DecomposeError) -> Self {
        let message = e.to_string();
        CliError::usage(&kind_of(&message), message)
    }
}
