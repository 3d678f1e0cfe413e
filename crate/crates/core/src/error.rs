use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single problem found while parsing a manifest or prediction file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowIssue {
    Duplicate {
        id: String,
        first_line: u64,
        line: u64,
    },
    UnknownLabel {
        label: String,
        line: u64,
    },
    Malformed {
        line: u64,
        reason: String,
    },
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowIssue::Duplicate {
                id,
                first_line,
                line,
            } => write!(
                f,
                "line {line}: duplicate sample_id `{id}` (first seen on line {first_line})"
            ),
            RowIssue::UnknownLabel { label, line } => {
                write!(f, "line {line}: unknown class label `{label}`")
            }
            RowIssue::Malformed { line, reason } => write!(f, "line {line}: {reason}"),
        }
    }
}

fn join_issues(issues: &[RowIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn join_ids(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut out = ids
        .iter()
        .take(SHOWN)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(", ... ({} total)", ids.len()));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {}", path.display(), join_issues(issues))]
    InvalidRows {
        path: PathBuf,
        issues: Vec<RowIssue>,
    },

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("invalid prediction file {}: {reason}", path.display())]
    Predictions { path: PathBuf, reason: String },

    #[error(
        "sample `{sample_id}` (line {line}): probability row sums to {sum:.6}, outside tolerance {tolerance:e} of 1"
    )]
    RowSum {
        sample_id: String,
        line: u64,
        sum: f64,
        tolerance: f64,
    },

    #[error("{context}: {} sample id(s) not present in the manifest: {}", ids.len(), join_ids(ids))]
    UnknownSamples { context: String, ids: Vec<String> },

    #[error("model `{model}` is missing predictions for {} sample(s): {}", ids.len(), join_ids(ids))]
    MissingPredictions { model: String, ids: Vec<String> },

    #[error("invalid split ratios: {0}")]
    Ratios(String),

    #[error("manifest has no samples")]
    EmptyManifest,

    #[error("class `{0}` has no samples")]
    EmptyClass(String),

    #[error("label and prediction lists differ in length ({truth} vs {predicted})")]
    LengthMismatch { truth: usize, predicted: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("every class has an undefined {0}; cannot aggregate")]
    AllUndefined(&'static str),

    #[error("results use different taxonomies or aggregation modes: {0}")]
    Incompatible(String),

    #[error("cannot vote on an empty vote list")]
    EmptyVotes,

    #[error("sum_prob tie policy needs one score row per vote")]
    MissingScores,

    #[error("invalid ensemble configuration: {0}")]
    Ensemble(String),

    #[error("need {k} ensemble members but only {available} candidates are available")]
    InsufficientCandidates { k: usize, available: usize },

    #[error("unknown architecture `{name}`; known: {known}")]
    UnknownArchitecture { name: String, known: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for I/O and environment failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
