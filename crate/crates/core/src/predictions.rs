//! Per-model score matrices loaded from `sample_id,s_<class>...` CSV files
//! plus a `<name>.meta.json` sidecar.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowIssue};
use crate::io;
use crate::manifest::DatasetManifest;
use crate::taxonomy::ClassTaxonomy;

/// Allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Probability,
    Logit,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Probability => "probability",
            ScoreKind::Logit => "logit",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" => Ok(ScoreKind::Probability),
            "logit" => Ok(ScoreKind::Logit),
            _ => Err(Error::Invalid(format!("unknown score kind `{s}`"))),
        }
    }
}

/// Sidecar metadata. Keys this crate does not know are kept in `extra` and
/// written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub model_name: String,
    pub architecture: String,
    pub score_kind: ScoreKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_by: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl PredictionMeta {
    pub fn new(
        model_name: impl Into<String>,
        architecture: impl Into<String>,
        score_kind: ScoreKind,
    ) -> Self {
        PredictionMeta {
            model_name: model_name.into(),
            architecture: architecture.into(),
            score_kind,
            seed: None,
            input_size: None,
            epochs: None,
            created_by: None,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictionSet {
    meta: PredictionMeta,
    num_classes: usize,
    sample_ids: Vec<String>,
    scores: Vec<f64>,
    /// Softmax of `scores` for logit sets.
    probabilities: Option<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl PartialEq for PredictionSet {
    fn eq(&self, other: &Self) -> bool {
        self.meta == other.meta
            && self.num_classes == other.num_classes
            && self.sample_ids == other.sample_ids
            && self.scores == other.scores
    }
}

/// Numerically stable softmax: shifts by the row maximum before exponentiating.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// `preds/model.csv` -> `preds/model.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

impl PredictionSet {
    /// Builds a validated set from row-major scores.
    pub fn new(
        meta: PredictionMeta,
        num_classes: usize,
        sample_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let bad = |reason: String| Error::Predictions {
            path: format!("<{}>", meta.model_name).into(),
            reason,
        };
        if sample_ids.len() != rows.len() {
            return Err(bad(format!(
                "{} sample ids for {} score rows",
                sample_ids.len(),
                rows.len()
            )));
        }
        let mut index = HashMap::with_capacity(sample_ids.len());
        let mut scores = Vec::with_capacity(rows.len() * num_classes);
        for (i, (id, row)) in sample_ids.iter().zip(&rows).enumerate() {
            if row.len() != num_classes {
                return Err(bad(format!(
                    "row {} has {} scores, expected {num_classes}",
                    i + 1,
                    row.len()
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(bad(format!("duplicate sample_id `{id}`")));
            }
            check_row(&meta, id, i as u64 + 1, row)?;
            scores.extend_from_slice(row);
        }
        let probabilities = (meta.score_kind == ScoreKind::Logit)
            .then(|| rows.iter().flat_map(|r| softmax(r)).collect());
        Ok(PredictionSet {
            meta,
            num_classes,
            sample_ids,
            scores,
            probabilities,
            index,
        })
    }

    /// Loads `path` and its sidecar. With a manifest, every sample id must be
    /// known to it.
    pub fn load(
        path: &Path,
        taxonomy: &ClassTaxonomy,
        manifest: Option<&DatasetManifest>,
    ) -> Result<Self> {
        let meta_path = sidecar_path(path);
        let meta_text = io::read_to_string(&meta_path)?;
        let meta: PredictionMeta =
            serde_json::from_str(&meta_text).map_err(|source| Error::Json {
                path: meta_path.clone(),
                source,
            })?;
        let text = io::read_to_string(path)?;
        let set = Self::parse(&text, taxonomy, meta).map_err(|e| match e {
            Error::InvalidRows { issues, .. } => Error::InvalidRows {
                path: path.to_path_buf(),
                issues,
            },
            Error::Predictions { reason, .. } => Error::Predictions {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })?;
        if let Some(manifest) = manifest {
            let unknown: Vec<String> = set
                .sample_ids
                .iter()
                .filter(|id| !manifest.contains(id))
                .cloned()
                .collect();
            if !unknown.is_empty() {
                return Err(Error::UnknownSamples {
                    context: path.display().to_string(),
                    ids: unknown,
                });
            }
        }
        Ok(set)
    }

    pub fn parse(text: &str, taxonomy: &ClassTaxonomy, meta: PredictionMeta) -> Result<Self> {
        let c = taxonomy.len();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let expected: Vec<String> = std::iter::once("sample_id".to_string())
            .chain(taxonomy.score_columns())
            .collect();
        let header = match records.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => {
                return Err(Error::Predictions {
                    path: PathBuf::new(),
                    reason: e.to_string(),
                })
            }
            None => {
                return Err(Error::Predictions {
                    path: PathBuf::new(),
                    reason: "missing header".into(),
                })
            }
        };
        if header.len() != c + 1 {
            return Err(Error::Predictions {
                path: PathBuf::new(),
                reason: format!(
                    "header has {} score columns, expected {c}",
                    header.len().saturating_sub(1)
                ),
            });
        }
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Predictions {
                path: PathBuf::new(),
                reason: format!("expected header `{}`", expected.join(",")),
            });
        }

        let mut issues = Vec::new();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        let mut first_line: HashMap<String, u64> = HashMap::new();
        for record in records {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    issues.push(RowIssue::Malformed {
                        line: e.position().map(|p| p.line()).unwrap_or(0),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != c + 1 {
                issues.push(RowIssue::Malformed {
                    line,
                    reason: format!(
                        "expected {c} scores, found {}",
                        record.len().saturating_sub(1)
                    ),
                });
                continue;
            }
            let id = &record[0];
            let parsed: std::result::Result<Vec<f64>, _> = record
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f64>())
                .collect();
            let row = match parsed {
                Ok(row) if row.iter().all(|x| x.is_finite()) => row,
                _ => {
                    issues.push(RowIssue::Malformed {
                        line,
                        reason: "scores must be finite numbers".into(),
                    });
                    continue;
                }
            };
            if let Some(&first) = first_line.get(id) {
                issues.push(RowIssue::Duplicate {
                    id: id.to_string(),
                    first_line: first,
                    line,
                });
                continue;
            }
            first_line.insert(id.to_string(), line);
            ids.push(id.to_string());
            rows.push(row);
            lines.push(line);
        }
        if !issues.is_empty() {
            return Err(Error::InvalidRows {
                path: PathBuf::new(),
                issues,
            });
        }
        for ((id, row), line) in ids.iter().zip(&rows).zip(&lines) {
            check_row(&meta, id, *line, row)?;
        }
        Self::new(meta, c, ids, rows)
    }

    pub fn meta(&self) -> &PredictionMeta {
        &self.meta
    }

    pub fn model_name(&self) -> &str {
        &self.meta.model_name
    }

    pub fn architecture(&self) -> &str {
        &self.meta.architecture
    }

    pub fn score_kind(&self) -> ScoreKind {
        self.meta.score_kind
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn row_index(&self, sample_id: &str) -> Option<usize> {
        self.index.get(sample_id).copied()
    }

    /// Raw scores as stored in the file.
    pub fn scores(&self, row: usize) -> &[f64] {
        &self.scores[row * self.num_classes..(row + 1) * self.num_classes]
    }

    /// Scores as probabilities: raw rows for probability sets, softmax for logits.
    pub fn probabilities(&self, row: usize) -> &[f64] {
        match &self.probabilities {
            Some(p) => &p[row * self.num_classes..(row + 1) * self.num_classes],
            None => self.scores(row),
        }
    }

    /// Predicted class of a row, from the raw scores.
    pub fn predicted(&self, row: usize) -> usize {
        argmax(self.scores(row))
    }

    pub fn predicted_for(&self, sample_id: &str) -> Option<usize> {
        self.row_index(sample_id).map(|r| self.predicted(r))
    }

    /// Combines several files of the same model (e.g. one per split).
    pub fn merge(parts: Vec<PredictionSet>) -> Result<PredictionSet> {
        let mut parts = parts.into_iter();
        let Some(first) = parts.next() else {
            return Err(Error::Invalid("nothing to merge".into()));
        };
        let mut merged = first;
        for part in parts {
            if part.meta.model_name != merged.meta.model_name
                || part.meta.architecture != merged.meta.architecture
                || part.meta.score_kind != merged.meta.score_kind
                || part.num_classes != merged.num_classes
            {
                return Err(Error::Invalid(format!(
                    "prediction files for `{}` disagree on architecture, score kind or class count",
                    merged.meta.model_name
                )));
            }
            for (i, id) in part.sample_ids.iter().enumerate() {
                if merged.index.contains_key(id) {
                    return Err(Error::Invalid(format!(
                        "sample `{id}` appears in more than one prediction file of `{}`",
                        merged.meta.model_name
                    )));
                }
                merged.index.insert(id.clone(), merged.sample_ids.len());
                merged.sample_ids.push(id.clone());
                merged.scores.extend_from_slice(part.scores(i));
                if let Some(p) = merged.probabilities.as_mut() {
                    p.extend_from_slice(part.probabilities(i));
                }
            }
        }
        Ok(merged)
    }

    /// Prediction CSV text. Scores use the shortest representation that
    /// parses back to the same `f64`.
    pub fn to_csv(&self, taxonomy: &ClassTaxonomy) -> String {
        let mut out = String::from("sample_id");
        for col in taxonomy.score_columns() {
            out.push(',');
            out.push_str(&col);
        }
        out.push('\n');
        for (i, id) in self.sample_ids.iter().enumerate() {
            out.push_str(&csv_field(id));
            for s in self.scores(i) {
                out.push(',');
                out.push_str(&s.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn meta_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        s.push('\n');
        s
    }

    /// Writes the CSV and its sidecar.
    pub fn write(&self, csv_path: &Path, taxonomy: &ClassTaxonomy) -> Result<()> {
        let mut out = io::OutputSet::new();
        out.add(csv_path, self.to_csv(taxonomy));
        out.add(sidecar_path(csv_path), self.meta_json());
        out.commit()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check_row(meta: &PredictionMeta, id: &str, line: u64, row: &[f64]) -> Result<()> {
    if meta.score_kind != ScoreKind::Probability {
        return Ok(());
    }
    if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Predictions {
            path: PathBuf::new(),
            reason: format!("sample `{id}` (line {line}): probability {x} outside [0, 1]"),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::RowSum {
            sample_id: id.to_string(),
            line,
            sum,
            tolerance: ROW_SUM_TOLERANCE,
        });
    }
    Ok(())
}

/// Outcome of loading a prediction directory.
#[derive(Debug, Default)]
pub struct PredictionDir {
    /// One merged set per model name, sorted by model name.
    pub models: Vec<PredictionSet>,
    /// Files or models that could not be loaded, with the reason.
    pub failures: Vec<(String, Error)>,
    /// `(file name, sha256)` of every CSV found, sorted by file name.
    pub files: Vec<(String, String)>,
}

/// Loads every `*.csv` in `dir` (non-recursive) and groups files by model name.
pub fn load_prediction_dir(
    dir: &Path,
    taxonomy: &ClassTaxonomy,
    manifest: Option<&DatasetManifest>,
) -> Result<PredictionDir> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();

    let mut out = PredictionDir::default();
    let mut by_model: BTreeMap<String, Vec<PredictionSet>> = BTreeMap::new();
    for path in &paths {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        out.files.push((name.clone(), io::sha256_hex(&bytes)));
        match PredictionSet::load(path, taxonomy, manifest) {
            Ok(set) => by_model
                .entry(set.model_name().to_string())
                .or_default()
                .push(set),
            Err(e) => out.failures.push((name, e)),
        }
    }
    for (model, parts) in by_model {
        match PredictionSet::merge(parts) {
            Ok(set) => out.models.push(set),
            Err(e) => out.failures.push((model, e)),
        }
    }
    Ok(out)
}
