//! Table rendering: class-wise accuracy tables, overall comparison tables
//! and confusion grids, as Markdown and CSV.
//!
//! Numbers are rounded half-even at render time only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::metrics::{AggregationMode, ConfusionMatrix, EvaluationResult};
use crate::registry;
use crate::taxonomy::ClassTaxonomy;

/// Decimals in the class-wise accuracy table.
pub const MODEL_TABLE_PLACES: u32 = 4;
/// Decimals of the percentages in the comparison table.
pub const COMPARISON_PLACES: u32 = 2;

const REFERENCE_NOTE: &str = "reference, not computed";

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_rule(columns: usize) -> String {
    let mut cells = vec!["---".to_string()];
    cells.extend(std::iter::repeat_n("---:".to_string(), columns - 1));
    md_row(&cells)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelRow {
    pub model: String,
    pub architecture: String,
    pub family: String,
    /// One cell per class, then overall accuracy.
    pub cells: Vec<String>,
}

/// Class-wise recall plus overall accuracy, one row per model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelTable {
    pub taxonomy: ClassTaxonomy,
    pub rows: Vec<ModelRow>,
}

impl ModelTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["Architecture".to_string()];
        h.extend((0..self.taxonomy.len()).map(|i| self.taxonomy.display_name(i)));
        h.push("Overall".to_string());
        h
    }

    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut out = md_row(&header);
        out.push_str(&md_rule(header.len()));
        for row in &self.rows {
            let mut cells = vec![row.model.clone()];
            cells.extend(row.cells.iter().cloned());
            out.push_str(&md_row(&cells));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,architecture,family");
        for name in self.taxonomy.names() {
            out.push(',');
            out.push_str(&csv_escape(name));
        }
        out.push_str(",overall\n");
        for row in &self.rows {
            let mut fields = vec![
                csv_escape(&row.model),
                csv_escape(&row.architecture),
                csv_escape(&row.family),
            ];
            fields.extend(row.cells.iter().cloned());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Renders the class-wise table. Rows are grouped by architecture family
/// (families in order of first appearance) and otherwise keep input order.
/// Classes without test samples render as `-`.
pub fn render_model_table(results: &[EvaluationResult]) -> Result<ModelTable> {
    let taxonomy = match results.first() {
        Some(r) => r.taxonomy.clone(),
        None => ClassTaxonomy::canonical(),
    };
    if let Some(r) = results.iter().find(|r| r.taxonomy != taxonomy) {
        return Err(Error::Incompatible(format!(
            "`{}` uses a different taxonomy",
            r.model_name
        )));
    }
    let mut families: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<usize, Vec<ModelRow>> = BTreeMap::new();
    for r in results {
        let family = registry::family_of(&r.architecture);
        let slot = match families.iter().position(|f| *f == family) {
            Some(i) => i,
            None => {
                families.push(family.clone());
                families.len() - 1
            }
        };
        let mut cells: Vec<String> = r
            .classwise_accuracy
            .iter()
            .map(|a| {
                a.as_ref().map_or_else(
                    || "-".to_string(),
                    |f| f.round_half_even(MODEL_TABLE_PLACES),
                )
            })
            .collect();
        cells.push(r.overall_accuracy.round_half_even(MODEL_TABLE_PLACES));
        grouped.entry(slot).or_default().push(ModelRow {
            model: r.model_name.clone(),
            architecture: r.architecture.clone(),
            family,
            cells,
        });
    }
    Ok(ModelTable {
        taxonomy,
        rows: grouped.into_values().flatten().collect(),
    })
}

/// A prior-work row, copied verbatim from configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    pub method: String,
    pub accuracy: String,
    pub precision: String,
    pub sensitivity: String,
    pub specificity: String,
}

/// Bundled reference rows of previously published results on the PBC dataset.
pub const DEFAULT_REFERENCES: &str = include_str!("../data/references.csv");

/// Parses `method,accuracy,precision,sensitivity,specificity` CSV.
pub fn parse_references(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Invalid(format!("reference table: {e}")))?
        .clone();
    let expected = [
        "method",
        "accuracy",
        "precision",
        "sensitivity",
        "specificity",
    ];
    if headers.iter().ne(expected) {
        return Err(Error::Invalid(format!(
            "reference table header must be `{}`",
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Invalid(format!("reference table: {e}")))?;
        rows.push(ReferenceRow {
            method: r[0].to_string(),
            accuracy: r[1].to_string(),
            precision: r[2].to_string(),
            sensitivity: r[3].to_string(),
            specificity: r[4].to_string(),
        });
    }
    Ok(rows)
}

pub fn default_references() -> Vec<ReferenceRow> {
    parse_references(DEFAULT_REFERENCES).expect("bundled reference table is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Reference,
    Model,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub kind: RowKind,
    /// Accuracy, precision, sensitivity, specificity.
    pub values: [String; 4],
}

impl ComparisonRow {
    fn from_result(r: &EvaluationResult, kind: RowKind) -> Self {
        let a = &r.aggregate;
        ComparisonRow {
            method: r.model_name.clone(),
            kind,
            values: [
                &r.overall_accuracy,
                &a.precision,
                &a.sensitivity,
                &a.specificity,
            ]
            .map(|f| f.percent(COMPARISON_PLACES)),
        }
    }

    /// `accuracy / precision / sensitivity / specificity`.
    pub fn summary(&self) -> String {
        self.values.join(" / ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonTable {
    pub mode: AggregationMode,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn ensemble(&self) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.kind == RowKind::Ensemble)
    }

    pub fn to_markdown(&self) -> String {
        let header: Vec<String> = [
            "Method",
            "Accuracy",
            "Precision",
            "Sensitivity",
            "Specificity",
        ]
        .map(String::from)
        .to_vec();
        let mut out = md_row(&header);
        out.push_str(&md_rule(header.len()));
        for row in &self.rows {
            let cells: Vec<String> = match row.kind {
                RowKind::Reference => std::iter::once(format!("{} ({REFERENCE_NOTE})", row.method))
                    .chain(row.values.iter().cloned())
                    .collect(),
                RowKind::Model => std::iter::once(row.method.clone())
                    .chain(row.values.iter().cloned())
                    .collect(),
                RowKind::Ensemble => std::iter::once(&row.method)
                    .chain(row.values.iter())
                    .map(|c| format!("**{c}**"))
                    .collect(),
            };
            out.push_str(&md_row(&cells));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,kind,accuracy,precision,sensitivity,specificity\n");
        for row in &self.rows {
            let kind = match row.kind {
                RowKind::Reference => "reference",
                RowKind::Model => "model",
                RowKind::Ensemble => "ensemble",
            };
            let _ = writeln!(
                out,
                "{},{kind},{}",
                csv_escape(&row.method),
                row.values.join(",")
            );
        }
        out
    }
}

/// Overall comparison in percent: reference rows first (verbatim), then the
/// given models, then the ensemble.
pub fn render_comparison_table(
    results: &[EvaluationResult],
    ensemble: &EvaluationResult,
    references: &[ReferenceRow],
) -> Result<ComparisonTable> {
    let mode = ensemble.aggregate.mode;
    if let Some(r) = results.iter().find(|r| r.aggregate.mode != mode) {
        return Err(Error::Incompatible(format!(
            "`{}` is aggregated as {}, the ensemble as {mode}",
            r.model_name, r.aggregate.mode
        )));
    }
    if let Some(r) = results.iter().find(|r| r.taxonomy != ensemble.taxonomy) {
        return Err(Error::Incompatible(format!(
            "`{}` uses a different taxonomy",
            r.model_name
        )));
    }
    let mut rows: Vec<ComparisonRow> = references
        .iter()
        .map(|r| ComparisonRow {
            method: r.method.clone(),
            kind: RowKind::Reference,
            values: [
                r.accuracy.clone(),
                r.precision.clone(),
                r.sensitivity.clone(),
                r.specificity.clone(),
            ],
        })
        .collect();
    rows.extend(
        results
            .iter()
            .map(|r| ComparisonRow::from_result(r, RowKind::Model)),
    );
    rows.push(ComparisonRow::from_result(ensemble, RowKind::Ensemble));
    Ok(ComparisonTable { mode, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfusionView {
    Counts,
    RowPercent,
}

/// Rendered confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionGrid {
    pub classes: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

impl ConfusionGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_escape(c));
        }
        out.push('\n');
        for (name, row) in self.classes.iter().zip(&self.cells) {
            out.push_str(&csv_escape(name));
            for cell in row {
                out.push(',');
                out.push_str(cell);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut header = vec!["true \\ predicted".to_string()];
        header.extend(self.classes.iter().cloned());
        let mut out = md_row(&header);
        out.push_str(&md_rule(header.len()));
        for (name, row) in self.classes.iter().zip(&self.cells) {
            let mut cells = vec![name.clone()];
            cells.extend(row.iter().cloned());
            out.push_str(&md_row(&cells));
        }
        out
    }
}

/// Row percentages in hundredths of a percent. Each cell is rounded half-even
/// and the rounding residual is added to the largest cell (lowest index on
/// ties) so the row totals exactly 100.00. `None` for an empty row.
pub fn row_percentages(row: &[u64]) -> Option<Vec<u64>> {
    let total: u64 = row.iter().sum();
    if total == 0 {
        return None;
    }
    let mut cells: Vec<u64> = row
        .iter()
        .map(|&c| {
            let scaled = u128::from(c) * 10_000;
            let t = u128::from(total);
            let (q, r) = (scaled / t, scaled % t);
            let up = 2 * r > t || (2 * r == t && q % 2 == 1);
            (q + u128::from(up)) as u64
        })
        .collect();
    let sum: i64 = cells.iter().map(|&c| c as i64).sum();
    let residual = 10_000 - sum;
    if residual != 0 {
        let largest = (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best });
        cells[largest] = (cells[largest] as i64 + residual) as u64;
    }
    Some(cells)
}

pub fn render_confusion(
    cm: &ConfusionMatrix,
    taxonomy: &ClassTaxonomy,
    view: ConfusionView,
) -> ConfusionGrid {
    let cells = (0..cm.num_classes())
        .map(|t| match view {
            ConfusionView::Counts => cm.row(t).iter().map(u64::to_string).collect(),
            ConfusionView::RowPercent => match row_percentages(cm.row(t)) {
                Some(p) => p
                    .iter()
                    .map(|&h| Fraction::new(h, 100).round_half_even(2))
                    .collect(),
                None => vec!["-".to_string(); cm.num_classes()],
            },
        })
        .collect();
    ConfusionGrid {
        classes: taxonomy.names().to_vec(),
        cells,
    }
}

/// Everything rendered for one benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub model_table: ModelTable,
    pub comparison: Option<ComparisonTable>,
    /// Results behind the model table, in any order; looked up by name.
    pub results: Vec<EvaluationResult>,
    pub notes: Vec<String>,
    pub provenance: serde_json::Value,
}

impl BenchmarkReport {
    /// Builds the report; `ensemble` (if any) is rendered last in the model
    /// table and compared against `members`.
    pub fn build(
        results: Vec<EvaluationResult>,
        ensemble: Option<(EvaluationResult, Vec<String>)>,
        references: &[ReferenceRow],
        notes: Vec<String>,
        provenance: serde_json::Value,
    ) -> Result<Self> {
        let mut all = results;
        let comparison = match &ensemble {
            Some((e, members)) => {
                let rows = members
                    .iter()
                    .map(|m| {
                        all.iter()
                            .find(|r| r.model_name == *m)
                            .cloned()
                            .ok_or_else(|| {
                                Error::Incompatible(format!("no result for ensemble member `{m}`"))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(render_comparison_table(&rows, e, references)?)
            }
            None => None,
        };
        if let Some((e, _)) = ensemble {
            all.push(e);
        }
        Ok(BenchmarkReport {
            model_table: render_model_table(&all)?,
            comparison,
            results: all,
            notes,
            provenance,
        })
    }

    fn result(&self, model: &str) -> &EvaluationResult {
        self.results
            .iter()
            .find(|r| r.model_name == model)
            .expect("row has a result")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Benchmark report\n\n");
        out.push_str("## Class-wise and overall accuracy\n\n");
        out.push_str("Class columns are per-class recall (true positive rate).\n\n");
        out.push_str(&self.model_table.to_markdown());
        if let Some(cmp) = &self.comparison {
            let _ = write!(
                out,
                "\n## Overall classification performance (%)\n\nPrecision, sensitivity and specificity are {} averages over classes.\n\n",
                cmp.mode
            );
            out.push_str(&cmp.to_markdown());
        }
        if !self.notes.is_empty() {
            out.push_str("\n## Notes\n\n");
            for n in &self.notes {
                let _ = writeln!(out, "- {n}");
            }
        }
        out.push_str(
            "\n## Confusion matrices\n\nRows are true classes, columns predicted classes.\n",
        );
        for row in &self.model_table.rows {
            let r = self.result(&row.model);
            let _ = write!(out, "\n### {}\n\n", r.model_name);
            out.push_str(
                &render_confusion(&r.confusion, &r.taxonomy, ConfusionView::Counts).to_markdown(),
            );
            out.push_str("\nRow percentages:\n\n");
            out.push_str(
                &render_confusion(&r.confusion, &r.taxonomy, ConfusionView::RowPercent)
                    .to_markdown(),
            );
        }
        out.push_str("\n## Provenance\n\n```json\n");
        out.push_str(
            &serde_json::to_string_pretty(&self.provenance).expect("json value serializes"),
        );
        out.push_str("\n```\n");
        out
    }

    /// One row per model: class-wise recall and overall accuracy as
    /// fractions (4 places), then the aggregate metrics in percent (2 places).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,architecture,family");
        for name in self.model_table.taxonomy.names() {
            out.push(',');
            out.push_str(&csv_escape(name));
        }
        out.push_str(
            ",overall,accuracy_pct,precision_pct,sensitivity_pct,specificity_pct,aggregation\n",
        );
        for row in &self.model_table.rows {
            let r = self.result(&row.model);
            let cmp = ComparisonRow::from_result(r, RowKind::Model);
            let mut fields = vec![
                csv_escape(&row.model),
                csv_escape(&row.architecture),
                csv_escape(&row.family),
            ];
            fields.extend(row.cells.iter().cloned());
            fields.extend(cmp.values.iter().cloned());
            fields.push(r.aggregate.mode.to_string());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}
