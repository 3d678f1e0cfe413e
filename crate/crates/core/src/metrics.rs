//! Confusion matrices and the one-vs-all metric family.
//!
//! For a target class `t` of a confusion matrix (rows = true class, columns =
//! predicted class):
//!
//! * TP is the diagonal cell `cm[t][t]`,
//! * FP is the rest of column `t`,
//! * FN is the rest of row `t`,
//! * TN is everything outside row and column `t`.
//!
//! Precision is TP/(TP+FP), sensitivity TP/(TP+FN) and specificity
//! TN/(TN+FP). A metric with a zero denominator is `None` (undefined); it is
//! never silently turned into zero. All values are exact fractions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::manifest::DatasetManifest;
use crate::predictions::PredictionSet;
use crate::split::{Split, SplitPlan};
use crate::taxonomy::ClassTaxonomy;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        let mut cm = ConfusionMatrix::zeros(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            for index in [t, p] {
                if index >= classes {
                    return Err(Error::ClassOutOfRange { index, classes });
                }
            }
            cm.counts[t * classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Invalid("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes,
            counts: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.classes).map(|t| self.row(t).to_vec()).collect()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// `None` for an empty matrix.
    pub fn overall_accuracy(&self) -> Option<Fraction> {
        Fraction::checked(self.trace(), self.total())
    }

    pub fn one_vs_all(&self, target: usize) -> Result<BinaryCounts> {
        if target >= self.classes {
            return Err(Error::ClassOutOfRange {
                index: target,
                classes: self.classes,
            });
        }
        let tp = self.get(target, target);
        let fp = self.col_sum(target) - tp;
        let fn_ = self.row_sum(target) - tp;
        let tn = self.total() - tp - fp - fn_;
        Ok(BinaryCounts { tp, fp, fn_, tn })
    }

    /// Per-class accuracy as reported in class-wise tables: the recall
    /// `cm[t][t] / row_sum(t)`. `None` when the class has no samples.
    pub fn classwise_accuracy(&self, target: usize) -> Result<Option<Fraction>> {
        if target >= self.classes {
            return Err(Error::ClassOutOfRange {
                index: target,
                classes: self.classes,
            });
        }
        Ok(Fraction::checked(
            self.get(target, target),
            self.row_sum(target),
        ))
    }
}

pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_labels(truth, predicted, classes)
}

pub fn one_vs_all(cm: &ConfusionMatrix, target: usize) -> Result<BinaryCounts> {
    cm.one_vs_all(target)
}

pub fn classwise_accuracy(cm: &ConfusionMatrix, target: usize) -> Result<Option<Fraction>> {
    cm.classwise_accuracy(target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<Fraction>,
    pub sensitivity: Option<Fraction>,
    pub specificity: Option<Fraction>,
}

impl ClassMetrics {
    pub fn from_counts(c: &BinaryCounts) -> Self {
        ClassMetrics {
            precision: Fraction::checked(c.tp, c.tp + c.fp),
            sensitivity: Fraction::checked(c.tp, c.tp + c.fn_),
            specificity: Fraction::checked(c.tn, c.tn + c.fp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Macro,
    Weighted,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Macro => "macro",
            AggregationMode::Weighted => "weighted",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(AggregationMode::Macro),
            "weighted" => Ok(AggregationMode::Weighted),
            _ => Err(Error::Invalid(format!(
                "unknown aggregation mode `{s}` (expected macro or weighted)"
            ))),
        }
    }
}

/// A class left out of an average because its metric was undefined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedClass {
    pub metric: String,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mode: AggregationMode,
    pub precision: Fraction,
    pub sensitivity: Fraction,
    pub specificity: Fraction,
    /// Non-empty when some class had an undefined metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedClass>,
}

/// Averages per-class metrics. Macro is the plain mean, weighted uses
/// `class_support`; either way only classes with a defined value take part.
pub fn aggregate_metrics(
    per_class: &[ClassMetrics],
    mode: AggregationMode,
    class_support: &[u64],
) -> Result<AggregateMetrics> {
    if mode == AggregationMode::Weighted && class_support.len() != per_class.len() {
        return Err(Error::LengthMismatch {
            truth: per_class.len(),
            predicted: class_support.len(),
        });
    }
    let mut excluded = Vec::new();
    let mut average =
        |name: &'static str, pick: fn(&ClassMetrics) -> &Option<Fraction>| -> Result<Fraction> {
            let mut sum = Fraction::zero();
            let mut weight = 0u64;
            for (class, m) in per_class.iter().enumerate() {
                let Some(v) = pick(m) else {
                    excluded.push(ExcludedClass {
                        metric: name.to_string(),
                        class,
                    });
                    continue;
                };
                let w = match mode {
                    AggregationMode::Macro => 1,
                    AggregationMode::Weighted => class_support[class],
                };
                sum = sum + Fraction::from_integer(w) * v.clone();
                weight += w;
            }
            if weight == 0 {
                return Err(Error::AllUndefined(name));
            }
            Ok(sum / Fraction::from_integer(weight))
        };
    let precision = average("precision", |m| &m.precision)?;
    let sensitivity = average("sensitivity", |m| &m.sensitivity)?;
    let specificity = average("specificity", |m| &m.specificity)?;
    Ok(AggregateMetrics {
        mode,
        precision,
        sensitivity,
        specificity,
        excluded,
    })
}

/// Metrics of one model (or ensemble) on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub model_name: String,
    pub architecture: String,
    pub split: Split,
    pub taxonomy: ClassTaxonomy,
    pub confusion: ConfusionMatrix,
    pub overall_accuracy: Fraction,
    pub counts: Vec<BinaryCounts>,
    pub per_class: Vec<ClassMetrics>,
    /// Recall per class; `None` for classes without samples.
    pub classwise_accuracy: Vec<Option<Fraction>>,
    pub aggregate: AggregateMetrics,
}

impl EvaluationResult {
    pub fn from_confusion(
        model_name: impl Into<String>,
        architecture: impl Into<String>,
        split: Split,
        taxonomy: ClassTaxonomy,
        confusion: ConfusionMatrix,
        mode: AggregationMode,
    ) -> Result<Self> {
        let c = taxonomy.len();
        if confusion.num_classes() != c {
            return Err(Error::Incompatible(format!(
                "confusion matrix has {} classes, taxonomy has {c}",
                confusion.num_classes()
            )));
        }
        let overall_accuracy = confusion
            .overall_accuracy()
            .ok_or_else(|| Error::Invalid("no samples to evaluate".into()))?;
        let counts: Vec<BinaryCounts> = (0..c)
            .map(|t| confusion.one_vs_all(t).expect("in range"))
            .collect();
        let per_class: Vec<ClassMetrics> = counts.iter().map(ClassMetrics::from_counts).collect();
        let classwise_accuracy = (0..c)
            .map(|t| confusion.classwise_accuracy(t).expect("in range"))
            .collect();
        let support: Vec<u64> = (0..c).map(|t| confusion.row_sum(t)).collect();
        let aggregate = aggregate_metrics(&per_class, mode, &support)?;
        Ok(EvaluationResult {
            model_name: model_name.into(),
            architecture: architecture.into(),
            split,
            taxonomy,
            confusion,
            overall_accuracy,
            counts,
            per_class,
            classwise_accuracy,
            aggregate,
        })
    }

    /// Samples per true class.
    pub fn support(&self) -> Vec<u64> {
        (0..self.taxonomy.len())
            .map(|t| self.confusion.row_sum(t))
            .collect()
    }

    /// JSON document with exact counts and 4-place half-even decimals.
    pub fn to_json(&self) -> String {
        let doc = EvaluationDoc {
            model_name: &self.model_name,
            architecture: &self.architecture,
            split: self.split,
            classes: &self.taxonomy,
            confusion: self.confusion.rows(),
            total: self.confusion.total(),
            correct: self.confusion.trace(),
            overall_accuracy: &self.overall_accuracy,
            per_class: (0..self.taxonomy.len())
                .map(|t| ClassDoc {
                    class: self.taxonomy.name(t),
                    support: self.confusion.row_sum(t),
                    counts: self.counts[t],
                    accuracy: self.classwise_accuracy[t].as_ref(),
                    metrics: &self.per_class[t],
                })
                .collect(),
            aggregate: &self.aggregate,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("result serializes");
        s.push('\n');
        s
    }

    /// Reads a document written by [`EvaluationResult::to_json`]. Derived
    /// values are recomputed from the stored confusion matrix.
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        #[derive(Deserialize)]
        struct Stored {
            model_name: String,
            architecture: String,
            split: Split,
            classes: ClassTaxonomy,
            confusion: Vec<Vec<u64>>,
            aggregate: StoredAggregate,
        }
        #[derive(Deserialize)]
        struct StoredAggregate {
            mode: AggregationMode,
        }
        let stored: Stored = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let cm = ConfusionMatrix::from_rows(stored.confusion).map_err(|e| e.to_string())?;
        EvaluationResult::from_confusion(
            stored.model_name,
            stored.architecture,
            stored.split,
            stored.classes,
            cm,
            stored.aggregate.mode,
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct EvaluationDoc<'a> {
    model_name: &'a str,
    architecture: &'a str,
    split: Split,
    classes: &'a ClassTaxonomy,
    confusion: Vec<Vec<u64>>,
    total: u64,
    correct: u64,
    overall_accuracy: &'a Fraction,
    per_class: Vec<ClassDoc<'a>>,
    aggregate: &'a AggregateMetrics,
}

#[derive(Serialize)]
struct ClassDoc<'a> {
    class: &'a str,
    support: u64,
    #[serde(flatten)]
    counts: BinaryCounts,
    accuracy: Option<&'a Fraction>,
    #[serde(flatten)]
    metrics: &'a ClassMetrics,
}

/// Evaluates labels already predicted for exactly the samples of `split`.
pub fn evaluate_predicted(
    model_name: &str,
    architecture: &str,
    sample_ids: &[String],
    predicted: &[usize],
    manifest: &DatasetManifest,
    split: Split,
    mode: AggregationMode,
) -> Result<EvaluationResult> {
    let mut truth = Vec::with_capacity(sample_ids.len());
    let mut unknown = Vec::new();
    for id in sample_ids {
        match manifest.label_of(id) {
            Some(l) => truth.push(l),
            None => unknown.push(id.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownSamples {
            context: format!("model `{model_name}`"),
            ids: unknown,
        });
    }
    let cm = ConfusionMatrix::from_labels(&truth, predicted, manifest.taxonomy().len())?;
    EvaluationResult::from_confusion(
        model_name,
        architecture,
        split,
        manifest.taxonomy().clone(),
        cm,
        mode,
    )
}

/// Evaluates a model on one split. The predicted class of a sample is the
/// argmax of its score row (lowest index on ties).
pub fn evaluate(
    preds: &PredictionSet,
    manifest: &DatasetManifest,
    plan: &SplitPlan,
    split: Split,
    mode: AggregationMode,
) -> Result<EvaluationResult> {
    if preds.num_classes() != manifest.taxonomy().len() {
        return Err(Error::Incompatible(format!(
            "model `{}` scores {} classes, manifest has {}",
            preds.model_name(),
            preds.num_classes(),
            manifest.taxonomy().len()
        )));
    }
    let unknown: Vec<String> = preds
        .sample_ids()
        .iter()
        .filter(|id| !manifest.contains(id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownSamples {
            context: format!("predictions of `{}`", preds.model_name()),
            ids: unknown,
        });
    }
    let ids = plan.ids_in(split);
    let mut predicted = Vec::with_capacity(ids.len());
    let mut missing = Vec::new();
    for id in &ids {
        match preds.predicted_for(id) {
            Some(p) => predicted.push(p),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingPredictions {
            model: preds.model_name().to_string(),
            ids: missing,
        });
    }
    evaluate_predicted(
        preds.model_name(),
        preds.architecture(),
        &ids,
        &predicted,
        manifest,
        split,
        mode,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm3() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(vec![vec![5, 1, 0], vec![0, 4, 1], vec![1, 0, 8]]).unwrap()
    }

    #[test]
    fn confusion_from_labels() {
        let cm = confusion_matrix(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 0], vec![0, 1]]);
        let cm = confusion_matrix(&[0, 0, 1], &[1, 0, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 1]]);
        let cm = confusion_matrix(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.rows(), vec![vec![0; 3]; 3]);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion_matrix(&[0], &[], 2),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion_matrix(&[0], &[2], 2),
            Err(Error::ClassOutOfRange {
                index: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn one_vs_all_counts() {
        let c = one_vs_all(&cm3(), 0).unwrap();
        assert_eq!(
            c,
            BinaryCounts {
                tp: 5,
                fp: 1,
                fn_: 1,
                tn: 13
            }
        );
        let diag =
            ConfusionMatrix::from_rows(vec![vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 3]]).unwrap();
        for t in 0..3 {
            assert_eq!(
                one_vs_all(&diag, t).unwrap(),
                BinaryCounts {
                    tp: 3,
                    fp: 0,
                    fn_: 0,
                    tn: 6
                }
            );
        }
        let zero = ConfusionMatrix::zeros(3);
        assert_eq!(
            one_vs_all(&zero, 1).unwrap(),
            BinaryCounts {
                tp: 0,
                fp: 0,
                fn_: 0,
                tn: 0
            }
        );
        assert!(one_vs_all(&zero, 3).is_err());
    }

    #[test]
    fn class_metrics_of_reference_matrix() {
        let cm = cm3();
        assert_eq!(cm.overall_accuracy().unwrap(), Fraction::new(17, 20));
        let m = ClassMetrics::from_counts(&cm.one_vs_all(0).unwrap());
        assert_eq!(m.precision, Some(Fraction::new(5, 6)));
        assert_eq!(m.sensitivity, Some(Fraction::new(5, 6)));
        assert_eq!(m.specificity, Some(Fraction::new(13, 14)));
        assert_eq!(
            classwise_accuracy(&cm, 2).unwrap(),
            Some(Fraction::new(8, 9))
        );
        assert_eq!(
            classwise_accuracy(&ConfusionMatrix::zeros(2), 0).unwrap(),
            None
        );
    }

    #[test]
    fn neutrophil_recall_fixture() {
        // 400 neutrophils, 5 of them predicted as ig
        let mut rows = vec![vec![0u64; 8]; 8];
        rows[6][6] = 395;
        rows[6][3] = 5;
        let cm = ConfusionMatrix::from_rows(rows).unwrap();
        let recall = cm.classwise_accuracy(6).unwrap().unwrap();
        assert_eq!(recall, Fraction::new(395, 400));
        assert_eq!(recall.round_half_even(4), "0.9875");
    }

    #[test]
    fn undefined_metrics_are_explicit() {
        // class 1 never occurs and is never predicted
        let cm = ConfusionMatrix::from_rows(vec![vec![4, 0], vec![0, 0]]).unwrap();
        let m1 = ClassMetrics::from_counts(&cm.one_vs_all(1).unwrap());
        assert_eq!(m1.precision, None);
        assert_eq!(m1.sensitivity, None);
        assert_eq!(m1.specificity, Some(Fraction::one()));
        let m0 = ClassMetrics::from_counts(&cm.one_vs_all(0).unwrap());
        assert_eq!(m0.specificity, None);
        let agg = aggregate_metrics(&[m0, m1], AggregationMode::Macro, &[4, 0]).unwrap();
        assert_eq!(agg.precision, Fraction::one());
        assert_eq!(agg.excluded.len(), 3);
    }

    #[test]
    fn aggregation_modes() {
        let m = |p: Fraction| ClassMetrics {
            precision: Some(p.clone()),
            sensitivity: Some(p.clone()),
            specificity: Some(p),
        };
        let per = [m(Fraction::one()), m(Fraction::new(1, 2))];
        let macro_ = aggregate_metrics(&per, AggregationMode::Macro, &[3, 1]).unwrap();
        assert_eq!(macro_.precision, Fraction::new(3, 4));
        let weighted = aggregate_metrics(&per, AggregationMode::Weighted, &[3, 1]).unwrap();
        assert_eq!(weighted.precision, Fraction::new(7, 8));
        let single = [m(Fraction::new(2, 3))];
        for mode in [AggregationMode::Macro, AggregationMode::Weighted] {
            let a = aggregate_metrics(&single, mode, &[5]).unwrap();
            assert_eq!(a.sensitivity, Fraction::new(2, 3));
        }
    }

    #[test]
    fn all_undefined_is_an_error() {
        let undefined = ClassMetrics {
            precision: None,
            sensitivity: None,
            specificity: None,
        };
        assert!(matches!(
            aggregate_metrics(
                &[undefined.clone(), undefined],
                AggregationMode::Macro,
                &[0, 0]
            ),
            Err(Error::AllUndefined("precision"))
        ));
    }

    #[test]
    fn perfect_predictions() {
        let tax = ClassTaxonomy::new(["a", "b", "c"]).unwrap();
        let cm =
            ConfusionMatrix::from_rows(vec![vec![2, 0, 0], vec![0, 3, 0], vec![0, 0, 1]]).unwrap();
        let r = EvaluationResult::from_confusion(
            "m",
            "x",
            Split::Test,
            tax,
            cm,
            AggregationMode::Macro,
        )
        .unwrap();
        assert_eq!(r.overall_accuracy, Fraction::one());
        for m in &r.per_class {
            assert_eq!(m.precision, Some(Fraction::one()));
            assert_eq!(m.sensitivity, Some(Fraction::one()));
            assert_eq!(m.specificity, Some(Fraction::one()));
        }
    }

    #[test]
    fn json_round_trip() {
        let tax = ClassTaxonomy::new(["a", "b", "c"]).unwrap();
        let r = EvaluationResult::from_confusion(
            "m",
            "resnet34",
            Split::Val,
            tax,
            cm3(),
            AggregationMode::Weighted,
        )
        .unwrap();
        let json = r.to_json();
        assert!(json.contains("\"value\": \"0.8500\""), "{json}");
        assert!(json.contains("\"fn\": 1"));
        let back = EvaluationResult::from_json(&json).unwrap();
        assert_eq!(back, r);
    }
}
