//! Seeded synthetic manifest and prediction files for exercising the full
//! pipeline without trained models.

use std::path::Path;

use crate::error::Result;
use crate::io::OutputSet;
use crate::manifest::{DatasetManifest, SampleRecord};
use crate::predictions::{PredictionMeta, PredictionSet, ScoreKind};
use crate::rng::{fnv1a64, SplitMix64};
use crate::taxonomy::ClassTaxonomy;

pub const SAMPLES_PER_CLASS: usize = 100;

/// A synthetic classifier: name, architecture, score kind and the chance of
/// predicting the true class, in per-mille.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticModel {
    pub name: &'static str,
    pub architecture: &'static str,
    pub score_kind: ScoreKind,
    pub skill_permille: u64,
}

pub const SYNTHETIC_MODELS: [SyntheticModel; 5] = [
    SyntheticModel {
        name: "wide_resnet50_2",
        architecture: "wide_resnet50_2",
        score_kind: ScoreKind::Probability,
        skill_permille: 930,
    },
    SyntheticModel {
        name: "vgg19",
        architecture: "vgg19",
        score_kind: ScoreKind::Probability,
        skill_permille: 910,
    },
    SyntheticModel {
        name: "wide_resnet101_2",
        architecture: "wide_resnet101_2",
        score_kind: ScoreKind::Probability,
        skill_permille: 900,
    },
    SyntheticModel {
        name: "resnet34",
        architecture: "resnet34",
        score_kind: ScoreKind::Probability,
        skill_permille: 880,
    },
    SyntheticModel {
        name: "mobilenet_v2",
        architecture: "mobilenet_v2",
        score_kind: ScoreKind::Logit,
        skill_permille: 850,
    },
];

/// `SAMPLES_PER_CLASS` samples per class, ids `s0000`, `s0001`, ...;
/// sample `i` has label `i mod C`.
pub fn synthetic_manifest(taxonomy: &ClassTaxonomy) -> DatasetManifest {
    let c = taxonomy.len();
    let n = c * SAMPLES_PER_CLASS;
    let samples = (0..n)
        .map(|i| SampleRecord {
            sample_id: format!("s{i:04}"),
            relative_path: format!("{}/s{i:04}.png", taxonomy.name(i % c)),
            label: i % c,
        })
        .collect();
    DatasetManifest::new(taxonomy.clone(), samples).expect("synthetic manifest is valid")
}

/// Scores for every sample in `manifest`. Probability rows are multiples of
/// 1e-6 summing to exactly one with a unique maximum above one half. Logit
/// rows use three decimals: the predicted class above 2, the rest in [-2, 2].
pub fn synthetic_predictions(
    model: &SyntheticModel,
    manifest: &DatasetManifest,
    seed: u64,
) -> PredictionSet {
    let c = manifest.taxonomy().len();
    let mut rng = SplitMix64::new(seed ^ fnv1a64(model.name));
    let mut ids = Vec::with_capacity(manifest.len());
    let mut rows = Vec::with_capacity(manifest.len());
    for s in manifest.samples() {
        let correct = rng.below(1000) < model.skill_permille;
        let predicted = if correct {
            s.label
        } else {
            let off = 1 + rng.below(c as u64 - 1) as usize;
            (s.label + off) % c
        };
        let row = match model.score_kind {
            ScoreKind::Probability => probability_row(&mut rng, c, predicted),
            ScoreKind::Logit => logit_row(&mut rng, c, predicted),
        };
        ids.push(s.sample_id.clone());
        rows.push(row);
    }
    let mut meta = PredictionMeta::new(model.name, model.architecture, model.score_kind);
    meta.seed = Some(seed);
    meta.created_by = Some("hemobench synth".to_string());
    PredictionSet::new(meta, c, ids, rows).expect("synthetic predictions are valid")
}

fn probability_row(rng: &mut SplitMix64, c: usize, predicted: usize) -> Vec<f64> {
    const UNIT: u64 = 1_000_000;
    let top = 500_001 + rng.below(450_000);
    let mut rest = UNIT - top;
    let mut micro = vec![0u64; c];
    micro[predicted] = top;
    let others: Vec<usize> = (0..c).filter(|&j| j != predicted).collect();
    for (n, &j) in others.iter().enumerate() {
        let share = if n + 1 == others.len() {
            rest
        } else {
            rng.below(rest + 1)
        };
        micro[j] = share;
        rest -= share;
    }
    micro.iter().map(|&m| m as f64 / UNIT as f64).collect()
}

fn logit_row(rng: &mut SplitMix64, c: usize, predicted: usize) -> Vec<f64> {
    (0..c)
        .map(|j| {
            let milli = if j == predicted {
                2001 + rng.below(3000) as i64
            } else {
                rng.below(4001) as i64 - 2000
            };
            milli as f64 / 1000.0
        })
        .collect()
}

/// Stages `manifest.csv` and `predictions/<model>.csv` (with sidecars).
pub fn stage_synthetic(out_dir: &Path, seed: u64, out: &mut OutputSet) {
    let taxonomy = ClassTaxonomy::canonical();
    let manifest = synthetic_manifest(&taxonomy);
    out.add(out_dir.join("manifest.csv"), manifest.to_csv());
    for model in &SYNTHETIC_MODELS {
        let preds = synthetic_predictions(model, &manifest, seed);
        let path = out_dir
            .join("predictions")
            .join(format!("{}.csv", model.name));
        out.add(crate::predictions::sidecar_path(&path), preds.meta_json());
        out.add(path, preds.to_csv(&taxonomy));
    }
}

pub fn write_synthetic(out_dir: &Path, seed: u64) -> Result<()> {
    let mut out = OutputSet::new();
    stage_synthetic(out_dir, seed, &mut out);
    out.commit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictions::argmax;

    #[test]
    fn manifest_is_balanced() {
        let m = synthetic_manifest(&ClassTaxonomy::canonical());
        assert_eq!(m.len(), 800);
        assert_eq!(m.class_counts(), vec![100; 8]);
        assert_eq!(m.samples()[9].sample_id, "s0009");
        assert_eq!(m.samples()[9].label, 1);
    }

    #[test]
    fn rows_are_valid_and_parse_back() {
        let tax = ClassTaxonomy::canonical();
        let m = synthetic_manifest(&tax);
        for model in &SYNTHETIC_MODELS {
            let p = synthetic_predictions(model, &m, 7);
            assert_eq!(p.len(), 800);
            for r in 0..p.len() {
                let row = p.scores(r);
                let top = argmax(row);
                assert_eq!(row.iter().filter(|&&x| x == row[top]).count(), 1);
            }
            let back = PredictionSet::parse(&p.to_csv(&tax), &tax, p.meta().clone()).unwrap();
            assert_eq!(back.to_csv(&tax), p.to_csv(&tax));
        }
    }

    #[test]
    fn seeds_change_the_output() {
        let m = synthetic_manifest(&ClassTaxonomy::canonical());
        let a = synthetic_predictions(&SYNTHETIC_MODELS[0], &m, 1);
        let b = synthetic_predictions(&SYNTHETIC_MODELS[0], &m, 1);
        let c = synthetic_predictions(&SYNTHETIC_MODELS[0], &m, 2);
        let tax = ClassTaxonomy::canonical();
        assert_eq!(a.to_csv(&tax), b.to_csv(&tax));
        assert_ne!(a.to_csv(&tax), c.to_csv(&tax));
    }
}
