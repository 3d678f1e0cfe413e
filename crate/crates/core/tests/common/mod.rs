#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hemobench::ensemble::{
    select_members, Candidate, EnsembleConfig, SelectionMetric, TiePolicy, ValidationData,
};
use hemobench::metrics::{AggregationMode, ConfusionMatrix, EvaluationResult};
use hemobench::predictions::{PredictionMeta, PredictionSet, ScoreKind};
use hemobench::split::Split;
use hemobench::{ClassTaxonomy, Fraction};

pub const GOLDEN_SEED: u64 = 19;

pub const BASOPHIL: usize = 0;
pub const ERYTHROBLAST: usize = 2;
pub const IG: usize = 3;
pub const LYMPHOCYTE: usize = 4;
pub const MONOCYTE: usize = 5;
pub const NEUTROPHIL: usize = 6;

/// Test-split class sizes used by the published-table fixtures (2054 samples).
pub const TEST_SUPPORT: [u64; 8] = [146, 374, 187, 348, 146, 171, 400, 282];

/// Diagonal confusion matrix over `TEST_SUPPORT` with `moves` of
/// `(true, predicted, count)` taken off the diagonal.
pub fn support_matrix(moves: &[(usize, usize, u64)]) -> ConfusionMatrix {
    let mut rows: Vec<Vec<u64>> = (0..8)
        .map(|t| {
            (0..8)
                .map(|p| if p == t { TEST_SUPPORT[t] } else { 0 })
                .collect()
        })
        .collect();
    for &(t, p, n) in moves {
        rows[t][t] -= n;
        rows[t][p] += n;
    }
    ConfusionMatrix::from_rows(rows).unwrap()
}

/// Confusion matrix whose macro metrics match the published ensemble row.
pub fn ensemble_fixture() -> ConfusionMatrix {
    support_matrix(&[
        (NEUTROPHIL, IG, 5),
        (IG, LYMPHOCYTE, 1),
        (IG, MONOCYTE, 1),
        (IG, NEUTROPHIL, 1),
        (LYMPHOCYTE, MONOCYTE, 1),
        (MONOCYTE, LYMPHOCYTE, 1),
    ])
}

/// Confusion matrix matching the published Wide ResNet-50-2 row.
pub fn wrn50_fixture() -> ConfusionMatrix {
    support_matrix(&[
        (BASOPHIL, NEUTROPHIL, 1),
        (ERYTHROBLAST, BASOPHIL, 1),
        (IG, NEUTROPHIL, 5),
        (LYMPHOCYTE, MONOCYTE, 1),
        (MONOCYTE, LYMPHOCYTE, 1),
        (NEUTROPHIL, IG, 5),
    ])
}

pub fn result(name: &str, arch: &str, cm: ConfusionMatrix) -> EvaluationResult {
    EvaluationResult::from_confusion(
        name,
        arch,
        Split::Test,
        ClassTaxonomy::canonical(),
        cm,
        AggregationMode::Macro,
    )
    .unwrap()
}

/// Per-class `(tp, fp, fn, tn)` by walking every sample.
pub fn oracle_counts(truth: &[usize], predicted: &[usize], classes: usize) -> Vec<[u64; 4]> {
    (0..classes)
        .map(|c| {
            let mut k = [0u64; 4];
            for (&t, &p) in truth.iter().zip(predicted) {
                let i = match (t == c, p == c) {
                    (true, true) => 0,
                    (false, true) => 1,
                    (true, false) => 2,
                    (false, false) => 3,
                };
                k[i] += 1;
            }
            k
        })
        .collect()
}

pub fn ratio(n: u64, d: u64) -> Option<Fraction> {
    Fraction::checked(n, d)
}

/// Largest-remainder quotas computed with integer arithmetic only.
/// `weights` are numerators over `denominator`.
pub fn oracle_quotas(n: u64, weights: &[u64], denominator: u64) -> Vec<u64> {
    let mut q: Vec<u64> = weights.iter().map(|w| n * w / denominator).collect();
    let mut rem: Vec<(u64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (n * w % denominator, i))
        .collect();
    // larger remainder first, earlier part first on equal remainders
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = n - q.iter().sum::<u64>();
    for &(_, i) in rem.iter().take(left as usize) {
        q[i] += 1;
    }
    q
}

/// Plurality vote by enumeration: the set of classes with the most votes,
/// then the tie rule.
pub fn oracle_vote(
    votes: &[usize],
    scores: &[Vec<f64>],
    classes: usize,
    policy: TiePolicy,
) -> usize {
    let counts: Vec<usize> = (0..classes)
        .map(|c| votes.iter().filter(|&&v| v == c).count())
        .collect();
    let top = *counts.iter().max().unwrap();
    let tied: Vec<usize> = (0..classes).filter(|&c| counts[c] == top).collect();
    match policy {
        TiePolicy::LowestIndex => tied[0],
        TiePolicy::ModelPriority => *votes.iter().find(|v| tied.contains(v)).unwrap(),
        TiePolicy::SumProb => {
            let sum = |c: usize| scores.iter().map(|r| r[c]).sum::<f64>();
            let mut best = tied[0];
            for &c in &tied[1..] {
                if sum(c) > sum(best) {
                    best = c;
                }
            }
            best
        }
    }
}

pub fn prediction_set(name: &str, ids: &[String], rows: Vec<Vec<f64>>) -> PredictionSet {
    let c = rows.first().map_or(8, Vec::len);
    PredictionSet::new(
        PredictionMeta::new(name, name, ScoreKind::Probability),
        c,
        ids.to_vec(),
        rows,
    )
    .unwrap()
}

/// Eight-class probability row with mass `q` on `class` and the rest on `other`.
pub fn row(class: usize, q: f64, other: usize) -> Vec<f64> {
    let mut r = vec![0.0; 8];
    r[class] = q;
    r[other] += 1.0 - q;
    r
}

pub const SELECTION_FIXED: [(&str, u64); 3] = [
    ("wide_resnet50_2", 14),
    ("vgg19", 15),
    ("wide_resnet101_2", 16),
];

/// Six candidates tied at 2037/2054 test accuracy, with the number of the
/// four contested validation samples each gets right.
pub const SELECTION_TIED: [(&str, usize); 6] = [
    ("vgg13_bn", 0),
    ("resnet18", 2),
    ("resnet34", 4),
    ("resnet101", 3),
    ("resnext101_32x8d", 1),
    ("inception_v3", 3),
];

pub struct SelectionFixture {
    pub results: Vec<EvaluationResult>,
    pub validation: Vec<PredictionSet>,
    pub val_ids: Vec<String>,
    pub val_labels: Vec<usize>,
}

/// Nine candidates at 0.9932, 0.9927, 0.9922 and six at 0.9917 test accuracy.
/// On validation the top two are wrong on the first four samples and the third
/// is right; a tied candidate that is right breaks the resulting 2-2 vote tie
/// its way under sum_prob.
pub fn selection_fixture() -> SelectionFixture {
    let val_ids: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
    let val_labels: Vec<usize> = (0..8).map(|i| usize::from(i >= 4)).collect();
    let mut results = Vec::new();
    let mut validation = Vec::new();
    for (i, (name, errors)) in SELECTION_FIXED.iter().enumerate() {
        results.push(result(
            name,
            name,
            support_matrix(&[(NEUTROPHIL, IG, *errors)]),
        ));
        let rows = (0..8)
            .map(|s| match (s < 4, i < 2) {
                (true, true) => row(1, 0.6, 0),
                (true, false) => row(0, 0.99, 1),
                (false, _) => row(1, 0.95, 0),
            })
            .collect();
        validation.push(prediction_set(name, &val_ids, rows));
    }
    for (name, right) in SELECTION_TIED {
        results.push(result(name, name, support_matrix(&[(NEUTROPHIL, IG, 17)])));
        let rows = (0..8)
            .map(|s| match s {
                s if s < right => row(0, 0.99, 1),
                s if s < 4 => row(1, 0.7, 0),
                _ => row(1, 0.9, 0),
            })
            .collect();
        validation.push(prediction_set(name, &val_ids, rows));
    }
    SelectionFixture {
        results,
        validation,
        val_ids,
        val_labels,
    }
}

impl SelectionFixture {
    pub fn select(&self, k: usize, policy: TiePolicy) -> hemobench::Result<EnsembleConfig> {
        let candidates: Vec<Candidate> = self
            .results
            .iter()
            .map(|r| Candidate {
                name: &r.model_name,
                result: r,
            })
            .collect();
        let predictions: BTreeMap<String, &PredictionSet> = self
            .validation
            .iter()
            .map(|p| (p.model_name().to_string(), p))
            .collect();
        let data = ValidationData {
            sample_ids: self.val_ids.clone(),
            labels: self.val_labels.clone(),
            predictions,
        };
        select_members(
            &candidates,
            k,
            policy,
            SelectionMetric::TestAccuracy,
            Some(&data),
        )
    }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hemobench")
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("HEMOBENCH_JOBS")
        .output()
        .expect("binary runs")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "hemobench {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs synth, split, evaluate, ensemble and report in `dir`.
pub fn run_pipeline(dir: &Path, seed: u64) {
    let s = seed.to_string();
    run_ok(dir, &["synth", "--out", "data", "--seed", &s]);
    run_ok(
        dir,
        &[
            "split",
            "--manifest",
            "data/manifest.csv",
            "--seed",
            &s,
            "--out",
            "plan.csv",
        ],
    );
    run_ok(
        dir,
        &[
            "validate",
            "--manifest",
            "data/manifest.csv",
            "--plan",
            "plan.csv",
            "--pred-dir",
            "data/predictions",
        ],
    );
    run_ok(
        dir,
        &[
            "evaluate",
            "--manifest",
            "data/manifest.csv",
            "--plan",
            "plan.csv",
            "--pred-dir",
            "data/predictions",
            "--out",
            "results",
        ],
    );
    run_ok(
        dir,
        &[
            "ensemble",
            "--results",
            "results",
            "--pred-dir",
            "data/predictions",
            "--manifest",
            "data/manifest.csv",
            "--plan",
            "plan.csv",
        ],
    );
    run_ok(dir, &["report", "--results", "results"]);
}

/// Every file under `dir` as `(relative path with '/' separators, bytes)`,
/// sorted by path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel: Vec<String> = path
                    .strip_prefix(root)
                    .unwrap()
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                out.push((rel.join("/"), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Pipeline outputs compared byte for byte. Bulky synthetic inputs are
/// covered by `inputs.sha256` instead of being stored.
pub fn golden_files(workdir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut sums = String::new();
    let mut out = Vec::new();
    for (path, bytes) in tree(workdir) {
        if path.starts_with("data/") {
            sums.push_str(&format!(
                "{}  {}\n",
                hemobench::io::sha256_hex(&bytes),
                path
            ));
        } else {
            out.push((path, bytes));
        }
    }
    out.push(("inputs.sha256".to_string(), sums.into_bytes()));
    out.sort();
    out
}

/// Compares against the stored golden tree; `UPDATE_GOLDEN=1` rewrites it.
/// Returns the names of mismatching files.
pub fn check_golden(actual: &[(String, Vec<u8>)]) -> Vec<String> {
    let root = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = std::fs::remove_dir_all(&root);
        for (name, bytes) in actual {
            let path = root.join(name);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(path, bytes).unwrap();
        }
        return Vec::new();
    }
    let expected = if root.exists() {
        tree(&root)
    } else {
        Vec::new()
    };
    let mut bad = Vec::new();
    let exp: BTreeMap<&str, &[u8]> = expected
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .collect();
    let act: BTreeMap<&str, &[u8]> = actual
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .collect();
    for (name, bytes) in &act {
        match exp.get(name) {
            Some(e) if e == bytes => {}
            Some(_) => bad.push(format!("{name} differs")),
            None => bad.push(format!("{name} missing from golden set")),
        }
    }
    for name in exp.keys().filter(|n| !act.contains_key(*n)) {
        bad.push(format!("{name} not produced"));
    }
    bad
}
