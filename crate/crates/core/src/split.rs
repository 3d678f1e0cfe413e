//! Deterministic stratified train/val/test splitting.
//!
//! Per class, samples are sorted by id, shuffled with SplitMix64 seeded by
//! `seed ^ fnv1a64(class name)` and cut into contiguous train, val and test
//! blocks whose sizes come from largest-remainder apportionment of the class
//! size over the ratios (remainder ties go to train, then val, then test).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowIssue};
use crate::fraction::Fraction;
use crate::io;
use crate::manifest::DatasetManifest;
use crate::rng::{fnv1a64, shuffle, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!(
                "unknown split `{s}` (expected train, val or test)"
            ))),
        }
    }
}

/// Exact train/val/test fractions summing to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRatios {
    parts: [Fraction; 3],
}

impl SplitRatios {
    pub fn new(train: Fraction, val: Fraction, test: Fraction) -> Result<Self> {
        let parts = [train, val, test];
        for (split, p) in Split::ALL.iter().zip(&parts) {
            if *p < Fraction::zero() {
                return Err(Error::Ratios(format!(
                    "{split} ratio {} is negative",
                    render_ratio(p)
                )));
            }
        }
        let sum: Fraction = parts.iter().sum();
        if sum != Fraction::one() {
            return Err(Error::Ratios(format!(
                "ratios sum to {}, not 1",
                render_ratio(&sum)
            )));
        }
        Ok(SplitRatios { parts })
    }

    /// 64% / 24% / 12%.
    pub fn pbc_default() -> Self {
        SplitRatios {
            parts: [
                Fraction::new(16, 25),
                Fraction::new(6, 25),
                Fraction::new(3, 25),
            ],
        }
    }

    pub fn get(&self, split: Split) -> &Fraction {
        &self.parts[split.index()]
    }

    /// Per-split sample counts for a class of `n` samples.
    pub fn quotas(&self, n: usize) -> [usize; 3] {
        let v = apportion(n, &self.parts);
        [v[0], v[1], v[2]]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios::pbc_default()
    }
}

fn render_ratio(f: &Fraction) -> String {
    f.exact_decimal().unwrap_or_else(|| f.to_string())
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.parts.iter().map(render_ratio).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// `0.64,0.24,0.12` or `16/25,6/25,3/25`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Ratios(format!(
                "expected 3 comma-separated ratios, got `{s}`"
            )));
        }
        let mut fr = Vec::with_capacity(3);
        for p in parts {
            fr.push(
                p.parse::<Fraction>()
                    .map_err(|e| Error::Ratios(e.to_string()))?,
            );
        }
        let [a, b, c]: [Fraction; 3] = fr.try_into().expect("three parts");
        SplitRatios::new(a, b, c)
    }
}

impl Serialize for SplitRatios {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, String> = Split::ALL
            .iter()
            .map(|s| (s.as_str(), render_ratio(self.get(*s))))
            .collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SplitRatios {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            train: String,
            val: String,
            test: String,
        }
        let r = Repr::deserialize(deserializer)?;
        format!("{},{},{}", r.train, r.val, r.test)
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Largest-remainder apportionment of `n` over `weights` (which sum to one).
/// Leftover units go to the largest fractional remainders; equal remainders
/// are resolved in favor of the earlier weight.
pub fn apportion(n: usize, weights: &[Fraction]) -> Vec<usize> {
    let total = Fraction::from_integer(n as u64);
    let shares: Vec<Fraction> = weights.iter().map(|w| total.clone() * w.clone()).collect();
    let mut quotas: Vec<usize> = shares.iter().map(|s| s.floor_u64() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let leftover = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps index order among equal remainders
    order.sort_by(|&a, &b| shares[b].fract().cmp(&shares[a].fract()));
    for &i in order.iter().take(leftover) {
        quotas[i] += 1;
    }
    quotas
}

/// A train/val/test assignment for every sample of a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    /// Rows sorted by sample id. Loaded plans may contain duplicates;
    /// [`verify_split`] reports them.
    entries: Vec<(String, Split)>,
    ratios: SplitRatios,
    seed: u64,
    manifest_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMeta {
    pub ratios: SplitRatios,
    pub seed: u64,
    pub manifest_digest: String,
}

/// `plan.csv` -> `plan.meta.json`.
pub fn plan_sidecar_path(csv_path: &Path) -> PathBuf {
    crate::predictions::sidecar_path(csv_path)
}

pub fn plan_split(
    manifest: &DatasetManifest,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<SplitPlan> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let taxonomy = manifest.taxonomy();
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); taxonomy.len()];
    for s in manifest.samples() {
        by_class[s.label].push(&s.sample_id);
    }
    if let Some(empty) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(taxonomy.name(empty).to_string()));
    }

    let mut entries = Vec::with_capacity(manifest.len());
    for (class, mut ids) in by_class.into_iter().enumerate() {
        ids.sort_unstable();
        let mut rng = SplitMix64::new(seed ^ fnv1a64(taxonomy.name(class)));
        shuffle(&mut ids, &mut rng);
        let [train, val, _] = ratios.quotas(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            entries.push((id.to_string(), split));
        }
    }
    entries.sort_unstable();
    Ok(SplitPlan {
        entries,
        ratios: ratios.clone(),
        seed,
        manifest_digest: manifest.digest().to_string(),
    })
}

impl SplitPlan {
    /// Assembles a plan from explicit rows (sorted by id on construction).
    pub fn from_entries(
        mut entries: Vec<(String, Split)>,
        ratios: SplitRatios,
        seed: u64,
        manifest_digest: impl Into<String>,
    ) -> Self {
        entries.sort();
        SplitPlan {
            entries,
            ratios,
            seed,
            manifest_digest: manifest_digest.into(),
        }
    }

    pub fn entries(&self) -> &[(String, Split)] {
        &self.entries
    }

    pub fn ratios(&self) -> &SplitRatios {
        &self.ratios
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn manifest_digest(&self) -> &str {
        &self.manifest_digest
    }

    pub fn split_of(&self, sample_id: &str) -> Option<Split> {
        self.entries
            .binary_search_by(|(id, _)| id.as_str().cmp(sample_id))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Sample ids assigned to `split`, sorted.
    pub fn ids_in(&self, split: Split) -> Vec<String> {
        let mut ids: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, s)| *s == split)
            .map(|(id, _)| id.clone())
            .collect();
        ids.dedup();
        ids
    }

    pub fn meta(&self) -> PlanMeta {
        PlanMeta {
            ratios: self.ratios.clone(),
            seed: self.seed,
            manifest_digest: self.manifest_digest.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,split\n");
        for (id, split) in &self.entries {
            out.push_str(id);
            out.push(',');
            out.push_str(split.as_str());
            out.push('\n');
        }
        out
    }

    pub fn meta_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.meta()).expect("plan metadata serializes");
        s.push('\n');
        s
    }

    /// Stages `plan.csv` and `plan.meta.json` into `out`.
    pub fn stage(&self, csv_path: &Path, out: &mut io::OutputSet) {
        out.add(csv_path, self.to_csv());
        out.add(plan_sidecar_path(csv_path), self.meta_json());
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut out = io::OutputSet::new();
        self.stage(csv_path, &mut out);
        out.commit()
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta_path = plan_sidecar_path(csv_path);
        let meta_text = io::read_to_string(&meta_path)?;
        let meta: PlanMeta = serde_json::from_str(&meta_text).map_err(|source| Error::Json {
            path: meta_path,
            source,
        })?;
        let text = io::read_to_string(csv_path)?;
        Self::parse(&text, meta).map_err(|e| match e {
            Error::InvalidRows { issues, .. } => Error::InvalidRows {
                path: csv_path.to_path_buf(),
                issues,
            },
            other => other,
        })
    }

    pub fn parse(text: &str, meta: PlanMeta) -> Result<Self> {
        let mut issues = Vec::new();
        let mut entries = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == "sample_id,split" => {}
            other => {
                issues.push(RowIssue::Malformed {
                    line: 1,
                    reason: format!(
                        "expected header `sample_id,split`, found `{}`",
                        other.map(|(_, h)| h).unwrap_or("")
                    ),
                });
            }
        }
        for (i, raw) in lines {
            let line = i as u64 + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.is_empty() {
                continue;
            }
            match raw.rsplit_once(',') {
                Some((id, split)) if !id.is_empty() => match split.parse::<Split>() {
                    Ok(s) => entries.push((id.to_string(), s)),
                    Err(e) => issues.push(RowIssue::Malformed {
                        line,
                        reason: e.to_string(),
                    }),
                },
                _ => issues.push(RowIssue::Malformed {
                    line,
                    reason: "expected `sample_id,split`".into(),
                }),
            }
        }
        if !issues.is_empty() {
            return Err(Error::InvalidRows {
                path: PathBuf::new(),
                issues,
            });
        }
        Ok(SplitPlan::from_entries(
            entries,
            meta.ratios,
            meta.seed,
            meta.manifest_digest,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub failures: Vec<String>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, failures: Vec<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: failures.is_empty(),
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}", if c.passed { "PASS" } else { "FAIL" }, c.name)?;
            for msg in &c.failures {
                writeln!(f, "    {msg}")?;
            }
        }
        Ok(())
    }
}

/// Checks coverage, disjointness, per-class quota deviation (at most 1) and
/// the manifest digest. Failures are reported, never raised.
pub fn verify_split(manifest: &DatasetManifest, plan: &SplitPlan) -> VerificationReport {
    let mut seen: HashMap<&str, Vec<Split>> = HashMap::new();
    for (id, split) in &plan.entries {
        seen.entry(id.as_str()).or_default().push(*split);
    }

    let mut coverage = Vec::new();
    let mut missing: Vec<&str> = manifest
        .samples()
        .iter()
        .map(|s| s.sample_id.as_str())
        .filter(|id| !seen.contains_key(id))
        .collect();
    missing.sort_unstable();
    for id in missing {
        coverage.push(format!("sample `{id}` is not assigned to any split"));
    }
    let mut unknown: Vec<&str> = seen
        .keys()
        .copied()
        .filter(|id| !manifest.contains(id))
        .collect();
    unknown.sort_unstable();
    for id in unknown {
        coverage.push(format!("sample `{id}` is not in the manifest"));
    }

    let mut disjoint = Vec::new();
    let mut dupes: Vec<(&str, &Vec<Split>)> = seen
        .iter()
        .filter(|(_, v)| v.len() > 1)
        .map(|(k, v)| (*k, v))
        .collect();
    dupes.sort_unstable();
    for (id, splits) in dupes {
        let names: Vec<&str> = splits.iter().map(|s| s.as_str()).collect();
        disjoint.push(format!(
            "sample `{id}` is assigned {} times ({})",
            splits.len(),
            names.join(", ")
        ));
    }

    let taxonomy = manifest.taxonomy();
    let mut counts = vec![[0usize; 3]; taxonomy.len()];
    for (id, split) in &plan.entries {
        if let Some(label) = manifest.label_of(id) {
            counts[label][split.index()] += 1;
        }
    }
    let mut quota = Vec::new();
    for (class, n) in manifest.class_counts().into_iter().enumerate() {
        let expected = plan.ratios.quotas(n);
        for split in Split::ALL {
            let got = counts[class][split.index()];
            let want = expected[split.index()];
            if got.abs_diff(want) > 1 {
                quota.push(format!(
                    "class `{}`: {split} has {got} samples, quota is {want}",
                    taxonomy.name(class)
                ));
            }
        }
    }

    let mut digest = Vec::new();
    if plan.manifest_digest != manifest.digest() {
        digest.push(format!(
            "plan was built from manifest {}, this manifest is {}",
            plan.manifest_digest,
            manifest.digest()
        ));
    }

    VerificationReport {
        checks: vec![
            CheckResult::new("coverage", coverage),
            CheckResult::new("disjointness", disjoint),
            CheckResult::new("quota", quota),
            CheckResult::new("digest", digest),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::SampleRecord;
    use crate::taxonomy::ClassTaxonomy;

    fn manifest(counts: &[usize]) -> DatasetManifest {
        let tax = ClassTaxonomy::new((0..counts.len().max(2)).map(|i| format!("c{i}"))).unwrap();
        let mut samples = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for j in 0..n {
                samples.push(SampleRecord {
                    sample_id: format!("c{label}-{j:04}"),
                    relative_path: format!("c{label}/{j}.jpg"),
                    label,
                });
            }
        }
        DatasetManifest::new(tax, samples).unwrap()
    }

    #[test]
    fn quotas_for_default_ratios() {
        let r = SplitRatios::pbc_default();
        assert_eq!(r.quotas(100), [64, 24, 12]);
        assert_eq!(r.quotas(25), [16, 6, 3]);
        assert_eq!(r.quotas(10), [7, 2, 1]);
        assert_eq!(r.quotas(1), [1, 0, 0]);
        assert_eq!(r.quotas(0), [0, 0, 0]);
    }

    #[test]
    fn remainder_ties_follow_priority() {
        // shares 1/3 each -> remainders tie, train then val win
        let third = Fraction::new(1, 3);
        assert_eq!(
            apportion(2, &[third.clone(), third.clone(), third]),
            vec![1, 1, 0]
        );
    }

    #[test]
    fn ratios_must_sum_to_one() {
        let err = "0.6,0.2,0.1".parse::<SplitRatios>().unwrap_err();
        assert!(err.to_string().contains("0.9"), "{err}");
        assert!("0.64,0.24".parse::<SplitRatios>().is_err());
        assert!("1.1,-0.1,0".parse::<SplitRatios>().is_err());
        assert_eq!(
            "16/25,6/25,3/25".parse::<SplitRatios>().unwrap(),
            SplitRatios::pbc_default()
        );
        assert_eq!(SplitRatios::pbc_default().to_string(), "0.64,0.24,0.12");
    }

    #[test]
    fn plan_is_exact_and_verifies() {
        let m = manifest(&[100, 25, 10, 1]);
        let plan = plan_split(&m, &SplitRatios::pbc_default(), 42).unwrap();
        assert_eq!(plan.entries().len(), 136);
        let report = verify_split(&m, &plan);
        assert!(report.passed(), "{report}");
        let test = plan.ids_in(Split::Test);
        assert_eq!(test.len(), 12 + 3 + 1);
    }

    #[test]
    fn errors_on_empty_inputs() {
        let tax = ClassTaxonomy::new(["a", "b"]).unwrap();
        let empty = DatasetManifest::new(tax.clone(), vec![]).unwrap();
        assert!(matches!(
            plan_split(&empty, &SplitRatios::default(), 0),
            Err(Error::EmptyManifest)
        ));
        let m = manifest(&[3, 0]);
        assert!(
            matches!(plan_split(&m, &SplitRatios::default(), 0), Err(Error::EmptyClass(c)) if c == "c1")
        );
    }

    #[test]
    fn seed_changes_assignment() {
        let m = manifest(&[200, 3]);
        let a = plan_split(&m, &SplitRatios::default(), 1).unwrap();
        let b = plan_split(&m, &SplitRatios::default(), 2).unwrap();
        assert_ne!(a.to_csv(), b.to_csv());
        assert_eq!(
            a.to_csv(),
            plan_split(&m, &SplitRatios::default(), 1).unwrap().to_csv()
        );
    }

    #[test]
    fn removed_sample_fails_coverage() {
        let m = manifest(&[20, 20]);
        let plan = plan_split(&m, &SplitRatios::default(), 5).unwrap();
        let mut entries = plan.entries().to_vec();
        let (gone, _) = entries.remove(3);
        let tampered = SplitPlan::from_entries(entries, plan.ratios().clone(), 5, m.digest());
        let report = verify_split(&m, &tampered);
        let cov = report.check("coverage").unwrap();
        assert!(!cov.passed);
        assert!(cov.failures[0].contains(&gone));
    }

    #[test]
    fn flip_beyond_bound_fails_quota() {
        // class of 25: quotas 16/6/3. Start from a plan that is already one
        // sample off (15/6/4, allowed), then flip one more train sample.
        let m = manifest(&[25]);
        let mut entries: Vec<(String, Split)> = m
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let split = match i {
                    0..=14 => Split::Train,
                    15..=20 => Split::Val,
                    _ => Split::Test,
                };
                (s.sample_id.clone(), split)
            })
            .collect();
        let ok = SplitPlan::from_entries(entries.clone(), SplitRatios::default(), 0, m.digest());
        assert!(verify_split(&m, &ok).passed());
        entries[0].1 = Split::Test;
        let bad = SplitPlan::from_entries(entries, SplitRatios::default(), 0, m.digest());
        let report = verify_split(&m, &bad);
        let q = report.check("quota").unwrap();
        assert!(!q.passed);
        assert!(
            q.failures.iter().any(|f| f.contains("train has 14")),
            "{report}"
        );
    }

    #[test]
    fn duplicate_rows_fail_disjointness() {
        let m = manifest(&[5, 2]);
        let plan = plan_split(&m, &SplitRatios::default(), 0).unwrap();
        let mut entries = plan.entries().to_vec();
        entries.push((entries[0].0.clone(), Split::Test));
        let bad = SplitPlan::from_entries(entries, SplitRatios::default(), 0, m.digest());
        assert!(!verify_split(&m, &bad).check("disjointness").unwrap().passed);
    }

    #[test]
    fn digest_mismatch_detected() {
        let m = manifest(&[5, 2]);
        let plan = plan_split(&m, &SplitRatios::default(), 0).unwrap();
        let bad = SplitPlan::from_entries(plan.entries().to_vec(), SplitRatios::default(), 0, "00");
        assert!(!verify_split(&m, &bad).check("digest").unwrap().passed);
    }

    #[test]
    fn csv_round_trip() {
        let m = manifest(&[30, 12]);
        let plan = plan_split(&m, &SplitRatios::default(), 9).unwrap();
        let back = SplitPlan::parse(&plan.to_csv(), plan.meta()).unwrap();
        assert_eq!(back, plan);
        let meta: PlanMeta = serde_json::from_str(&plan.meta_json()).unwrap();
        assert_eq!(meta, plan.meta());
    }
}
