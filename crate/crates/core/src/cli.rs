//! Command-line interface.
//!
//! Exit codes: 0 success, 1 validation or domain error, 2 I/O error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::ensemble::{
    select_members, Candidate, EnsembleConfig, SelectionMetric, TiePolicy, ValidationData,
};
use crate::error::{Error, Result};
use crate::io::{self, OutputSet};
use crate::manifest::{load_manifest, DatasetManifest};
use crate::metrics::{evaluate, evaluate_predicted, AggregationMode, EvaluationResult};
use crate::predictions::{load_prediction_dir, PredictionDir, PredictionSet};
use crate::report::{
    self, render_confusion, render_model_table, BenchmarkReport, ConfusionView, ReferenceRow,
};
use crate::split::{
    plan_split, verify_split, CheckResult, Split, SplitPlan, SplitRatios, VerificationReport,
};
use crate::synth;

pub const ENSEMBLE_NAME: &str = "Ensemble";
const ENSEMBLE_FILE: &str = "result_ensemble.json";

#[derive(Debug, Parser)]
#[command(
    name = "hemobench",
    version,
    about = "Benchmark harness for multi-class blood cell classifiers"
)]
pub struct Cli {
    /// Worker threads for per-model work (default: available cores).
    #[arg(long, global = true, env = "HEMOBENCH_JOBS")]
    pub jobs: Option<usize>,
    /// TOML file of `key = value` defaults; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/val/test split of a manifest.
    Split(SplitArgs),
    /// Structural checks on a manifest, split plan and prediction files.
    Validate(ValidateArgs),
    /// Evaluate every prediction file on one split.
    Evaluate(EvaluateArgs),
    /// Select ensemble members, vote on the test split and compare.
    Ensemble(EnsembleArgs),
    /// Render report tables from result files.
    Report(ReportArgs),
    /// Write a synthetic manifest and seeded prediction files.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Train, validation and test fractions [default: 0.64,0.24,0.12].
    #[arg(long)]
    pub ratios: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plan CSV to write; the sidecar goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Split every model must cover when a plan is given [default: test].
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// Aggregation of per-class metrics: macro or weighted [default: macro].
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Directory of per-model test results from `evaluate`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Number of members [default: 4].
    #[arg(long)]
    pub k: Option<usize>,
    /// sum_prob, model_priority or lowest_index [default: sum_prob].
    #[arg(long)]
    pub policy: Option<String>,
    /// Rank candidates by test accuracy (`paper`) or validation accuracy
    /// (`validation`) [default: paper].
    #[arg(long)]
    pub selection: Option<String>,
    /// [default: macro]
    #[arg(long)]
    pub mode: Option<String>,
    /// Reference rows CSV (method,accuracy,precision,sensitivity,specificity)
    /// [default: bundled].
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// [default: the results directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// [default: the results directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parsed `--config` file. Keys are looked up in the subcommand's table
/// first (`[split]`, `[evaluate]`, ...), then at top level.
#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
    section: &'static str,
}

impl Config {
    pub fn load(path: &Path, section: &'static str) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        Ok(Config { table, section })
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.table
            .get(self.section)
            .and_then(|s| s.as_table())
            .and_then(|s| s.get(key))
            .or_else(|| self.table.get(key).filter(|v| !v.is_table()))
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let text = match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => {
                return Err(Error::Invalid(format!(
                    "config key `{key}`: unsupported value {other}"
                )))
            }
        };
        text.parse()
            .map(Some)
            .map_err(|e| Error::Invalid(format!("config key `{key}`: {e}")))
    }
}

struct Resolver<'a> {
    config: &'a Config,
}

impl Resolver<'_> {
    fn opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.config.get(key),
        }
    }

    fn req<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.opt(flag, key)?.ok_or_else(|| {
            Error::Invalid(format!(
                "missing --{} (flag or config key `{key}`)",
                key.replace('_', "-")
            ))
        })
    }

    fn parsed<T>(&self, flag: Option<String>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.opt(flag, key)? {
            Some(s) => s
                .parse()
                .map_err(|e| Error::Invalid(format!("--{key}: {e}"))),
            None => Ok(default),
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn section(cmd: &Command) -> &'static str {
    match cmd {
        Command::Split(_) => "split",
        Command::Validate(_) => "validate",
        Command::Evaluate(_) => "evaluate",
        Command::Ensemble(_) => "ensemble",
        Command::Report(_) => "report",
        Command::Synth(_) => "synth",
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    let name = section(&cli.command);
    let config = match &cli.config {
        Some(p) => Config::load(p, name)?,
        None => Config {
            section: name,
            ..Config::default()
        },
    };
    let r = Resolver { config: &config };
    let jobs = match r.opt(cli.jobs, "jobs")? {
        Some(0) => return Err(Error::Invalid("--jobs must be at least 1".into())),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Split(a) => cmd_split(a, &r),
        Command::Validate(a) => cmd_validate(a, &r),
        Command::Evaluate(a) => cmd_evaluate(a, &r),
        Command::Ensemble(a) => cmd_ensemble(a, &r),
        Command::Report(a) => cmd_report(a, &r),
        Command::Synth(a) => cmd_synth(a, &r),
    })
}

fn warn(msg: impl Display) {
    eprintln!("warning: {msg}");
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

/// Removes a directory prefix from messages that end up in output files.
fn scrub(msg: &str, dir: &Path) -> String {
    let prefix = format!("{}{}", dir.display(), std::path::MAIN_SEPARATOR);
    msg.replace(&prefix, "")
}

/// File-name-safe form of a model name.
pub fn file_stem(model: &str) -> String {
    model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn stems<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<BTreeMap<String, String>> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for name in names {
        let stem = file_stem(name);
        if let Some(other) = seen.insert(stem.clone(), name.to_string()) {
            return Err(Error::Invalid(format!(
                "models `{other}` and `{name}` map to the same file name `{stem}`"
            )));
        }
        out.insert(name.to_string(), stem);
    }
    Ok(out)
}

fn load_plan_for(manifest: &DatasetManifest, path: &Path) -> Result<SplitPlan> {
    let plan = SplitPlan::load(path)?;
    if plan.manifest_digest() != manifest.digest() {
        return Err(Error::Incompatible(format!(
            "plan `{}` was made for manifest digest {}, the manifest has {}",
            file_name(path),
            plan.manifest_digest(),
            manifest.digest()
        )));
    }
    Ok(plan)
}

fn load_references(path: Option<&Path>) -> Result<(Vec<ReferenceRow>, String)> {
    match path {
        Some(p) => Ok((
            report::parse_references(&io::read_to_string(p)?)?,
            file_name(p),
        )),
        None => Ok((report::default_references(), "bundled".to_string())),
    }
}

fn read_provenance(dir: &Path) -> Result<Value> {
    let path = dir.join("provenance.json");
    if !path.exists() {
        return Ok(json!({}));
    }
    serde_json::from_str(&io::read_to_string(&path)?).map_err(|e| Error::Json { path, source: e })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn cmd_split(a: SplitArgs, r: &Resolver) -> Result<i32> {
    let manifest = load_manifest(&r.req(a.manifest, "manifest")?)?;
    let ratios = r.parsed(a.ratios, "ratios", SplitRatios::pbc_default())?;
    let seed = r.opt(a.seed, "seed")?.unwrap_or(0);
    let out: PathBuf = r.req(a.out, "out")?;
    let plan = plan_split(&manifest, &ratios, seed)?;
    let mut files = OutputSet::new();
    plan.stage(&out, &mut files);
    files.commit()?;
    let sizes: Vec<String> = Split::ALL
        .iter()
        .map(|s| format!("{} {}", plan.ids_in(*s).len(), s))
        .collect();
    println!("wrote {} ({})", out.display(), sizes.join(", "));
    Ok(0)
}

fn cmd_validate(a: ValidateArgs, r: &Resolver) -> Result<i32> {
    let manifest_path: PathBuf = r.req(a.manifest, "manifest")?;
    let plan_path: Option<PathBuf> = r.opt(a.plan, "plan")?;
    let pred_dir: Option<PathBuf> = r.opt(a.pred_dir, "pred_dir")?;
    let split = r.parsed(a.split, "split", Split::Test)?;

    let mut report = VerificationReport::default();
    let manifest = match load_manifest(&manifest_path) {
        Ok(m) => {
            report.checks.push(CheckResult::new("manifest", vec![]));
            m
        }
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => {
            report
                .checks
                .push(CheckResult::new("manifest", vec![e.to_string()]));
            print!("{report}");
            return Ok(1);
        }
    };

    let plan = match &plan_path {
        Some(p) => match SplitPlan::load(p) {
            Ok(plan) => {
                report.checks.extend(verify_split(&manifest, &plan).checks);
                Some(plan)
            }
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => {
                report
                    .checks
                    .push(CheckResult::new("plan", vec![e.to_string()]));
                None
            }
        },
        None => None,
    };

    if let Some(dir) = &pred_dir {
        let loaded = load_prediction_dir(dir, manifest.taxonomy(), Some(&manifest))?;
        if loaded.files.is_empty() {
            report.checks.push(CheckResult::new(
                "predictions",
                vec![format!("no prediction files in {}", dir.display())],
            ));
        }
        let failed: BTreeMap<&str, String> = loaded
            .failures
            .iter()
            .map(|(name, e)| (name.as_str(), e.to_string()))
            .collect();
        for (name, _) in &loaded.files {
            let failures = failed.get(name.as_str()).cloned().into_iter().collect();
            report
                .checks
                .push(CheckResult::new(format!("predictions {name}"), failures));
        }
        for (name, msg) in &failed {
            if !loaded.files.iter().any(|(f, _)| f == name) {
                report
                    .checks
                    .push(CheckResult::new(format!("model {name}"), vec![msg.clone()]));
            }
        }
        if let Some(plan) = &plan {
            let ids = plan.ids_in(split);
            for m in &loaded.models {
                let missing: Vec<String> = ids
                    .iter()
                    .filter(|id| m.row_index(id).is_none())
                    .cloned()
                    .collect();
                let failures = if missing.is_empty() {
                    vec![]
                } else {
                    vec![Error::MissingPredictions {
                        model: m.model_name().to_string(),
                        ids: missing,
                    }
                    .to_string()]
                };
                report.checks.push(CheckResult::new(
                    format!("coverage {} ({split})", m.model_name()),
                    failures,
                ));
            }
        }
    }

    print!("{report}");
    Ok(if report.passed() { 0 } else { 1 })
}

fn load_predictions(dir: &Path, manifest: &DatasetManifest) -> Result<PredictionDir> {
    let loaded = load_prediction_dir(dir, manifest.taxonomy(), Some(manifest))?;
    if loaded.files.is_empty() {
        return Err(Error::Invalid(format!(
            "no prediction files in {}",
            dir.display()
        )));
    }
    for (name, e) in &loaded.failures {
        warn(format!("skipping `{name}`: {e}"));
    }
    Ok(loaded)
}

fn cmd_evaluate(a: EvaluateArgs, r: &Resolver) -> Result<i32> {
    let manifest_path: PathBuf = r.req(a.manifest, "manifest")?;
    let plan_path: PathBuf = r.req(a.plan, "plan")?;
    let pred_dir: PathBuf = r.req(a.pred_dir, "pred_dir")?;
    let split = r.parsed(a.split, "split", Split::Test)?;
    let mode = r.parsed(a.mode, "mode", AggregationMode::Macro)?;
    let out: PathBuf = r.req(a.out, "out")?;

    let manifest = load_manifest(&manifest_path)?;
    let plan = load_plan_for(&manifest, &plan_path)?;
    let loaded = load_predictions(&pred_dir, &manifest)?;

    let outcomes: Vec<Result<EvaluationResult>> = loaded
        .models
        .par_iter()
        .map(|p| evaluate(p, &manifest, &plan, split, mode))
        .collect();
    let mut results = Vec::new();
    let mut skipped: Vec<(String, String)> = loaded
        .failures
        .iter()
        .map(|(n, e)| (n.clone(), scrub(&e.to_string(), &pred_dir)))
        .collect();
    for (p, outcome) in loaded.models.iter().zip(outcomes) {
        match outcome {
            Ok(res) => results.push(res),
            Err(e) => {
                warn(format!("skipping `{}`: {e}", p.model_name()));
                skipped.push((p.model_name().to_string(), scrub(&e.to_string(), &pred_dir)));
            }
        }
    }
    if results.is_empty() {
        return Err(Error::Invalid(
            "all prediction files failed validation".into(),
        ));
    }

    let stems = stems(results.iter().map(|r| r.model_name.as_str()))?;
    if stems.values().any(|s| s == "ensemble") {
        return Err(Error::Invalid("model name `ensemble` is reserved".into()));
    }
    let mut files = OutputSet::new();
    for res in &results {
        let stem = &stems[&res.model_name];
        files.add(out.join(format!("result_{stem}.json")), res.to_json());
        files.add(
            out.join(format!("confusion_{stem}.csv")),
            render_confusion(&res.confusion, &res.taxonomy, ConfusionView::Counts).to_csv(),
        );
    }
    let table = render_model_table(&results)?;
    files.add(out.join("model_table.md"), table.to_markdown());
    files.add(out.join("model_table.csv"), table.to_csv());

    let provenance = json!({
        "tool": { "name": "hemobench", "version": env!("CARGO_PKG_VERSION") },
        "evaluate": {
            "manifest": { "file": file_name(&manifest_path), "digest": manifest.digest(), "samples": manifest.len() },
            "plan": {
                "file": file_name(&plan_path),
                "seed": plan.seed(),
                "ratios": plan.ratios().to_string(),
                "manifest_digest": plan.manifest_digest(),
            },
            "split": split.as_str(),
            "aggregation": mode.to_string(),
            "prediction_files": loaded.files.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect::<Vec<_>>(),
            "models": results.iter().map(|r| r.model_name.as_str()).collect::<Vec<_>>(),
            "skipped": skipped.iter().map(|(n, why)| json!({ "name": n, "reason": why })).collect::<Vec<_>>(),
        }
    });
    files.add(out.join("provenance.json"), pretty(&provenance));
    files.commit()?;
    println!(
        "evaluated {} model(s) on {split}; {} skipped",
        results.len(),
        skipped.len()
    );
    Ok(0)
}

/// Per-model results from `result_*.json` in `dir`, sorted by file name.
pub fn load_results(dir: &Path) -> Result<Vec<EvaluationResult>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = file_name(&path);
        if name.starts_with("result_") && name.ends_with(".json") && name != ENSEMBLE_FILE {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            EvaluationResult::from_json(&io::read_to_string(p)?)
                .map_err(|e| Error::Invalid(format!("{}: {e}", file_name(p))))
        })
        .collect()
}

fn cmd_ensemble(a: EnsembleArgs, r: &Resolver) -> Result<i32> {
    let results_dir: PathBuf = r.req(a.results, "results")?;
    let pred_dir: PathBuf = r.req(a.pred_dir, "pred_dir")?;
    let manifest_path: PathBuf = r.req(a.manifest, "manifest")?;
    let plan_path: PathBuf = r.req(a.plan, "plan")?;
    let k: usize = r.opt(a.k, "k")?.unwrap_or(4);
    let policy = r.parsed(a.policy, "policy", TiePolicy::SumProb)?;
    let metric = r.parsed(a.selection, "selection", SelectionMetric::TestAccuracy)?;
    let mode = r.parsed(a.mode, "mode", AggregationMode::Macro)?;
    let references_path: Option<PathBuf> = r.opt(a.references, "references")?;
    let out: PathBuf = r.opt(a.out, "out")?.unwrap_or_else(|| results_dir.clone());
    if k == 0 {
        return Err(Error::Invalid("--k must be at least 1".into()));
    }

    let manifest = load_manifest(&manifest_path)?;
    let plan = load_plan_for(&manifest, &plan_path)?;
    let loaded = load_predictions(&pred_dir, &manifest)?;
    let (references, references_source) = load_references(references_path.as_deref())?;
    let by_name: BTreeMap<&str, &PredictionSet> =
        loaded.models.iter().map(|p| (p.model_name(), p)).collect();

    let pool: Vec<EvaluationResult> = match metric {
        SelectionMetric::TestAccuracy => {
            let mut pool = Vec::new();
            for res in load_results(&results_dir)? {
                if res.split != Split::Test {
                    return Err(Error::Incompatible(format!(
                        "result for `{}` is on the {} split; test accuracy ranking needs test results",
                        res.model_name, res.split
                    )));
                }
                if by_name.contains_key(res.model_name.as_str()) {
                    pool.push(res);
                } else {
                    warn(format!(
                        "`{}` has a result but no predictions; not a candidate",
                        res.model_name
                    ));
                }
            }
            pool
        }
        SelectionMetric::ValidationAccuracy => {
            let outcomes: Vec<Result<EvaluationResult>> = loaded
                .models
                .par_iter()
                .map(|p| evaluate(p, &manifest, &plan, Split::Val, mode))
                .collect();
            let mut pool = Vec::new();
            for (p, o) in loaded.models.iter().zip(outcomes) {
                match o {
                    Ok(res) => pool.push(res),
                    Err(e) => warn(format!("`{}` is not a candidate: {e}", p.model_name())),
                }
            }
            pool
        }
    };
    let candidates: Vec<Candidate> = pool
        .iter()
        .map(|res| Candidate {
            name: &res.model_name,
            result: res,
        })
        .collect();

    let val_ids = plan.ids_in(Split::Val);
    let validation = ValidationData {
        labels: val_ids
            .iter()
            .map(|id| manifest.label_of(id).expect("plan matches manifest"))
            .collect(),
        sample_ids: val_ids,
        predictions: by_name.iter().map(|(n, p)| (n.to_string(), *p)).collect(),
    };
    let validation = (!validation.sample_ids.is_empty()).then_some(&validation);
    let config = select_members(&candidates, k, policy, metric, validation)?;

    let available: Vec<&PredictionSet> = loaded.models.iter().collect();
    let test_ids = plan.ids_in(Split::Test);
    let predicted = config.predict(&available, &test_ids)?;
    let ens = evaluate_predicted(
        ENSEMBLE_NAME,
        "ensemble",
        &test_ids,
        &predicted,
        &manifest,
        Split::Test,
        mode,
    )?;
    let members: Vec<EvaluationResult> = config
        .members
        .iter()
        .map(|m| evaluate(by_name[m.as_str()], &manifest, &plan, Split::Test, mode))
        .collect::<Result<_>>()?;
    let comparison = report::render_comparison_table(&members, &ens, &references)?;

    let mut provenance = read_provenance(&results_dir)?;
    provenance["ensemble"] = json!({
        "config": serde_json::to_value(&config).expect("config serializes"),
        "aggregation": mode.to_string(),
        "references": references_source,
        "manifest_digest": manifest.digest(),
        "plan": { "file": file_name(&plan_path), "seed": plan.seed() },
        "prediction_files": loaded.files.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect::<Vec<_>>(),
    });

    let mut files = OutputSet::new();
    files.add(out.join("ensemble.json"), config.to_json());
    files.add(out.join(ENSEMBLE_FILE), ens.to_json());
    files.add(out.join("comparison.md"), comparison.to_markdown());
    files.add(out.join("comparison.csv"), comparison.to_csv());
    files.add(
        out.join("confusion_ensemble.csv"),
        render_confusion(&ens.confusion, &ens.taxonomy, ConfusionView::Counts).to_csv(),
    );
    files.add(out.join("provenance.json"), pretty(&provenance));
    files.commit()?;

    println!("members: {}", config.members.join(", "));
    if let Some(sel) = &config.selection {
        if !sel.trials.is_empty() {
            println!(
                "tie for the last slot(s) resolved in favour of: {}",
                sel.tie_winners.join(", ")
            );
        }
    }
    println!(
        "ensemble accuracy / precision / sensitivity / specificity (%): {}",
        comparison.ensemble().expect("ensemble row").summary()
    );
    Ok(0)
}

fn cmd_report(a: ReportArgs, r: &Resolver) -> Result<i32> {
    let results_dir: PathBuf = r.req(a.results, "results")?;
    let references_path: Option<PathBuf> = r.opt(a.references, "references")?;
    let out: PathBuf = r.opt(a.out, "out")?.unwrap_or_else(|| results_dir.clone());

    let results = load_results(&results_dir)?;
    if results.is_empty() {
        return Err(Error::Invalid(format!(
            "no result files in {}",
            results_dir.display()
        )));
    }
    let (references, references_source) = load_references(references_path.as_deref())?;
    let ensemble_path = results_dir.join(ENSEMBLE_FILE);
    let mut notes = Vec::new();
    let ensemble = if ensemble_path.exists() {
        let res = EvaluationResult::from_json(&io::read_to_string(&ensemble_path)?)
            .map_err(|e| Error::Invalid(format!("{ENSEMBLE_FILE}: {e}")))?;
        let config_path = results_dir.join("ensemble.json");
        let config: EnsembleConfig = serde_json::from_str(&io::read_to_string(&config_path)?)
            .map_err(|e| Error::Json {
                path: config_path.clone(),
                source: e,
            })?;
        config.validate()?;
        notes.push(format!("Ensemble members: {}.", config.members.join(", ")));
        notes.push(format!(
            "Members ranked by {}; vote ties broken by `{}`.",
            config.selection_metric, config.tie_policy
        ));
        if config.tie_policy == TiePolicy::SumProb {
            notes.push("`sum_prob` is the harness default tie rule; the tie rule is a configurable choice.".into());
        }
        if let Some(sel) = config.selection.as_ref().filter(|s| !s.trials.is_empty()) {
            notes.push(format!(
                "{} candidates tied at the last selection accuracy; chosen by ensemble validation accuracy: {}.",
                sel.tie_pool.len(),
                sel.tie_winners.join(", ")
            ));
        }
        Some((res, config.members))
    } else {
        None
    };

    let mut provenance = read_provenance(&results_dir)?;
    provenance["report"] = json!({ "references": references_source });
    let report = BenchmarkReport::build(results, ensemble, &references, notes, provenance)?;

    let names: Vec<&str> = report
        .results
        .iter()
        .map(|r| r.model_name.as_str())
        .filter(|n| *n != ENSEMBLE_NAME)
        .collect();
    let stems = stems(names)?;
    let mut files = OutputSet::new();
    files.add(out.join("report.md"), report.to_markdown());
    files.add(out.join("report.csv"), report.to_csv());
    for res in &report.results {
        let stem = if res.model_name == ENSEMBLE_NAME && res.architecture == "ensemble" {
            "ensemble".to_string()
        } else {
            stems[&res.model_name].clone()
        };
        files.add(
            out.join(format!("confusion_{stem}.csv")),
            render_confusion(&res.confusion, &res.taxonomy, ConfusionView::Counts).to_csv(),
        );
    }
    files.add(out.join("provenance.json"), pretty(&report.provenance));
    files.commit()?;
    println!(
        "wrote report for {} model(s) to {}",
        report.results.len(),
        out.display()
    );
    Ok(0)
}

fn cmd_synth(a: SynthArgs, r: &Resolver) -> Result<i32> {
    let seed = r.opt(a.seed, "seed")?.unwrap_or(0);
    let out: PathBuf = r.req(a.out, "out")?;
    synth::write_synthetic(&out, seed)?;
    println!(
        "wrote {}/manifest.csv and {} prediction files",
        out.display(),
        synth::SYNTHETIC_MODELS.len()
    );
    Ok(0)
}
