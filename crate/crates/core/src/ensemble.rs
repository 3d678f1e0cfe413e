//! Plurality-vote ensembles and validation-driven member selection.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::metrics::EvaluationResult;
use crate::predictions::PredictionSet;

/// How a plurality tie between classes is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Highest probability summed over all members.
    #[default]
    SumProb,
    /// The tied class voted for by the highest-priority member. Votes are
    /// taken to be in priority order, first vote highest.
    ModelPriority,
    /// Smallest class index.
    LowestIndex,
}

impl TiePolicy {
    pub const ALL: [TiePolicy; 3] = [
        TiePolicy::SumProb,
        TiePolicy::ModelPriority,
        TiePolicy::LowestIndex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TiePolicy::SumProb => "sum_prob",
            TiePolicy::ModelPriority => "model_priority",
            TiePolicy::LowestIndex => "lowest_index",
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TiePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TiePolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown tie policy `{s}` (expected sum_prob, model_priority or lowest_index)"
                ))
            })
    }
}

/// Which accuracy ranks the candidate models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    ValidationAccuracy,
    /// Ranking by test accuracy, as done when reproducing published tables.
    TestAccuracy,
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMetric::ValidationAccuracy => "validation_accuracy",
            SelectionMetric::TestAccuracy => "test_accuracy",
        })
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation_accuracy" | "validation" => Ok(SelectionMetric::ValidationAccuracy),
            "test_accuracy" | "paper" | "test" => Ok(SelectionMetric::TestAccuracy),
            _ => Err(Error::Invalid(format!(
                "unknown selection metric `{s}` (expected paper or validation)"
            ))),
        }
    }
}

/// Plurality vote over member predictions with `policy` resolving ties.
///
/// `score_rows[i]` holds the class probabilities of the member that cast
/// `votes[i]`; they are only needed for [`TiePolicy::SumProb`].
pub fn majority_vote(
    votes: &[usize],
    score_rows: Option<&[&[f64]]>,
    policy: TiePolicy,
) -> Result<usize> {
    if votes.is_empty() {
        return Err(Error::EmptyVotes);
    }
    let width = votes.iter().max().copied().unwrap_or(0) + 1;
    let mut tally = vec![0usize; width];
    for &v in votes {
        tally[v] += 1;
    }
    let top = *tally.iter().max().expect("non-empty");
    let tied: Vec<usize> = (0..width).filter(|&c| tally[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    match policy {
        TiePolicy::LowestIndex => Ok(tied[0]),
        TiePolicy::ModelPriority => Ok(*votes
            .iter()
            .find(|v| tied.contains(v))
            .expect("a tied class received a vote")),
        TiePolicy::SumProb => {
            let rows = score_rows.ok_or(Error::MissingScores)?;
            if rows.len() != votes.len() {
                return Err(Error::MissingScores);
            }
            let mut best = tied[0];
            let mut best_sum = f64::NEG_INFINITY;
            for &class in &tied {
                let mut parts: Vec<f64> = Vec::with_capacity(rows.len());
                for row in rows {
                    parts.push(*row.get(class).ok_or(Error::ClassOutOfRange {
                        index: class,
                        classes: row.len(),
                    })?);
                }
                // summing in sorted order makes the result independent of member order
                parts.sort_by(f64::total_cmp);
                let sum: f64 = parts.iter().sum();
                if sum > best_sum {
                    best = class;
                    best_sum = sum;
                }
            }
            Ok(best)
        }
    }
}

/// Per-sample vote of `members` (in priority order) over `sample_ids`.
pub fn ensemble_predict(
    members: &[&PredictionSet],
    sample_ids: &[String],
    policy: TiePolicy,
) -> Result<Vec<usize>> {
    if members.is_empty() {
        return Err(Error::Ensemble("no members".into()));
    }
    let classes = members[0].num_classes();
    if let Some(m) = members.iter().find(|m| m.num_classes() != classes) {
        return Err(Error::Ensemble(format!(
            "member `{}` scores {} classes, expected {classes}",
            m.model_name(),
            m.num_classes()
        )));
    }
    let mut out = Vec::with_capacity(sample_ids.len());
    let mut votes = Vec::with_capacity(members.len());
    let mut rows: Vec<&[f64]> = Vec::with_capacity(members.len());
    for id in sample_ids {
        votes.clear();
        rows.clear();
        for m in members {
            let r = m.row_index(id).ok_or_else(|| Error::MissingPredictions {
                model: m.model_name().to_string(),
                ids: vec![id.clone()],
            })?;
            votes.push(m.predicted(r));
            rows.push(m.probabilities(r));
        }
        out.push(majority_vote(&votes, Some(&rows), policy)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub name: String,
    pub accuracy: Fraction,
}

/// One trial of the tie-resolution search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieTrial {
    pub slot: usize,
    pub candidate: String,
    pub members: Vec<String>,
    pub validation_accuracy: Fraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionProvenance {
    pub k: usize,
    pub metric: SelectionMetric,
    pub ranking: Vec<RankedCandidate>,
    /// Members whose accuracy is strictly above the k-th best.
    pub fixed: Vec<String>,
    /// Candidates tied at the k-th best accuracy.
    pub tie_pool: Vec<String>,
    pub trials: Vec<TieTrial>,
    /// Tie-pool candidates that made it in.
    pub tie_winners: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub members: Vec<String>,
    pub tie_policy: TiePolicy,
    /// Member order used by [`TiePolicy::ModelPriority`], highest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub priority: Vec<String>,
    pub selection_metric: SelectionMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionProvenance>,
}

impl EnsembleConfig {
    pub fn new(
        members: Vec<String>,
        tie_policy: TiePolicy,
        priority: Vec<String>,
        selection_metric: SelectionMetric,
    ) -> Result<Self> {
        let config = EnsembleConfig {
            members,
            tie_policy,
            priority,
            selection_metric,
            selection: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Ensemble("members must be non-empty".into()));
        }
        let unique: HashSet<&String> = self.members.iter().collect();
        if unique.len() != self.members.len() {
            return Err(Error::Ensemble("members must be unique".into()));
        }
        if self.tie_policy == TiePolicy::ModelPriority {
            let prio: HashSet<&String> = self.priority.iter().collect();
            if prio != unique || self.priority.len() != self.members.len() {
                return Err(Error::Ensemble(
                    "model_priority needs a priority list ordering exactly the members".into(),
                ));
            }
        }
        Ok(())
    }

    /// Members in the order votes are cast: priority order for
    /// `model_priority`, listed order otherwise.
    pub fn voting_order(&self) -> &[String] {
        if self.tie_policy == TiePolicy::ModelPriority {
            &self.priority
        } else {
            &self.members
        }
    }

    /// Picks the member prediction sets out of `available` in voting order.
    pub fn resolve<'a>(&self, available: &[&'a PredictionSet]) -> Result<Vec<&'a PredictionSet>> {
        self.voting_order()
            .iter()
            .map(|name| {
                available
                    .iter()
                    .copied()
                    .find(|p| p.model_name() == name)
                    .ok_or_else(|| Error::Ensemble(format!("no predictions for member `{name}`")))
            })
            .collect()
    }

    pub fn predict(
        &self,
        available: &[&PredictionSet],
        sample_ids: &[String],
    ) -> Result<Vec<usize>> {
        ensemble_predict(&self.resolve(available)?, sample_ids, self.tie_policy)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// A model competing for an ensemble slot, with its evaluation on the
/// selection split.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub name: &'a str,
    pub result: &'a EvaluationResult,
}

/// Validation data used to score candidate ensembles when accuracy ties
/// contest the last slot(s).
#[derive(Debug, Clone)]
pub struct ValidationData<'a> {
    pub sample_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub predictions: BTreeMap<String, &'a PredictionSet>,
}

impl ValidationData<'_> {
    fn accuracy(&self, members: &[String], policy: TiePolicy) -> Result<Fraction> {
        let sets: Vec<&PredictionSet> = members
            .iter()
            .map(|m| {
                self.predictions.get(m).copied().ok_or_else(|| {
                    Error::Ensemble(format!("missing validation predictions for `{m}`"))
                })
            })
            .collect::<Result<_>>()?;
        let predicted = ensemble_predict(&sets, &self.sample_ids, policy)?;
        let correct = predicted
            .iter()
            .zip(&self.labels)
            .filter(|(p, t)| p == t)
            .count();
        Fraction::checked(correct as u64, self.labels.len() as u64)
            .ok_or_else(|| Error::Ensemble("validation split is empty".into()))
    }
}

/// Chooses `k` ensemble members.
///
/// Candidates are ranked by overall accuracy on the selection split. Models
/// strictly above the k-th best accuracy are fixed. If more candidates tie at
/// that accuracy than slots remain, each open slot is filled in turn by trying
/// every remaining tied candidate in it, scoring the resulting ensemble on the
/// validation split and keeping the best (ties: lexicographically smallest
/// name). Members are listed in rank order, which is also the priority order.
pub fn select_members(
    candidates: &[Candidate<'_>],
    k: usize,
    policy: TiePolicy,
    metric: SelectionMetric,
    validation: Option<&ValidationData<'_>>,
) -> Result<EnsembleConfig> {
    if k == 0 {
        return Err(Error::Ensemble("k must be at least 1".into()));
    }
    if k > candidates.len() {
        return Err(Error::InsufficientCandidates {
            k,
            available: candidates.len(),
        });
    }
    let names: HashSet<&str> = candidates.iter().map(|c| c.name).collect();
    if names.len() != candidates.len() {
        return Err(Error::Ensemble("candidate names must be unique".into()));
    }

    let mut ranked: Vec<RankedCandidate> = candidates
        .iter()
        .map(|c| RankedCandidate {
            name: c.name.to_string(),
            accuracy: c.result.overall_accuracy.clone(),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.accuracy
            .cmp(&a.accuracy)
            .then_with(|| a.name.cmp(&b.name))
    });

    let threshold = ranked[k - 1].accuracy.clone();
    let fixed: Vec<String> = ranked
        .iter()
        .take_while(|c| c.accuracy > threshold)
        .map(|c| c.name.clone())
        .collect();
    let tie_pool: Vec<String> = ranked
        .iter()
        .filter(|c| c.accuracy == threshold)
        .map(|c| c.name.clone())
        .collect();
    let slots = k - fixed.len();

    let mut members = fixed.clone();
    let mut trials = Vec::new();
    let mut tie_winners = Vec::new();
    if tie_pool.len() == slots {
        tie_winners = tie_pool.clone();
        members.extend(tie_pool.iter().cloned());
    } else {
        let validation = validation.ok_or_else(|| {
            Error::Ensemble(format!(
                "{} candidates tie for {slots} slot(s); validation predictions are required to break the tie",
                tie_pool.len()
            ))
        })?;
        let mut remaining = tie_pool.clone();
        for slot in members.len()..k {
            let scored: Vec<(String, Vec<String>, Fraction)> = remaining
                .par_iter()
                .map(|cand| {
                    let mut trial = members.clone();
                    trial.push(cand.clone());
                    let acc = validation.accuracy(&trial, policy)?;
                    Ok((cand.clone(), trial, acc))
                })
                .collect::<Result<_>>()?;
            // remaining is sorted by name, so keeping the first maximum breaks ties by name
            let mut best = 0;
            for (i, s) in scored.iter().enumerate() {
                if s.2 > scored[best].2 {
                    best = i;
                }
            }
            let winner = scored[best].0.clone();
            trials.extend(
                scored
                    .into_iter()
                    .map(|(candidate, members, validation_accuracy)| TieTrial {
                        slot: slot + 1,
                        candidate,
                        members,
                        validation_accuracy,
                    }),
            );
            remaining.retain(|c| *c != winner);
            members.push(winner.clone());
            tie_winners.push(winner);
        }
    }

    let priority = if policy == TiePolicy::ModelPriority {
        members.clone()
    } else {
        Vec::new()
    };
    let mut config = EnsembleConfig::new(members, policy, priority, metric)?;
    config.selection = Some(SelectionProvenance {
        k,
        metric,
        ranking: ranked,
        fixed,
        tie_pool,
        trials,
        tie_winners,
    });
    Ok(config)
}
