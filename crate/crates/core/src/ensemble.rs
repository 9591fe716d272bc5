//! Hard-vote ensembling of fold models.
//!
//! Each sample takes the label with the strictly largest vote count. When two
//! or more labels share the top count the label with the largest mean
//! softmax probability across all members wins, and an exact tie on that
//! mean resolves to the lowest label index.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{argmax, PredictionSet};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub sample_id: String,
    pub label: Label,
    pub vote_counts: [usize; 3],
    pub mean_probs: [f64; 3],
    pub tie_broken: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub num_models: usize,
    pub rows: Vec<EnsembleRow>,
}

/// Decision rule for one sample given its member votes and mean
/// probabilities. Returns the label and whether the vote was tied.
pub fn decide(votes: &[usize; 3], mean_probs: &[f64; 3]) -> (Label, bool) {
    let top = *votes.iter().max().expect("three classes");
    let leaders: Vec<usize> = (0..3).filter(|&c| votes[c] == top).collect();
    if leaders.len() == 1 {
        (Label::ALL[leaders[0]], false)
    } else {
        (argmax(mean_probs), true)
    }
}

pub fn hard_vote(predictions: &[PredictionSet]) -> Result<EnsembleResult> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::InvalidArgument("no member predictions to ensemble".into()))?;
    let mut reference: Vec<&str> = first.rows.iter().map(|r| r.sample_id.as_str()).collect();
    reference.sort_unstable();
    let lookups: Vec<HashMap<&str, usize>> = predictions
        .iter()
        .map(|set| {
            let mut ids: Vec<&str> = set.rows.iter().map(|r| r.sample_id.as_str()).collect();
            ids.sort_unstable();
            if ids != reference {
                return Err(Error::Validation(format!(
                    "model {} covers a different sample set than model {}",
                    set.model_id, first.model_id
                )));
            }
            let map: HashMap<&str, usize> = set
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| (r.sample_id.as_str(), i))
                .collect();
            if map.len() != set.rows.len() {
                return Err(Error::Validation(format!(
                    "model {} lists a sample more than once",
                    set.model_id
                )));
            }
            Ok(map)
        })
        .collect::<Result<_>>()?;

    let n = predictions.len();
    let rows = first
        .rows
        .iter()
        .map(|r| {
            let id = r.sample_id.as_str();
            let mut votes = [0usize; 3];
            let mut columns: [Vec<f64>; 3] = Default::default();
            for (set, lookup) in predictions.iter().zip(&lookups) {
                let row = &set.rows[lookup[id]];
                votes[row.label.index()] += 1;
                for (col, p) in columns.iter_mut().zip(row.probs) {
                    col.push(p);
                }
            }
            // Summing in sorted order keeps the mean independent of member order.
            let mean_probs = columns.map(|mut col| {
                col.sort_by(f64::total_cmp);
                col.iter().sum::<f64>() / n as f64
            });
            let (label, tie_broken) = decide(&votes, &mean_probs);
            EnsembleRow {
                sample_id: r.sample_id.clone(),
                label,
                vote_counts: votes,
                mean_probs,
                tie_broken,
            }
        })
        .collect();
    Ok(EnsembleResult {
        num_models: n,
        rows,
    })
}

const HEADER: [&str; 9] = [
    "sample_id",
    "label",
    "vote_no",
    "vote_some",
    "vote_yes",
    "mean_p_no",
    "mean_p_some",
    "mean_p_yes",
    "tie_broken",
];

impl EnsembleResult {
    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.sample_id.clone(),
                r.label.as_str().to_string(),
                r.vote_counts[0].to_string(),
                r.vote_counts[1].to_string(),
                r.vote_counts[2].to_string(),
                r.mean_probs[0].to_string(),
                r.mean_probs[1].to_string(),
                r.mean_probs[2].to_string(),
                r.tie_broken.to_string(),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::io("flushing ensemble CSV", e.into_error()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        if rdr.headers()?.iter().ne(HEADER) {
            return Err(Error::Validation(format!(
                "{}: not an ensemble CSV",
                path.display()
            )));
        }
        let bad = |what: &str| Error::Validation(format!("{}: bad {what}", path.display()));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let count = |i: usize| rec[i].parse::<usize>().map_err(|_| bad("vote count"));
            let prob = |i: usize| rec[i].parse::<f64>().map_err(|_| bad("probability"));
            rows.push(EnsembleRow {
                sample_id: rec[0].to_string(),
                label: rec[1].parse()?,
                vote_counts: [count(2)?, count(3)?, count(4)?],
                mean_probs: [prob(5)?, prob(6)?, prob(7)?],
                tie_broken: rec[8].parse().map_err(|_| bad("tie flag"))?,
            });
        }
        let num_models = rows.first().map_or(0, |r| r.vote_counts.iter().sum());
        Ok(EnsembleResult { num_models, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberScore {
    pub model_id: usize,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub ensemble_macro_f1: f64,
    pub members: Vec<MemberScore>,
    pub mean_member_macro_f1: f64,
    /// Ensemble macro-F1 minus the mean member macro-F1.
    pub delta: f64,
}

fn gold_for<'a>(
    ids: impl Iterator<Item = &'a str>,
    gold: &BTreeMap<String, Label>,
) -> Result<Vec<Label>> {
    ids.map(|id| {
        gold.get(id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("no gold label for sample {id:?}")))
    })
    .collect()
}

pub fn compare_to_members(
    result: &EnsembleResult,
    predictions: &[PredictionSet],
    gold: &BTreeMap<String, Label>,
) -> Result<EnsembleComparison> {
    let g = gold_for(result.rows.iter().map(|r| r.sample_id.as_str()), gold)?;
    let ensemble_macro_f1 = metrics::macro_f1(&metrics::confusion_matrix(&g, &result.labels())?);
    let members = predictions
        .iter()
        .map(|set| {
            let g = gold_for(set.rows.iter().map(|r| r.sample_id.as_str()), gold)?;
            Ok(MemberScore {
                model_id: set.model_id,
                macro_f1: metrics::macro_f1(&metrics::confusion_matrix(&g, &set.labels())?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = if members.is_empty() {
        0.0
    } else {
        members.iter().map(|m| m.macro_f1).sum::<f64>() / members.len() as f64
    };
    Ok(EnsembleComparison {
        ensemble_macro_f1,
        members,
        mean_member_macro_f1: mean,
        delta: ensemble_macro_f1 - mean,
    })
}
