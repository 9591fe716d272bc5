//! Grouped k-fold splitting: every dialogue lands wholly in one validation
//! fold, so no dialogue context is shared between a fold's training and
//! validation responses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Assignment of dialogues to validation folds. Fold indices are 0-based;
/// reports render them 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, dialogue_id: &str) -> Option<usize> {
        self.assignment.get(dialogue_id).copied()
    }

    pub fn validation_dialogues(&self, fold: usize) -> BTreeSet<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    /// One row per response: which fold validates it.
    pub fn materialize(&self, corpus: &Corpus) -> Result<Vec<ResponseAssignment>> {
        corpus
            .responses()
            .map(|(d, r)| {
                let fold = self.fold_of(&d.dialogue_id).ok_or_else(|| {
                    Error::Validation(format!("plan does not cover dialogue {:?}", d.dialogue_id))
                })?;
                Ok(ResponseAssignment {
                    response_id: r.response_id.clone(),
                    dialogue_id: d.dialogue_id.clone(),
                    fold,
                })
            })
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let plan: FoldPlan = crate::io::read_json(path)?;
        if plan.k < 2 {
            return Err(Error::Validation(format!("fold plan has k = {}", plan.k)));
        }
        if let Some((d, f)) = plan.assignment.iter().find(|(_, &f)| f >= plan.k) {
            return Err(Error::Validation(format!(
                "dialogue {d:?} assigned to fold {f} but k = {}",
                plan.k
            )));
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseAssignment {
    pub response_id: String,
    pub dialogue_id: String,
    pub fold: usize,
}

/// Builds a grouped k-fold plan balanced by response count.
///
/// Dialogues are ordered by descending response count (ties broken by id,
/// then shuffled with the seeded RNG within each equal-count run) and each
/// is assigned greedily to the fold currently holding the fewest responses,
/// lowest index first. This keeps the spread between the heaviest and the
/// lightest fold within the size of the largest dialogue.
pub fn grouped_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = corpus.num_dialogues();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of dialogues ({n})"
        )));
    }
    let mut order: Vec<(&str, usize)> = corpus
        .dialogues
        .iter()
        .map(|d| (d.dialogue_id.as_str(), d.responses.len()))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = 0;
    while start < order.len() {
        let size = order[start].1;
        let end = start
            + order[start..]
                .iter()
                .take_while(|(_, s)| *s == size)
                .count();
        order[start..end].shuffle(&mut rng);
        start = end;
    }

    let mut load = vec![0usize; k];
    let mut assignment = BTreeMap::new();
    for (id, size) in order {
        let lightest = (0..k).min_by_key(|&f| (load[f], f)).expect("k >= 2");
        load[lightest] += size;
        assignment.insert(id.to_string(), lightest);
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSize {
    pub dialogues: usize,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub k: usize,
    pub fold_sizes: Vec<FoldSize>,
    /// (0-based fold, dialogue_id) pairs present on both sides of a fold.
    pub leaks: Vec<(usize, String)>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.leaks.is_empty()
    }

    /// Plain-text fold-size table with 1-based fold numbers.
    pub fn render_table(&self) -> String {
        let mut out = String::from("fold  dialogues  responses\n");
        for (i, s) in self.fold_sizes.iter().enumerate() {
            let _ = writeln!(out, "{:>4}  {:>9}  {:>9}", i + 1, s.dialogues, s.responses);
        }
        out
    }
}

/// Checks response-level assignments: for every fold the dialogues behind
/// its validation responses must not also appear among its training
/// responses.
pub fn check_assignments(k: usize, rows: &[ResponseAssignment]) -> LeakageReport {
    let mut fold_sizes = vec![
        FoldSize {
            dialogues: 0,
            responses: 0
        };
        k
    ];
    let mut val_dialogues: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); k];
    for r in rows {
        if r.fold < k {
            fold_sizes[r.fold].responses += 1;
            val_dialogues[r.fold].insert(&r.dialogue_id);
        }
    }
    let mut leaks = Vec::new();
    for (f, size) in fold_sizes.iter_mut().enumerate() {
        size.dialogues = val_dialogues[f].len();
        let train: BTreeSet<&str> = rows
            .iter()
            .filter(|r| r.fold != f)
            .map(|r| r.dialogue_id.as_str())
            .collect();
        for d in val_dialogues[f].intersection(&train) {
            leaks.push((f, d.to_string()));
        }
    }
    LeakageReport {
        k,
        fold_sizes,
        leaks,
    }
}

/// Verifies that `plan` covers `corpus` and induces leakage-free splits.
pub fn verify_no_leakage(plan: &FoldPlan, corpus: &Corpus) -> Result<LeakageReport> {
    if plan.k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k must be at least 2, got {}",
            plan.k
        )));
    }
    let rows = plan.materialize(corpus)?;
    if let Some(r) = rows.iter().find(|r| r.fold >= plan.k) {
        return Err(Error::Validation(format!(
            "dialogue {:?} assigned to fold {} but k = {}",
            r.dialogue_id, r.fold, plan.k
        )));
    }
    Ok(check_assignments(plan.k, &rows))
}
