use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volio::CaseRecord;

/// Case indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub folds: Vec<Fold>,
    /// Fold index holding each subject in its validation set.
    pub subject_fold: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

/// Splits cases into `k` folds so that each subject lands in exactly one
/// validation fold. Subjects are sorted, shuffled per class with `seed`, and
/// dealt round-robin class by class, which stratifies folds by class. A
/// subject's class is the label of its first case.
pub fn group_kfold(cases: &[CaseRecord], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Split(format!("k = {k}, need at least 2 folds")));
    }
    let mut by_class: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for c in cases {
        if seen.insert(c.subject_id.as_str()) {
            by_class.entry(c.class_label).or_default().push(c.subject_id.clone());
        }
    }
    for (class, subjects) in &by_class {
        if subjects.len() < k {
            return Err(Error::Split(format!(
                "class {class} has {} subjects, fewer than k = {k}",
                subjects.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subject_fold = BTreeMap::new();
    let mut slot = 0usize;
    for subjects in by_class.values_mut() {
        subjects.sort();
        subjects.shuffle(&mut rng);
        for s in subjects.iter() {
            subject_fold.insert(s.clone(), slot % k);
            slot += 1;
        }
    }

    let mut folds: Vec<Fold> = (0..k).map(|_| Fold { train: Vec::new(), val: Vec::new() }).collect();
    for (i, c) in cases.iter().enumerate() {
        let home = subject_fold[&c.subject_id];
        for (f, fold) in folds.iter_mut().enumerate() {
            if f == home {
                fold.val.push(i);
            } else {
                fold.train.push(i);
            }
        }
    }
    Ok(FoldSplit { folds, subject_fold })
}
