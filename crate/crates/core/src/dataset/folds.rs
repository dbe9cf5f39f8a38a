use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Index sets of one cross-validation fold. Each list is sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Checks the partition properties against a dataset of `n` subjects.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut tested = vec![0usize; n];
        for (f, fold) in self.folds.iter().enumerate() {
            let mut seen = vec![false; n];
            for &i in fold.train.iter().chain(&fold.val).chain(&fold.test) {
                if i >= n {
                    return Err(Error::invalid(format!("fold {f} references subject {i} of {n}")));
                }
                if seen[i] {
                    return Err(Error::invalid(format!("fold {f} uses subject {i} twice")));
                }
                seen[i] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::invalid(format!("fold {f} does not cover every subject")));
            }
            for &i in &fold.test {
                tested[i] += 1;
            }
        }
        if let Some(i) = tested.iter().position(|&c| c != 1) {
            return Err(Error::invalid(format!(
                "subject {i} is tested {} times across folds",
                tested[i]
            )));
        }
        Ok(())
    }
}

/// Stratified k-fold plan: fold `f` tests on slice `f`, validates on slice
/// `f + 1 mod k`, and trains on the rest.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    // test, validation and training each take at least one slice
    if k < 3 {
        return Err(Error::invalid(format!("need at least 3 folds, got {k}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in dataset.subjects.iter().enumerate() {
        by_class[s.label as usize].push(i);
    }
    for (label, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {label} has {} subjects, fewer than {k} folds",
                members.len()
            )));
        }
    }

    let mut rng = Rng::new(seed);
    let mut order = Vec::with_capacity(dataset.len());
    for members in &mut by_class {
        rng.shuffle(members);
        order.extend_from_slice(members);
    }
    let mut slices = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        slices[pos % k].push(i);
    }
    for s in &mut slices {
        s.sort_unstable();
    }

    let folds = (0..k)
        .map(|f| {
            let v = (f + 1) % k;
            let mut train: Vec<usize> = (0..k)
                .filter(|&s| s != f && s != v)
                .flat_map(|s| slices[s].iter().copied())
                .collect();
            train.sort_unstable();
            Fold {
                train,
                val: slices[v].clone(),
                test: slices[f].clone(),
            }
        })
        .collect();
    Ok(FoldPlan { seed, folds })
}
