use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CohortError, SubjectRecord};
use crate::rng::{rng_for, stream};

/// Fold index for every subject id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<u64, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, subject_id: u64) -> Option<usize> {
        self.folds.get(&subject_id).copied()
    }

    /// Subject ids in `fold`, ascending.
    pub fn members(&self, fold: usize) -> Vec<u64> {
        self.folds
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Center-stratified k-fold split. Within each center (ascending id) the
/// subjects are shuffled and dealt round-robin; each center starts dealing
/// where the previous one stopped so overall fold sizes stay balanced too.
pub fn stratified_center_kfold(
    subjects: &[SubjectRecord],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, CohortError> {
    if k < 2 {
        return Err(CohortError::InvalidK(k));
    }
    let centers: BTreeSet<u32> = subjects.iter().map(|s| s.center_id).collect();
    let mut folds = BTreeMap::new();
    let mut dealt = 0usize;
    for c in centers {
        let mut ids: Vec<u64> = subjects
            .iter()
            .filter(|s| s.center_id == c)
            .map(|s| s.subject_id)
            .collect();
        ids.sort_unstable();
        ids.shuffle(&mut rng_for(seed, &[stream::CENTER_FOLDS, c as u64]));
        for id in ids {
            if folds.insert(id, dealt % k).is_some() {
                return Err(CohortError::InvalidSpec(format!(
                    "duplicate subject id {id}"
                )));
            }
            dealt += 1;
        }
    }
    Ok(FoldAssignment { k, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subjects(sizes: &[usize]) -> Vec<SubjectRecord> {
        let mut out = Vec::new();
        let mut id = 1;
        for (c, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                out.push(SubjectRecord {
                    subject_id: id,
                    center_id: c as u32 + 1,
                    age: 60.0,
                    sex: false,
                    htn: false,
                    dm: false,
                    af: false,
                    smk: false,
                    hcl: false,
                    nihss: 0,
                    p2p: 100.0,
                    ivt: false,
                    reca: false,
                    mrs_3m: 0,
                    icv: 1500.0,
                    features: vec![],
                });
                id += 1;
            }
        }
        out
    }

    fn per_center(s: &[SubjectRecord], a: &FoldAssignment, c: u32) -> Vec<usize> {
        let mut sizes = vec![0; a.k];
        for x in s.iter().filter(|x| x.center_id == c) {
            sizes[a.fold_of(x.subject_id).unwrap()] += 1;
        }
        sizes
    }

    #[test]
    fn exact_division() {
        let s = subjects(&[10]);
        let a = stratified_center_kfold(&s, 5, 1).unwrap();
        assert_eq!(a.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn remainder() {
        let s = subjects(&[11]);
        let mut sizes = stratified_center_kfold(&s, 5, 1).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let s = subjects(&[30, 20]);
        let a = stratified_center_kfold(&s, 5, 9).unwrap();
        assert_eq!(a, stratified_center_kfold(&s, 5, 9).unwrap());
        assert_ne!(a, stratified_center_kfold(&s, 5, 10).unwrap());
    }

    #[test]
    fn small_k_rejected() {
        assert!(matches!(
            stratified_center_kfold(&subjects(&[3]), 1, 0),
            Err(CohortError::InvalidK(1))
        ));
    }

    proptest! {
        #[test]
        fn center_proportions_preserved(sizes in prop::collection::vec(1usize..40, 1..8), k in 2usize..7, seed: u64) {
            let s = subjects(&sizes);
            let a = stratified_center_kfold(&s, k, seed).unwrap();
            prop_assert_eq!(a.folds.len(), s.len());
            for (c, &n) in sizes.iter().enumerate() {
                let counts = per_center(&s, &a, c as u32 + 1);
                let lo = n / k;
                for x in counts {
                    prop_assert!(x == lo || x == lo + 1);
                }
            }
            let total = a.fold_sizes();
            let (mn, mx) = (total.iter().min().unwrap(), total.iter().max().unwrap());
            prop_assert!(mx - mn <= 1);
        }
    }
}
