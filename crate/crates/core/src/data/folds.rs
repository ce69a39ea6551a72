use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Assignment of every sample to one of `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    /// Indices held out in fold `f`, ascending.
    pub fn validation_indices(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Indices used for training when fold `f` is held out, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != f).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles samples with a seeded generator and deals them to folds round-robin.
///
/// With `stratified`, each arm is shuffled and dealt separately, continuing the
/// round-robin position across arms so that both per-arm counts and overall
/// fold sizes are within one sample of an even split.
pub fn make_folds(
    n: usize,
    k: usize,
    seed: u64,
    treatment: &[usize],
    stratified: bool,
) -> Result<FoldPlan, DataError> {
    if k < 2 || k > n {
        return Err(DataError::Parameter(format!(
            "fold count must satisfy 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    if stratified && treatment.len() != n {
        return Err(DataError::Shape(format!(
            "{} treatment labels for {n} samples",
            treatment.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if stratified {
        let arms = treatment.iter().copied().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); arms];
        for (i, &a) in treatment.iter().enumerate() {
            groups[a].push(i);
        }
        groups
    } else {
        vec![(0..n).collect()]
    };

    let mut fold_of = vec![0; n];
    let mut position = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            fold_of[i] = position % k;
            position += 1;
        }
    }
    Ok(FoldPlan {
        fold_of,
        k,
        seed,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_split_unstratified() {
        let plan = make_folds(10, 5, 3, &[], false).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn stratified_treated_per_fold() {
        let treatment: Vec<usize> = (0..100).map(|i| usize::from(i % 10 < 3)).collect();
        let plan = make_folds(100, 5, 11, &treatment, true).unwrap();
        for f in 0..5 {
            let treated = plan
                .validation_indices(f)
                .iter()
                .filter(|&&i| treatment[i] == 1)
                .count();
            assert!((5..=7).contains(&treated), "fold {f}: {treated}");
        }
    }

    #[test]
    fn too_many_folds_rejected() {
        assert!(matches!(make_folds(3, 5, 0, &[], false), Err(DataError::Parameter(_))));
        assert!(matches!(make_folds(3, 1, 0, &[], false), Err(DataError::Parameter(_))));
    }

    #[test]
    fn deterministic_for_seed() {
        let t: Vec<usize> = (0..57).map(|i| i % 3 % 2).collect();
        assert_eq!(
            make_folds(57, 4, 9, &t, true).unwrap(),
            make_folds(57, 4, 9, &t, true).unwrap()
        );
        assert_ne!(
            make_folds(57, 4, 9, &t, true).unwrap().fold_of,
            make_folds(57, 4, 10, &t, true).unwrap().fold_of
        );
    }

    proptest! {
        #[test]
        fn folds_partition_and_stay_proportional(
            labels in prop::collection::vec(0usize..2, 4..300),
            k in 2usize..8,
            seed in any::<u64>(),
            stratified in any::<bool>(),
        ) {
            let n = labels.len();
            prop_assume!(k <= n);
            let plan = make_folds(n, k, seed, &labels, stratified).unwrap();
            // every sample in exactly one fold, every fold nonempty
            let mut seen = vec![0; n];
            for f in 0..k {
                let v = plan.validation_indices(f);
                prop_assert!(!v.is_empty());
                for i in v { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            if stratified {
                for arm in 0..2 {
                    let total = labels.iter().filter(|&&a| a == arm).count() as f64;
                    for f in 0..k {
                        let c = plan.validation_indices(f).iter().filter(|&&i| labels[i] == arm).count() as f64;
                        prop_assert!((c - total / k as f64).abs() <= 1.0);
                    }
                }
            }
        }
    }
}
