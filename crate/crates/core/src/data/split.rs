use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shuffled partition of `0..n` into `k` test folds whose sizes differ by at
/// most one. Each fold is sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!(
            "{n} samples cannot fill {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// Holds out `round(val_fraction * n)` indices (at least one, leaving at
/// least one for training). Returns `(train, validation)`, each sorted.
pub fn train_val_split(indices: &[usize], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if indices.len() < 2 {
        return Err(Error::Config(format!(
            "a train/validation split needs at least 2 samples, got {}",
            indices.len()
        )));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let n = indices.len();
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = shuffled[..n_val].to_vec();
    let mut train = shuffled[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_256_into_10() {
        let folds = kfold_split(256, 10, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 256);
        sizes.sort_unstable();
        assert_eq!(sizes, vec![25, 25, 25, 25, 26, 26, 26, 26, 26, 26]);
    }

    #[test]
    fn singleton_folds() {
        let folds = kfold_split(10, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(kfold_split(50, 5, 9).unwrap(), kfold_split(50, 5, 9).unwrap());
        assert_ne!(kfold_split(50, 5, 9).unwrap(), kfold_split(50, 5, 10).unwrap());
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(kfold_split(9, 10, 0), Err(Error::Config(_))));
        assert!(matches!(train_val_split(&[4], 0.15, 0), Err(Error::Config(_))));
    }

    #[test]
    fn train_val_sizes() {
        let idx: Vec<usize> = (0..100).collect();
        let (train, val) = train_val_split(&idx, 0.15, 0).unwrap();
        assert_eq!((train.len(), val.len()), (85, 15));
        let (train, val) = train_val_split(&[3, 8], 0.15, 0).unwrap();
        assert_eq!((train.len(), val.len()), (1, 1));
    }

    proptest! {
        #[test]
        fn kfold_is_partition(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let folds = kfold_split(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = folds.iter().map(Vec::len).max().unwrap();
            let min = folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn train_val_is_partition(n in 2usize..200, seed in any::<u64>()) {
            let idx: Vec<usize> = (0..n).map(|i| i * 3).collect();
            let (train, val) = train_val_split(&idx, 0.15, seed).unwrap();
            prop_assert!(!train.is_empty() && !val.is_empty());
            let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, idx);
        }
    }
}
