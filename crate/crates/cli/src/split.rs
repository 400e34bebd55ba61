use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Calibration/test partition of `0..N`, both sides sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seed of the `i`-th split.
pub fn split_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// `num_splits` seeded shuffles of `0..n`, each cut at `floor(fraction * n)`.
pub fn make_splits(n: usize, fraction: f64, num_splits: usize, seed: u64) -> CliResult<Vec<SplitAssignment>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    if num_splits == 0 {
        return Err(CliError::Config("num_splits must be >= 1".into()));
    }
    let cut = (fraction * n as f64).floor() as usize;
    if n < 2 || cut == 0 || cut >= n {
        return Err(CliError::Config(format!(
            "cannot split {n} rows with fraction {fraction}: calibration size {cut}"
        )));
    }
    Ok((0..num_splits)
        .map(|i| {
            let s = split_seed(seed, i);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
            let mut calibration = idx[..cut].to_vec();
            let mut test = idx[cut..].to_vec();
            calibration.sort_unstable();
            test.sort_unstable();
            SplitAssignment {
                seed: s,
                calibration,
                test,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_sizes() {
        let s = make_splits(10, 0.2, 1, 0).unwrap();
        assert_eq!(s[0].calibration.len(), 2);
        assert_eq!(s[0].test.len(), 8);
        assert_eq!(make_splits(7, 0.5, 1, 0).unwrap()[0].calibration.len(), 3);
    }

    #[test]
    fn disjoint_and_covering() {
        for split in make_splits(57, 0.3, 5, 9).unwrap() {
            let mut all: Vec<usize> = split.calibration.iter().chain(&split.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..57).collect::<Vec<_>>());
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(make_splits(100, 0.2, 3, 4).unwrap(), make_splits(100, 0.2, 3, 4).unwrap());
        let perms: Vec<Vec<usize>> = (0..10)
            .map(|s| make_splits(100, 0.2, 1, s * 1000).unwrap()[0].calibration.clone())
            .collect();
        for i in 0..perms.len() {
            for j in i + 1..perms.len() {
                assert_ne!(perms[i], perms[j]);
            }
        }
    }

    #[test]
    fn degenerate_sizes_fail() {
        assert!(make_splits(1, 0.5, 1, 0).is_err());
        assert!(make_splits(4, 0.2, 1, 0).is_err());
        assert!(make_splits(10, 1.0, 1, 0).is_err());
        assert!(make_splits(10, 0.2, 0, 0).is_err());
    }
}
