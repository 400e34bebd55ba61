use cmcal_core::metrics::{cmce, coverage_interval, cwece, ece, mce};
use cmcal_core::{BinSpec, EvalBatch};
use proptest::prelude::*;

/// Rows with coarse values so equal probabilities and bin-edge hits occur.
fn batch_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..=5, 1usize..=20).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(prop::collection::vec(0u32..8, k), n),
            prop::collection::vec(0..k, n),
        )
            .prop_filter_map("zero row", |(raw, labels)| {
                let mut rows = Vec::new();
                for r in raw {
                    let s: u32 = r.iter().sum();
                    if s == 0 {
                        return None;
                    }
                    rows.push(r.iter().map(|&v| v as f64 / s as f64).collect::<Vec<_>>());
                }
                Some((rows, labels))
            })
    })
}

fn to_batch(rows: &[Vec<f64>], labels: &[usize]) -> EvalBatch<f64> {
    EvalBatch::from_rows(rows.to_vec(), labels.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn metrics_match_naive_versions((rows, labels) in batch_strategy(), bins in 1usize..30) {
        let b = to_batch(&rows, &labels);
        let spec = BinSpec::uniform(bins).unwrap();
        let edges = cmcal_oracles::uniform_edges(bins);
        prop_assert!((ece(&b, &spec) - cmcal_oracles::ece(&rows, &labels, &edges)).abs() <= 1e-12);
        prop_assert!((mce(&b, &spec) - cmcal_oracles::mce(&rows, &labels, &edges)).abs() <= 1e-12);
        prop_assert!((cwece(&b, &spec) - cmcal_oracles::cwece(&rows, &labels, &edges)).abs() <= 1e-12);
        prop_assert!((cmce(&b, &spec).0 - cmcal_oracles::cmce(&rows, &labels, &edges)).abs() <= 1e-12);
    }

    #[test]
    fn coverage_matches_naive_version((rows, labels) in batch_strategy(),
                                      a in 0.0f64..1.0, w in 0.0f64..0.5) {
        let b = to_batch(&rows, &labels);
        let hi = (a + w).min(1.0);
        let ours = coverage_interval(&b, a, hi).unwrap();
        let naive = cmcal_oracles::coverage(&rows, &labels, a, hi);
        match (ours, naive) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
            (None, None) => {}
            other => prop_assert!(false, "mismatch {:?}", other),
        }
    }

    #[test]
    fn row_order_does_not_matter((rows, labels) in batch_strategy(), seed in any::<u64>()) {
        let n = rows.len();
        let mut idx: Vec<usize> = (0..n).collect();
        // deterministic Fisher-Yates from the seed
        let mut s = seed | 1;
        for i in (1..n).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            idx.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let a = to_batch(&rows, &labels);
        let b = a.select(&idx).unwrap();
        let spec = BinSpec::uniform(10).unwrap();
        prop_assert!((ece(&a, &spec) - ece(&b, &spec)).abs() <= 1e-12);
        prop_assert!((cmce(&a, &spec).0 - cmce(&b, &spec).0).abs() <= 1e-12);
        prop_assert!((cwece(&a, &spec) - cwece(&b, &spec)).abs() <= 1e-12);
    }

    #[test]
    fn single_bin_is_global_gap((rows, labels) in batch_strategy()) {
        let b = to_batch(&rows, &labels);
        let one = BinSpec::uniform(1).unwrap();
        let sets = cmcal_oracles::prefix_sets(&rows, &labels);
        let n = sets.len() as f64;
        let mass: f64 = sets.iter().map(|s| s.0).sum::<f64>() / n;
        let hits = sets.iter().filter(|s| s.1).count() as f64 / n;
        prop_assert!((cmce(&b, &one).0 - (hits - mass).abs()).abs() <= 1e-12);
    }

    #[test]
    fn refining_bins_never_lowers_the_error((rows, labels) in batch_strategy(), bins in 1usize..10) {
        let b = to_batch(&rows, &labels);
        let coarse = BinSpec::uniform(bins).unwrap();
        let fine = BinSpec::uniform(2 * bins).unwrap();
        prop_assert!(ece(&b, &fine) >= ece(&b, &coarse) - 1e-12);
        prop_assert!(cmce(&b, &fine).0 >= cmce(&b, &coarse).0 - 1e-12);
    }
}

#[test]
fn curve_counts_cover_all_prefix_sets() {
    let rows = vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.1, 0.8], vec![0.4, 0.4, 0.2]];
    let labels = vec![2, 2, 1];
    let b = to_batch(&rows, &labels);
    let (_, curve) = cmce(&b, &BinSpec::uniform(25).unwrap());
    let total: usize = curve.iter().map(|c| c.count).sum();
    assert_eq!(total, 9);
    assert!(curve.iter().all(|c| c.count > 0));
}
