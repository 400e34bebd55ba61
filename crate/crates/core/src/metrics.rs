//! Calibration metrics: confidence ECE/MCE, class-wise ECE, NLL, Brier,
//! the cumulative mass calibration error (CMCE) and interval coverage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simplex::{desc_order, ProbVector};

/// Bin count used for ECE, MCE and cw-ECE unless configured otherwise.
pub const DEFAULT_CALIBRATION_BINS: usize = 15;
/// Bin count used for CMCE and its curve unless configured otherwise.
pub const DEFAULT_CMCE_BINS: usize = 25;

/// Partition of `[0, 1]` into bins `[t0, t1], (t1, t2], ..., (t_{b-1}, t_b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec<F> {
    edges: Vec<F>,
}

impl<F: Scalar> BinSpec<F> {
    pub fn new(edges: Vec<F>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidParameter("need at least two bin edges".into()));
        }
        if edges[0] != F::zero() || edges[edges.len() - 1] != F::one() {
            return Err(Error::InvalidParameter(
                "bin edges must start at 0 and end at 1".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "bin edges must be strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    pub fn uniform(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("bin count must be >= 1".into()));
        }
        let b = F::from_usize_lossy(bins);
        let mut edges: Vec<F> = (0..=bins).map(|i| F::from_usize_lossy(i) / b).collect();
        edges[bins] = F::one();
        Self::new(edges)
    }

    pub fn edges(&self) -> &[F] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin holding `x`. Values outside `[0, 1]` land in the end bins.
    pub fn index(&self, x: F) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&t| t < x)
    }
}

/// Predictions with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBatch<F> {
    probs: Vec<ProbVector<F>>,
    labels: Vec<usize>,
}

impl<F: Scalar> EvalBatch<F> {
    pub fn new(probs: Vec<ProbVector<F>>, labels: Vec<usize>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("evaluation batch"));
        }
        if probs.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} probability rows but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        let k = probs[0].k();
        if let Some(i) = probs.iter().position(|p| p.k() != k) {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} classes, expected {k}",
                probs[i].k()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::ClassOutOfRange { index: y, classes: k });
        }
        Ok(Self { probs, labels })
    }

    /// Builds a batch from raw rows, validating each as a probability vector.
    pub fn from_rows(rows: Vec<Vec<F>>, labels: Vec<usize>) -> Result<Self> {
        let probs = rows
            .into_iter()
            .map(ProbVector::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs, labels)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn k(&self) -> usize {
        self.probs[0].k()
    }

    pub fn probs(&self) -> &[ProbVector<F>] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProbVector<F>, usize)> + '_ {
        self.probs.iter().zip(self.labels.iter().copied())
    }

    /// Same labels, new probabilities.
    pub fn with_probs(&self, probs: Vec<ProbVector<F>>) -> Result<Self> {
        Self::new(probs, self.labels.clone())
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.probs[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// One bin of the cumulative-mass calibration curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<F> {
    pub bin_index: usize,
    pub mean_mass: F,
    pub coverage: F,
    pub count: usize,
}

/// Coverage over `[a, b]`; `None` when no prefix set has mass in the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCoverage<F> {
    pub a: F,
    pub b: F,
    pub coverage: Option<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<F> {
    pub accuracy: F,
    pub ece: F,
    pub mce: F,
    pub cwece: F,
    pub nll: F,
    pub brier: F,
    pub cmce: F,
    pub coverage_intervals: Vec<IntervalCoverage<F>>,
    pub cmce_curve: Vec<CurvePoint<F>>,
}

/// Binning choices for [`full_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig<F> {
    pub calibration_bins: BinSpec<F>,
    pub cmce_bins: BinSpec<F>,
    pub intervals: Vec<(F, F)>,
}

impl<F: Scalar> Default for ReportConfig<F> {
    fn default() -> Self {
        Self {
            calibration_bins: BinSpec::uniform(DEFAULT_CALIBRATION_BINS).expect("valid"),
            cmce_bins: BinSpec::uniform(DEFAULT_CMCE_BINS).expect("valid"),
            intervals: vec![
                (F::lit(0.9), F::lit(0.92)),
                (F::lit(0.99), F::lit(0.995)),
            ],
        }
    }
}

pub fn brier<F: Scalar>(batch: &EvalBatch<F>) -> F {
    let total: F = batch
        .iter()
        .map(|(p, y)| {
            p.as_slice()
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let target = if k == y { F::one() } else { F::zero() };
                    (target - v) * (target - v)
                })
                .sum::<F>()
        })
        .sum();
    total / F::from_usize_lossy(batch.len())
}

/// Mean negative log-likelihood of the true label, with the true-label
/// probability floored at `F::CLAMP_EPS`.
pub fn nll<F: Scalar>(batch: &EvalBatch<F>) -> F {
    let eps = F::lit(F::CLAMP_EPS);
    let total: F = batch.iter().map(|(p, y)| -p.get(y).max(eps).ln()).sum();
    (total / F::from_usize_lossy(batch.len())).max(F::zero())
}

pub fn accuracy<F: Scalar>(batch: &EvalBatch<F>) -> F {
    let hits = batch.iter().filter(|(p, y)| p.argmax() == *y).count();
    F::from_usize_lossy(hits) / F::from_usize_lossy(batch.len())
}

/// Per-bin accumulator of (count, sum of predicted value, sum of outcome).
#[derive(Clone, Copy)]
struct BinAcc<F> {
    count: usize,
    value: F,
    outcome: F,
}

impl<F: Scalar> BinAcc<F> {
    fn zero() -> Self {
        Self {
            count: 0,
            value: F::zero(),
            outcome: F::zero(),
        }
    }

    fn gap(&self) -> F {
        let n = F::from_usize_lossy(self.count);
        (self.outcome / n - self.value / n).abs()
    }
}

fn accumulate<F: Scalar>(
    bins: &BinSpec<F>,
    items: impl Iterator<Item = (F, bool)>,
) -> Vec<BinAcc<F>> {
    let mut acc = vec![BinAcc::zero(); bins.count()];
    for (value, hit) in items {
        let slot = &mut acc[bins.index(value)];
        slot.count += 1;
        slot.value = slot.value + value;
        if hit {
            slot.outcome = slot.outcome + F::one();
        }
    }
    acc
}

fn weighted_gap<F: Scalar>(acc: &[BinAcc<F>], denom: usize) -> F {
    let d = F::from_usize_lossy(denom);
    acc.iter()
        .filter(|b| b.count > 0)
        .map(|b| F::from_usize_lossy(b.count) / d * b.gap())
        .sum()
}

fn confidence_bins<F: Scalar>(batch: &EvalBatch<F>, bins: &BinSpec<F>) -> Vec<BinAcc<F>> {
    accumulate(
        bins,
        batch.iter().map(|(p, y)| {
            let top = p.argmax();
            (p.get(top), top == y)
        }),
    )
}

/// Expected calibration error over top-class confidence.
pub fn ece<F: Scalar>(batch: &EvalBatch<F>, bins: &BinSpec<F>) -> F {
    weighted_gap(&confidence_bins(batch, bins), batch.len())
}

/// Largest per-bin confidence gap over nonempty bins.
pub fn mce<F: Scalar>(batch: &EvalBatch<F>, bins: &BinSpec<F>) -> F {
    confidence_bins(batch, bins)
        .iter()
        .filter(|b| b.count > 0)
        .map(BinAcc::gap)
        .fold(F::zero(), F::max)
}

/// Class-wise ECE with per-class bins weighted by `|B| / (n K)`.
pub fn cwece<F: Scalar>(batch: &EvalBatch<F>, bins: &BinSpec<F>) -> F {
    let k = batch.k();
    let denom = batch.len() * k;
    (0..k)
        .map(|j| {
            let acc = accumulate(bins, batch.iter().map(|(p, y)| (p.get(j), y == j)));
            weighted_gap(&acc, denom)
        })
        .sum()
}

/// Cumulative masses of the `K` nested top-`t` sets of `p` and the 0-based
/// position of `label` in the descending order. The full set has mass 1.
pub(crate) fn prefix_masses<F: Scalar>(p: &[F], label: usize, out: &mut Vec<F>) -> usize {
    prefix_masses_ordered(p, &desc_order(p), label, out)
}

/// [`prefix_masses`] with a precomputed descending order.
pub(crate) fn prefix_masses_ordered<F: Scalar>(
    p: &[F],
    order: &[usize],
    label: usize,
    out: &mut Vec<F>,
) -> usize {
    out.clear();
    let mut mass = F::zero();
    let mut rank = 0;
    for (t, &c) in order.iter().enumerate() {
        mass = (mass + p[c]).min(F::one());
        out.push(mass);
        if c == label {
            rank = t;
        }
    }
    if let Some(last) = out.last_mut() {
        *last = F::one();
    }
    rank
}

/// Streaming CMCE over prefix sets.
pub(crate) struct CmceAccumulator<'a, F> {
    bins: &'a BinSpec<F>,
    acc: Vec<BinAcc<F>>,
    sets: usize,
}

impl<'a, F: Scalar> CmceAccumulator<'a, F> {
    pub(crate) fn new(bins: &'a BinSpec<F>) -> Self {
        Self {
            bins,
            acc: vec![BinAcc::zero(); bins.count()],
            sets: 0,
        }
    }

    /// Adds the prefix sets of one sample; sets at positions `>= rank`
    /// contain the label.
    pub(crate) fn add(&mut self, masses: &[F], rank: usize) {
        for (t, &m) in masses.iter().enumerate() {
            let slot = &mut self.acc[self.bins.index(m)];
            slot.count += 1;
            slot.value = slot.value + m;
            if t >= rank {
                slot.outcome = slot.outcome + F::one();
            }
        }
        self.sets += masses.len();
    }

    pub(crate) fn value(&self) -> F {
        weighted_gap(&self.acc, self.sets)
    }

    fn into_curve(self) -> Vec<CurvePoint<F>> {
        curve(&self.acc)
    }
}

fn curve<F: Scalar>(acc: &[BinAcc<F>]) -> Vec<CurvePoint<F>> {
    acc.iter()
        .enumerate()
        .filter(|(_, b)| b.count > 0)
        .map(|(i, b)| {
            let n = F::from_usize_lossy(b.count);
            CurvePoint {
                bin_index: i,
                mean_mass: b.value / n,
                coverage: b.outcome / n,
                count: b.count,
            }
        })
        .collect()
}

/// CMCE together with the cumulative-mass calibration curve (nonempty bins
/// only).
pub fn cmce<F: Scalar>(batch: &EvalBatch<F>, bins: &BinSpec<F>) -> (F, Vec<CurvePoint<F>>) {
    let mut acc = CmceAccumulator::new(bins);
    let mut masses = Vec::with_capacity(batch.k());
    for (p, y) in batch.iter() {
        let rank = prefix_masses(p.as_slice(), y, &mut masses);
        acc.add(&masses, rank);
    }
    let value = acc.value();
    (value, acc.into_curve())
}

/// Fraction of top-`t` sets with mass in `[a, b]` that contain the label.
pub fn coverage_interval<F: Scalar>(batch: &EvalBatch<F>, a: F, b: F) -> Result<Option<F>> {
    if !(a <= b) {
        return Err(Error::InvalidParameter(format!(
            "coverage interval needs a <= b, got [{a}, {b}]"
        )));
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    let mut masses = Vec::with_capacity(batch.k());
    for (p, y) in batch.iter() {
        let rank = prefix_masses(p.as_slice(), y, &mut masses);
        for (t, &m) in masses.iter().enumerate() {
            if m >= a && m <= b {
                total += 1;
                if t >= rank {
                    hits += 1;
                }
            }
        }
    }
    Ok((total > 0).then(|| F::from_usize_lossy(hits) / F::from_usize_lossy(total)))
}

pub fn full_report<F: Scalar>(
    batch: &EvalBatch<F>,
    config: &ReportConfig<F>,
) -> Result<MetricReport<F>> {
    let (cmce_value, cmce_curve) = cmce(batch, &config.cmce_bins);
    let coverage_intervals = config
        .intervals
        .iter()
        .map(|&(a, b)| {
            Ok(IntervalCoverage {
                a,
                b,
                coverage: coverage_interval(batch, a, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        accuracy: accuracy(batch),
        ece: ece(batch, &config.calibration_bins),
        mce: mce(batch, &config.calibration_bins),
        cwece: cwece(batch, &config.calibration_bins),
        nll: nll(batch),
        brier: brier(batch),
        cmce: cmce_value,
        coverage_intervals,
        cmce_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn batch(rows: &[&[f64]], labels: &[usize]) -> EvalBatch<f64> {
        EvalBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect(), labels.to_vec()).unwrap()
    }

    fn one_bin() -> BinSpec<f64> {
        BinSpec::uniform(1).unwrap()
    }

    #[test]
    fn bin_assignment_is_right_closed() {
        let b = BinSpec::<f64>::uniform(4).unwrap();
        assert_eq!(b.index(0.0), 0);
        assert_eq!(b.index(0.25), 0);
        assert_eq!(b.index(0.2500001), 1);
        assert_eq!(b.index(1.0), 3);
        assert_eq!(b.index(1.0 + 1e-12), 3);
        assert!(BinSpec::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(BinSpec::new(vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&batch(&[&[1.0, 0.0]], &[0])), 0.0);
        assert_abs_diff_eq!(brier(&batch(&[&[0.5, 0.5]], &[0])), 0.5);
        assert_abs_diff_eq!(brier(&batch(&[&[0.0, 1.0]], &[0])), 2.0);
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll(&batch(&[&[1.0, 0.0]], &[0])), 0.0);
        assert_abs_diff_eq!(nll(&batch(&[&[0.5, 0.5]], &[1])), 2f64.ln(), epsilon = 1e-12);
        let two = batch(&[&[0.5, 0.5], &[0.75, 0.25]], &[0, 1]);
        assert_abs_diff_eq!(nll(&two), (2f64.ln() + 4f64.ln()) / 2.0, epsilon = 1e-12);
        assert!(nll(&batch(&[&[1.0, 0.0]], &[1])).is_finite());
    }

    #[test]
    fn ece_examples() {
        let b = batch(&[&[0.6, 0.4], &[0.8, 0.2]], &[0, 1]);
        assert_abs_diff_eq!(ece(&b, &one_bin()), 0.2, epsilon = 1e-12);
        let perfect = batch(&[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1]);
        assert_eq!(ece(&perfect, &BinSpec::uniform(15).unwrap()), 0.0);
        let single = batch(&[&[0.7, 0.3]], &[0]);
        assert_abs_diff_eq!(ece(&single, &one_bin()), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn mce_examples() {
        let b = batch(&[&[0.6, 0.4], &[0.8, 0.2]], &[0, 1]);
        assert_abs_diff_eq!(mce(&b, &one_bin()), 0.2, epsilon = 1e-12);
        let perfect = batch(&[&[1.0, 0.0]], &[0]);
        assert_eq!(mce(&perfect, &one_bin()), 0.0);
        let bins = BinSpec::new(vec![0.0, 0.75, 1.0]).unwrap();
        let b = batch(&[&[0.9, 0.1], &[0.6, 0.4], &[0.6, 0.4]], &[0, 0, 0]);
        // bin 0: conf 0.6, acc 1 -> 0.4; bin 1: conf 0.9, acc 1 -> 0.1
        assert_abs_diff_eq!(mce(&b, &bins), 0.4, epsilon = 1e-12);
        assert!(mce(&b, &bins) >= ece(&b, &bins));
    }

    #[test]
    fn cwece_examples() {
        assert_eq!(cwece(&batch(&[&[1.0, 0.0]], &[0]), &one_bin()), 0.0);
        let b = batch(&[&[0.7, 0.3]], &[0]);
        assert_abs_diff_eq!(cwece(&b, &one_bin()), 0.3, epsilon = 1e-12);
        // per class: predicted 0.5 everywhere, half the labels are the class
        let b = batch(&[&[0.5, 0.5], &[0.5, 0.5]], &[0, 1]);
        assert_abs_diff_eq!(cwece(&b, &BinSpec::uniform(10).unwrap()), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cmce_examples() {
        let bins = BinSpec::uniform(2).unwrap();
        let (v, curve) = cmce(&batch(&[&[0.7, 0.3]], &[0]), &bins);
        assert_abs_diff_eq!(v, 0.15, epsilon = 1e-12);
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].bin_index, 1);
        assert_eq!(curve[0].count, 2);
        assert_abs_diff_eq!(curve[0].mean_mass, 0.85, epsilon = 1e-12);

        let (v, _) = cmce(&batch(&[&[0.7, 0.3], &[0.7, 0.3]], &[0, 1]), &bins);
        assert_abs_diff_eq!(v, 0.1, epsilon = 1e-12);

        let (v, _) = cmce(&batch(&[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1]), &bins);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn coverage_examples() {
        let hit = batch(&[&[0.7, 0.3]], &[0]);
        assert_eq!(coverage_interval(&hit, 0.6, 0.8).unwrap(), Some(1.0));
        let miss = batch(&[&[0.7, 0.3]], &[1]);
        assert_eq!(coverage_interval(&miss, 0.6, 0.8).unwrap(), Some(0.0));
        assert_eq!(coverage_interval(&miss, 1.0, 1.0).unwrap(), Some(1.0));
        assert_eq!(coverage_interval(&miss, 0.1, 0.2).unwrap(), None);
        assert!(coverage_interval(&miss, 0.8, 0.6).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&batch(&[&[1.0, 0.0]], &[0])), 1.0);
        assert_eq!(accuracy(&batch(&[&[0.5, 0.5]], &[1])), 0.0);
        assert_eq!(accuracy(&batch(&[&[0.9, 0.1], &[0.9, 0.1]], &[0, 1])), 0.5);
    }

    #[test]
    fn report_examples() {
        let perfect = batch(&[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1]);
        let r = full_report(&perfect, &ReportConfig::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for v in [r.ece, r.mce, r.cwece, r.nll, r.brier, r.cmce] {
            assert_eq!(v, 0.0);
        }

        let config = ReportConfig {
            calibration_bins: BinSpec::uniform(15).unwrap(),
            cmce_bins: BinSpec::uniform(2).unwrap(),
            intervals: vec![],
        };
        let r = full_report(&batch(&[&[0.7, 0.3]], &[0]), &config).unwrap();
        assert_abs_diff_eq!(r.cmce, 0.15, epsilon = 1e-12);
        assert!(r.coverage_intervals.is_empty());
    }

    #[test]
    fn batch_validation() {
        assert!(EvalBatch::<f64>::new(vec![], vec![]).is_err());
        assert!(EvalBatch::from_rows(vec![vec![0.5, 0.5]], vec![2]).is_err());
        assert!(EvalBatch::from_rows(vec![vec![0.5, 0.5], vec![0.2, 0.3, 0.5]], vec![0, 0]).is_err());
        assert!(EvalBatch::from_rows(vec![vec![0.5, 0.5]], vec![0, 1]).is_err());
    }
}
