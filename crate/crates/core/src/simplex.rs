//! Points on the probability simplex and the primitives every other module
//! builds on: softmax, temperature, descending class order and
//! highest-probability regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A categorical distribution over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector<F> {
    values: Vec<F>,
}

impl<F: Scalar> ProbVector<F> {
    /// Validates a probability vector.
    ///
    /// Sums within `F::SUM_TOL` of one are kept verbatim, sums within
    /// `F::RENORM_TOL` are renormalized, anything else is rejected.
    pub fn new(values: Vec<F>) -> Result<Self> {
        check_len(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < F::zero() {
                return Err(Error::InvalidInput(format!(
                    "probability entry {i} is {v}, expected a finite value >= 0"
                )));
            }
        }
        let sum: F = values.iter().copied().sum();
        let dev = (sum - F::one()).abs().as_f64();
        if dev <= F::SUM_TOL {
            Ok(Self { values })
        } else if dev <= F::RENORM_TOL * (1.0 + 1e-9) {
            Ok(Self {
                values: values.into_iter().map(|v| v / sum).collect(),
            })
        } else {
            Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, outside tolerance {}",
                F::RENORM_TOL
            )))
        }
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_weights(weights: Vec<F>) -> Result<Self> {
        check_len(weights.len())?;
        if weights.iter().any(|w| !w.is_finite() || *w < F::zero()) {
            return Err(Error::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: F = weights.iter().copied().sum();
        if sum <= F::zero() || !sum.is_finite() {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, cannot normalize"
            )));
        }
        Ok(Self::from_raw(weights.into_iter().map(|w| w / sum).collect()))
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        check_len(k)?;
        Ok(Self::from_raw(vec![F::one() / F::from_usize_lossy(k); k]))
    }

    /// Caller guarantees the simplex invariant.
    pub(crate) fn from_raw(values: Vec<F>) -> Self {
        debug_assert!(values.len() >= 2);
        Self { values }
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<F> {
        self.values
    }

    /// Number of classes.
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, class: usize) -> F {
        self.values[class]
    }

    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> F {
        self.values[self.argmax()]
    }

    /// Log-probabilities after flooring at `F::CLAMP_EPS` and renormalizing.
    pub fn clamped_log(&self) -> Vec<F> {
        let eps = F::lit(F::CLAMP_EPS);
        let clamped: Vec<F> = self.values.iter().map(|&v| v.max(eps)).collect();
        let total: F = clamped.iter().copied().sum();
        let log_total = total.ln();
        clamped.into_iter().map(|v| v.ln() - log_total).collect()
    }

    /// Total mass of the given classes.
    pub fn mass_of(&self, set: &LabelSet) -> F {
        set.iter().map(|c| self.values[c]).sum()
    }
}

fn check_len(k: usize) -> Result<()> {
    if k < 2 {
        Err(Error::InvalidInput(format!("need at least 2 classes, got {k}")))
    } else {
        Ok(())
    }
}

/// Unbounded real scores (logits) for `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector<F> {
    values: Vec<F>,
}

impl<F: Scalar> LogitVector<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("logit entry {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }
}

/// Class indices ordered by nonincreasing probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortPermutation {
    order: Vec<usize>,
}

impl SortPermutation {
    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    /// 0-based position of `class` in the order.
    pub fn rank_of(&self, class: usize) -> usize {
        self.order
            .iter()
            .position(|&c| c == class)
            .expect("class is part of the permutation")
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// A nonempty set of class indices, stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    members: Vec<usize>,
    classes: usize,
}

impl LabelSet {
    pub fn new(mut members: Vec<usize>, classes: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("label set"));
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= classes) {
            return Err(Error::ClassOutOfRange {
                index: bad,
                classes,
            });
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { members, classes })
    }

    pub fn full(classes: usize) -> Self {
        Self {
            members: (0..classes).collect(),
            classes,
        }
    }

    pub fn singleton(class: usize, classes: usize) -> Self {
        assert!(class < classes);
        Self {
            members: vec![class],
            classes,
        }
    }

    pub fn contains(&self, class: usize) -> bool {
        self.members.binary_search(&class).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of classes in the label space.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.classes
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.members
    }

    pub fn is_subset_of(&self, other: &LabelSet) -> bool {
        self.members.iter().all(|&m| other.contains(m))
    }

    /// Membership mask of length `classes`.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.classes];
        for &c in &self.members {
            m[c] = true;
        }
        m
    }
}

/// Max-shifted softmax over a raw slice.
pub(crate) fn softmax_slice<F: Scalar>(z: &[F]) -> Vec<F> {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: F = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / total;
    }
    out
}

pub fn softmax<F: Scalar>(z: &LogitVector<F>) -> ProbVector<F> {
    ProbVector::from_raw(softmax_slice(z.as_slice()))
}

/// `softmax(log p / tau)`, with `p` clamped away from zero first.
pub fn tempered_softmax<F: Scalar>(p: &ProbVector<F>, tau: F) -> Result<ProbVector<F>> {
    check_temperature(tau)?;
    Ok(temper_log(&p.clamped_log(), tau))
}

/// Tempered softmax of precomputed log-probabilities.
pub(crate) fn temper_log<F: Scalar>(log_p: &[F], tau: F) -> ProbVector<F> {
    let scaled: Vec<F> = log_p.iter().map(|&l| l / tau).collect();
    ProbVector::from_raw(softmax_slice(&scaled))
}

pub(crate) fn check_temperature<F: Scalar>(tau: F) -> Result<()> {
    if !(tau > F::zero()) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "temperature must be finite and > 0, got {tau}"
        )));
    }
    Ok(())
}

/// Descending order of a raw slice, ties by ascending index.
pub(crate) fn desc_order<F: Scalar>(p: &[F]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    // Stable sort keeps ascending index among equal values.
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

pub fn sort_desc<F: Scalar>(p: &ProbVector<F>) -> SortPermutation {
    SortPermutation {
        order: desc_order(p.as_slice()),
    }
}

/// Highest-probability region of mass `1 - alpha`: the shortest prefix of
/// [`sort_desc`] whose cumulative mass is `>= 1 - alpha`.
///
/// `alpha = 0` always yields the full label set.
pub fn hpr<F: Scalar>(p: &ProbVector<F>, alpha: F) -> Result<LabelSet> {
    if !(alpha >= F::zero() && alpha <= F::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let k = p.k();
    if alpha == F::zero() {
        return Ok(LabelSet::full(k));
    }
    let target = F::one() - alpha;
    let order = desc_order(p.as_slice());
    let mut mass = F::zero();
    let mut m = k;
    for (i, &c) in order.iter().enumerate() {
        mass = mass + p.get(c);
        if mass >= target {
            m = i + 1;
            break;
        }
    }
    LabelSet::new(order[..m].to_vec(), k)
}
