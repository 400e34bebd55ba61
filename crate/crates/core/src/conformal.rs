//! Split conformal prediction with APS and MSP nonconformity scores.
//!
//! A rule is fitted once on a calibration batch and then maps any
//! probability vector to a label set `{y : s(x, y) <= q}`. Only the constant
//! (global) threshold is provided; [`ScoreTransform`] is the hook for
//! instance-dependent thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalBatch;
use crate::scalar::Scalar;
use crate::simplex::{desc_order, LabelSet, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Cumulative sorted mass up to and including the label.
    #[serde(rename = "APS")]
    Aps,
    /// One minus the label's probability.
    #[serde(rename = "MSP")]
    Msp,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Aps => "APS",
            ScoreKind::Msp => "MSP",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "APS" => Ok(ScoreKind::Aps),
            "MSP" => Ok(ScoreKind::Msp),
            other => Err(Error::InvalidParameter(format!("unknown score kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold<F> {
    Finite(F),
    /// The conformal rank exceeds the calibration size: every label is kept.
    AllLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalRule<F> {
    pub kind: ScoreKind,
    pub alpha: F,
    pub threshold: Threshold<F>,
    pub calib_size: usize,
}

/// Result of [`ConformalRule::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub set: LabelSet,
    /// No label passed the threshold and the set was replaced by `{argmax}`.
    pub empty_fallback: bool,
}

/// Nonconformity scores of every class for one prediction.
pub fn scores<F: Scalar>(kind: ScoreKind, p: &ProbVector<F>) -> Vec<F> {
    match kind {
        ScoreKind::Msp => p.as_slice().iter().map(|&v| F::one() - v).collect(),
        ScoreKind::Aps => {
            let mut out = vec![F::zero(); p.k()];
            let mut mass = F::zero();
            for c in desc_order(p.as_slice()) {
                mass = mass + p.get(c);
                out[c] = mass;
            }
            out
        }
    }
}

pub fn score<F: Scalar>(kind: ScoreKind, p: &ProbVector<F>, y: usize) -> Result<F> {
    if y >= p.k() {
        return Err(Error::ClassOutOfRange {
            index: y,
            classes: p.k(),
        });
    }
    Ok(match kind {
        ScoreKind::Msp => F::one() - p.get(y),
        ScoreKind::Aps => scores(kind, p)[y],
    })
}

/// 1-based rank `ceil((1 - alpha)(n + 1))` of the conformal quantile.
pub fn conformal_rank<F: Scalar>(n: usize, alpha: F) -> usize {
    let x = (1.0 - alpha.as_f64()) * (n as f64 + 1.0);
    // absorb representation error in alpha so exact integers are not bumped
    (x - x * 1e-12).ceil().max(1.0) as usize
}

fn check_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Rank-selected threshold of a score multiset.
pub fn threshold_from_scores<F: Scalar>(mut calib_scores: Vec<F>, alpha: F) -> Result<Threshold<F>> {
    check_alpha(alpha)?;
    if calib_scores.is_empty() {
        return Err(Error::Empty("calibration scores"));
    }
    if calib_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("calibration score is NaN".into()));
    }
    let r = conformal_rank(calib_scores.len(), alpha);
    if r > calib_scores.len() {
        return Ok(Threshold::AllLabels);
    }
    calib_scores.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(Threshold::Finite(calib_scores[r - 1]))
}

pub fn fit_threshold<F: Scalar>(
    kind: ScoreKind,
    calib: &EvalBatch<F>,
    alpha: F,
) -> Result<ConformalRule<F>> {
    check_alpha(alpha)?;
    let calib_scores = calib
        .iter()
        .map(|(p, y)| score(kind, p, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConformalRule {
        kind,
        alpha,
        threshold: threshold_from_scores(calib_scores, alpha)?,
        calib_size: calib.len(),
    })
}

impl<F: Scalar> ConformalRule<F> {
    pub fn predict(&self, p: &ProbVector<F>) -> Prediction {
        let q = match self.threshold {
            Threshold::AllLabels => {
                return Prediction {
                    set: LabelSet::full(p.k()),
                    empty_fallback: false,
                }
            }
            Threshold::Finite(q) => q,
        };
        let members: Vec<usize> = scores(self.kind, p)
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s <= q)
            .map(|(c, _)| c)
            .collect();
        match LabelSet::new(members, p.k()) {
            Ok(set) => Prediction {
                set,
                empty_fallback: false,
            },
            Err(_) => Prediction {
                set: LabelSet::singleton(p.argmax(), p.k()),
                empty_fallback: true,
            },
        }
    }

    /// Threshold after mapping through an instance-dependent transform.
    pub fn adaptive_threshold<T: ScoreTransform<F>>(&self, transform: &T, features: &[F]) -> Threshold<F> {
        match self.threshold {
            Threshold::AllLabels => Threshold::AllLabels,
            Threshold::Finite(q) => Threshold::Finite(transform.inverse(q, features)),
        }
    }
}

pub fn predict_set<F: Scalar>(rule: &ConformalRule<F>, p: &ProbVector<F>) -> LabelSet {
    rule.predict(p).set
}

/// Invertible map `s -> f(s, x)` applied to scores before rank selection,
/// giving the per-instance threshold `f^{-1}(q, x)`.
pub trait ScoreTransform<F>: Send + Sync {
    fn transform(&self, score: F, features: &[F]) -> F;
    fn inverse(&self, transformed: F, features: &[F]) -> F;
}

/// The identity transform: one global threshold for every input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Constant;

impl<F: Copy> ScoreTransform<F> for Constant {
    fn transform(&self, score: F, _features: &[F]) -> F {
        score
    }

    fn inverse(&self, transformed: F, _features: &[F]) -> F {
        transformed
    }
}

/// Fits a threshold on transformed scores. With [`Constant`] this equals
/// [`fit_threshold`].
pub fn fit_threshold_transformed<F: Scalar, T: ScoreTransform<F>>(
    kind: ScoreKind,
    calib: &EvalBatch<F>,
    features: &[Vec<F>],
    alpha: F,
    transform: &T,
) -> Result<ConformalRule<F>> {
    if features.len() != calib.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows for {} calibration rows",
            features.len(),
            calib.len()
        )));
    }
    let calib_scores = calib
        .iter()
        .zip(features)
        .map(|((p, y), x)| Ok(transform.transform(score(kind, p, y)?, x)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConformalRule {
        kind,
        alpha,
        threshold: threshold_from_scores(calib_scores, alpha)?,
        calib_size: calib.len(),
    })
}
