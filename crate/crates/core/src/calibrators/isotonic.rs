use serde::{Deserialize, Serialize};

use super::{renormalize_or_uniform, CalibratorSpec, CalibratorState, FittedCalibrator};
use crate::error::{Error, Result};
use crate::metrics::EvalBatch;
use crate::scalar::Scalar;
use crate::simplex::ProbVector;

/// Weighted least-squares nondecreasing fit of `y` (already ordered by the
/// covariate) by pooling adjacent violators.
pub fn pava<F: Scalar>(y: &[F], w: &[F]) -> Result<Vec<F>> {
    if y.is_empty() {
        return Err(Error::Empty("isotonic fit"));
    }
    if y.len() != w.len() {
        return Err(Error::InvalidInput(format!(
            "{} targets but {} weights",
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|&v| !(v > F::zero()) || !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "isotonic fit needs finite targets and positive weights".into(),
        ));
    }

    // (start, weight, weighted sum)
    let mut blocks: Vec<(usize, F, F)> = Vec::with_capacity(y.len());
    for (i, (&yi, &wi)) in y.iter().zip(w).enumerate() {
        let mut cur = (i, wi, wi * yi);
        while let Some(&(start, pw, ps)) = blocks.last() {
            if ps / pw > cur.2 / cur.1 {
                cur = (start, pw + cur.1, ps + cur.2);
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push(cur);
    }

    let mut fitted = Vec::with_capacity(y.len());
    let mut floor = F::neg_infinity();
    for (j, &(start, _, _)) in blocks.iter().enumerate() {
        let end = blocks.get(j + 1).map_or(y.len(), |b| b.0);
        // recompute left to right so the level does not depend on merge order
        let (mut sw, mut swy) = (F::zero(), F::zero());
        for i in start..end {
            sw = sw + w[i];
            swy = swy + w[i] * y[i];
        }
        let level = (swy / sw).max(floor);
        floor = level;
        fitted.extend(std::iter::repeat_n(level, end - start));
    }
    Ok(fitted)
}

/// Right-continuous nondecreasing step function, constant beyond its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction<F> {
    xs: Vec<F>,
    ys: Vec<F>,
}

impl<F: Scalar> StepFunction<F> {
    pub fn new(xs: Vec<F>, ys: Vec<F>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidInput(
                "step function needs matching, nonempty knots and levels".into(),
            ));
        }
        if xs.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::InvalidInput("knots must be strictly increasing".into()));
        }
        if ys.windows(2).any(|p| !(p[0] <= p[1])) {
            return Err(Error::InvalidInput("levels must be nondecreasing".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn knots(&self) -> &[F] {
        &self.xs
    }

    pub fn levels(&self) -> &[F] {
        &self.ys
    }

    pub fn eval(&self, x: F) -> F {
        let i = self.xs.partition_point(|&k| k <= x);
        self.ys[i.saturating_sub(1)]
    }
}

/// Isotonic regression of `y` on `x`; tied `x` values are pooled first.
pub fn isotonic_fit<F: Scalar>(x: &[F], y: &[F], w: &[F]) -> Result<StepFunction<F>> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::InvalidInput("x, y and w must have equal length".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("covariates must be finite".into()));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite"));

    let (mut xs, mut gy, mut gw) = (Vec::new(), Vec::new(), Vec::new());
    let mut i = 0;
    while i < idx.len() {
        let x0 = x[idx[i]];
        let (mut sw, mut swy) = (F::zero(), F::zero());
        while i < idx.len() && x[idx[i]] == x0 {
            sw = sw + w[idx[i]];
            swy = swy + w[idx[i]] * y[idx[i]];
            i += 1;
        }
        xs.push(x0);
        gw.push(sw);
        gy.push(if sw > F::zero() { swy / sw } else { F::zero() });
    }
    let ys = pava(&gy, &gw)?;
    Ok(StepFunction { xs, ys })
}

/// One isotonic map per class on `p_k`, then renormalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicOvr<F> {
    pub maps: Vec<StepFunction<F>>,
}

impl<F: Scalar> IsotonicOvr<F> {
    pub fn fit(calib: &EvalBatch<F>) -> Self {
        let ones = vec![F::one(); calib.len()];
        let maps = (0..calib.k())
            .map(|k| {
                let x: Vec<F> = calib.probs().iter().map(|p| p.get(k)).collect();
                let y: Vec<F> = calib
                    .labels()
                    .iter()
                    .map(|&l| if l == k { F::one() } else { F::zero() })
                    .collect();
                isotonic_fit(&x, &y, &ones).expect("batch rows are valid probabilities")
            })
            .collect();
        Self { maps }
    }

    pub fn k(&self) -> usize {
        self.maps.len()
    }

    pub fn apply(&self, p: &ProbVector<F>) -> Result<ProbVector<F>> {
        if p.k() != self.k() {
            return Err(Error::InvalidInput(format!(
                "expected {} classes, got {}",
                self.k(),
                p.k()
            )));
        }
        let raw = self
            .maps
            .iter()
            .zip(p.as_slice())
            .map(|(m, &pk)| m.eval(pk))
            .collect();
        Ok(renormalize_or_uniform(raw))
    }
}

pub fn fit_isotonic_ovr<F: Scalar>(calib: &EvalBatch<F>) -> FittedCalibrator<F> {
    FittedCalibrator {
        spec: CalibratorSpec::IsotonicOvr,
        state: CalibratorState::Isotonic(IsotonicOvr::fit(calib)),
    }
}
