use serde::{Deserialize, Serialize};

use super::{renormalize_or_uniform, CalibratorSpec, CalibratorState, FittedCalibrator};
use crate::error::{Error, Result};
use crate::metrics::EvalBatch;
use crate::scalar::Scalar;
use crate::simplex::ProbVector;

/// Per-class map from log-probability to a binary probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmoidMap<F> {
    /// `sigmoid(a * z + b)`.
    Sigmoid { a: F, b: F },
    /// Returns the input probability unchanged.
    Passthrough,
}

impl<F: Scalar> SigmoidMap<F> {
    /// Maps score `z = log p` (with `p` itself for the passthrough case).
    pub fn eval(&self, z: F, p: F) -> F {
        match *self {
            SigmoidMap::Sigmoid { a, b } => sigmoid(a * z + b),
            SigmoidMap::Passthrough => p,
        }
    }
}

fn sigmoid<F: Scalar>(f: F) -> F {
    if f >= F::zero() {
        F::one() / (F::one() + (-f).exp())
    } else {
        let e = f.exp();
        e / (F::one() + e)
    }
}

/// `log(1 + e^f)` without overflow.
fn softplus<F: Scalar>(f: F) -> F {
    f.max(F::zero()) + (-f.abs()).exp().ln_1p()
}

fn loss<F: Scalar>(z: &[F], t: &[F], a: F, b: F) -> F {
    z.iter()
        .zip(t)
        .map(|(&zi, &ti)| {
            let f = a * zi + b;
            softplus(f) - ti * f
        })
        .sum()
}

/// Fits `sigmoid(a z + b)` to binary outcomes by Newton's method on the
/// cross-entropy, with Platt's smoothed targets
/// `(N+ + 1) / (N+ + 2)` and `1 / (N- + 2)`.
///
/// Without positive examples the class gets [`SigmoidMap::Passthrough`].
pub fn fit_sigmoid<F: Scalar>(z: &[F], positive: &[bool]) -> Result<SigmoidMap<F>> {
    if z.is_empty() {
        return Err(Error::Empty("sigmoid fit"));
    }
    if z.len() != positive.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} outcomes",
            z.len(),
            positive.len()
        )));
    }
    let n_pos = positive.iter().filter(|&&y| y).count();
    let n_neg = z.len() - n_pos;
    if n_pos == 0 {
        return Ok(SigmoidMap::Passthrough);
    }
    let np = F::from_usize_lossy(n_pos);
    let nn = F::from_usize_lossy(n_neg);
    let two = F::lit(2.0);
    let hi = (np + F::one()) / (np + two);
    let lo = F::one() / (nn + two);
    let t: Vec<F> = positive.iter().map(|&y| if y { hi } else { lo }).collect();

    let mut a = F::zero();
    let mut b = ((np + F::one()) / (nn + F::one())).ln();
    let mut current = loss(z, &t, a, b);
    let tiny = F::epsilon() * F::lit(16.0);
    for _ in 0..100 {
        let (mut ga, mut gb) = (F::zero(), F::zero());
        let (mut haa, mut hab, mut hbb) = (F::zero(), F::zero(), F::zero());
        for (&zi, &ti) in z.iter().zip(&t) {
            let s = sigmoid(a * zi + b);
            let d = s - ti;
            let w = s * (F::one() - s);
            ga = ga + d * zi;
            gb = gb + d;
            haa = haa + w * zi * zi;
            hab = hab + w * zi;
            hbb = hbb + w;
        }
        let ridge = (haa + hbb) * F::lit(1e-10) + F::min_positive_value();
        let (haa, hbb) = (haa + ridge, hbb + ridge);
        let det = haa * hbb - hab * hab;
        if !(det > F::zero()) {
            break;
        }
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let slope = ga * da + gb * db;
        if !(slope < F::zero()) {
            break;
        }
        let mut step = F::one();
        let accepted = loop {
            let (na, nb) = (a + step * da, b + step * db);
            let next = loss(z, &t, na, nb);
            if next <= current + F::lit(1e-4) * step * slope {
                break Some((na, nb, next));
            }
            step = step / two;
            if step < F::lit(1e-10) {
                break None;
            }
        };
        let Some((na, nb, next)) = accepted else { break };
        let moved = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        let gain = current - next;
        current = next;
        if moved <= tiny * (F::one() + a.abs().max(b.abs())) || gain <= tiny * current.abs() {
            break;
        }
    }
    Ok(SigmoidMap::Sigmoid { a, b })
}

/// One sigmoid per class on `z_k = log p_k`, then renormalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlattOvr<F> {
    pub maps: Vec<SigmoidMap<F>>,
    /// Classes absent from the fitting labels (passthrough maps).
    pub flagged: Vec<usize>,
}

impl<F: Scalar> PlattOvr<F> {
    pub fn fit(calib: &EvalBatch<F>) -> Self {
        let logs: Vec<Vec<F>> = calib.probs().iter().map(|p| p.clamped_log()).collect();
        let mut maps = Vec::with_capacity(calib.k());
        let mut flagged = Vec::new();
        for k in 0..calib.k() {
            let z: Vec<F> = logs.iter().map(|l| l[k]).collect();
            let pos: Vec<bool> = calib.labels().iter().map(|&y| y == k).collect();
            let map = fit_sigmoid(&z, &pos).expect("batch is nonempty and aligned");
            if map == SigmoidMap::Passthrough {
                flagged.push(k);
            }
            maps.push(map);
        }
        Self { maps, flagged }
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
        let logs = p.clamped_log();
        let raw = self
            .maps
            .iter()
            .zip(&logs)
            .zip(p.as_slice())
            .map(|((m, &z), &pk)| m.eval(z, pk))
            .collect();
        Ok(renormalize_or_uniform(raw))
    }
}

pub fn fit_platt_ovr<F: Scalar>(calib: &EvalBatch<F>) -> FittedCalibrator<F> {
    FittedCalibrator {
        spec: CalibratorSpec::PlattOvr,
        state: CalibratorState::Platt(PlattOvr::fit(calib)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(m: SigmoidMap<f64>) -> (f64, f64) {
        match m {
            SigmoidMap::Sigmoid { a, b } => (a, b),
            SigmoidMap::Passthrough => panic!("expected a sigmoid"),
        }
    }

    #[test]
    fn balanced_symmetric_scores_give_zero_offset() {
        let z = [-2.0, -1.0, 1.0, 2.0];
        let y = [false, false, true, true];
        let (a, b) = sig(fit_sigmoid(&z, &y).unwrap());
        assert!(a > 0.0);
        assert!(b.abs() < 1e-9, "b = {b}");
    }

    #[test]
    fn separable_data_stays_finite() {
        let z = [-3.0, -2.5, -0.2, -0.1];
        let y = [false, false, true, true];
        let (a, b) = sig(fit_sigmoid(&z, &y).unwrap());
        assert!(a.is_finite() && b.is_finite());
        // smoothed targets cap the fitted probabilities
        let top = sigmoid(a * -0.1 + b);
        assert!(top < 0.76 && top > 0.5);
    }

    #[test]
    fn no_positives_is_passthrough() {
        let m = fit_sigmoid(&[-1.0, -2.0], &[false, false]).unwrap();
        assert_eq!(m, SigmoidMap::Passthrough);
        assert_eq!(m.eval(-1.0, 0.3), 0.3);
    }

    #[test]
    fn rejects_mismatched_input() {
        assert!(fit_sigmoid::<f64>(&[], &[]).is_err());
        assert!(fit_sigmoid(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn matches_grid_minimum() {
        let cases: [(&[f64], &[bool]); 3] = [
            (&[-0.1, -0.7, -1.2, -2.3, -0.4], &[true, false, true, false, false]),
            (&[-0.05, -0.2, -0.9, -1.6, -3.0], &[true, true, false, true, false]),
            (&[-1.0, -1.1, -0.3, -2.0, -0.6], &[false, true, true, false, true]),
        ];
        for (z, y) in cases {
            let n_pos = y.iter().filter(|&&v| v).count() as f64;
            let n_neg = y.len() as f64 - n_pos;
            let t: Vec<f64> = y
                .iter()
                .map(|&v| if v { (n_pos + 1.0) / (n_pos + 2.0) } else { 1.0 / (n_neg + 2.0) })
                .collect();
            let (a, b) = sig(fit_sigmoid(z, y).unwrap());
            let ours = cmcal_oracles::platt_loss(z, &t, a, b);
            let (_, _, grid) = cmcal_oracles::platt_grid(z, &t, 8.0, 400);
            assert!(ours <= grid + 1e-3, "newton {ours} vs grid {grid}");
        }
    }

    #[test]
    fn ovr_flags_absent_class_and_lands_on_simplex() {
        let b = EvalBatch::from_rows(
            vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.7, 0.1], vec![0.6, 0.3, 0.1]],
            vec![0, 1, 0],
        )
        .unwrap();
        let m = PlattOvr::fit(&b);
        assert_eq!(m.flagged, vec![2]);
        let q = m.apply(&ProbVector::new(vec![0.5, 0.4, 0.1]).unwrap()).unwrap();
        let s: f64 = q.as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(m.apply(&ProbVector::new(vec![0.5, 0.5]).unwrap()).is_err());
    }
}
