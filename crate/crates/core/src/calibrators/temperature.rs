use serde::{Deserialize, Serialize};

use super::{CalibratorSpec, CalibratorState, FittedCalibrator};
use crate::error::{Error, Result};
use crate::metrics::{prefix_masses_ordered, BinSpec, CmceAccumulator, EvalBatch};
use crate::optimize::golden_section;
use crate::scalar::Scalar;
use crate::simplex::{desc_order, temper_log};

/// Candidate temperatures for the CMCE grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperatureGrid<F> {
    LogUniform { lo: F, hi: F, points: usize },
    Explicit { values: Vec<F> },
}

impl<F: Scalar> Default for TemperatureGrid<F> {
    fn default() -> Self {
        TemperatureGrid::LogUniform {
            lo: F::lit(0.05),
            hi: F::lit(20.0),
            points: 200,
        }
    }
}

impl<F: Scalar> TemperatureGrid<F> {
    pub fn points(&self) -> Result<Vec<F>> {
        let values = match self {
            TemperatureGrid::LogUniform { lo, hi, points } => {
                if *points == 0 || !(*lo > F::zero() && lo <= hi) {
                    return Err(Error::InvalidParameter(format!(
                        "log-uniform grid needs 0 < lo <= hi and points >= 1, got [{lo}, {hi}] x {points}"
                    )));
                }
                if *points == 1 {
                    vec![*lo]
                } else {
                    let (a, b) = (lo.ln(), hi.ln());
                    let last = F::from_usize_lossy(points - 1);
                    (0..*points)
                        .map(|i| (a + (b - a) * F::from_usize_lossy(i) / last).exp())
                        .collect()
                }
            }
            TemperatureGrid::Explicit { values } => values.clone(),
        };
        if values.is_empty() {
            return Err(Error::Empty("temperature grid"));
        }
        if let Some(t) = values.iter().find(|t| !(**t > F::zero()) || !t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid temperatures must be finite and > 0, got {t}"
            )));
        }
        Ok(values)
    }
}

/// Mean NLL of `softmax(log p / t)` against the labels, from clamped logs.
fn tempered_nll<F: Scalar>(logs: &[Vec<F>], labels: &[usize], t: F) -> F {
    let mut total = F::zero();
    for (l, &y) in logs.iter().zip(labels) {
        let max = l.iter().copied().fold(F::neg_infinity(), F::max);
        let lse: F = l.iter().map(|&v| ((v - max) / t).exp()).sum::<F>().ln();
        total = total + lse - (l[y] - max) / t;
    }
    total / F::from_usize_lossy(labels.len())
}

/// Likelihood-maximizing temperature by golden-section search over
/// `log T in [log 1e-2, log 1e2]`; never worse than `T = 1`.
pub(crate) fn nll_temperature<F: Scalar>(calib: &EvalBatch<F>) -> F {
    let logs: Vec<Vec<F>> = calib.probs().iter().map(|p| p.clamped_log()).collect();
    let labels = calib.labels();
    let objective = |u: F| tempered_nll(&logs, labels, u.exp());
    let (u, best) = golden_section(
        objective,
        F::lit(1e-2).ln(),
        F::lit(1e2).ln(),
        F::lit(1e-4),
    );
    if tempered_nll(&logs, labels, F::one()) <= best {
        F::one()
    } else {
        u.exp()
    }
}

pub fn fit_temp_nll<F: Scalar>(calib: &EvalBatch<F>) -> FittedCalibrator<F> {
    FittedCalibrator {
        spec: CalibratorSpec::TempScaleNll,
        state: CalibratorState::Temperature(nll_temperature(calib)),
    }
}

/// Grid temperature with the smallest CMCE on `holdout`. Ties go to the
/// temperature nearest 1, then to the smaller one.
pub fn select_naive_cmce<F: Scalar>(holdout: &EvalBatch<F>, grid: &[F], bins: &BinSpec<F>) -> Result<F> {
    if grid.is_empty() {
        return Err(Error::Empty("temperature grid"));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > F::zero()) || !t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid temperatures must be finite and > 0, got {t}"
        )));
    }
    let rows: Vec<(Vec<F>, Vec<usize>)> = holdout
        .probs()
        .iter()
        .map(|p| (p.clamped_log(), desc_order(p.as_slice())))
        .collect();

    let mut best: Option<(F, F)> = None;
    let mut masses = Vec::with_capacity(holdout.k());
    for &t in grid {
        let mut acc = CmceAccumulator::new(bins);
        for ((p, y), (logs, order)) in holdout.iter().zip(&rows) {
            let rank = if t == F::one() {
                prefix_masses_ordered(p.as_slice(), order, y, &mut masses)
            } else {
                let q = temper_log(logs, t);
                let q = q.as_slice();
                // tempering keeps the order unless rounding merged neighbours
                if still_sorted(q, order) {
                    prefix_masses_ordered(q, order, y, &mut masses)
                } else {
                    prefix_masses_ordered(q, &desc_order(q), y, &mut masses)
                }
            };
            acc.add(&masses, rank);
        }
        let value = acc.value();
        let better = match best {
            None => true,
            Some((bt, bv)) => {
                value < bv
                    || (value == bv && {
                        let (d, bd) = ((t - F::one()).abs(), (bt - F::one()).abs());
                        d < bd || (d == bd && t < bt)
                    })
            }
        };
        if better {
            best = Some((t, value));
        }
    }
    Ok(best.expect("grid is nonempty").0)
}

fn still_sorted<F: Scalar>(q: &[F], order: &[usize]) -> bool {
    order
        .windows(2)
        .all(|w| q[w[0]] > q[w[1]] || (q[w[0]] == q[w[1]] && w[0] < w[1]))
}

pub fn fit_naive_cmce<F: Scalar>(
    holdout: &EvalBatch<F>,
    grid: &[F],
    bins: &BinSpec<F>,
) -> Result<FittedCalibrator<F>> {
    let t = select_naive_cmce(holdout, grid, bins)?;
    Ok(FittedCalibrator {
        spec: CalibratorSpec::NaiveCmce {
            grid: TemperatureGrid::Explicit {
                values: grid.to_vec(),
            },
            bins: bins.count(),
        },
        state: CalibratorState::Temperature(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cmce;
    use crate::simplex::{tempered_softmax, ProbVector};

    fn batch(rows: &[&[f64]], labels: &[usize]) -> EvalBatch<f64> {
        EvalBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let g = TemperatureGrid::<f64>::default().points().unwrap();
        assert_eq!(g.len(), 200);
        assert!((g[0] - 0.05).abs() < 1e-12);
        assert!((g[199] - 20.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_validation() {
        assert!(TemperatureGrid::<f64>::Explicit { values: vec![] }.points().is_err());
        assert!(TemperatureGrid::Explicit { values: vec![1.0, -1.0] }.points().is_err());
        assert!(TemperatureGrid::LogUniform { lo: 2.0, hi: 1.0, points: 3 }.points().is_err());
    }

    #[test]
    fn singleton_grid() {
        let b = batch(&[&[0.7, 0.3], &[0.2, 0.8]], &[0, 0]);
        let bins = BinSpec::uniform(25).unwrap();
        assert_eq!(select_naive_cmce(&b, &[1.0], &bins).unwrap(), 1.0);
        assert!(select_naive_cmce(&b, &[], &bins).is_err());
    }

    #[test]
    fn ties_prefer_temperature_near_one() {
        // uniform predictions do not change under any temperature
        let b = batch(&[&[0.5, 0.5], &[0.5, 0.5]], &[0, 1]);
        let bins = BinSpec::uniform(25).unwrap();
        assert_eq!(select_naive_cmce(&b, &[3.0, 0.5, 2.0], &bins).unwrap(), 0.5);
        assert_eq!(select_naive_cmce(&b, &[1.5, 0.5], &bins).unwrap(), 0.5);
    }

    #[test]
    fn grid_search_matches_metric_on_tempered_batch() {
        let b = batch(
            &[&[0.7, 0.2, 0.1], &[0.1, 0.6, 0.3], &[0.3, 0.3, 0.4], &[0.05, 0.05, 0.9]],
            &[0, 2, 2, 2],
        );
        let bins = BinSpec::uniform(5).unwrap();
        let grid = [0.3, 0.7, 1.0, 1.8, 4.0];
        let chosen = select_naive_cmce(&b, &grid, &bins).unwrap();
        let value_at = |t: f64| {
            let probs: Vec<ProbVector<f64>> = b
                .probs()
                .iter()
                .map(|p| if t == 1.0 { p.clone() } else { tempered_softmax(p, t).unwrap() })
                .collect();
            cmce(&b.with_probs(probs).unwrap(), &bins).0
        };
        let best = grid.iter().map(|&t| value_at(t)).fold(f64::INFINITY, f64::min);
        assert_eq!(value_at(chosen), best);
    }

    #[test]
    fn nll_temperature_single_sample_hits_lower_bound() {
        let b = batch(&[&[0.9, 0.1]], &[0]);
        let t = nll_temperature(&b);
        assert!(t < 0.0101, "t = {t}");
    }

    #[test]
    fn nll_at_fit_not_worse_than_identity() {
        let b = batch(&[&[0.9, 0.1], &[0.8, 0.2], &[0.6, 0.4]], &[1, 0, 0]);
        let cal = fit_temp_nll(&b);
        let t = cal.temperature().unwrap();
        let logs: Vec<Vec<f64>> = b.probs().iter().map(|p| p.clamped_log()).collect();
        assert!(tempered_nll(&logs, b.labels(), t) <= tempered_nll(&logs, b.labels(), 1.0));
    }
}
