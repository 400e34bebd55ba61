//! Post-hoc calibrators.
//!
//! Two methods are driven by a split-conformal rule: mass rescaling and
//! per-instance conformal temperature scaling. The rest are a CMCE-tuned
//! grid temperature and the classical NLL temperature, Platt (one-vs-rest)
//! and isotonic (one-vs-rest) baselines.
//!
//! Every calibrator is fitted once ([`fit`]) and applied row by row
//! ([`FittedCalibrator::apply`]); fitted values are immutable.

mod conformal_ts;
mod isotonic;
mod mass_rescale;
mod platt;
mod temperature;

pub use conformal_ts::{
    conformal_ts_apply, in_set_mass_at, TemperedPrediction, TsOptions, TsStatus,
};
pub use isotonic::{fit_isotonic_ovr, isotonic_fit, pava, IsotonicOvr, StepFunction};
pub use mass_rescale::{mass_rescale_apply, rescale_to_set, MassRescaled};
pub use platt::{fit_platt_ovr, fit_sigmoid, PlattOvr, SigmoidMap};
pub use temperature::{fit_naive_cmce, fit_temp_nll, select_naive_cmce, TemperatureGrid};

use serde::{Deserialize, Serialize};

use crate::conformal::{fit_threshold, ConformalRule, ScoreKind};
use crate::error::{Error, Result};
use crate::metrics::{BinSpec, EvalBatch, DEFAULT_CMCE_BINS};
use crate::scalar::Scalar;
use crate::simplex::{tempered_softmax, ProbVector};

/// What to fit. Conformal parameters only exist on the conformal variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum CalibratorSpec<F> {
    MassRescale { alpha: F, score: ScoreKind },
    ConformalTs { alpha: F, score: ScoreKind },
    NaiveCmce { grid: TemperatureGrid<F>, bins: usize },
    TempScaleNll,
    PlattOvr,
    IsotonicOvr,
}

impl<F: Scalar> CalibratorSpec<F> {
    /// Naive CMCE tuner with the default grid and bin count.
    pub fn naive_cmce() -> Self {
        CalibratorSpec::NaiveCmce {
            grid: TemperatureGrid::default(),
            bins: DEFAULT_CMCE_BINS,
        }
    }

    /// Short display name, e.g. `MR[MSP,alpha=0.1]`.
    pub fn name(&self) -> String {
        match self {
            CalibratorSpec::MassRescale { alpha, score } => format!("MR[{score},alpha={alpha}]"),
            CalibratorSpec::ConformalTs { alpha, score } => format!("TS[{score},alpha={alpha}]"),
            CalibratorSpec::NaiveCmce { .. } => "NaiveCMCE".to_string(),
            CalibratorSpec::TempScaleNll => "TempScaling".to_string(),
            CalibratorSpec::PlattOvr => "PlattOvR".to_string(),
            CalibratorSpec::IsotonicOvr => "IsotonicOvR".to_string(),
        }
    }

    pub fn alpha(&self) -> Option<F> {
        match self {
            CalibratorSpec::MassRescale { alpha, .. } | CalibratorSpec::ConformalTs { alpha, .. } => {
                Some(*alpha)
            }
            _ => None,
        }
    }

    pub fn score_kind(&self) -> Option<ScoreKind> {
        match self {
            CalibratorSpec::MassRescale { score, .. } | CalibratorSpec::ConformalTs { score, .. } => {
                Some(*score)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibratorState<F> {
    /// Mass rescaling and conformal TS keep only the fitted rule.
    Conformal(ConformalRule<F>),
    /// Global temperature applied to log-probabilities.
    Temperature(F),
    Platt(PlattOvr<F>),
    Isotonic(IsotonicOvr<F>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedCalibrator<F> {
    pub spec: CalibratorSpec<F>,
    pub state: CalibratorState<F>,
}

/// Side information produced while applying a calibrator to one row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApplyInfo<F> {
    /// The conformal set came out empty and `{argmax}` was used.
    pub empty_fallback: bool,
    /// Mass rescaling left the vector unchanged because one side had no mass.
    pub degenerate: bool,
    /// Conformal TS outcome and the per-instance temperature.
    pub ts_status: Option<TsStatus>,
    pub tau: Option<F>,
    /// Calibrated mass inside the conformal set (conformal methods only).
    pub in_set_mass: Option<F>,
}

pub fn fit<F: Scalar>(spec: &CalibratorSpec<F>, calib: &EvalBatch<F>) -> Result<FittedCalibrator<F>> {
    let state = match spec {
        CalibratorSpec::MassRescale { alpha, score } | CalibratorSpec::ConformalTs { alpha, score } => {
            CalibratorState::Conformal(fit_threshold(*score, calib, *alpha)?)
        }
        CalibratorSpec::NaiveCmce { grid, bins } => {
            let temps = grid.points()?;
            let bins = BinSpec::uniform(*bins)?;
            CalibratorState::Temperature(select_naive_cmce(calib, &temps, &bins)?)
        }
        CalibratorSpec::TempScaleNll => CalibratorState::Temperature(temperature::nll_temperature(calib)),
        CalibratorSpec::PlattOvr => CalibratorState::Platt(PlattOvr::fit(calib)),
        CalibratorSpec::IsotonicOvr => CalibratorState::Isotonic(IsotonicOvr::fit(calib)),
    };
    Ok(FittedCalibrator {
        spec: spec.clone(),
        state,
    })
}

impl<F: Scalar> FittedCalibrator<F> {
    pub fn name(&self) -> String {
        self.spec.name()
    }

    /// Global temperature, for the temperature-based methods.
    pub fn temperature(&self) -> Option<F> {
        match self.state {
            CalibratorState::Temperature(t) => Some(t),
            _ => None,
        }
    }

    pub fn apply(&self, p: &ProbVector<F>) -> Result<ProbVector<F>> {
        self.apply_with_info(p).map(|(q, _)| q)
    }

    pub fn apply_with_info(&self, p: &ProbVector<F>) -> Result<(ProbVector<F>, ApplyInfo<F>)> {
        let mut info = ApplyInfo::default();
        let out = match (&self.spec, &self.state) {
            (CalibratorSpec::MassRescale { .. }, CalibratorState::Conformal(rule)) => {
                let r = mass_rescale_apply(rule, p);
                info.empty_fallback = r.empty_fallback;
                info.degenerate = r.degenerate;
                info.in_set_mass = Some(r.probs.mass_of(&r.set));
                r.probs
            }
            (CalibratorSpec::ConformalTs { .. }, CalibratorState::Conformal(rule)) => {
                let r = conformal_ts_apply(rule, p, &TsOptions::default())?;
                info.empty_fallback = r.empty_fallback;
                info.ts_status = Some(r.status);
                info.tau = Some(r.tau);
                info.in_set_mass = Some(r.probs.mass_of(&r.set));
                r.probs
            }
            (
                CalibratorSpec::NaiveCmce { .. } | CalibratorSpec::TempScaleNll,
                CalibratorState::Temperature(t),
            ) => {
                if *t == F::one() {
                    p.clone()
                } else {
                    tempered_softmax(p, *t)?
                }
            }
            (CalibratorSpec::PlattOvr, CalibratorState::Platt(m)) => m.apply(p)?,
            (CalibratorSpec::IsotonicOvr, CalibratorState::Isotonic(m)) => m.apply(p)?,
            _ => {
                return Err(Error::InvalidInput(
                    "calibrator state does not match its spec".into(),
                ))
            }
        };
        Ok((out, info))
    }

    /// Applies the calibrator to every row of a batch.
    pub fn apply_batch(&self, batch: &EvalBatch<F>) -> Result<EvalBatch<F>> {
        let probs = batch
            .probs()
            .iter()
            .map(|p| self.apply(p))
            .collect::<Result<Vec<_>>>()?;
        batch.with_probs(probs)
    }
}

/// Normalizes per-class outputs; an all-zero vector becomes uniform.
pub(crate) fn renormalize_or_uniform<F: Scalar>(raw: Vec<F>) -> ProbVector<F> {
    let k = raw.len();
    let total: F = raw.iter().copied().sum();
    if total > F::zero() && total.is_finite() {
        ProbVector::from_raw(raw.into_iter().map(|v| v / total).collect())
    } else {
        ProbVector::from_raw(vec![F::one() / F::from_usize_lossy(k); k])
    }
}
