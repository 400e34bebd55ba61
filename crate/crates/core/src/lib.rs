//! Cumulative-mass calibration for probabilistic classifiers.
//!
//! The crate provides the CMCE metric alongside the usual calibration
//! metrics, split-conformal label sets with APS and MSP scores, post-hoc
//! calibrators that enforce a conformal mass constraint, classical
//! baselines, and a Gaussian-grid benchmark with an exact posterior.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root fix the common double-precision case.
//!
//! ```
//! use cmcal_core::{hpr, ProbVector64};
//!
//! let p = ProbVector64::new(vec![0.5, 0.3, 0.2]).unwrap();
//! let set = hpr(&p, 0.2).unwrap();
//! assert_eq!(set.as_slice(), &[0, 1]);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrators;
pub mod conformal;
pub mod error;
pub mod metrics;
pub mod optimize;
pub mod scalar;
pub mod simplex;
pub mod synthetic;

pub use calibrators::{fit, ApplyInfo, CalibratorSpec, CalibratorState, FittedCalibrator, TemperatureGrid, TsStatus};
pub use conformal::{fit_threshold, predict_set, ConformalRule, Prediction, ScoreKind, Threshold};
pub use error::{Error, Result};
pub use metrics::{full_report, BinSpec, CurvePoint, EvalBatch, IntervalCoverage, MetricReport, ReportConfig};
pub use scalar::Scalar;
pub use simplex::{hpr, softmax, sort_desc, tempered_softmax, LabelSet, LogitVector, ProbVector, SortPermutation};
pub use synthetic::{make_grid, true_posterior, GridMixture, SyntheticBatch};

pub type ProbVector64 = ProbVector<f64>;
pub type ProbVector32 = ProbVector<f32>;
pub type LogitVector64 = LogitVector<f64>;
pub type EvalBatch64 = EvalBatch<f64>;
pub type EvalBatch32 = EvalBatch<f32>;
pub type BinSpec64 = BinSpec<f64>;
pub type ConformalRule64 = ConformalRule<f64>;
pub type CalibratorSpec64 = CalibratorSpec<f64>;
pub type FittedCalibrator64 = FittedCalibrator<f64>;
pub type MetricReport64 = MetricReport<f64>;
pub type ReportConfig64 = ReportConfig<f64>;
pub type GridMixture64 = GridMixture<f64>;
pub type SyntheticBatch64 = SyntheticBatch<f64>;
