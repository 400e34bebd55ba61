//! Split / fit / evaluate loop over every configured calibrator.

use cmcal_core::calibrators::TsStatus;
use cmcal_core::synthetic::{make_grid, miscalibrate_all, sample_with_seed};
use cmcal_core::{
    fit, full_report, BinSpec, CalibratorSpec, EvalBatch, MetricReport, ReportConfig, ScoreKind,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, LogitDataset, ValueKind};
use crate::error::CliResult;
use crate::split::{make_splits, SplitAssignment};

pub const BASE: &str = "Base";

/// Tolerance of the end-to-end in-set mass check for mass rescaling.
pub const MASS_CHECK_TOL: f64 = 1e-9;
/// Same check for conformal TS, which stops bisecting at this overshoot.
pub const TS_MASS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub empty_fallbacks: usize,
    pub degenerate: usize,
    pub ts_constant_mass: usize,
    pub ts_infeasible: usize,
    pub ts_overshoot: usize,
    /// Largest `|in-set mass - (1 - alpha)|` over rows the guarantee covers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_in_set_mass_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_check: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub calibrator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_kind: Option<ScoreKind>,
    pub split: usize,
    pub split_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricReport<f64>>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Loads the configured file, or draws the synthetic benchmark.
pub fn load_data(config: &ExperimentConfig) -> CliResult<LogitDataset> {
    if let Some(path) = &config.dataset {
        return load_dataset(path, config.dataset_format);
    }
    let mix = make_grid(
        config.synthetic_k,
        config.synthetic_spacing,
        config.synthetic_sigma,
        config.synthetic_seed,
    )?;
    let s = sample_with_seed(&mix, config.synthetic_n, config.synthetic_seed)?;
    let probs = miscalibrate_all(&s.truth, config.synthetic_t0, config.synthetic_noise, config.synthetic_seed)?;
    Ok(LogitDataset {
        k: config.synthetic_k,
        source: ValueKind::Probs,
        probs,
        labels: s.labels,
    })
}

pub fn report_config(config: &ExperimentConfig) -> CliResult<ReportConfig<f64>> {
    Ok(ReportConfig {
        calibration_bins: BinSpec::uniform(config.calibration_bins)?,
        cmce_bins: BinSpec::uniform(config.cmce_bins)?,
        intervals: config.intervals.iter().map(|&[a, b]| (a, b)).collect(),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Vec<ResultRow>> {
    config.validate()?;
    let data = load_data(config)?;
    run_on_dataset(config, &data)
}

/// Rows come out split-major, `Base` first, then calibrators in config
/// order, whatever the thread schedule.
pub fn run_on_dataset(config: &ExperimentConfig, data: &LogitDataset) -> CliResult<Vec<ResultRow>> {
    config.validate()?;
    let report_cfg = report_config(config)?;
    let specs = config.specs();
    let splits = make_splits(data.len(), config.split_fraction, config.num_splits, config.seed)?;
    let batches = splits
        .iter()
        .map(|s| Ok((data.subset(&s.calibration)?, data.subset(&s.test)?)))
        .collect::<CliResult<Vec<_>>>()?;

    let jobs: Vec<(usize, Option<usize>)> = (0..splits.len())
        .flat_map(|i| std::iter::once((i, None)).chain((0..specs.len()).map(move |j| (i, Some(j)))))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, j)| {
            let (calib, test) = &batches[i];
            match j {
                None => base_row(i, &splits[i], test, &report_cfg),
                Some(j) => calibrated_row(i, &splits[i], &specs[j], calib, test, &report_cfg),
            }
        })
        .collect())
}

fn empty_row(name: String, split: usize, s: &SplitAssignment) -> ResultRow {
    ResultRow {
        calibrator: name,
        alpha: None,
        score_kind: None,
        split,
        split_seed: s.seed,
        report: None,
        diagnostics: Diagnostics::default(),
        error: None,
    }
}

fn base_row(split: usize, s: &SplitAssignment, test: &EvalBatch<f64>, cfg: &ReportConfig<f64>) -> ResultRow {
    let mut row = empty_row(BASE.into(), split, s);
    match full_report(test, cfg) {
        Ok(r) => row.report = Some(r),
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn calibrated_row(
    split: usize,
    s: &SplitAssignment,
    spec: &CalibratorSpec<f64>,
    calib: &EvalBatch<f64>,
    test: &EvalBatch<f64>,
    cfg: &ReportConfig<f64>,
) -> ResultRow {
    let mut row = empty_row(spec.name(), split, s);
    row.alpha = spec.alpha();
    row.score_kind = spec.score_kind();
    match evaluate(spec, calib, test, cfg) {
        Ok((report, diagnostics)) => {
            row.report = Some(report);
            row.diagnostics = diagnostics;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn evaluate(
    spec: &CalibratorSpec<f64>,
    calib: &EvalBatch<f64>,
    test: &EvalBatch<f64>,
    cfg: &ReportConfig<f64>,
) -> cmcal_core::Result<(MetricReport<f64>, Diagnostics)> {
    let cal = fit(spec, calib)?;
    let mut d = Diagnostics {
        temperature: cal.temperature(),
        ..Default::default()
    };
    let (checked, tol) = match spec {
        CalibratorSpec::MassRescale { .. } => (true, MASS_CHECK_TOL),
        CalibratorSpec::ConformalTs { .. } => (true, TS_MASS_CHECK_TOL),
        _ => (false, 0.0),
    };
    let target = spec.alpha().map(|a| 1.0 - a);
    let mut probs = Vec::with_capacity(test.len());
    for p in test.probs() {
        let (q, info) = cal.apply_with_info(p)?;
        d.empty_fallbacks += info.empty_fallback as usize;
        d.degenerate += info.degenerate as usize;
        let mut covered = !info.degenerate;
        match info.ts_status {
            Some(TsStatus::ConstantMass) => {
                d.ts_constant_mass += 1;
                covered = false;
            }
            Some(TsStatus::Infeasible) => {
                d.ts_infeasible += 1;
                covered = false;
            }
            Some(TsStatus::Overshoot) => d.ts_overshoot += 1,
            _ => {}
        }
        if let (true, Some(m), Some(t)) = (covered, info.in_set_mass, target) {
            let err = (m - t).abs();
            d.max_in_set_mass_error = Some(d.max_in_set_mass_error.map_or(err, |e: f64| e.max(err)));
        }
        probs.push(q);
    }
    if checked {
        d.mass_check = Some(d.max_in_set_mass_error.is_none_or(|e| e <= tol));
    }
    let out = test.with_probs(probs)?;
    Ok((full_report(&out, cfg)?, d))
}
