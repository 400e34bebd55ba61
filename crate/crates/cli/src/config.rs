//! Experiment configuration: one flat TOML document whose keys mirror the
//! `run` flags. Flags win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use cmcal_core::{CalibratorSpec, ScoreKind, TemperatureGrid};
use serde::{Deserialize, Serialize};

use crate::dataset::FileFormat;
use crate::error::{CliError, CliResult};

pub const CALIBRATOR_NAMES: [&str; 6] = [
    "MassRescale",
    "ConformalTS",
    "NaiveCMCE",
    "TempScaleNLL",
    "PlattOvR",
    "IsotonicOvR",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Predictions file; when absent a synthetic benchmark is generated.
    pub dataset: Option<PathBuf>,
    pub dataset_format: Option<FileFormat>,

    pub synthetic_k: usize,
    pub synthetic_n: usize,
    pub synthetic_sigma: f64,
    pub synthetic_spacing: f64,
    /// Temperature applied to the exact posterior (`< 1` sharpens).
    pub synthetic_t0: f64,
    pub synthetic_noise: f64,
    pub synthetic_seed: u64,

    pub calibrators: Vec<String>,
    pub alphas: Vec<f64>,
    pub score_kinds: Vec<ScoreKind>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,

    pub split_fraction: f64,
    pub num_splits: usize,
    pub seed: u64,
    pub calibration_bins: usize,
    pub cmce_bins: usize,
    pub intervals: Vec<[f64; 2]>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            dataset_format: None,
            synthetic_k: 9,
            synthetic_n: 10_000,
            synthetic_sigma: cmcal_core::synthetic::DEFAULT_SIGMA,
            synthetic_spacing: cmcal_core::synthetic::DEFAULT_SPACING,
            synthetic_t0: 0.5,
            synthetic_noise: 0.0,
            synthetic_seed: 0,
            calibrators: CALIBRATOR_NAMES.iter().map(|s| s.to_string()).collect(),
            alphas: vec![0.1],
            score_kinds: vec![ScoreKind::Msp, ScoreKind::Aps],
            grid_lo: 0.05,
            grid_hi: 20.0,
            grid_points: 200,
            split_fraction: 0.2,
            num_splits: 10,
            seed: 0,
            calibration_bins: cmcal_core::metrics::DEFAULT_CALIBRATION_BINS,
            cmce_bins: cmcal_core::metrics::DEFAULT_CMCE_BINS,
            intervals: vec![[0.9, 0.92], [0.99, 0.995]],
            output_dir: PathBuf::from("cmcal-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.num_splits == 0 {
            return bad("num_splits must be >= 1".into());
        }
        if self.calibration_bins == 0 || self.cmce_bins == 0 {
            return bad("bin counts must be >= 1".into());
        }
        for [a, b] in &self.intervals {
            if !(0.0 <= *a && a <= b && *b <= 1.0) {
                return bad(format!("interval [{a}, {b}] must satisfy 0 <= a <= b <= 1"));
            }
        }
        for a in &self.alphas {
            if !(*a > 0.0 && *a < 1.0) {
                return bad(format!("alpha must lie in (0, 1), got {a}"));
            }
        }
        for name in &self.calibrators {
            if !CALIBRATOR_NAMES.contains(&name.as_str()) {
                return bad(format!(
                    "unknown calibrator {name:?}; expected one of {}",
                    CALIBRATOR_NAMES.join(", ")
                ));
            }
        }
        let conformal = self
            .calibrators
            .iter()
            .any(|c| c == "MassRescale" || c == "ConformalTS");
        if conformal && (self.alphas.is_empty() || self.score_kinds.is_empty()) {
            return bad("conformal calibrators need at least one alpha and one score kind".into());
        }
        self.grid().points()?;
        Ok(())
    }

    pub fn grid(&self) -> TemperatureGrid<f64> {
        TemperatureGrid::LogUniform {
            lo: self.grid_lo,
            hi: self.grid_hi,
            points: self.grid_points,
        }
    }

    /// Calibrator specs in run order; conformal methods expand over
    /// `score_kinds x alphas`.
    pub fn specs(&self) -> Vec<CalibratorSpec<f64>> {
        let mut out = Vec::new();
        for name in &self.calibrators {
            match name.as_str() {
                "MassRescale" | "ConformalTS" => {
                    for &score in &self.score_kinds {
                        for &alpha in &self.alphas {
                            out.push(if name == "MassRescale" {
                                CalibratorSpec::MassRescale { alpha, score }
                            } else {
                                CalibratorSpec::ConformalTs { alpha, score }
                            });
                        }
                    }
                }
                "NaiveCMCE" => out.push(CalibratorSpec::NaiveCmce {
                    grid: self.grid(),
                    bins: self.cmce_bins,
                }),
                "TempScaleNLL" => out.push(CalibratorSpec::TempScaleNll),
                "PlattOvR" => out.push(CalibratorSpec::PlattOvr),
                "IsotonicOvR" => out.push(CalibratorSpec::IsotonicOvr),
                _ => {}
            }
        }
        out
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn parse_score_kind(s: &str) -> Result<ScoreKind, String> {
    s.trim().parse::<ScoreKind>().map_err(|e| e.to_string())
}

fn parse_interval(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = parse_list(s)?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(format!("expected a,b but got {s:?}")),
    }
}

/// `run` flags; every field overrides the config key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<FileFormat>().map_err(|e| e.to_string()))]
    pub dataset_format: Option<FileFormat>,
    #[arg(long)]
    pub synthetic_k: Option<usize>,
    #[arg(long)]
    pub synthetic_n: Option<usize>,
    #[arg(long)]
    pub synthetic_sigma: Option<f64>,
    #[arg(long)]
    pub synthetic_spacing: Option<f64>,
    #[arg(long)]
    pub synthetic_t0: Option<f64>,
    #[arg(long)]
    pub synthetic_noise: Option<f64>,
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
    /// Comma-separated calibrator names.
    #[arg(long, value_delimiter = ',')]
    pub calibrators: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_score_kind)]
    pub score_kinds: Option<Vec<ScoreKind>>,
    #[arg(long)]
    pub grid_lo: Option<f64>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
    #[arg(long)]
    pub num_splits: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub calibration_bins: Option<usize>,
    #[arg(long)]
    pub cmce_bins: Option<usize>,
    /// Repeatable `a,b` coverage interval.
    #[arg(long = "interval", value_parser = parse_interval)]
    pub intervals: Vec<[f64; 2]>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn apply(self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { c.$field = v; })*
            };
        }
        set!(
            synthetic_k,
            synthetic_n,
            synthetic_sigma,
            synthetic_spacing,
            synthetic_t0,
            synthetic_noise,
            synthetic_seed,
            calibrators,
            alphas,
            score_kinds,
            grid_lo,
            grid_hi,
            grid_points,
            split_fraction,
            num_splits,
            seed,
            calibration_bins,
            cmce_bins,
            output_dir
        );
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        if self.dataset_format.is_some() {
            c.dataset_format = self.dataset_format;
        }
        if !self.intervals.is_empty() {
            c.intervals = self.intervals;
        }
    }
}
