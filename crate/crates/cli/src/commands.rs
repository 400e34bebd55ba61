use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cmcal_core::synthetic::{make_grid, miscalibrate_all, sample_with_seed};
use cmcal_core::metrics::cmce;
use cmcal_core::{full_report, BinSpec};

use crate::config::{ConfigOverrides, ExperimentConfig};
use crate::dataset::{load_dataset, write_dataset, FileFormat, ValueKind};
use crate::error::{CliError, CliResult};
use crate::experiment::{report_config, run_experiment};
use crate::report::{emit_report, write_curve_csv};

#[derive(Debug, Parser)]
#[command(name = "cmcal", version, about = "Cumulative-mass calibration toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Gaussian-grid dataset.
    Synth(SynthArgs),
    /// Run an experiment and write its report files.
    Run(Box<RunArgs>),
    /// Print every metric of a predictions file as JSON.
    Metrics(MetricsArgs),
    /// Print the cumulative-mass calibration curve of a predictions file.
    Curves(CurvesArgs),
}

fn parse_format(s: &str) -> Result<FileFormat, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((
            a.parse().map_err(|e| format!("{a:?}: {e}"))?,
            b.parse().map_err(|e| format!("{b:?}: {e}"))?,
        )),
        _ => Err(format!("expected a,b but got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = cmcal_core::synthetic::DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value_t = cmcal_core::synthetic::DEFAULT_SPACING)]
    pub spacing: f64,
    /// Temperature applied to the exact posterior; 1 keeps it calibrated.
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<FileFormat>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also write the exact posterior rows here.
    #[arg(long)]
    pub truth_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub input: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<FileFormat>,
    #[arg(long, default_value_t = cmcal_core::metrics::DEFAULT_CALIBRATION_BINS)]
    pub calibration_bins: usize,
    #[arg(long, default_value_t = cmcal_core::metrics::DEFAULT_CMCE_BINS)]
    pub cmce_bins: usize,
    #[arg(long = "interval", value_parser = parse_interval)]
    pub intervals: Vec<(f64, f64)>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    pub input: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<FileFormat>,
    #[arg(long, default_value_t = cmcal_core::metrics::DEFAULT_CMCE_BINS)]
    pub cmce_bins: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(*a),
        Command::Metrics(a) => metrics(a),
        Command::Curves(a) => curves(a),
    }
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mix = make_grid(a.k, a.spacing, a.sigma, a.seed)?;
    let s = sample_with_seed(&mix, a.n, a.seed)?;
    let probs = miscalibrate_all(&s.truth, a.t0, a.noise, a.seed)?;
    let rows = |v: &[cmcal_core::ProbVector<f64>]| v.iter().map(|p| p.as_slice().to_vec()).collect::<Vec<_>>();
    let format = a.format.unwrap_or_else(|| FileFormat::from_path(&a.output));
    write_dataset(&a.output, format, ValueKind::Probs, &rows(&probs), &s.labels)?;
    if let Some(path) = &a.truth_output {
        let format = a.format.unwrap_or_else(|| FileFormat::from_path(path));
        write_dataset(path, format, ValueKind::Probs, &rows(&s.truth), &s.labels)?;
    }
    Ok(())
}

/// Reads the optional config file and applies the flags on top.
pub fn resolve_config(config: Option<&Path>, overrides: ConfigOverrides) -> CliResult<ExperimentConfig> {
    let mut c = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut c);
    c.validate()?;
    Ok(c)
}

/// The config as echoed in `report.json`: everything except where the
/// report is written, so reruns into different directories compare equal.
pub fn config_echo(config: &ExperimentConfig) -> CliResult<serde_json::Value> {
    let mut v = serde_json::to_value(config)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(v)
}

fn run(a: RunArgs) -> CliResult<()> {
    let config = resolve_config(a.config.as_deref(), a.overrides)?;
    let rows = run_experiment(&config)?;
    let files = emit_report(&config_echo(&config)?, &rows, &config.output_dir)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} rows ({failed} failed) -> {}",
        rows.len(),
        files.json.display()
    );
    Ok(())
}

fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = std::io::BufWriter::new(file);
            body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w).map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn metrics(a: MetricsArgs) -> CliResult<()> {
    let data = load_dataset(&a.input, a.format)?;
    let cfg = ExperimentConfig {
        calibration_bins: a.calibration_bins,
        cmce_bins: a.cmce_bins,
        intervals: if a.intervals.is_empty() {
            ExperimentConfig::default().intervals
        } else {
            a.intervals.iter().map(|&(x, y)| [x, y]).collect()
        },
        ..Default::default()
    };
    cfg.validate()?;
    let report = full_report(&data.to_batch()?, &report_config(&cfg)?)?;
    let text = serde_json::to_string_pretty(&report)?;
    with_output(a.output.as_deref(), |w| writeln!(w, "{text}"))
}

fn curves(a: CurvesArgs) -> CliResult<()> {
    let data = load_dataset(&a.input, a.format)?;
    let bins = BinSpec::uniform(a.cmce_bins)?;
    let (_, curve) = cmce(&data.to_batch()?, &bins);
    with_output(a.output.as_deref(), |w| write_curve_csv(w, &curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_parse_into_overrides() {
        let cli = Cli::try_parse_from([
            "cmcal",
            "run",
            "--num-splits",
            "3",
            "--alphas",
            "0.1,0.05",
            "--score-kinds",
            "APS",
            "--interval",
            "0.8,0.9",
            "--calibrators",
            "MassRescale,PlattOvR",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        let c = resolve_config(None, a.overrides).unwrap();
        assert_eq!(c.num_splits, 3);
        assert_eq!(c.alphas, [0.1, 0.05]);
        assert_eq!(c.intervals, [[0.8, 0.9]]);
        assert_eq!(c.calibrators, ["MassRescale", "PlattOvR"]);
    }
}
