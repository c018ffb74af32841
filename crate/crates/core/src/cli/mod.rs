//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
//! 4 calibration or analysis failure.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{ConfigError, RunConfig};

use crate::airflow::{perception_errors, AirflowError, PERCEPTION_SEED};
use crate::geometry::{self, MarkerSpec};
use crate::pipeline::percentile;
use crate::sim::{
    analyze_pairs, below_had_mean, calibrate, run_trial, CalibrationOptions, CalibrationTargets, Condition, SimError,
};
use crate::wire::{self, Manifest, ManifestEntry, WireError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FAILURE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "airbarrier", version, about = "Airflow safety barrier: simulation, calibration and analysis")]
pub struct Cli {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. --set safety.had_m=0.40 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    V,
    Va,
    Both,
}

impl ConditionArg {
    fn conditions(self) -> Vec<Condition> {
        match self {
            ConditionArg::V => vec![Condition::V],
            ConditionArg::Va => vec![Condition::VA],
            ConditionArg::Both => Condition::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run seeded trials and write one JSON-lines trace per trial.
    Simulate {
        #[arg(long, value_enum, default_value = "both")]
        condition: ConditionArg,
        #[arg(long, default_value_t = 10)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trial length in seconds; defaults to sim.duration_s.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Compare below-HAD distances across matched V/VA traces.
    Analyze {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
    },
    /// Monte-Carlo perceived-distance error at a reference distance.
    Perceive {
        #[arg(long)]
        distance: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = PERCEPTION_SEED)]
        seed: u64,
    },
    /// Fit perception and hand-model parameters to target statistics.
    Calibrate {
        #[arg(long, value_name = "PATH")]
        targets: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        budget: usize,
        #[arg(long, default_value_t = 40)]
        seeds: u64,
        #[arg(long, default_value_t = 1001)]
        first_seed: u64,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Pose estimation round-trip statistics on random visible poses.
    Posecheck {
        #[arg(long, default_value_t = 1000)]
        poses: usize,
        #[arg(long = "noise-px", default_value_t = 0.0)]
        noise_px: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Tag side length; defaults to sim.marker_side_m.
        #[arg(long)]
        marker_side: Option<f64>,
    },
    /// Exhaustive encode/decode sweep over every valid command frame.
    CodecCheck,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    fn failure(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILURE, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(m) => CliError::io(m),
            ConfigError::Invalid(m) => CliError::usage(format!("config error: {m}")),
        }
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io { .. } => CliError::io(e.to_string()),
            other => CliError::failure(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::CalibrationFailed { .. } => CliError::failure(e.to_string()),
            other => CliError::usage(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Simulate { condition, trials, seed, duration, out } => {
            simulate(&cfg, *condition, *trials, *seed, *duration, out)
        }
        Command::Analyze { input, report } => analyze(&cfg, input, report),
        Command::Perceive { distance, samples, seed } => perceive(&cfg, *distance, *samples, *seed),
        Command::Calibrate { targets, budget, seeds, first_seed, out } => {
            calibrate_cmd(&cfg, targets.as_deref(), *budget, *seeds, *first_seed, out)
        }
        Command::Posecheck { poses, noise_px, seed, marker_side } => {
            posecheck(&cfg, *poses, *noise_px, *seed, *marker_side)
        }
        Command::CodecCheck => codec_check(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::failure(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn simulate(
    cfg: &RunConfig,
    condition: ConditionArg,
    trials: u64,
    seed: u64,
    duration: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let duration_s = duration.unwrap_or(cfg.sim.duration_s);
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(CliError::usage("--duration must be positive"));
    }
    let last_seed = seed.checked_add(trials - 1).ok_or_else(|| CliError::usage("seed range overflows"))?;
    let world = cfg.world().map_err(CliError::usage)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;

    let mut entries = Vec::new();
    for s in seed..=last_seed {
        for cond in condition.conditions() {
            let trace = run_trial(cond, &world, duration_s, s)?;
            let path = wire::write_trace(out, &trace)?;
            entries.push(ManifestEntry {
                file: path.file_name().expect("trace file name").to_string_lossy().into_owned(),
                cond,
                seed: s,
                samples: trace.samples.len(),
            });
        }
    }
    let n = entries.len();
    Manifest { config_hash: cfg.hash(), duration_s, trials: entries }.write(out)?;
    println!("wrote {n} traces and {} to {}", wire::MANIFEST_FILE, out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    had_m: f64,
    #[serde(flatten)]
    trials: crate::sim::TrialReport,
    excluded_seeds: Vec<u64>,
}

fn analyze(cfg: &RunConfig, input: &Path, report_path: &Path) -> Result<(), CliError> {
    let dir = fs::read_dir(input).map_err(|e| CliError::io(format!("cannot read {}: {e}", input.display())))?;
    let mut by_seed: BTreeMap<u64, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut excluded = Vec::new();
    let zones = cfg.zones();
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in dir {
        let path = entry.map_err(|e| CliError::io(e.to_string()))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("trial_") && name.ends_with(".jsonl") {
            files.push(path);
        }
    }
    files.sort();
    for path in files {
        let trace = wire::read_trace(&path)?;
        let slot = by_seed.entry(trace.seed).or_default();
        let mean = match below_had_mean(&trace, &zones) {
            Ok(m) => Some(m),
            Err(SimError::NoExposure) => {
                excluded.push(trace.seed);
                None
            }
            Err(e) => return Err(e.into()),
        };
        match trace.condition {
            Condition::V => slot.0 = mean,
            Condition::VA => slot.1 = mean,
        }
    }
    let pairs: Vec<(u64, f64, f64)> =
        by_seed.iter().filter(|(s, _)| !excluded.contains(s)).filter_map(|(&s, &(v, va))| Some((s, v?, va?))).collect();
    if pairs.len() < 2 {
        return Err(CliError::usage(format!(
            "need at least 2 matched V/VA trial pairs with exposure in {}, found {}",
            input.display(),
            pairs.len()
        )));
    }
    excluded.sort_unstable();
    excluded.dedup();
    let trials = analyze_pairs(&pairs).map_err(|e| CliError::failure(format!("analysis failed: {e}")))?;
    for w in &trials.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "n={} V {:.4} m, VA {:.4} m, T = {}, p = {}",
        trials.n_trials,
        trials.v.mean_m,
        trials.va.mean_m,
        trials.paired_t.map_or("n/a".into(), |t| format!("{t:.3}")),
        trials.paired_p.map_or("n/a".into(), |p| format!("{p:.3e}")),
    );
    write_json(report_path, &AnalysisReport { had_m: zones.had, trials, excluded_seeds: excluded })
}

fn perceive(cfg: &RunConfig, distance: f64, samples: usize, seed: u64) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::usage("--samples must be at least 1"));
    }
    let s = perception_errors(&cfg.perception(), &cfg.jet(), cfg.perception.duty_pct, distance, samples, seed)
        .map_err(|e| match e {
            AirflowError::CalibrationBracket(_) => CliError::failure(e.to_string()),
            other => CliError::usage(other.to_string()),
        })?;
    println!(
        "reference {:.3} m: mean |error| {:.4} ± {:.4} m, mean signed error {:+.4} m (n={})",
        s.reference_m, s.mean_abs_error_m, s.sd_abs_error_m, s.mean_signed_error_m, s.samples
    );
    Ok(())
}

fn calibrate_cmd(
    cfg: &RunConfig,
    targets: Option<&Path>,
    budget: usize,
    seeds: u64,
    first_seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let targets: CalibrationTargets = match targets {
        None => CalibrationTargets::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("bad targets file: {e}")))?
        }
    };
    let world = cfg.world().map_err(CliError::usage)?;
    let opts = CalibrationOptions {
        budget,
        seeds,
        first_seed,
        duration_s: cfg.sim.duration_s,
        perception_duty_pct: cfg.perception.duty_pct,
        ..CalibrationOptions::default()
    };
    let report = calibrate(&targets, &world, &opts)?;
    println!(
        "weber {:.6}; V {:.4} m (residual {:+.4}), VA {:.4} m (residual {:+.4}) after {} evaluations",
        report.weber,
        report.v_mean_m,
        report.residuals.v_mean_m,
        report.va_mean_m,
        report.residuals.va_mean_m,
        report.evaluations
    );
    write_json(out, &report)
}

#[derive(Debug, Serialize)]
struct PoseCheckSummary {
    poses: usize,
    noise_px: f64,
    marker_side_m: f64,
    max_rotation_err_rad: f64,
    median_rotation_err_rad: f64,
    max_translation_err_m: f64,
    median_translation_err_m: f64,
    failures: usize,
}

fn posecheck(
    cfg: &RunConfig,
    poses: usize,
    noise_px: f64,
    seed: u64,
    marker_side: Option<f64>,
) -> Result<(), CliError> {
    if poses == 0 {
        return Err(CliError::usage("--poses must be at least 1"));
    }
    if !(noise_px >= 0.0 && noise_px.is_finite()) {
        return Err(CliError::usage("--noise-px must be non-negative"));
    }
    let spec =
        MarkerSpec::new(marker_side.unwrap_or(cfg.sim.marker_side_m), 0).map_err(|e| CliError::usage(e.to_string()))?;
    let k = cfg.camera();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rot, mut trans, mut failures) = (Vec::new(), Vec::new(), 0);
    for _ in 0..poses {
        let truth = geometry::sample_visible_pose(&mut rng, 0.3..2.0, 1.0, &spec, &k);
        let est = geometry::observe(&truth, &spec, &k, noise_px, 0.0, &mut rng)
            .and_then(|obs| geometry::estimate_pose(&obs, &spec, &k));
        match est {
            Ok(p) => {
                rot.push(p.rotation_error(&truth));
                trans.push(p.translation_error(&truth));
            }
            Err(_) => failures += 1,
        }
    }
    rot.sort_by(f64::total_cmp);
    trans.sort_by(f64::total_cmp);
    let stat = |v: &[f64], p: f64| if v.is_empty() { f64::NAN } else { percentile(v, p) };
    let summary = PoseCheckSummary {
        poses,
        noise_px,
        marker_side_m: spec.side_len,
        max_rotation_err_rad: stat(&rot, 100.0),
        median_rotation_err_rad: stat(&rot, 50.0),
        max_translation_err_m: stat(&trans, 100.0),
        median_translation_err_m: stat(&trans, 50.0),
        failures,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if failures > 0 {
        return Err(CliError::failure(format!("{failures} of {poses} poses could not be estimated")));
    }
    if noise_px == 0.0 && (summary.max_rotation_err_rad > 1e-6 || summary.max_translation_err_m > 1e-6) {
        return Err(CliError::failure("noiseless round trip exceeded 1e-6"));
    }
    Ok(())
}

fn codec_check() -> Result<(), CliError> {
    let n = wire::exhaustive_round_trip()?;
    println!("{} frames OK", group_thousands(n));
    Ok(())
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_grouping() {
        assert_eq!(group_thousands(51_968), "51,968");
        assert_eq!(group_thousands(7), "7");
        assert_eq!(group_thousands(1_000_000), "1,000,000");
    }

    #[test]
    fn parses_global_overrides_after_subcommand() {
        let cli = Cli::try_parse_from(["airbarrier", "codec-check", "--set", "safety.had_m=0.4"]).unwrap();
        assert_eq!(cli.overrides, vec!["safety.had_m=0.4".to_owned()]);
    }

    #[test]
    fn bad_flags_exit_with_usage_code() {
        assert_eq!(run(["airbarrier", "simulate", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["airbarrier", "--help"]), EXIT_OK);
    }
}
