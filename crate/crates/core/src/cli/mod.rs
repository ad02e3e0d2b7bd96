//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 missing or
//! invalid config, 4 theory dimension cap exceeded, 5 too many diverged runs.

mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, LearningCurves};
use crate::scenarios::{resolve_noise_variance, PlantSpec};
use crate::theory;

pub use output::{curve_sets, write_curves, write_sidecar, CurveSet, Sidecar};

#[derive(Debug, Parser)]
#[command(
    name = "recf",
    version,
    about = "Random Euler complex-valued adaptive filter experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// System identification learning curves.
    Identify(CommonArgs),
    /// Channel equalization curves and symbol error rates.
    Equalize(CommonArgs),
    /// Predicted against simulated transient curves.
    Theory(CommonArgs),
    /// Steady-state MSE over a step-size grid.
    Sweep(CommonArgs),
    /// Per-filter update timing.
    Bench(CommonArgs),
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// Experiment config (JSON), or a result sidecar to replay.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Config(PathBuf, Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Reads a config and applies the command-line overrides.
pub fn load_config(
    path: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(r) = runs {
        cfg.run.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let (Command::Identify(args)
    | Command::Equalize(args)
    | Command::Theory(args)
    | Command::Sweep(args)
    | Command::Bench(args)) = &cli.command;
    match dispatch(&cli.command, args) {
        Ok(()) => 0,
        Err(Failure::Config(path, e)) => {
            eprintln!("error: config {}: {e}", path.display());
            3
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::ResourceCap { .. } => 4,
                Error::DivergenceLimit { .. } => 5,
                Error::Config(_) => 3,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: &Command, args: &CommonArgs) -> std::result::Result<(), Failure> {
    let cfg = load_config(&args.config, args.seed, args.runs)
        .map_err(|e| Failure::Config(args.config.clone(), e))?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let log = |msg: String| {
        if !args.quiet {
            eprintln!("{msg}");
        }
    };
    match command {
        Command::Identify(_) => identify(&cfg, &args.out, &log)?,
        Command::Equalize(_) => equalize(&cfg, &args.out, &log)?,
        Command::Theory(_) => theory_cmd(&cfg, &args.out, &log)?,
        Command::Sweep(_) => sweep(&cfg, &args.out, &log)?,
        Command::Bench(_) => bench(&cfg, &args.out, &log)?,
    }
    Ok(())
}

fn summarize(curves: &LearningCurves, log: &dyn Fn(String)) {
    for (f, ss) in curves.filters.iter().zip(curves.steady_mse()) {
        let mut line = format!("{:>12}  steady MSE {:8.3} dB", f.label, harness::to_db(ss));
        if !f.diverged.is_empty() {
            line.push_str(&format!("  ({} diverged runs excluded)", f.diverged.len()));
        }
        log(line);
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    out: &Path,
    stem: &str,
    log: &dyn Fn(String),
) -> Result<LearningCurves> {
    log(format!(
        "running {} runs x {} samples, {} filters",
        cfg.run.runs,
        cfg.run.samples,
        cfg.filters.len()
    ));
    let curves = harness::run_experiment(cfg)?;
    let csv = out.join(format!("{stem}.csv"));
    write_curves(&curve_sets(&curves), &csv)?;
    write_sidecar(&Sidecar::new(cfg, &curves), &csv)?;
    summarize(&curves, log);
    log(format!("wrote {}", csv.display()));
    Ok(curves)
}

fn identify(cfg: &ExperimentConfig, out: &Path, log: &dyn Fn(String)) -> Result<()> {
    let curves = simulate(cfg, out, "curves", log)?;
    curves.check_divergence()
}

fn equalize(cfg: &ExperimentConfig, out: &Path, log: &dyn Fn(String)) -> Result<()> {
    if !cfg.scenario.is_equalization() {
        return Err(Error::Config("equalize needs the eq_channel plant".into()));
    }
    let curves = simulate(cfg, out, "curves", log)?;
    curves.check_divergence()?;
    let reports = harness::evaluate_equalizers(cfg, &curves.trained)?;
    let mut json = Vec::new();
    let mut eye = String::from("filter,re,im\n");
    for r in &reports {
        log(format!(
            "{:>12}  SER {:.5}  max spread {:.4}  min centroid distance {:.4}",
            r.label,
            r.ser,
            r.clusters.max_spread(),
            r.clusters.min_centroid_distance
        ));
        json.push(serde_json::json!({
            "filter": r.label,
            "ser": r.ser,
            "max_spread": r.clusters.max_spread(),
            "min_centroid_distance": r.clusters.min_centroid_distance,
            "separable": r.clusters.is_separable(),
        }));
        for y in &r.eye {
            eye.push_str(&format!("{},{},{}\n", r.label, y.re, y.im));
        }
    }
    output::write_text(
        &out.join("ser.json"),
        &serde_json::to_string_pretty(&json).expect("json"),
    )?;
    output::write_text(&out.join("eye.csv"), &eye)
}

fn moments_for(cfg: &ExperimentConfig, log: &dyn Fn(String)) -> Result<theory::Moments> {
    let PlantSpec::RandomWalk { d, augmented, .. } = cfg.scenario.plant else {
        return Err(Error::Config("theory needs a random_walk plant".into()));
    };
    let dim = if augmented { 2 * d } else { d };
    let spec = cfg.theory.clone().unwrap_or_default();
    log(format!(
        "moment matrices for L = {dim}: about {:.1} MiB",
        theory::moment_memory_bytes(dim) as f64 / (1 << 20) as f64
    ));
    theory::check_dimension(dim, spec.max_dim)?;
    harness::plant_moments(cfg)
}

fn theory_cmd(cfg: &ExperimentConfig, out: &Path, log: &dyn Fn(String)) -> Result<()> {
    let mom = moments_for(cfg, log)?;
    let sigma_v2 = resolve_noise_variance(&cfg.scenario.noise, &[])?;
    let PlantSpec::RandomWalk { sigma_q2, .. } = cfg.scenario.plant else {
        unreachable!()
    };
    let predictions = harness::predict_filters(cfg, &mom)?;
    let curves = harness::run_experiment(cfg)?;
    let mut sets = Vec::new();
    for p in &predictions {
        let pred = &p.prediction;
        if !pred.is_stable() {
            log(format!(
                "warning: {} has spectral radius {} ≥ 1; the predicted curves diverge",
                p.label, pred.spectral_radius
            ));
        }
        sets.push(CurveSet {
            label: format!("{}/theory", p.label),
            mse_db: pred.mse_db(),
            emse_db: pred
                .mse
                .iter()
                .map(|v| harness::to_db(v - sigma_v2))
                .collect(),
            msd_db: Some(pred.msd_db()),
        });
    }
    sets.extend(curve_sets(&curves));
    let csv = out.join("theory.csv");
    write_curves(&sets, &csv)?;
    write_sidecar(&Sidecar::new(cfg, &curves), &csv)?;
    let mut report = serde_json::json!({
        "dim": mom.dim(),
        "moment_samples": mom.n_samples(),
        "mean_step_bound": theory::mean_step_bound(&mom)?,
        "sigma_v2": sigma_v2,
        "sigma_q2": sigma_q2,
    });
    if sigma_q2 > 0.0 && sigma_v2 > 0.0 {
        let opt = theory::optimal_step_size(&mom, sigma_v2, sigma_q2)?;
        report["mu_opt"] = opt.mu_opt.into();
        report["mse_min"] = opt.mse_min.into();
        log(format!(
            "mu_opt {:.6}  MSE_min {:.4} dB",
            opt.mu_opt,
            harness::to_db(opt.mse_min)
        ));
    }
    let mut filters = Vec::new();
    for p in &predictions {
        let pred = &p.prediction;
        let sim = &curves.filters[p.index];
        let ss = pred.steady;
        log(format!(
            "{:>12}  mu {}  radius {:.6}  steady MSE theory {} dB, simulated tail {:.3} dB",
            p.label,
            pred.params.mu,
            pred.spectral_radius,
            ss.map(|s| format!("{:.3}", harness::to_db(s.mse)))
                .unwrap_or_else(|| "n/a".into()),
            harness::to_db(harness::FilterCurves::tail_mean(
                &sim.mse,
                cfg.run.tail_fraction
            )),
        ));
        filters.push(serde_json::json!({
            "filter": p.label,
            "mu": pred.params.mu,
            "spectral_radius": pred.spectral_radius,
            "steady_mse": ss.map(|s| s.mse),
            "steady_msd": ss.map(|s| s.msd),
            "condition": ss.map(|s| s.condition),
        }));
    }
    report["filters"] = filters.into();
    output::write_text(
        &out.join("theory_report.json"),
        &serde_json::to_string_pretty(&report).expect("json"),
    )?;
    log(format!("wrote {}", csv.display()));
    curves.check_divergence()
}

fn sweep(cfg: &ExperimentConfig, out: &Path, log: &dyn Fn(String)) -> Result<()> {
    let grid_cfg = cfg.expand_sweep()?;
    let mom = match cfg.theory {
        Some(_) => Some(moments_for(cfg, log)?),
        None => None,
    };
    if let (Some(mom), PlantSpec::RandomWalk { sigma_q2, .. }) = (&mom, cfg.scenario.plant) {
        let sigma_v2 = resolve_noise_variance(&cfg.scenario.noise, &[])?;
        if sigma_q2 > 0.0 && sigma_v2 > 0.0 {
            let opt = theory::optimal_step_size(mom, sigma_v2, sigma_q2)?;
            log(format!(
                "mu_opt {:.6}  MSE_min {:.4} dB",
                opt.mu_opt,
                harness::to_db(opt.mse_min)
            ));
        }
    }
    log(format!("sweeping {} step-sizes", grid_cfg.filters.len()));
    let curves = harness::run_experiment(&grid_cfg)?;
    let sigma_v2 = resolve_noise_variance(&cfg.scenario.noise, &[]).ok();
    let sigma_q2 = match cfg.scenario.plant {
        PlantSpec::RandomWalk { sigma_q2, .. } => sigma_q2,
        _ => 0.0,
    };
    let mut text = String::from("mu,filter,simulated_mse_db,predicted_mse_db\n");
    for (f, ss) in curves.filters.iter().zip(curves.steady_mse()) {
        let predicted = match (&mom, sigma_v2) {
            (Some(mom), Some(sv2)) => theory::steady_state(mom, f.mu, sv2, sigma_q2)
                .map(|s| harness::to_db(s.mse).to_string())
                .unwrap_or_default(),
            _ => String::new(),
        };
        text.push_str(&format!(
            "{},{},{},{}\n",
            f.mu,
            f.label,
            harness::to_db(ss),
            predicted
        ));
    }
    let csv = out.join("sweep.csv");
    output::write_text(&csv, &text)?;
    write_sidecar(&Sidecar::new(cfg, &curves), &csv)?;
    let best = curves
        .filters
        .iter()
        .zip(curves.steady_mse())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, v)| (f.mu, v));
    if let Some((mu, v)) = best {
        log(format!(
            "lowest simulated steady MSE {:.4} dB at mu {mu}",
            harness::to_db(v)
        ));
    }
    log(format!("wrote {}", csv.display()));
    curves.check_divergence()
}

fn bench(cfg: &ExperimentConfig, out: &Path, log: &dyn Fn(String)) -> Result<()> {
    let report = harness::timing_benchmark(cfg, cfg.run.samples)?;
    let mut text = String::from("filter,kind,total_secs,mean_update_secs,growth_exponent\n");
    for e in &report.entries {
        let g = e.growth_exponent.map(|g| g.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            e.label, e.kind, e.total_secs, e.mean_update_secs, g
        ));
        log(format!(
            "{:>12}  total {:.4} s  per update {:.3e} s  growth {}",
            e.label,
            e.total_secs,
            e.mean_update_secs,
            e.growth_exponent
                .map(|g| format!("{g:.3}"))
                .unwrap_or_else(|| "n/a".into())
        ));
    }
    let csv = out.join("bench.csv");
    output::write_text(&csv, &text)?;
    log(format!("wrote {}", csv.display()));
    Ok(())
}
