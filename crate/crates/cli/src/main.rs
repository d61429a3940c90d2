//! `heatbath`: batch runner for heat-bath, Ehrenfest and Langevin experiments.
//!
//! Option precedence is flag, then `HEATBATH_*` environment variable, then
//! the config file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use heatbath_core::config::{DynamicsKind, OutputFormat};
use heatbath_core::harness::{
    adiabatic_check, convergence_sweep, fdt_check, gibbs_consistency_test, run_ensemble_detailed, FdtOptions,
    ObservableSpec,
};
use heatbath_core::io::{self, Manifest};
use heatbath_core::langevin::{invariant_measure_check, InvariantOptions};
use heatbath_core::rng::{StreamRng, StreamRole};
use heatbath_core::stats::CheckStatus;
use heatbath_core::{Error, ExperimentConfig, LangevinState};

const EXIT_CONFIG: u8 = 1;
const EXIT_MODEL: u8 = 2;
const EXIT_ABORTS: u8 = 3;
const EXIT_FAIL: u8 = 4;
const EXIT_INCONCLUSIVE: u8 = 5;

#[derive(Parser)]
#[command(name = "heatbath", version, about = "Heat-bath, Ehrenfest and Langevin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one ensemble and write results, series, trajectories and a manifest.
    Simulate(Common),
    /// Weak error against the Langevin reference over `run.mass_ratios`.
    Converge(Common),
    /// Statistical consistency checks; exit 0 pass, 4 fail, 5 inconclusive.
    Check {
        #[command(subcommand)]
        kind: CheckKind,
    },
}

#[derive(Subcommand)]
enum CheckKind {
    /// Noise covariance against the memory kernel over Gibbs bath draws.
    Fdt {
        #[command(flatten)]
        common: Common,
        /// Number of equally spaced lags on [0, run.horizon].
        #[arg(long, default_value_t = 11)]
        lags: usize,
    },
    /// Long Langevin run against the Gibbs law of the heavy potential.
    Invariant {
        #[command(flatten)]
        common: Common,
        /// Multiplies the noise variance; values other than 1 are negative controls.
        #[arg(long, default_value_t = 1.0)]
        diffusion_scale: f64,
    },
    /// Heavy law after Zwanzig evolution over Gibbs bath draws.
    GibbsConsistency {
        #[command(flatten)]
        common: Common,
        /// Temperature of the Gibbs law to test against; defaults to run.temperature.
        #[arg(long)]
        target_temperature: Option<f64>,
    },
    /// Orthogonal remainder of a ground-state Ehrenfest run over `run.mass_ratios`.
    Adiabatic {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, env = "HEATBATH_CONFIG")]
    config: PathBuf,
    /// Master seed, replacing `seed` in the config.
    #[arg(long, env = "HEATBATH_SEED")]
    seed: Option<u64>,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[arg(long, env = "HEATBATH_WORKERS")]
    workers: Option<usize>,
    /// Output directory, replacing `outputs.dir`.
    #[arg(long, env = "HEATBATH_OUT")]
    out: Option<PathBuf>,
    /// Result file format.
    #[arg(long, env = "HEATBATH_FORMAT")]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ModelInvalid(_)
            | Error::UnsupportedModel(_)
            | Error::NotPsd { .. }
            | Error::GapViolation { .. }
            | Error::StepSize { .. }
            | Error::DimensionMismatch { .. } => EXIT_MODEL,
            Error::InternalConsistency(_) | Error::QuadratureResolution(_) | Error::Insufficient(_) => EXIT_ABORTS,
            Error::Config { .. } | Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: format!("{e:#}"),
        }
    }
}

type Outcome = Result<u8, Failure>;

struct Loaded {
    config: ExperimentConfig,
    out: PathBuf,
    format: OutputFormat,
    workers: Option<usize>,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.outputs.dir = out.display().to_string();
    }
    if let Some(f) = common.format {
        config.outputs.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    config.validate()?;
    if common.workers == Some(0) {
        return Err(Error::Config {
            path: "--workers".into(),
            message: "must be positive".into(),
        }
        .into());
    }
    let out = PathBuf::from(&config.outputs.dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Loaded {
        format: config.outputs.format,
        workers: common.workers,
        out,
        config,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn finish(ctx: &Loaded, command: &str, ledger: Option<heatbath_core::harness::SeedLedger>, files: Vec<String>) -> Result<(), Failure> {
    let manifest = Manifest::new(&ctx.config, command, ledger, files);
    io::write_json(&ctx.out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn status_code(status: CheckStatus) -> u8 {
    match status {
        CheckStatus::Pass => 0,
        CheckStatus::Fail => EXIT_FAIL,
        CheckStatus::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn simulate(common: &Common) -> Outcome {
    let ctx = load(common)?;
    let cfg = &ctx.config;
    let n = cfg.run.n_samples as u64;
    let (result, trajectories) = run_ensemble_detailed(cfg, 0..n, ctx.workers, cfg.outputs.trajectories)?;
    let mut files = Vec::new();
    match ctx.format {
        OutputFormat::Json => {
            io::write_json(&ctx.out.join("result.json"), &result)?;
            files.push("result.json".to_string());
        }
        OutputFormat::Csv => {
            let mut w = create(&ctx.out.join("result.csv"))?;
            writeln!(w, "observable,horizon,mean,variance,stderr,samples").map_err(Error::from)?;
            for o in &result.observables {
                writeln!(w, "{},{},{},{},{},{}", o.name, o.horizon, o.mean, o.variance, o.stderr, o.samples).map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
            files.push("result.csv".to_string());
        }
    }
    let mut w = create(&ctx.out.join("series.csv"))?;
    io::write_series_csv(&mut w, &result)?;
    w.flush().map_err(Error::from)?;
    files.push("series.csv".to_string());
    for (k, record) in trajectories.iter().enumerate() {
        let name = format!("trajectory_{k:06}.csv");
        let mut w = create(&ctx.out.join(&name))?;
        io::write_trajectory_csv(&mut w, record)?;
        w.flush().map_err(Error::from)?;
        files.push(name);
        if cfg.outputs.binary {
            let name = format!("trajectory_{k:06}.hbtr");
            let mut record = record.clone();
            record.meta.model_hash = Some(io::model_hash(cfg.to_json().as_bytes()));
            let mut w = create(&ctx.out.join(&name))?;
            io::write_trajectory_binary(&mut w, &record)?;
            w.flush().map_err(Error::from)?;
            files.push(name);
        }
    }
    finish(&ctx, "simulate", Some(result.seed_ledger.clone()), files)?;
    for o in &result.observables {
        println!("{}: {:.6e} ± {:.2e} (n = {})", o.name, o.mean, o.stderr, o.samples);
    }
    if result.partial {
        eprintln!(
            "{} of {} samples aborted; first: {}",
            result.aborted.len(),
            result.requested,
            result.aborted.first().map_or("", |a| a.reason.as_str())
        );
        return Ok(EXIT_ABORTS);
    }
    Ok(0)
}

fn converge(common: &Common) -> Outcome {
    let ctx = load(common)?;
    let observable = ctx.config.observables.first().cloned().unwrap_or_else(ObservableSpec::diffusion);
    let report = convergence_sweep(&ctx.config, &observable, ctx.workers)?;
    let mut w = create(&ctx.out.join("convergence.csv"))?;
    writeln!(w, "mass_ratio,error,ci_half_width,stderr,samples,status").map_err(Error::from)?;
    for p in &report.points {
        writeln!(w, "{},{},{},{},{},{:?}", p.mass_ratio, p.error, p.ci_half_width, p.stderr, p.samples, p.status)
            .map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    io::write_json(&ctx.out.join("convergence.json"), &report)?;
    finish(&ctx, "converge", None, vec!["convergence.csv".into(), "convergence.json".into()])?;
    println!("observable {}", observable.name);
    for p in &report.points {
        println!("  M = {:>10.3e}  error {:.4e} ± {:.2e}  {:?}", p.mass_ratio, p.error, p.ci_half_width, p.status);
    }
    match &report.fit {
        Some(f) => println!("slope {:.3} ± {:.3}", f.slope, f.slope_stderr),
        None => println!("slope unavailable"),
    }
    println!("monotone: {}, slope bound: {}, status: {:?}", report.strictly_decreasing, report.slope_bound_met, report.status);
    Ok(status_code(report.status))
}

fn check(kind: &CheckKind) -> Outcome {
    let (name, ctx, status) = match kind {
        CheckKind::Fdt { common, lags } => {
            let ctx = load(common)?;
            let bath = ctx
                .config
                .bath_model()?
                .ok_or_else(|| Error::Config { path: "model.bath".into(), message: "fdt needs a bath".into() })?;
            let spacing = if *lags > 1 { ctx.config.run.horizon / (*lags - 1) as f64 } else { 0.0 };
            let opts = FdtOptions {
                lags: (0..(*lags).max(1)).map(|k| k as f64 * spacing).collect(),
                draws: ctx.config.run.n_samples,
                seed: ctx.config.seed,
                ..Default::default()
            };
            let r = fdt_check(&bath, ctx.config.run.temperature, &opts)?;
            for l in &r.lags {
                println!("lag {:.4}: max deviation {:.2} stderr {:?}", l.lag, l.max_z, l.status);
            }
            io::write_json(&ctx.out.join("fdt.json"), &r)?;
            ("fdt", ctx, r.status)
        }
        CheckKind::Invariant { common, diffusion_scale } => {
            let ctx = load(common)?;
            let cfg = &ctx.config;
            if cfg.dynamics != DynamicsKind::Langevin {
                return Err(Error::Config { path: "dynamics".into(), message: "invariant check needs langevin dynamics".into() }.into());
            }
            let friction = cfg.friction_model()?.with_diffusion_scale(*diffusion_scale);
            let n = cfg.n_steps() as u64;
            let mut rng = StreamRng::for_sample(cfg.seed, 0, StreamRole::Wiener);
            let options = InvariantOptions { batches: cfg.run.batches, ..Default::default() };
            let r = invariant_measure_check(
                &cfg.heavy_model()?,
                &friction,
                &LangevinState::new(cfg.x0(), cfg.p0()),
                cfg.run.h,
                n,
                n / 10,
                &mut rng,
                options,
            )?;
            for m in &r.moments {
                if let Some(e) = &m.estimate {
                    println!(
                        "{:?}{} order {}: {:.5} ± {:.5} (expected {:.5}) {:?}",
                        m.variable, m.coordinate, m.order, e.mean, e.stderr, m.expected, m.status
                    );
                }
            }
            io::write_json(&ctx.out.join("invariant.json"), &r)?;
            let status = r.status;
            ("invariant", ctx, status)
        }
        CheckKind::GibbsConsistency { common, target_temperature } => {
            let ctx = load(common)?;
            let target = target_temperature.unwrap_or(ctx.config.run.temperature);
            let r = gibbs_consistency_test(&ctx.config, target, ctx.workers)?;
            for m in &r.invariant.moments {
                if let Some(e) = &m.estimate {
                    println!(
                        "{:?}{} order {}: {:.5} ± {:.5} (expected {:.5}) {:?}",
                        m.variable, m.coordinate, m.order, e.mean, e.stderr, m.expected, m.status
                    );
                }
            }
            io::write_json(&ctx.out.join("gibbs_consistency.json"), &r)?;
            ("gibbs-consistency", ctx, r.status)
        }
        CheckKind::Adiabatic { common } => {
            let ctx = load(common)?;
            let cfg = &ctx.config;
            let model = cfg
                .electron_model()?
                .ok_or_else(|| Error::Config { path: "model.electrons".into(), message: "adiabatic check needs electrons".into() })?;
            let r = adiabatic_check(&model, &cfg.x0(), &cfg.p0(), &cfg.sweep()?, cfg.run.horizon, cfg.run.h)?;
            for p in &r.points {
                println!("M = {:>10.3e}  max remainder {:.4e}  (h = {:.2e})", p.mass_ratio, p.max_remainder, p.h);
            }
            io::write_json(&ctx.out.join("adiabatic.json"), &r)?;
            ("adiabatic", ctx, r.status)
        }
    };
    finish(&ctx, &format!("check {name}"), None, vec![format!("{}.json", name.replace('-', "_"))])?;
    println!("{name}: {status:?}");
    Ok(status_code(status))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Converge(c) => converge(c),
        Command::Check { kind } => check(kind),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
