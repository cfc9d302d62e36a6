//! Front end for `resetlab`: config loading, job dispatch, CSV and manifest
//! output.
//!
//! Exit status is `0` on success, `1` for usage, config or I/O errors and
//! `2` when a check fails (`oracle-check`, or `verify` on tampered output).
//! Diagnostics go to stderr; stdout carries a single summary line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use resetlab::config::{parse_config, parse_experiment, ConfigError, InitialData};
use resetlab::experiments::{fit_loglog, run_experiment, ExperimentError, ExperimentId};
use resetlab::noise::{mix_seed, NoiseDriver, StreamChecksum};
use resetlab::output::{verify_manifest, Manifest, OutputDir, OutputError, Table, VerifyIssue};
use resetlab::particle::{run_with, ParticleError, Recording};
use resetlab::reference::spde::block_increments;
use resetlab::reference::{burgers_solve, ito_euler_path, spde_v_shift_oracle, ColeHopf, ReferenceError};
use resetlab::PeriodicGrid;

#[derive(Debug, Parser)]
#[command(name = "resetlab", version, about = "Particle approximation of viscous Burgers with resetting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config document; omitted means all defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `results/<job>`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism. Results do not
    /// depend on it.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    /// Replace an existing manifest.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One particle-system run: per-step diagnostics and the final velocity.
    Run,
    /// A Monte Carlo experiment by id.
    Experiment {
        /// rate_dt, rate_n, shock_census, survival, energy_law or spectral_decay
        id: String,
    },
    /// Spectral solver against Cole-Hopf, and the literal Itô scheme against
    /// the shift representation of the SPDE.
    OracleCheck,
    /// Re-hash the files listed in an output manifest.
    Verify,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
}

/// What a finished job reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub line: String,
    pub checks_failed: bool,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{}", e.render());
            return EXIT_INVALID;
        }
    };
    match dispatch(&cli) {
        Ok(o) => {
            println!("{}", o.line);
            if o.checks_failed {
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn read_config(cli: &Cli) -> Result<String, CliError> {
    match &cli.config {
        None => Ok(String::new()),
        Some(p) => fs::read_to_string(p).map_err(|source| CliError::ReadConfig {
            path: p.clone(),
            source,
        }),
    }
}

fn out_dir(cli: &Cli, job: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| Path::new("results").join(job))
}

pub fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a pool already installed by an earlier call in this process is kept
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("note: {e}");
        }
    }
    match &cli.command {
        Command::Run => run_job(cli),
        Command::Experiment { id } => experiment_job(cli, id),
        Command::OracleCheck => oracle_job(cli),
        Command::Verify => verify_job(cli),
    }
}

fn run_job(cli: &Cli) -> Result<Outcome, CliError> {
    let text = read_config(cli)?;
    let mut config = parse_config(&text)?.run;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let root = out_dir(cli, "run");
    let mut out = OutputDir::create(&root, cli.force)?;
    let start = Instant::now();
    let report = run_with(&config, &config.driver(), Recording::EveryStep)?;
    out.write("series.csv", report.series_csv().as_bytes())?;
    let mut u = Table::new("final_u", &["x", "value"]);
    for (x, v) in config.grid().points().zip(report.final_u.values()) {
        u.push(vec![x.into(), (*v).into()]);
    }
    out.write_table(&u)?;
    let (status, t) = if report.stop.is_shock() {
        ("shock", report.stop.time())
    } else {
        ("completed", report.stop.time())
    };
    let mut manifest = Manifest::new("run", config.seed, serde_json::to_value(&config).expect("config serializes"));
    manifest.summary = json!({
        "stop": status,
        "t_stop": t,
        "epochs": report.epochs,
        "noise_checksum": format!("{:016x}", report.noise_checksum),
    });
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    out.finish(manifest)?;
    Ok(Outcome {
        line: format!("run: {status} at t = {t} after {} epochs; outputs in {}", report.epochs, root.display()),
        checks_failed: false,
    })
}

fn experiment_job(cli: &Cli, id: &str) -> Result<Outcome, CliError> {
    let id: ExperimentId = id.parse().map_err(CliError::Usage)?;
    let text = read_config(cli)?;
    let mut spec = parse_experiment(&text, id)?;
    if let Some(s) = cli.seed {
        spec.base.seed = s;
    }
    let root = out_dir(cli, id.name());
    let mut out = OutputDir::create(&root, cli.force)?;
    let start = Instant::now();
    let result = run_experiment(&spec)?;
    for t in &result.tables {
        out.write_table(t)?;
    }
    let n = result.tables.len();
    let mut manifest = Manifest::new(
        &format!("experiment:{id}"),
        spec.base.seed,
        serde_json::to_value(&spec).expect("spec serializes"),
    );
    manifest.summary = result.summary;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    out.finish(manifest)?;
    Ok(Outcome {
        line: format!("experiment {id}: wrote {n} tables to {}", root.display()),
        checks_failed: false,
    })
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `burgers_solve(sin 2 pi x, nu = 1/2, m = 256, dt = 1e-4, T = 0.5)` against
/// the Cole–Hopf solution in the max norm.
pub fn cole_hopf_check() -> Result<Check, CliError> {
    let grid = PeriodicGrid::new(256).expect("valid grid");
    let u0 = InitialData::Sin(1.0).sample(grid).expect("finite data");
    let tr = burgers_solve(&u0, 0.5, 0.5, 1e-4, &[])?;
    let exact = ColeHopf::new(&u0, 0.5)?.sample(0.5, grid);
    let err = tr.last().max_abs_diff(&exact);
    Ok(Check {
        name: "cole_hopf_linf",
        value: err,
        threshold: 1e-8,
        pass: err < 1e-8,
    })
}

/// Literal Itô Euler against the shift oracle at `N = 2`, `T = 0.25`, `m = 64`:
/// RMS L² error over `paths` noise paths at `dt = 4e-4, 2e-4, 1e-4`, all
/// subsampled from one base path per seed.
pub fn spde_checks(seed: u64, paths: u64) -> Result<Vec<Check>, CliError> {
    let (n, t, h) = (2usize, 0.25f64, 1e-4f64);
    let grid = PeriodicGrid::new(64).expect("valid grid");
    let u0 = InitialData::Sin(1.0).sample(grid).expect("finite data");
    let steps = (t / h).round() as u64;
    let w = burgers_solve(&u0, 0.5 * (1.0 - 1.0 / n as f64), t, h, &[])?;
    let blocks = [4u64, 2, 1];
    let mut sq = [0.0; 3];
    for p in 0..paths {
        let d = NoiseDriver::new(mix_seed(seed, p), n, h).expect("valid driver");
        let fine = block_increments(&d, 1, steps, &mut StreamChecksum::default());
        let xi: f64 = fine.iter().sum();
        let oracle = spde_v_shift_oracle(w.last(), 0.5, n, xi, 0.0, h)?;
        for (k, &q) in blocks.iter().enumerate() {
            let incs: Vec<f64> = fine.chunks(q as usize).map(|c| c.iter().sum()).collect();
            let v = ito_euler_path(&u0, 0.5, q as f64 * h, &incs)?;
            sq[k] += v.l2_distance(&oracle).powi(2);
        }
    }
    let errs: Vec<f64> = sq.iter().map(|s| (s / paths as f64).sqrt()).collect();
    let dts: Vec<f64> = blocks.iter().map(|&q| q as f64 * h).collect();
    let order = fit_loglog(&dts, &errs, None).map(|f| f.slope).unwrap_or(f64::NAN);
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    Ok(vec![
        Check {
            name: "spde_strong_error",
            value: errs[2],
            threshold: 2e-3,
            pass: errs[2] < 2e-3,
        },
        Check {
            name: "spde_order",
            value: order,
            threshold: 0.4,
            pass: order >= 0.4,
        },
        Check {
            name: "spde_monotone",
            value: if monotone { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass: monotone,
        },
    ])
}

fn oracle_job(cli: &Cli) -> Result<Outcome, CliError> {
    let text = read_config(cli)?;
    let seed = cli.seed.unwrap_or(parse_config(&text)?.run.seed);
    let root = out_dir(cli, "oracle_check");
    let mut out = OutputDir::create(&root, cli.force)?;
    let start = Instant::now();
    let paths = 32;
    let mut checks = vec![cole_hopf_check()?];
    checks.extend(spde_checks(seed, paths)?);
    let mut t = Table::new("oracle_check", &["check", "value", "threshold", "pass"]);
    for c in &checks {
        t.push(vec![c.name.into(), c.value.into(), c.threshold.into(), u64::from(c.pass).into()]);
        eprintln!(
            "{} {}: {:.3e} (threshold {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    out.write_table(&t)?;
    let passed = checks.iter().filter(|c| c.pass).count();
    let mut manifest = Manifest::new("oracle-check", seed, json!({ "spde_paths": paths }));
    manifest.summary = json!({ "passed": passed, "total": checks.len() });
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    out.finish(manifest)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let mut line = format!("oracle-check: {passed} of {} checks passed", checks.len());
    if !failed.is_empty() {
        line.push_str(&format!(" (failed: {})", failed.join(", ")));
    }
    Ok(Outcome {
        line,
        checks_failed: !failed.is_empty(),
    })
}

fn verify_job(cli: &Cli) -> Result<Outcome, CliError> {
    let root = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("verify needs --out DIR".into()))?;
    let issues = verify_manifest(&root)?;
    for i in &issues {
        match i {
            VerifyIssue::Missing(name) => eprintln!("missing: {name}"),
            VerifyIssue::HashMismatch { name, expected, actual } => {
                eprintln!("hash mismatch: {name} (manifest {expected}, file {actual})")
            }
        }
    }
    let line = if issues.is_empty() {
        format!("verify: {} intact", root.display())
    } else {
        format!("verify: {} problem(s) in {}", issues.len(), root.display())
    };
    Ok(Outcome {
        line,
        checks_failed: !issues.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_anywhere() {
        let cli = Cli::try_parse_from(["resetlab", "experiment", "rate_dt", "--seed", "7", "--force"]).unwrap();
        assert_eq!(cli.command, Command::Experiment { id: "rate_dt".into() });
        assert_eq!(cli.seed, Some(7));
        assert!(cli.force);
        let cli = Cli::try_parse_from(["resetlab", "--out", "x", "run"]).unwrap();
        assert_eq!(cli.out, Some(PathBuf::from("x")));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["resetlab", "frobnicate"]), EXIT_INVALID);
        assert_eq!(main_with_args(["resetlab"]), EXIT_INVALID);
        assert_eq!(main_with_args(["resetlab", "run", "--seed", "x"]), EXIT_INVALID);
    }

    #[test]
    fn cole_hopf_check_passes() {
        let c = cole_hopf_check().unwrap();
        assert!(c.pass, "{c:?}");
    }
}
