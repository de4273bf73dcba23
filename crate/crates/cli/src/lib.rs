//! `vpfp` command-line driver.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails (or a run diverges),
//! 2 for usage and configuration errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use vpfp_core::diagnostics::{fit_decay_rate, DEFAULT_TRANSIENT_FRACTION};
use vpfp_core::dynamics::{RhsMode, Stepper, StepError};
use vpfp_core::harness::checkpoint::read_checkpoint;
use vpfp_core::harness::config::load_config;
use vpfp_core::harness::report::read_series;
use vpfp_core::harness::run::{resolve_lambda0, run_with, RunOptions};
use vpfp_core::hermite::{coercivity_lambda0, eta, kappa, CoercivityMode, NuForm};
use vpfp_core::oracle::{compare_trajectories, oracle_trajectory, spectral_abscissa};
use vpfp_core::state::{init_state, validate_state, Layout, SimConfig, StateError};
use vpfp_core::{Error, Exec};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "vpfp", version, about = "Fourier-Hermite VPFP simulator and energy diagnostics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file, or `default` for the built-in defaults.
    #[arg(long, global = true, default_value = "default")]
    config: PathBuf,
    /// Output directory (overrides `out_dir` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the simulation, writing metrics.csv, manifest.json and checkpoints.
    Run {
        /// Continue from this checkpoint (metrics.csv in the output directory is extended).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Print lambda0, kappa and eta for both coercivity modes.
    Lambda0,
    /// Print the spectral abscissa of the linearized generator per wavevector.
    Spectrum,
    /// Compare a linearized run against the dense matrix exponential.
    OracleCompare {
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Fit the decay rate of E_N in a metrics CSV and compare it with 2 kappa / 5.
    FitDecay {
        csv: PathBuf,
        /// Reference rate; defaults to 2 kappa / 5 from the CSV, else from the config.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TRANSIENT_FRACTION)]
        transient: f64,
    },
    /// Check a checkpoint file for integrity and state invariants.
    Validate { checkpoint: PathBuf },
}

fn load(common: &Common) -> Result<SimConfig, String> {
    let mut config = load_config(&common.config).map_err(|e| e.to_string())?;
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn setup_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("VPFP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("VPFP_THREADS must be a nonnegative integer (got {value:?})"))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let _ = n;
    Ok(())
}

fn exit_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::State(StateError::InvalidConfig(_))
        | Error::State(StateError::InitialCondition(_))
        | Error::Step(StepError::Cfl { .. }) => EXIT_USAGE,
        _ => EXIT_FAIL,
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn cli_main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    if let Err(msg) = setup_threads() {
        let _ = writeln!(err, "error: {msg}");
        return EXIT_USAGE;
    }
    let result = match &cli.command {
        Command::FitDecay { csv, eta, transient } => fit_decay(&cli.common, csv, *eta, *transient, out),
        Command::Validate { checkpoint } => validate(&cli.common, checkpoint, out),
        other => match load(&cli.common) {
            Err(msg) => {
                let _ = writeln!(err, "error: {msg}");
                return EXIT_USAGE;
            }
            Ok(config) => match other {
                Command::Run { resume } => run_cmd(&config, resume.clone(), out),
                Command::Lambda0 => lambda0_cmd(&config, out),
                Command::Spectrum => spectrum_cmd(&config, out),
                Command::OracleCompare { tol } => oracle_cmd(&config, *tol, out),
                _ => unreachable!(),
            },
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_for(&e)
        }
    }
}

fn run_cmd(config: &SimConfig, resume: Option<PathBuf>, out: &mut dyn Write) -> Result<i32, Error> {
    let opts = RunOptions {
        resume,
        ..RunOptions::default()
    };
    let o = run_with(config, &opts)?;
    writeln!(out, "lambda0 = {:e}, kappa = {:e}, eta = {:e}", o.lambda0, o.kappa, o.eta)?;
    writeln!(out, "reports: {}", o.reports.len())?;
    for c in &o.checks {
        let tag = if c.advisory { " (advisory)" } else { "" };
        writeln!(
            out,
            "{} {}{tag}: {:e} (limit {:e}) {}",
            verdict(c.pass),
            c.name,
            c.value,
            c.tolerance,
            c.detail
        )?;
    }
    if let Some(p) = &o.metrics_path {
        writeln!(out, "metrics: {}", p.display())?;
    }
    if let Some(p) = &o.manifest_path {
        writeln!(out, "manifest: {}", p.display())?;
    }
    writeln!(out, "{}", verdict(o.pass))?;
    Ok(if o.pass { EXIT_PASS } else { EXIT_FAIL })
}

fn lambda0_cmd(config: &SimConfig, out: &mut dyn Write) -> Result<i32, Error> {
    let basis = vpfp_core::HermiteBasis::new(config.dim, config.hermite_cutoff);
    let nu = NuForm::new(&basis);
    writeln!(out, "d = {}, M = {}", config.dim, config.hermite_cutoff)?;
    for mode in [CoercivityMode::ComplementP0, CoercivityMode::ComplementP] {
        let l0 = coercivity_lambda0(&basis, &nu, mode)?.lambda0;
        let k = kappa(l0);
        writeln!(out, "{:<14} lambda0 = {l0:e}  kappa = {k:e}  eta = {:e}", mode.name(), eta(k))?;
    }
    let layout = Layout::from_config(config);
    let (l0, source) = resolve_lambda0(config, &layout)?;
    writeln!(out, "used: lambda0 = {l0:e} [{source}]  kappa = {:e}  eta = {:e}", kappa(l0), eta(kappa(l0)))?;
    Ok(EXIT_PASS)
}

fn spectrum_cmd(config: &SimConfig, out: &mut dyn Write) -> Result<i32, Error> {
    let layout = Layout::from_config(config);
    let (l0, _) = resolve_lambda0(config, &layout)?;
    let k = kappa(l0);
    let report = spectral_abscissa(&layout, Exec::default())?;
    for (kv, a) in &report.per_k {
        writeln!(out, "k = {:?}  abscissa = {a:.12e}", &kv[..config.dim])?;
    }
    let bound = -k / 5.0 + 1e-6;
    writeln!(
        out,
        "max abscissa = {:.12e} at k = {:?} (eigenvalue {:.6e}{:+.6e}i)",
        report.abscissa,
        &report.k[..config.dim],
        report.eigenvalue.re,
        report.eigenvalue.im
    )?;
    writeln!(
        out,
        "observation: abscissa {} -kappa/5 + 1e-6 = {bound:.6e}",
        if report.abscissa <= bound { "<=" } else { ">" }
    )?;
    Ok(EXIT_PASS)
}

fn oracle_cmd(config: &SimConfig, tol: f64, out: &mut dyn Write) -> Result<i32, Error> {
    let initial = init_state(config)?.state;
    let layout = initial.layout_arc().clone();
    let stepper = Stepper::new(
        layout,
        config.scheme,
        RhsMode::Linearized,
        config.dt,
        config.cfl_factor,
        Exec::default(),
    )?;
    let spr = config.steps_per_report();
    let total = config.total_steps();
    let mut state = initial.clone();
    let mut snaps = vec![state.clone()];
    for step in 1..=total {
        stepper.step(&mut state)?;
        state.t = step as f64 * config.dt;
        if step % spr == 0 || step == total {
            snaps.push(state.clone());
        }
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let reference = oracle_trajectory(&initial, &times, Exec::default())?;
    let err = compare_trajectories(&snaps, &reference)?;
    let pass = err <= tol;
    writeln!(
        out,
        "{} oracle-compare: max relative error {err:.6e} over {} snapshots (tol {tol:e}, scheme {})",
        verdict(pass),
        snaps.len(),
        config.scheme.name()
    )?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

fn fit_decay(common: &Common, csv: &Path, eta_ref: Option<f64>, transient: f64, out: &mut dyn Write) -> Result<i32, Error> {
    let (series, kappa_col) = read_series(BufReader::new(File::open(csv)?))?;
    let (reference, source) = match (eta_ref, kappa_col) {
        (Some(e), _) => (e, "--eta".to_string()),
        (None, Some(k)) => (eta(k), "2 kappa / 5 from the CSV".to_string()),
        (None, None) => {
            let config = load_config(&common.config)?;
            let layout = Layout::from_config(&config);
            let (l0, src) = resolve_lambda0(&config, &layout)?;
            (eta(kappa(l0)), format!("2 kappa / 5 with lambda0 {src}"))
        }
    };
    let fit = fit_decay_rate(&series, transient)?;
    let pass = fit >= reference;
    writeln!(out, "eta_fit = {fit:.6}")?;
    writeln!(out, "eta_fit_full = {fit:.16e}")?;
    writeln!(out, "eta = {reference:.16e} ({source})")?;
    writeln!(out, "{}", verdict(pass))?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

fn validate(common: &Common, path: &Path, out: &mut dyn Write) -> Result<i32, Error> {
    let ck = match read_checkpoint(path) {
        Ok(ck) => ck,
        Err(e) => {
            writeln!(out, "FAIL {}: {e}", path.display())?;
            return Ok(EXIT_FAIL);
        }
    };
    let layout = ck.state.layout();
    writeln!(
        out,
        "{}: d = {}, K = {}, M = {}, N = {}, t = {}",
        path.display(),
        layout.dim(),
        layout.grid.cutoff(),
        layout.basis.cutoff(),
        ck.sobolev_order,
        ck.state.t
    )?;
    let mut pass = true;
    if common.config.as_os_str() != "default" {
        let config = load_config(&common.config)?;
        let expected = Arc::new(Layout::from_config(&config));
        if *expected != *layout || config.sobolev_order != ck.sobolev_order {
            writeln!(out, "layout does not match {}", common.config.display())?;
            pass = false;
        }
    }
    let violations = validate_state(&ck.state);
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    pass &= violations.is_empty();
    writeln!(out, "{}", verdict(pass))?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}
