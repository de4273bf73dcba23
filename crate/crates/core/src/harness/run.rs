//! Run orchestration: stepping, reports, checks, checkpoints and resume.
//!
//! Time is tracked as an integer step count (`t = step · dt`), so a run resumed from
//! a checkpoint retraces the uninterrupted run bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::diagnostics::{
    fit_decay_rate, Diagnostics, EnergyReport, SchemeTolerance, DEFAULT_TRANSIENT_FRACTION,
};
use crate::dynamics::Stepper;
use crate::exec::Exec;
use crate::harness::checkpoint::{read_checkpoint, write_checkpoint};
use crate::harness::manifest::{CheckResult, RunManifest};
use crate::harness::report::{read_reports, ReportSink};
use crate::hermite::{coercivity_lambda0, eta, kappa, NuForm};
use crate::state::{init_state, Lambda0Choice, Layout, SimConfig, SpectralState, StateError};
use crate::{Complex64, Error};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub const MASS_TOL: f64 = 1e-14;
pub const RESIDUAL_TOL: f64 = 1e-12;
pub const ENVELOPE_SLACK: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub exec: Exec,
    /// Continue from this checkpoint; the existing metrics file in the output
    /// directory supplies the earlier rows.
    pub resume: Option<PathBuf>,
    /// Write CSV, manifest and checkpoints under `config.out_dir`.
    pub write_files: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            exec: Exec::default(),
            resume: None,
            write_files: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub reports: Vec<EnergyReport>,
    pub final_state: SpectralState,
    pub lambda0: f64,
    pub kappa: f64,
    pub eta: f64,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    pub metrics_path: Option<PathBuf>,
    pub manifest_path: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
}

/// λ0 for the configured layout, with a label saying where it came from.
pub fn resolve_lambda0(config: &SimConfig, layout: &Layout) -> Result<(f64, String), Error> {
    match config.lambda0 {
        Lambda0Choice::Manual(v) => Ok((v, "manual".into())),
        Lambda0Choice::Computed(mode) => {
            let nu = NuForm::new(&layout.basis);
            let c = coercivity_lambda0(&layout.basis, &nu, mode)?;
            Ok((c.lambda0, format!("computed ({})", mode.name())))
        }
    }
}

pub fn run(config: &SimConfig) -> Result<RunOutcome, Error> {
    run_with(config, &RunOptions::default())
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("step_{step:010}.vpfp"))
}

struct Start {
    state: SpectralState,
    step: u64,
    history: Vec<EnergyReport>,
}

fn starting_point(config: &SimConfig, layout: &Arc<Layout>, opts: &RunOptions) -> Result<Start, Error> {
    let Some(path) = &opts.resume else {
        let initial = init_state(config)?;
        return Ok(Start {
            state: initial.state,
            step: 0,
            history: Vec::new(),
        });
    };
    let ck = read_checkpoint(path)?;
    if ck.state.layout() != &**layout || ck.sobolev_order != config.sobolev_order {
        return Err(StateError::LayoutMismatch(format!(
            "checkpoint has d={}, K={}, M={}, N={}; config has d={}, K={}, M={}, N={}",
            ck.state.layout().dim(),
            ck.state.layout().grid.cutoff(),
            ck.state.layout().basis.cutoff(),
            ck.sobolev_order,
            config.dim,
            config.fourier_cutoff,
            config.hermite_cutoff,
            config.sobolev_order
        ))
        .into());
    }
    let step = (ck.state.t / config.dt).round() as u64;
    if (step as f64 * config.dt).to_bits() != ck.state.t.to_bits() || step % config.steps_per_report() != 0 {
        return Err(StateError::InvalidConfig(format!(
            "checkpoint time {} is not a report time of this config",
            ck.state.t
        ))
        .into());
    }
    let metrics = config.out_dir.join(METRICS_FILE);
    let history = if step == 0 {
        Vec::new()
    } else {
        let all = read_reports(BufReader::new(File::open(&metrics)?))?;
        let kept: Vec<EnergyReport> = all
            .into_iter()
            .take_while(|r| ((r.t / config.dt).round() as u64) < step)
            .collect();
        if kept.len() as u64 != step / config.steps_per_report() {
            return Err(StateError::InvalidConfig(format!(
                "{} holds {} reports before t = {}, expected {}",
                metrics.display(),
                kept.len(),
                ck.state.t,
                step / config.steps_per_report()
            ))
            .into());
        }
        kept
    };
    let mut state = SpectralState::zeros(layout.clone());
    state.t = ck.state.t;
    state.coeffs = ck.state.coeffs;
    Ok(Start { state, step, history })
}

pub fn run_with(config: &SimConfig, opts: &RunOptions) -> Result<RunOutcome, Error> {
    config.validate()?;
    let layout = Arc::new(Layout::from_config(config));
    let (lambda0, source) = resolve_lambda0(config, &layout)?;
    let kappa = kappa(lambda0);
    let eta = eta(kappa);
    let stepper = Stepper::new(
        layout.clone(),
        config.scheme,
        config.rhs_mode,
        config.dt,
        config.cfl_factor,
        opts.exec,
    )?;
    let diag = Diagnostics::new(layout.clone(), config.sobolev_order, lambda0, kappa, config.rhs_mode, opts.exec)?;

    let mut manifest = RunManifest::start(config, lambda0, &source, kappa, eta);
    let (metrics_path, manifest_path) = if opts.write_files {
        std::fs::create_dir_all(&config.out_dir)?;
        if config.checkpoint_every > 0 {
            std::fs::create_dir_all(config.out_dir.join(CHECKPOINT_DIR))?;
        }
        let m = config.out_dir.join(METRICS_FILE);
        let j = config.out_dir.join(MANIFEST_FILE);
        manifest.outputs.push(m.display().to_string());
        manifest.write(&j)?;
        (Some(m), Some(j))
    } else {
        (None, None)
    };

    let result = drive(config, opts, &layout, &stepper, &diag, eta, metrics_path.as_deref());
    match result {
        Ok(mut outcome) => {
            if let Some(j) = &manifest_path {
                manifest
                    .outputs
                    .extend(outcome.checkpoints.iter().map(|p| p.display().to_string()));
                manifest.finish(outcome.checks.clone());
                manifest.write(j)?;
            }
            outcome.pass = outcome.checks.iter().all(|c| c.pass || c.advisory);
            outcome.lambda0 = lambda0;
            outcome.kappa = kappa;
            outcome.metrics_path = metrics_path;
            outcome.manifest_path = manifest_path;
            Ok(outcome)
        }
        Err(e) => {
            if let Some(j) = &manifest_path {
                manifest.fail(&e.to_string());
                manifest.write(j)?;
            }
            Err(e)
        }
    }
}

fn drive(
    config: &SimConfig,
    opts: &RunOptions,
    layout: &Arc<Layout>,
    stepper: &Stepper,
    diag: &Diagnostics,
    eta: f64,
    metrics_path: Option<&Path>,
) -> Result<RunOutcome, Error> {
    let Start {
        mut state,
        step: start,
        history,
    } = starting_point(config, layout, opts)?;
    let out: Box<dyn Write> = match metrics_path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::sink()),
    };
    let mut sink = ReportSink::resume(out, &history)?;

    let mass_slot = layout.mass_index();
    let mass0: Complex64 = state.coeffs[mass_slot];
    let mut mass_dev: f64 = 0.0;
    let spr = config.steps_per_report();
    let total = config.total_steps().max(start);
    let mut checkpoints = Vec::new();

    let mut step = start;
    loop {
        if step % spr == 0 || step == total {
            mass_dev = mass_dev.max((state.coeffs[mass_slot] - mass0).norm());
            let report = diag.report(stepper.engine(), &state)?;
            sink.push(report)?;
            let index = step / spr;
            let due = config.checkpoint_every > 0
                && ((step % spr == 0 && index % config.checkpoint_every == 0) || step == total);
            if opts.write_files && due && step != start {
                let path = checkpoint_path(&config.out_dir, step);
                write_checkpoint(&path, &state, config.sobolev_order)?;
                checkpoints.push(path);
            }
        }
        if step >= total {
            break;
        }
        stepper.step(&mut state)?;
        step += 1;
        state.t = step as f64 * config.dt;
    }
    let (reports, mut w) = sink.finish()?;
    w.flush()?;

    let checks = evaluate_checks(config, &reports, mass_dev, eta);
    Ok(RunOutcome {
        reports,
        final_state: state,
        lambda0: 0.0,
        kappa: 0.0,
        eta,
        checks,
        pass: false,
        metrics_path: None,
        manifest_path: None,
        checkpoints,
    })
}

/// Theorem-level and conservation checks on a completed report series.
pub fn evaluate_checks(config: &SimConfig, reports: &[EnergyReport], mass_dev: f64, eta: f64) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let max_of = |f: fn(&EnergyReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    checks.push(CheckResult::at_most(
        "mass_conservation",
        mass_dev,
        MASS_TOL,
        "max |g(0,0)(t) - g(0,0)(t0)|",
    ));
    checks.push(CheckResult::at_most(
        "continuity_residual",
        max_of(|r| r.continuity_residual),
        RESIDUAL_TOL,
        "max relative residual over reports",
    ));
    checks.push(CheckResult::at_most(
        "momentum_residual",
        max_of(|r| r.momentum_residual),
        RESIDUAL_TOL,
        "max relative residual over reports",
    ));
    let Some(first) = reports.first() else {
        return checks;
    };
    let e0 = first.e_n;

    let tol = SchemeTolerance::new(config.dt, config.report_interval, e0).value();
    let interior = if reports.len() >= 3 { &reports[1..reports.len() - 1] } else { &[][..] };
    let (worst, worst_t) = interior
        .iter()
        .map(|r| (r.energy_inequality_residual, r.t))
        .fold((f64::MIN, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    checks.push(if interior.is_empty() {
        CheckResult::at_most("energy_inequality", 0.0, tol, "fewer than three reports")
    } else {
        CheckResult::at_most(
            "energy_inequality",
            worst,
            tol,
            format!("max of dE_N/dt + D_N at interior reports (t = {worst_t})"),
        )
    });

    let rise = reports
        .windows(2)
        .map(|w| w[1].e_n - w[0].e_n)
        .fold(f64::MIN, f64::max);
    checks.push(CheckResult::at_most(
        "energy_nonincreasing",
        if reports.len() < 2 { 0.0 } else { rise },
        0.0,
        "max E_N(t_{i+1}) - E_N(t_i)",
    ));

    let envelope = reports
        .iter()
        .map(|r| {
            let bound = e0 * (-eta * (r.t - first.t)).exp();
            if bound > 0.0 {
                r.e_n / bound - 1.0
            } else if r.e_n > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .fold(f64::MIN, f64::max);
    checks.push(CheckResult::at_most(
        "decay_envelope",
        envelope,
        ENVELOPE_SLACK,
        format!("max E_N(t) / (E_N(0) exp(-eta t)) - 1 with eta = {eta}"),
    ));

    if reports.len() >= 2 && reports.iter().all(|r| r.e_n > 0.0) {
        let series: Vec<(f64, f64)> = reports.iter().map(|r| (r.t, r.e_n)).collect();
        if let Ok(fit) = fit_decay_rate(&series, DEFAULT_TRANSIENT_FRACTION) {
            checks.push(CheckResult::at_most(
                "decay_rate",
                eta - fit,
                0.0,
                format!("eta - fitted rate (fitted {fit})"),
            ));
        }
    }

    if let Some(eps) = config.epsilon0 {
        checks.push(
            CheckResult::at_most("smallness", e0, eps, "E_N(0) against epsilon0").advisory(),
        );
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn small(extra: &str, dir: &Path) -> SimConfig {
        let text = format!(
            "fourier_cutoff = 2\nhermite_cutoff = 4\ndt = 0.01\nt_end = 0.2\nreport_interval = 0.02\nout_dir = {}\n{extra}",
            dir.display()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn zero_end_time_single_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small("", dir.path());
        c.t_end = 0.0;
        let out = run(&c).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.reports[0].t, 0.0);
    }

    #[test]
    fn zero_ic_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small("ic = zero", dir.path())).unwrap();
        assert!(out.pass, "{:?}", out.checks);
        assert_eq!(out.reports.len(), 11);
        assert!(out.reports.iter().all(|r| r.e_n == 0.0 && r.d_n == 0.0));
        let m = RunManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.status, "PASS");
        assert_eq!(m.kappa, out.kappa);
    }

    #[test]
    fn small_data_passes_checks() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small("ic_energy = 1e-6", dir.path())).unwrap();
        assert!(out.pass, "{:#?}", out.checks);
        assert!((out.reports[0].tilde_e_n - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn resume_matches_direct() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let full = run(&small("checkpoint_every = 3", a.path())).unwrap();
        let mut first = small("checkpoint_every = 3", b.path());
        first.t_end = 0.12;
        run(&first).unwrap();
        let resumed = run_with(
            &small("checkpoint_every = 3", b.path()),
            &RunOptions {
                resume: Some(checkpoint_path(b.path(), 12)),
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(resumed.final_state, full.final_state);
        assert_eq!(
            std::fs::read(a.path().join(METRICS_FILE)).unwrap(),
            std::fs::read(b.path().join(METRICS_FILE)).unwrap()
        );
        assert_eq!(
            std::fs::read(checkpoint_path(a.path(), 20)).unwrap(),
            std::fs::read(checkpoint_path(b.path(), 20)).unwrap()
        );
    }

    #[test]
    fn resume_rejects_foreign_checkpoint() {
        let a = tempfile::tempdir().unwrap();
        run(&small("checkpoint_every = 1", a.path())).unwrap();
        let mut other = small("", a.path());
        other.fourier_cutoff = 3;
        let err = run_with(
            &other,
            &RunOptions {
                resume: Some(checkpoint_path(a.path(), 2)),
                ..RunOptions::default()
            },
        );
        assert!(err.is_err());
    }
}
