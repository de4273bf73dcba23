//! Energy, corrector and dissipation functionals, evaluated spectrally.
//!
//! Normalization: for real fields `∫ a b dx` is taken as `Σ_k â(k) conj(b̂(k))`
//! (Parseval without the `(2π)^d` volume factor), and `Σ_{|α|≤N} ‖∂^α a‖²` becomes
//! `Σ_k w_N(k) |â(k)|²` with the Sobolev weights of [`crate::field::sobolev_weight`].
//!
//! With `w_N` and `w_{N−1}` per wavevector:
//!
//! ```text
//! Ẽ_N = Σ_k w_N (Σ_m |ĝ|² + |k|²|φ̂|²)
//! G   = Σ_k w_{N−1} [ Re Σ_i û_i conj(i k_i (σ̂ + φ̂)) + ½(|k|²|φ̂|² + |σ̂|²) ]
//! E_N = Ẽ_N + 2κ G
//! D_N = ½ Σ_k w_N (|û|² + λ0 |(I−P)ĝ|²_ν) + (κ/2) Σ_k w_{N−1} (|k|²|φ̂|² + 4|σ̂|² + |k|²|σ̂|²)
//! D̃_N = Σ_k w_N (|û|² + λ0 |(I−P)ĝ|²_ν)
//! ```

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, RhsEngine, RhsMode};
use crate::exec::Exec;
use crate::field::sobolev_weights;
use crate::hermite::{NuForm, Projection};
use crate::state::{Layout, SpectralState};

/// Relative slack allowed on the `¾ Ẽ_N ≤ E_N ≤ 5/4 Ẽ_N` bracket for rounding.
const BRACKET_RTOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("kappa = {0} outside (0, 1/8]")]
    KappaOutOfRange(f64),
    #[error("lambda0 = {0} must be positive")]
    Lambda0(f64),
    #[error("energy bracket violated: E_N = {e_n:e}, tilde E_N = {tilde:e}")]
    Bracket { e_n: f64, tilde: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples are not uniformly spaced (gap {gap} vs {expected} at index {index})")]
    NonUniform { index: usize, gap: f64, expected: f64 },
    #[error("nonpositive energy {value:e} at t = {t} inside the fit window")]
    NonPositive { t: f64, value: f64 },
}

/// One time sample of every functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    #[serde(rename = "tilde_E_N")]
    pub tilde_e_n: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "E_N")]
    pub e_n: f64,
    #[serde(rename = "D_N")]
    pub d_n: f64,
    #[serde(rename = "tilde_D_N")]
    pub tilde_d_n: f64,
    pub kappa: f64,
    #[serde(rename = "lambda0_used")]
    pub lambda0: f64,
    pub continuity_residual: f64,
    pub momentum_residual: f64,
    /// Finite-difference `d/dt E_N + D_N` (filled in once neighbours are known).
    pub energy_inequality_residual: f64,
    /// Running minimum of `D_N / E_N` over samples with `E_N > 0` (0 if none yet).
    pub min_ratio: f64,
}

/// Per-wavevector quantities shared by all functionals.
struct ModeSums {
    g_sq: f64,
    grad_phi_sq: f64,
    sigma_sq: f64,
    u_sq: f64,
    cross: f64,
    micro_nu: f64,
}

fn mode_sums(layout: &Layout, nu: Option<&NuForm>, coeffs: &[Complex64], ki: usize) -> ModeSums {
    let n_m = layout.n_m();
    let x = &coeffs[ki * n_m..(ki + 1) * n_m];
    let k = layout.grid.wavevector(ki);
    let k2 = layout.grid.norm_sq(ki);
    let sigma = x[0];
    let phi = if ki == layout.grid.zero_index() {
        Complex64::new(0.0, 0.0)
    } else {
        sigma / k2
    };
    let mut u_sq = 0.0;
    let mut cross = 0.0;
    for i in 0..layout.dim() {
        let u = x[layout.basis.unit(i)];
        u_sq += u.norm_sqr();
        let grad = Complex64::new(0.0, k[i] as f64) * (sigma + phi);
        cross += (u * grad.conj()).re;
    }
    let micro_nu = nu.map_or(0.0, |nu| {
        nu.norm_sq(&layout.basis, &layout.basis.project(x, Projection::ComplementP))
    });
    ModeSums {
        g_sq: x.iter().map(|c| c.norm_sqr()).sum(),
        grad_phi_sq: k2 * phi.norm_sqr(),
        sigma_sq: sigma.norm_sqr(),
        u_sq,
        cross,
        micro_nu,
    }
}

pub fn tilde_energy(state: &SpectralState, order: usize) -> f64 {
    tilde_energy_with(state, order, Exec::default())
}

pub fn tilde_energy_with(state: &SpectralState, order: usize, exec: Exec) -> f64 {
    let layout = state.layout();
    let w = sobolev_weights(&layout.grid, order);
    exec.ordered_sum(layout.n_k(), |ki| {
        let s = mode_sums(layout, None, &state.coeffs, ki);
        w[ki] * (s.g_sq + s.grad_phi_sq)
    })
}

/// The corrector functional coupling `u` with `∇(σ + φ)`.
pub fn functional_g(state: &SpectralState, order: usize) -> f64 {
    let layout = state.layout();
    let w = sobolev_weights(&layout.grid, order.saturating_sub(1));
    Exec::default().ordered_sum(layout.n_k(), |ki| {
        let s = mode_sums(layout, None, &state.coeffs, ki);
        w[ki] * (s.cross + 0.5 * (s.grad_phi_sq + s.sigma_sq))
    })
}

/// `(E_N, Ẽ_N, G)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstantEnergy {
    pub e_n: f64,
    pub tilde_e_n: f64,
    pub g: f64,
}

fn check_kappa(kappa: f64) -> Result<(), DiagnosticsError> {
    if kappa > 0.0 && kappa <= 0.125 {
        Ok(())
    } else {
        Err(DiagnosticsError::KappaOutOfRange(kappa))
    }
}

fn check_bracket(e: InstantEnergy) -> Result<InstantEnergy, DiagnosticsError> {
    let slack = BRACKET_RTOL * e.tilde_e_n;
    if e.e_n < 0.75 * e.tilde_e_n - slack || e.e_n > 1.25 * e.tilde_e_n + slack {
        return Err(DiagnosticsError::Bracket {
            e_n: e.e_n,
            tilde: e.tilde_e_n,
        });
    }
    Ok(e)
}

/// `E_N = Ẽ_N + 2κ G`, checked against `¾ Ẽ_N ≤ E_N ≤ 5/4 Ẽ_N`.
pub fn instant_energy(
    state: &SpectralState,
    order: usize,
    kappa: f64,
) -> Result<InstantEnergy, DiagnosticsError> {
    check_kappa(kappa)?;
    let tilde_e_n = tilde_energy(state, order);
    let g = functional_g(state, order);
    check_bracket(InstantEnergy {
        e_n: tilde_e_n + 2.0 * kappa * g,
        tilde_e_n,
        g,
    })
}

/// `(D_N, D̃_N)`.
pub fn dissipation(
    state: &SpectralState,
    order: usize,
    kappa: f64,
    lambda0: f64,
) -> Result<(f64, f64), DiagnosticsError> {
    check_kappa(kappa)?;
    if !(lambda0 > 0.0) {
        return Err(DiagnosticsError::Lambda0(lambda0));
    }
    let layout = state.layout();
    let nu = NuForm::new(&layout.basis);
    let w_n = sobolev_weights(&layout.grid, order);
    let w_m = sobolev_weights(&layout.grid, order.saturating_sub(1));
    let parts = Exec::default().map(layout.n_k(), |ki| {
        dissipation_mode(layout, &nu, &state.coeffs, ki, w_n[ki], w_m[ki], kappa, lambda0)
    });
    Ok(parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y)))
}

#[allow(clippy::too_many_arguments)]
fn dissipation_mode(
    layout: &Layout,
    nu: &NuForm,
    coeffs: &[Complex64],
    ki: usize,
    w_n: f64,
    w_m: f64,
    kappa: f64,
    lambda0: f64,
) -> (f64, f64) {
    let s = mode_sums(layout, Some(nu), coeffs, ki);
    let k2 = layout.grid.norm_sq(ki);
    let collisional = s.u_sq + lambda0 * s.micro_nu;
    let macroscopic = s.grad_phi_sq + 4.0 * s.sigma_sq + k2 * s.sigma_sq;
    (
        0.5 * w_n * collisional + 0.5 * kappa * w_m * macroscopic,
        w_n * collisional,
    )
}

/// Evaluates every functional for a fixed layout, order, λ0 and κ.
pub struct Diagnostics {
    layout: Arc<Layout>,
    nu: NuForm,
    order: usize,
    lambda0: f64,
    kappa: f64,
    w_n: Vec<f64>,
    w_m: Vec<f64>,
    mode: RhsMode,
    exec: Exec,
}

impl Diagnostics {
    pub fn new(
        layout: Arc<Layout>,
        order: usize,
        lambda0: f64,
        kappa: f64,
        mode: RhsMode,
        exec: Exec,
    ) -> Result<Self, DiagnosticsError> {
        check_kappa(kappa)?;
        if !(lambda0 > 0.0) {
            return Err(DiagnosticsError::Lambda0(lambda0));
        }
        let nu = NuForm::new(&layout.basis);
        let w_n = sobolev_weights(&layout.grid, order);
        let w_m = sobolev_weights(&layout.grid, order.saturating_sub(1));
        Ok(Self {
            layout,
            nu,
            order,
            lambda0,
            kappa,
            w_n,
            w_m,
            mode,
            exec,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `(E_N, Ẽ_N, G)` without the bracket assertion.
    pub fn energy(&self, coeffs: &[Complex64]) -> InstantEnergy {
        let layout = &*self.layout;
        let parts = self.exec.map(layout.n_k(), |ki| {
            let s = mode_sums(layout, None, coeffs, ki);
            (
                self.w_n[ki] * (s.g_sq + s.grad_phi_sq),
                self.w_m[ki] * (s.cross + 0.5 * (s.grad_phi_sq + s.sigma_sq)),
            )
        });
        let (tilde_e_n, g) = parts
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        InstantEnergy {
            e_n: tilde_e_n + 2.0 * self.kappa * g,
            tilde_e_n,
            g,
        }
    }

    /// `(D_N, D̃_N)`.
    pub fn dissipation(&self, coeffs: &[Complex64]) -> (f64, f64) {
        let layout = &*self.layout;
        let parts = self.exec.map(layout.n_k(), |ki| {
            dissipation_mode(
                layout,
                &self.nu,
                coeffs,
                ki,
                self.w_n[ki],
                self.w_m[ki],
                self.kappa,
                self.lambda0,
            )
        });
        parts
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
    }

    /// Full report for one state; the finite-difference residual and the running
    /// ratio are left at 0 for the series tracker to fill.
    pub fn report(&self, engine: &RhsEngine, state: &SpectralState) -> Result<EnergyReport, crate::Error> {
        let energy = check_bracket(self.energy(&state.coeffs))?;
        let (d_n, tilde_d_n) = self.dissipation(&state.coeffs);
        let continuity = dynamics::continuity_residual(engine, state, self.mode);
        let momentum = dynamics::momentum_residual(engine, state, self.mode)?;
        Ok(EnergyReport {
            t: state.t,
            tilde_e_n: energy.tilde_e_n,
            g: energy.g,
            e_n: energy.e_n,
            d_n,
            tilde_d_n,
            kappa: self.kappa,
            lambda0: self.lambda0,
            continuity_residual: continuity.relative(),
            momentum_residual: momentum.relative(),
            energy_inequality_residual: 0.0,
            min_ratio: 0.0,
        })
    }
}

/// Tolerance `coefficient · (dt⁴ + h²) · scale` for the finite-difference energy
/// inequality, with `h` the report interval and `scale` typically `E_N(0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeTolerance {
    pub coefficient: f64,
    pub dt: f64,
    pub report_interval: f64,
    pub scale: f64,
}

impl SchemeTolerance {
    pub fn new(dt: f64, report_interval: f64, scale: f64) -> Self {
        Self {
            coefficient: 10.0,
            dt,
            report_interval,
            scale,
        }
    }

    pub fn value(&self) -> f64 {
        self.coefficient * (self.dt.powi(4) + self.report_interval.powi(2)) * self.scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityCheck {
    /// `d/dt E_N + D_N` at each interior sample (central differences).
    pub residuals: Vec<(f64, f64)>,
    pub worst: f64,
    pub worst_t: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Central-difference check of `d/dt E_N + D_N ≤ tol` on reports `(t, E_N, D_N)`.
pub fn energy_inequality_check(
    samples: &[(f64, f64, f64)],
    tolerance: f64,
) -> Result<InequalityCheck, DiagnosticsError> {
    if samples.len() < 3 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    let h = samples[1].0 - samples[0].0;
    for (i, w) in samples.windows(2).enumerate() {
        let gap = w[1].0 - w[0].0;
        if (gap - h).abs() > 1e-9 * h.abs().max(1e-300) || !(gap > 0.0) {
            return Err(DiagnosticsError::NonUniform {
                index: i,
                gap,
                expected: h,
            });
        }
    }
    let residuals: Vec<(f64, f64)> = samples
        .windows(3)
        .map(|w| (w[1].0, (w[2].1 - w[0].1) / (w[2].0 - w[0].0) + w[1].2))
        .collect();
    let (worst_t, worst) = residuals
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0.0, 0.0));
    Ok(InequalityCheck {
        residuals,
        worst,
        worst_t,
        tolerance,
        pass: worst <= tolerance,
    })
}

/// Least-squares decay rate `−slope(log E_N vs t)` over the samples after the first
/// `transient_fraction` of the time span.
pub fn fit_decay_rate(series: &[(f64, f64)], transient_fraction: f64) -> Result<f64, DiagnosticsError> {
    if series.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 2,
            got: series.len(),
        });
    }
    let t0 = series[0].0;
    let t1 = series[series.len() - 1].0;
    let start = t0 + transient_fraction * (t1 - t0);
    let window: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= start).collect();
    if window.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 2,
            got: window.len(),
        });
    }
    if let Some(&(t, value)) = window.iter().find(|&&(_, e)| !(e > 0.0)) {
        return Err(DiagnosticsError::NonPositive { t, value });
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = window.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, e) in &window {
        let dt = t - mean_t;
        sxy += dt * (e.ln() - mean_y);
        sxx += dt * dt;
    }
    Ok(-sxy / sxx)
}

/// Default fraction of the time span excluded from decay fits.
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.2;
