//! Right-hand side of the perturbed system in coefficient space, time stepping, and
//! the macroscopic balance residuals.
//!
//! Per wavevector `k` and Hermite index `m`,
//!
//! ```text
//! dĝ/dt = −i Σ_j k_j [(A_j + C_j) ĝ](k, m)          transport  v·∇_x g
//!         − i k_j φ̂(k) [m = e_j]                     field      v√μ·∇_x φ
//!         − Σ_j Σ_{k'} i k'_j φ̂(k') [C_j ĝ](k−k', m)  quadratic  (v/2 g − ∇_v g)·∇_x φ
//!         − |m| ĝ(k, m)                              collisions L g
//! ```
//!
//! with `φ̂ = σ̂/|k|²` and `σ̂ = ĝ(·, 0)`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::convolution::{ConvolutionMethod, ConvolutionTerm, Convolver};
use crate::exec::Exec;
use crate::field::{self, FieldError};
use crate::state::{Layout, SpectralState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("dt = {dt} violates the explicit stability guard; use dt <= {max_dt:.6e}")]
    Cfl { dt: f64, max_dt: f64 },
    #[error("non-finite coefficients after stepping to t = {t}")]
    Divergence { t: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhsMode {
    Full,
    /// Drops the quadratic term.
    Linearized,
}

impl RhsMode {
    pub fn name(self) -> &'static str {
        match self {
            RhsMode::Full => "full",
            RhsMode::Linearized => "linearized",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Exact collision half-step, classical RK4 on the rest, collision half-step.
    StrangRk4,
    /// Integrating-factor (Lawson) RK4 with the exact collision exponential.
    LawsonRk4,
    /// Implicit diagonal collisions, explicit Euler for the rest.
    ImexEuler,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::StrangRk4 => "strang_rk4",
            Scheme::LawsonRk4 => "lawson_rk4",
            Scheme::ImexEuler => "imex_euler",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strang_rk4" => Some(Scheme::StrangRk4),
            "lawson_rk4" => Some(Scheme::LawsonRk4),
            "imex_euler" => Some(Scheme::ImexEuler),
            _ => None,
        }
    }
}

/// Per-wavevector macroscopic fields.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFields {
    pub sigma: Vec<Complex64>,
    /// `u[i][k]`.
    pub u: Vec<Vec<Complex64>>,
    pub phi: Vec<Complex64>,
}

/// `σ̂ = ĝ(·, 0)`, `û_i = ĝ(·, e_i)`, `φ̂ = solve_poisson(σ̂)`.
pub fn compute_macros(state: &SpectralState) -> Result<MacroFields, FieldError> {
    let layout = state.layout();
    let sigma = density(layout, &state.coeffs);
    let u = (0..layout.dim())
        .map(|i| {
            let e = layout.basis.unit(i);
            (0..layout.n_k()).map(|k| state.coeffs[layout.flat(k, e)]).collect()
        })
        .collect();
    let phi = field::solve_poisson(&layout.grid, &sigma)?;
    Ok(MacroFields { sigma, u, phi })
}

fn density(layout: &Layout, coeffs: &[Complex64]) -> Vec<Complex64> {
    (0..layout.n_k()).map(|k| coeffs[layout.flat(k, 0)]).collect()
}

/// Potential in the zero-mean gauge; the `k = 0` density is ignored.
fn potential(layout: &Layout, coeffs: &[Complex64]) -> Vec<Complex64> {
    let z = layout.grid.zero_index();
    (0..layout.n_k())
        .map(|k| {
            if k == z {
                ZERO
            } else {
                coeffs[layout.flat(k, 0)] / layout.grid.norm_sq(k)
            }
        })
        .collect()
}

/// Evaluates the right-hand side for one layout; owns the convolution plans.
pub struct RhsEngine {
    layout: Arc<Layout>,
    convolver: Convolver,
    exec: Exec,
}

impl RhsEngine {
    pub fn new(layout: Arc<Layout>, exec: Exec) -> Self {
        Self::with_method(layout, exec, ConvolutionMethod::Auto)
    }

    pub fn with_method(layout: Arc<Layout>, exec: Exec, method: ConvolutionMethod) -> Self {
        let convolver = Convolver::new(layout.grid.clone(), method, exec);
        Self {
            layout,
            convolver,
            exec,
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    /// Increment `−Σ_j (∂_{x_j}φ) ⋆ (C_j ĝ)` contributed by the quadratic term.
    ///
    /// Assumes `coeffs` and `phi` are Hermitian (transforms of real fields).
    pub fn nonlinear_term(&self, coeffs: &[Complex64], phi: &[Complex64]) -> Vec<Complex64> {
        let layout = &*self.layout;
        let n_m = layout.n_m();
        let n_k = layout.n_k();
        let dim = layout.dim();
        let grads = field::spectral_gradient(&layout.grid, phi);
        let raised: Vec<Vec<Complex64>> = (0..dim)
            .map(|j| {
                let mut h = vec![ZERO; coeffs.len()];
                self.exec.for_each_chunk(&mut h, n_m, |k, out| {
                    let x = &coeffs[k * n_m..(k + 1) * n_m];
                    layout.basis.add_creation(j, Complex64::new(1.0, 0.0), x, out);
                });
                h
            })
            .collect();
        let terms: Vec<ConvolutionTerm<'_>> = (0..dim)
            .filter(|&j| grads[j].iter().any(|c| c.re != 0.0 || c.im != 0.0))
            .map(|j| ConvolutionTerm {
                scalar: &grads[j],
                vector: &raised[j],
            })
            .collect();
        if terms.is_empty() {
            return vec![ZERO; n_k * n_m];
        }
        let mut out = self.convolver.convolve(&terms, n_m);
        out.iter_mut().for_each(|c| *c = -*c);
        out
    }

    /// Transport, field coupling and (optionally) collisions; purely local in `k`.
    fn local_terms(&self, coeffs: &[Complex64], phi: &[Complex64], collisions: bool) -> Vec<Complex64> {
        let layout = &*self.layout;
        let n_m = layout.n_m();
        let dim = layout.dim();
        let units: Vec<usize> = (0..dim).map(|j| layout.basis.unit(j)).collect();
        let mut out = vec![ZERO; coeffs.len()];
        self.exec.for_each_chunk(&mut out, n_m, |ki, block| {
            let k = layout.grid.wavevector(ki);
            let x = &coeffs[ki * n_m..(ki + 1) * n_m];
            for j in 0..dim {
                if k[j] == 0 {
                    continue;
                }
                let scale = Complex64::new(0.0, -(k[j] as f64));
                layout.basis.add_velocity(j, scale, x, block);
                block[units[j]] += scale * phi[ki];
            }
            if collisions {
                for (mi, (o, &xi)) in block.iter_mut().zip(x).enumerate() {
                    *o -= layout.basis.level(mi) as f64 * xi;
                }
            }
        });
        out
    }

    fn evaluate(&self, coeffs: &[Complex64], mode: RhsMode, collisions: bool) -> Vec<Complex64> {
        let layout = &*self.layout;
        let phi = potential(layout, coeffs);
        let mut out = self.local_terms(coeffs, &phi, collisions);
        if mode == RhsMode::Full {
            let nl = self.nonlinear_term(coeffs, &phi);
            out.iter_mut().zip(&nl).for_each(|(o, n)| *o += n);
        }
        out[layout.mass_index()] = ZERO;
        out
    }

    /// Full time derivative including collisions.
    pub fn rhs(&self, coeffs: &[Complex64], mode: RhsMode) -> Vec<Complex64> {
        self.evaluate(coeffs, mode, true)
    }

    /// Time derivative without the collision term (the non-stiff part).
    pub fn rhs_explicit(&self, coeffs: &[Complex64], mode: RhsMode) -> Vec<Complex64> {
        self.evaluate(coeffs, mode, false)
    }
}

/// Convenience wrapper building a throwaway engine.
pub fn rhs(state: &SpectralState, mode: RhsMode) -> Vec<Complex64> {
    RhsEngine::new(state.layout_arc().clone(), Exec::default()).rhs(&state.coeffs, mode)
}

/// Largest stable `dt` for the explicit substeps: `cfl / (K √(2(M+1)) d)`.
pub fn cfl_limit(layout: &Layout, cfl_factor: f64) -> f64 {
    let k = layout.grid.cutoff() as f64;
    let m = layout.basis.cutoff() as f64;
    cfl_factor / (k * (2.0 * (m + 1.0)).sqrt() * layout.dim() as f64)
}

/// Advances a state by a fixed `dt` with one of the [`Scheme`]s.
pub struct Stepper {
    engine: RhsEngine,
    scheme: Scheme,
    mode: RhsMode,
    dt: f64,
    half_decay: Vec<f64>,
    full_decay: Vec<f64>,
    imex_divisor: Vec<f64>,
}

impl Stepper {
    pub fn new(
        layout: Arc<Layout>,
        scheme: Scheme,
        mode: RhsMode,
        dt: f64,
        cfl_factor: f64,
        exec: Exec,
    ) -> Result<Self, StepError> {
        let max_dt = cfl_limit(&layout, cfl_factor);
        if !(dt > 0.0) || dt > max_dt {
            return Err(StepError::Cfl { dt, max_dt });
        }
        let n_m = layout.n_m();
        let level = |mi: usize| layout.basis.level(mi) as f64;
        let half_decay = (0..n_m).map(|mi| (-level(mi) * 0.5 * dt).exp()).collect();
        let full_decay = (0..n_m).map(|mi| (-level(mi) * dt).exp()).collect();
        let imex_divisor = (0..n_m).map(|mi| 1.0 / (1.0 + dt * level(mi))).collect();
        Ok(Self {
            engine: RhsEngine::new(layout, exec),
            scheme,
            mode,
            dt,
            half_decay,
            full_decay,
            imex_divisor,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn mode(&self) -> RhsMode {
        self.mode
    }

    pub fn engine(&self) -> &RhsEngine {
        &self.engine
    }

    fn apply_diag(&self, diag: &[f64], x: &mut [Complex64]) {
        let n_m = diag.len();
        for (i, c) in x.iter_mut().enumerate() {
            *c *= diag[i % n_m];
        }
    }

    fn scaled(&self, diag: &[f64], x: &[Complex64]) -> Vec<Complex64> {
        let mut y = x.to_vec();
        self.apply_diag(diag, &mut y);
        y
    }

    /// Advances `state` by `dt`; `state.t` is incremented by `dt`.
    pub fn step(&self, state: &mut SpectralState) -> Result<(), StepError> {
        let h = self.dt;
        let f = |x: &[Complex64]| self.engine.rhs_explicit(x, self.mode);
        let g = &mut state.coeffs;
        match self.scheme {
            Scheme::StrangRk4 => {
                self.apply_diag(&self.half_decay, g);
                let k1 = f(g);
                let k2 = f(&axpy(g, 0.5 * h, &k1));
                let k3 = f(&axpy(g, 0.5 * h, &k2));
                let k4 = f(&axpy(g, h, &k3));
                for i in 0..g.len() {
                    g[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                self.apply_diag(&self.half_decay, g);
            }
            Scheme::LawsonRk4 => {
                let half = &self.half_decay;
                let full = &self.full_decay;
                let k1 = f(g);
                let k2 = f(&self.scaled(half, &axpy(g, 0.5 * h, &k1)));
                let eg_half = self.scaled(half, g);
                let k3 = f(&axpy(&eg_half, 0.5 * h, &k2));
                let eg_full = self.scaled(full, g);
                let k4 = f(&axpy(&eg_full, h, &self.scaled(half, &k3)));
                let n_m = half.len();
                for i in 0..g.len() {
                    let m = i % n_m;
                    g[i] = eg_full[i]
                        + (h / 6.0)
                            * (full[m] * k1[i] + 2.0 * half[m] * (k2[i] + k3[i]) + k4[i]);
                }
            }
            Scheme::ImexEuler => {
                let k1 = f(g);
                let n_m = self.imex_divisor.len();
                for i in 0..g.len() {
                    g[i] = (g[i] + h * k1[i]) * self.imex_divisor[i % n_m];
                }
            }
        }
        state.t += h;
        if state.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(StepError::Divergence { t: state.t });
        }
        Ok(())
    }
}

fn axpy(x: &[Complex64], a: f64, y: &[Complex64]) -> Vec<Complex64> {
    x.iter().zip(y).map(|(&xi, &yi)| xi + a * yi).collect()
}

/// Residual of a balance law: absolute max and the magnitude of its largest term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub abs: f64,
    pub scale: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.abs / self.scale
        } else {
            self.abs
        }
    }
}

/// `max_k |∂_t σ̂(k) + i k·û(k)|` with `∂_t σ̂` read from the right-hand side.
pub fn continuity_residual(engine: &RhsEngine, state: &SpectralState, mode: RhsMode) -> Residual {
    let layout = state.layout();
    let d = engine.rhs(&state.coeffs, mode);
    let mut res = Residual { abs: 0.0, scale: 0.0 };
    for ki in 0..layout.n_k() {
        let k = layout.grid.wavevector(ki);
        let dsigma = d[layout.flat(ki, 0)];
        let mut div = ZERO;
        for j in 0..layout.dim() {
            div += Complex64::new(0.0, k[j] as f64) * state.coeffs[layout.flat(ki, layout.basis.unit(j))];
        }
        res.abs = res.abs.max((dsigma + div).norm());
        res.scale = res.scale.max(dsigma.norm()).max(div.norm());
    }
    res
}

/// Residual of the velocity balance
/// `∂_t u_i + ∂_i σ + ∂_i φ + σ ∂_i φ + u_i + ∂_j ⟨v_i v_j √μ, (I−P) g⟩ = 0`,
/// every term evaluated independently from the coefficients.
///
/// The second moments are read from level-2 slots:
/// `⟨v_i v_j √μ, h⟩ = ĥ(e_i + e_j)` for `i ≠ j` and `√2 ĥ(2 e_i)` for `i = j`.
pub fn momentum_residual(
    engine: &RhsEngine,
    state: &SpectralState,
    mode: RhsMode,
) -> Result<Residual, StepError> {
    let layout = state.layout();
    if layout.basis.cutoff() < 2 {
        return Err(StepError::Unsupported(
            "momentum residual needs hermite_cutoff >= 2".into(),
        ));
    }
    let dim = layout.dim();
    let d = engine.rhs(&state.coeffs, mode);
    let sigma = density(layout, &state.coeffs);
    let phi = potential(layout, &state.coeffs);
    let grad_phi = field::spectral_gradient(&layout.grid, &phi);
    // σ ∂_i φ with its own direct convolution, independent of the quadratic RHS path
    let products: Vec<Vec<Complex64>> = if mode == RhsMode::Full {
        let conv = Convolver::new(layout.grid.clone(), ConvolutionMethod::Direct, Exec::Sequential);
        (0..dim)
            .map(|i| {
                conv.convolve(
                    &[ConvolutionTerm {
                        scalar: &grad_phi[i],
                        vector: &sigma,
                    }],
                    1,
                )
            })
            .collect()
    } else {
        vec![vec![ZERO; layout.n_k()]; dim]
    };
    let second_moment = |ki: usize, i: usize, j: usize| -> Complex64 {
        let mut m = [0u32; 3];
        m[i] += 1;
        m[j] += 1;
        let v = state.coeffs[layout.flat(ki, layout.basis.index_of(&m).unwrap())];
        if i == j {
            std::f64::consts::SQRT_2 * v
        } else {
            v
        }
    };
    let mut res = Residual { abs: 0.0, scale: 0.0 };
    for ki in 0..layout.n_k() {
        let k = layout.grid.wavevector(ki);
        for i in 0..dim {
            let ik_i = Complex64::new(0.0, k[i] as f64);
            let ei = layout.basis.unit(i);
            let mut flux = ZERO;
            for j in 0..dim {
                flux += Complex64::new(0.0, k[j] as f64) * second_moment(ki, i, j);
            }
            let terms = [
                d[layout.flat(ki, ei)],
                ik_i * sigma[ki],
                ik_i * phi[ki],
                products[i][ki],
                state.coeffs[layout.flat(ki, ei)],
                flux,
            ];
            let total: Complex64 = terms.iter().sum();
            res.abs = res.abs.max(total.norm());
            for t in terms {
                res.scale = res.scale.max(t.norm());
            }
        }
    }
    Ok(res)
}
