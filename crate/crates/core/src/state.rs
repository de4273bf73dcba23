//! Coefficient layout, simulation configuration, initial data and state validation.
//!
//! Coefficients are stored k-major: the flat index of `(k, m)` is
//! `k_index(k) * n_m + m_index(m)`, with both wavevectors and Hermite indices
//! enumerated lexicographically (first component most significant). Because the
//! wavevector range is symmetric, the index of `-k` is `n_k - 1 - k_index(k)`.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics;
use crate::dynamics::{RhsMode, Scheme};
use crate::hermite::{CoercivityMode, HermiteBasis};

/// Wavevector padded with zeros beyond the active dimension.
pub type Wavevector = [i32; 3];
/// Hermite multi-index padded with zeros beyond the active dimension.
pub type HermiteIndex = [u32; 3];

/// Largest dense block the code will assemble for a single wavevector.
pub const MAX_DENSE_BLOCK: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initial condition rejected: {0}")]
    InitialCondition(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
}

/// Integer wavevectors `k ∈ {-K..K}^d` on the torus of side 2π.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierGrid {
    dim: usize,
    cutoff: usize,
    wavevectors: Vec<Wavevector>,
    norm_sq: Vec<f64>,
}

impl FourierGrid {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        let side = 2 * cutoff + 1;
        let n = side.pow(dim as u32);
        let k_max = cutoff as i32;
        let mut wavevectors = Vec::with_capacity(n);
        for flat in 0..n {
            let mut k = [0i32; 3];
            let mut rem = flat;
            for c in (0..dim).rev() {
                k[c] = (rem % side) as i32 - k_max;
                rem /= side;
            }
            wavevectors.push(k);
        }
        let norm_sq = wavevectors
            .iter()
            .map(|k| k.iter().map(|&c| (c as f64) * (c as f64)).sum())
            .collect();
        Self {
            dim,
            cutoff,
            wavevectors,
            norm_sq,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.wavevectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavevectors.is_empty()
    }

    pub fn wavevector(&self, index: usize) -> Wavevector {
        self.wavevectors[index]
    }

    pub fn wavevectors(&self) -> &[Wavevector] {
        &self.wavevectors
    }

    /// `|k|²` for the wavevector at `index`.
    pub fn norm_sq(&self, index: usize) -> f64 {
        self.norm_sq[index]
    }

    pub fn index_of(&self, k: &[i32]) -> Option<usize> {
        let side = 2 * self.cutoff + 1;
        let k_max = self.cutoff as i32;
        let mut flat = 0usize;
        for c in 0..self.dim {
            let kc = k.get(c).copied().unwrap_or(0);
            if kc.abs() > k_max {
                return None;
            }
            flat = flat * side + (kc + k_max) as usize;
        }
        if k.iter().skip(self.dim).any(|&c| c != 0) {
            return None;
        }
        Some(flat)
    }

    /// Index of `-k`.
    pub fn partner(&self, index: usize) -> usize {
        self.len() - 1 - index
    }

    /// Index of `k = 0`.
    pub fn zero_index(&self) -> usize {
        (self.len() - 1) / 2
    }
}

/// Full `(k, m)` layout of a coefficient tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub grid: FourierGrid,
    pub basis: HermiteBasis,
}

impl Layout {
    pub fn new(dim: usize, fourier_cutoff: usize, hermite_cutoff: usize) -> Self {
        Self {
            grid: FourierGrid::new(dim, fourier_cutoff),
            basis: HermiteBasis::new(dim, hermite_cutoff),
        }
    }

    pub fn from_config(config: &SimConfig) -> Self {
        Self::new(config.dim, config.fourier_cutoff, config.hermite_cutoff)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn n_k(&self) -> usize {
        self.grid.len()
    }

    pub fn n_m(&self) -> usize {
        self.basis.len()
    }

    pub fn len(&self) -> usize {
        self.n_k() * self.n_m()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, k_index: usize, m_index: usize) -> usize {
        k_index * self.n_m() + m_index
    }

    /// Inverse of [`Layout::flat`].
    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat / self.n_m(), flat % self.n_m())
    }

    pub fn index_of(&self, k: &[i32], m: &[u32]) -> Option<usize> {
        Some(self.flat(self.grid.index_of(k)?, self.basis.index_of(m)?))
    }

    /// Flat index of the mass slot `(k = 0, m = 0)`.
    pub fn mass_index(&self) -> usize {
        self.flat(self.grid.zero_index(), 0)
    }
}

/// Every `(k, m)` pair in storage order; position in the list is the flat index.
pub fn enumerate_layout(layout: &Layout) -> Vec<(Wavevector, HermiteIndex)> {
    let mut out = Vec::with_capacity(layout.len());
    for &k in layout.grid.wavevectors() {
        for &m in layout.basis.indices() {
            out.push((k, m));
        }
    }
    out
}

/// Initial-data descriptor.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// Real cosine mode: `a/2` at `±k` (or `a` at `k = 0`).
    SingleMode {
        k: Wavevector,
        m: HermiteIndex,
        amplitude: f64,
    },
    /// Random phases with magnitude `a (1+|k|)^{-p} 2^{-|m|}`, optionally rescaled so
    /// that `Ẽ_N(0)` equals `target_energy`.
    RandomSmooth {
        amplitude: f64,
        decay_exponent: f64,
        seed: u64,
        target_energy: Option<f64>,
    },
}

/// Which value of λ0 feeds κ and the dissipation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda0Choice {
    Computed(CoercivityMode),
    Manual(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dim: usize,
    pub fourier_cutoff: usize,
    pub hermite_cutoff: usize,
    pub sobolev_order: usize,
    pub dt: f64,
    pub t_end: f64,
    pub report_interval: f64,
    pub ic: InitialCondition,
    pub lambda0: Lambda0Choice,
    pub scheme: Scheme,
    pub rhs_mode: RhsMode,
    pub cfl_factor: f64,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many reports; 0 disables checkpoints.
    pub checkpoint_every: u64,
    /// Smallness threshold ε₀ for `E_N(0)`; exceeding it is reported, not fatal.
    pub epsilon0: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let dt = 1e-3;
        Self {
            dim: 1,
            fourier_cutoff: 8,
            hermite_cutoff: 16,
            sobolev_order: 3,
            dt,
            t_end: 10.0,
            report_interval: 10.0 * dt,
            ic: InitialCondition::RandomSmooth {
                amplitude: 1e-2,
                decay_exponent: 4.0,
                seed: 7,
                target_energy: None,
            },
            lambda0: Lambda0Choice::Computed(CoercivityMode::ComplementP),
            scheme: Scheme::StrangRk4,
            rhs_mode: RhsMode::Full,
            cfl_factor: 1.0,
            out_dir: PathBuf::from("out"),
            checkpoint_every: 0,
            epsilon0: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), StateError> {
        let bad = |msg: String| Err(StateError::InvalidConfig(msg));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dim must be 1, 2 or 3 (got {})", self.dim));
        }
        if self.fourier_cutoff < 1 {
            return bad("fourier_cutoff must be at least 1".into());
        }
        if self.hermite_cutoff < 2 {
            return bad(format!(
                "hermite_cutoff must be at least 2 (got {}); the momentum balance reads level-2 moments",
                self.hermite_cutoff
            ));
        }
        if self.sobolev_order < 1 {
            return bad("sobolev_order must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be nonnegative".into());
        }
        if !(self.report_interval > 0.0 && self.report_interval.is_finite()) {
            return bad("report_interval must be positive".into());
        }
        let ratio = self.report_interval / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return bad(format!(
                "report_interval ({}) must be a positive integer multiple of dt ({})",
                self.report_interval, self.dt
            ));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor.is_finite()) {
            return bad("cfl_factor must be positive".into());
        }
        if let Lambda0Choice::Manual(v) = self.lambda0 {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("manual lambda0 must be positive (got {v})"));
            }
        }
        let n_m = (self.hermite_cutoff + 1).pow(self.dim as u32);
        if n_m > MAX_DENSE_BLOCK {
            return bad(format!(
                "(hermite_cutoff+1)^dim = {n_m} exceeds the supported block size {MAX_DENSE_BLOCK}"
            ));
        }
        Ok(())
    }

    /// Number of steps between two reports.
    pub fn steps_per_report(&self) -> u64 {
        (self.report_interval / self.dt).round() as u64
    }

    /// Total number of steps to reach `t_end` (rounded to the nearest step).
    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }
}

/// Coefficient tensor `ĝ(k, m)` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub t: f64,
    pub coeffs: Vec<Complex64>,
    layout: Arc<Layout>,
}

impl SpectralState {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self {
            t: 0.0,
            coeffs: vec![Complex64::new(0.0, 0.0); layout.len()],
            layout,
        }
    }

    pub fn from_coeffs(
        layout: Arc<Layout>,
        t: f64,
        coeffs: Vec<Complex64>,
    ) -> Result<Self, StateError> {
        if coeffs.len() != layout.len() {
            return Err(StateError::LayoutMismatch(format!(
                "expected {} coefficients, got {}",
                layout.len(),
                coeffs.len()
            )));
        }
        Ok(Self { t, coeffs, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn layout_arc(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn get(&self, k: &[i32], m: &[u32]) -> Option<Complex64> {
        self.layout.index_of(k, m).map(|i| self.coeffs[i])
    }

    /// Sets `ĝ(k, m)`; panics if the index is outside the layout.
    pub fn set(&mut self, k: &[i32], m: &[u32], value: Complex64) {
        let i = self
            .layout
            .index_of(k, m)
            .unwrap_or_else(|| panic!("index k={k:?} m={m:?} outside layout"));
        self.coeffs[i] = value;
    }

    /// Hermite coefficients at one wavevector.
    pub fn k_slice(&self, k_index: usize) -> &[Complex64] {
        let n_m = self.layout.n_m();
        &self.coeffs[k_index * n_m..(k_index + 1) * n_m]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Plain `Σ |ĝ|²`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    NonFinite,
    Neutrality,
    Realness,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViolationKind::NonFinite => "non-finite",
            ViolationKind::Neutrality => "neutrality",
            ViolationKind::Realness => "realness",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub k: Wavevector,
    pub m: HermiteIndex,
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} violation at k={:?} m={:?}: magnitude {:e}",
            self.kind, self.k, self.m, self.magnitude
        )
    }
}

/// Relative tolerance for the realness and neutrality checks.
pub const VALIDATION_RTOL: f64 = 1e-12;

/// Lists every broken state invariant. Realness is checked once per `{k, -k}` pair.
pub fn validate_state(state: &SpectralState) -> Vec<Violation> {
    let layout = state.layout();
    let mut out = Vec::new();
    for (i, c) in state.coeffs.iter().enumerate() {
        if !c.re.is_finite() || !c.im.is_finite() {
            let (ki, mi) = layout.split(i);
            out.push(Violation {
                kind: ViolationKind::NonFinite,
                k: layout.grid.wavevector(ki),
                m: layout.basis.index(mi),
                magnitude: f64::NAN,
            });
        }
    }
    if !out.is_empty() {
        return out;
    }
    let tol = VALIDATION_RTOL * state.max_abs();
    let mass = state.coeffs[layout.mass_index()].norm();
    if mass > tol {
        out.push(Violation {
            kind: ViolationKind::Neutrality,
            k: [0; 3],
            m: [0; 3],
            magnitude: mass,
        });
    }
    let n_m = layout.n_m();
    for ki in 0..=layout.grid.zero_index() {
        let pi = layout.grid.partner(ki);
        for mi in 0..n_m {
            let a = state.coeffs[layout.flat(ki, mi)];
            let b = state.coeffs[layout.flat(pi, mi)];
            let gap = (a - b.conj()).norm();
            if gap > tol {
                out.push(Violation {
                    kind: ViolationKind::Realness,
                    k: layout.grid.wavevector(ki),
                    m: layout.basis.index(mi),
                    magnitude: gap,
                });
            }
        }
    }
    out
}

/// Initial state together with its `Ẽ_N(0)`.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub state: SpectralState,
    pub tilde_energy: f64,
}

pub fn init_state(config: &SimConfig) -> Result<InitialData, StateError> {
    config.validate()?;
    let layout = Arc::new(Layout::from_config(config));
    let state = build_initial(layout, &config.ic, config.sobolev_order)?;
    let violations = validate_state(&state);
    if let Some(v) = violations.first() {
        return Err(StateError::InitialCondition(v.to_string()));
    }
    let tilde_energy = diagnostics::tilde_energy(&state, config.sobolev_order);
    Ok(InitialData {
        state,
        tilde_energy,
    })
}

/// Builds the initial coefficients for `ic` on `layout`.
pub fn build_initial(
    layout: Arc<Layout>,
    ic: &InitialCondition,
    sobolev_order: usize,
) -> Result<SpectralState, StateError> {
    let mut state = SpectralState::zeros(layout.clone());
    match *ic {
        InitialCondition::Zero => {}
        InitialCondition::SingleMode { k, m, amplitude } => {
            let ki = layout.grid.index_of(&k).ok_or_else(|| {
                StateError::InitialCondition(format!("wavevector {k:?} outside the grid"))
            })?;
            let mi = layout.basis.index_of(&m).ok_or_else(|| {
                StateError::InitialCondition(format!("Hermite index {m:?} outside the basis"))
            })?;
            if ki == layout.grid.zero_index() {
                if mi == 0 && amplitude != 0.0 {
                    return Err(StateError::InitialCondition(format!(
                        "neutrality: g(0,0) = {amplitude} must vanish on the torus"
                    )));
                }
                state.coeffs[layout.flat(ki, mi)] = Complex64::new(amplitude, 0.0);
            } else {
                let half = Complex64::new(0.5 * amplitude, 0.0);
                state.coeffs[layout.flat(ki, mi)] = half;
                state.coeffs[layout.flat(layout.grid.partner(ki), mi)] = half;
            }
        }
        InitialCondition::RandomSmooth {
            amplitude,
            decay_exponent,
            seed,
            target_energy,
        } => {
            fill_random_smooth(&mut state, amplitude, decay_exponent, seed);
            if let Some(target) = target_energy {
                if !(target >= 0.0 && target.is_finite()) {
                    return Err(StateError::InitialCondition(format!(
                        "target energy must be nonnegative (got {target})"
                    )));
                }
                let current = diagnostics::tilde_energy(&state, sobolev_order);
                if current > 0.0 {
                    let s = (target / current).sqrt();
                    state.coeffs.iter_mut().for_each(|c| *c *= s);
                }
            }
        }
    }
    Ok(state)
}

fn fill_random_smooth(state: &mut SpectralState, amplitude: f64, decay: f64, seed: u64) {
    let layout = state.layout_arc().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = layout.grid.zero_index();
    for ki in zero..layout.n_k() {
        let pi = layout.grid.partner(ki);
        let k_norm = layout.grid.norm_sq(ki).sqrt();
        let k_decay = (1.0 + k_norm).powf(-decay);
        for mi in 0..layout.n_m() {
            let level = layout.basis.level(mi);
            let scale = amplitude * k_decay * 0.5f64.powi(level as i32);
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            let value = if ki == zero {
                if mi == 0 {
                    continue;
                }
                Complex64::new(scale * re, 0.0)
            } else {
                Complex64::new(scale * re, scale * im)
            };
            state.coeffs[layout.flat(ki, mi)] = value;
            state.coeffs[layout.flat(pi, mi)] = value.conj();
        }
    }
}
