//! Velocity-space algebra in the normalized Hermite basis
//! `ψ_m(v) = Π_i He_{m_i}(v_i)/√(m_i!) · √μ(v)`.
//!
//! In this basis multiplication by `v_i` is `A_i + C_i` and `∂_{v_i}` is
//! `(A_i − C_i)/2`, where the annihilation `A_i` lowers `m_i` with weight `√m_i` and
//! the creation `C_i = v_i/2 − ∂_{v_i}` raises it with weight `√(m_i+1)`. Creation out
//! of level `M` is dropped, so `C_i = A_iᵀ` holds exactly on the truncated basis.
//! The linearized Fokker–Planck operator is diagonal: `L ψ_m = −|m| ψ_m`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::state::{HermiteIndex, MAX_DENSE_BLOCK};

#[derive(Debug, thiserror::Error)]
pub enum HermiteError {
    #[error("coercivity eigensolve did not converge for (d={dim}, M={cutoff}, {mode:?})")]
    EigenFailed {
        dim: usize,
        cutoff: usize,
        mode: CoercivityMode,
    },
    #[error("coercivity subspace is empty for (d={dim}, M={cutoff}, {mode:?}); need M >= 2")]
    EmptySubspace {
        dim: usize,
        cutoff: usize,
        mode: CoercivityMode,
    },
    #[error("Hermite block of size {0} exceeds the dense limit {MAX_DENSE_BLOCK}")]
    TooLarge(usize),
}

/// Tensor Hermite multi-indices `m ∈ [0, M]^d` in lexicographic order, with
/// precomputed ladder neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteBasis {
    dim: usize,
    cutoff: usize,
    indices: Vec<HermiteIndex>,
    levels: Vec<u32>,
    raise: Vec<[Option<usize>; 3]>,
    lower: Vec<[Option<usize>; 3]>,
    sqrt: Vec<f64>,
}

impl HermiteBasis {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        let side = cutoff + 1;
        let n = side.pow(dim as u32);
        let mut indices = Vec::with_capacity(n);
        for flat in 0..n {
            let mut m = [0u32; 3];
            let mut rem = flat;
            for c in (0..dim).rev() {
                m[c] = (rem % side) as u32;
                rem /= side;
            }
            indices.push(m);
        }
        // stride of direction c in the flat index
        let stride = |c: usize| side.pow((dim - 1 - c) as u32);
        let mut raise = vec![[None; 3]; n];
        let mut lower = vec![[None; 3]; n];
        for (i, m) in indices.iter().enumerate() {
            for c in 0..dim {
                if (m[c] as usize) < cutoff {
                    raise[i][c] = Some(i + stride(c));
                }
                if m[c] > 0 {
                    lower[i][c] = Some(i - stride(c));
                }
            }
        }
        let levels = indices.iter().map(|m| m.iter().sum()).collect();
        let sqrt = (0..=cutoff + 2).map(|j| (j as f64).sqrt()).collect();
        Self {
            dim,
            cutoff,
            indices,
            levels,
            raise,
            lower,
            sqrt,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> HermiteIndex {
        self.indices[i]
    }

    pub fn indices(&self) -> &[HermiteIndex] {
        &self.indices
    }

    /// `|m| = Σ m_i`.
    pub fn level(&self, i: usize) -> u32 {
        self.levels[i]
    }

    pub fn index_of(&self, m: &[u32]) -> Option<usize> {
        let side = self.cutoff + 1;
        let mut flat = 0usize;
        for c in 0..self.dim {
            let mc = m.get(c).copied().unwrap_or(0) as usize;
            if mc > self.cutoff {
                return None;
            }
            flat = flat * side + mc;
        }
        if m.iter().skip(self.dim).any(|&c| c != 0) {
            return None;
        }
        Some(flat)
    }

    /// Index of the unit multi-index `e_dir` (requires `M ≥ 1`).
    pub fn unit(&self, dir: usize) -> usize {
        let mut m = [0u32; 3];
        m[dir] = 1;
        self.index_of(&m).expect("M >= 1 required for unit indices")
    }

    /// Index of `m + e_dir`, if still inside the truncation.
    pub fn raised(&self, i: usize, dir: usize) -> Option<usize> {
        self.raise[i][dir]
    }

    /// Index of `m − e_dir`, if `m_dir > 0`.
    pub fn lowered(&self, i: usize, dir: usize) -> Option<usize> {
        self.lower[i][dir]
    }

    /// `√j`, tabulated for `j ≤ M + 2`.
    pub fn sqrt_int(&self, j: u32) -> f64 {
        self.sqrt[j as usize]
    }

    /// `out += scale · C_dir x`.
    pub fn add_creation(&self, dir: usize, scale: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        for (i, &xi) in x.iter().enumerate() {
            if let Some(j) = self.raise[i][dir] {
                out[j] += scale * (self.sqrt[self.indices[i][dir] as usize + 1] * xi);
            }
        }
    }

    /// `out += scale · A_dir x`.
    pub fn add_annihilation(
        &self,
        dir: usize,
        scale: Complex64,
        x: &[Complex64],
        out: &mut [Complex64],
    ) {
        for (i, &xi) in x.iter().enumerate() {
            if let Some(j) = self.lower[i][dir] {
                out[j] += scale * (self.sqrt[self.indices[i][dir] as usize] * xi);
            }
        }
    }

    /// `out += scale · (A_dir + C_dir) x`, i.e. multiplication by `v_dir`.
    pub fn add_velocity(&self, dir: usize, scale: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let mi = self.indices[i][dir] as usize;
            // (A x)(m) = √(m+1) x(m+e); (C x)(m) = √m x(m−e)
            if let Some(j) = self.raise[i][dir] {
                acc += self.sqrt[mi + 1] * x[j];
            }
            if let Some(j) = self.lower[i][dir] {
                acc += self.sqrt[mi] * x[j];
            }
            *o += scale * acc;
        }
    }

    pub fn apply_creation(&self, dir: usize, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        self.add_creation(dir, Complex64::new(1.0, 0.0), x, &mut out);
        out
    }

    pub fn apply_annihilation(&self, dir: usize, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        self.add_annihilation(dir, Complex64::new(1.0, 0.0), x, &mut out);
        out
    }

    /// `L x` with `L ψ_m = −|m| ψ_m`.
    pub fn apply_fokker_planck(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter()
            .zip(&self.levels)
            .map(|(c, &l)| -(l as f64) * c)
            .collect()
    }

    /// `⟨x, −L x⟩ = Σ |m| |x_m|²`.
    pub fn dissipation_form(&self, x: &[Complex64]) -> f64 {
        x.iter()
            .zip(&self.levels)
            .map(|(c, &l)| l as f64 * c.norm_sqr())
            .sum()
    }

    pub fn in_projection(&self, i: usize, which: Projection) -> bool {
        let l = self.levels[i];
        match which {
            Projection::P0 => l == 0,
            Projection::P1 => l == 1,
            Projection::P => l <= 1,
            Projection::ComplementP0 => l != 0,
            Projection::ComplementP => l >= 2,
        }
    }

    pub fn project(&self, x: &[Complex64], which: Projection) -> Vec<Complex64> {
        x.iter()
            .enumerate()
            .map(|(i, &c)| {
                if self.in_projection(i, which) {
                    c
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }
}

/// Velocity projections onto `√μ`, `v√μ` and their sum, plus complements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    P0,
    P1,
    P,
    ComplementP0,
    ComplementP,
}

/// Quadratic form of `|h|²_ν = ∫ (|∇_v h|² + (1+|v|²) h²) dv` on the Hermite basis.
///
/// Per direction the one-dimensional part `∫ (|∂_v h|² + v² h²)` is pentadiagonal
/// (only offsets 0 and ±2), with diagonal `5(2m+1)/4` and off-diagonal
/// `¾ √((m+1)(m+2))`; these are exact Gram entries, not truncated products.
#[derive(Clone, Debug, PartialEq)]
pub struct NuForm {
    dim: usize,
    side: usize,
    diag: Vec<f64>,
    off2: Vec<f64>,
}

impl NuForm {
    pub fn new(basis: &HermiteBasis) -> Self {
        let side = basis.cutoff() + 1;
        let diag = (0..side).map(|m| 1.25 * (2 * m + 1) as f64).collect();
        let off2 = (0..side.saturating_sub(2))
            .map(|m| 0.75 * (((m + 1) * (m + 2)) as f64).sqrt())
            .collect();
        Self {
            dim: basis.dim(),
            side,
            diag,
            off2,
        }
    }

    /// One-dimensional entry `R[a][b]` of `∫ (ψ_a' ψ_b' + v² ψ_a ψ_b)`.
    pub fn entry_1d(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.diag[a]
        } else if a + 2 == b {
            self.off2[a]
        } else if b + 2 == a {
            self.off2[b]
        } else {
            0.0
        }
    }

    /// `Q x`.
    pub fn apply(&self, basis: &HermiteBasis, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        for (i, o) in out.iter_mut().enumerate() {
            let m = basis.index(i);
            for dir in 0..self.dim {
                let md = m[dir] as usize;
                *o += self.diag[md] * x[i];
                let stride = self.side.pow((self.dim - 1 - dir) as u32);
                if md >= 2 {
                    *o += self.off2[md - 2] * x[i - 2 * stride];
                }
                if md + 2 < self.side {
                    *o += self.off2[md] * x[i + 2 * stride];
                }
            }
        }
        out
    }

    /// `x* Q x`, which is real because `Q` is real symmetric.
    pub fn norm_sq(&self, basis: &HermiteBasis, x: &[Complex64]) -> f64 {
        let qx = self.apply(basis, x);
        x.iter().zip(&qx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn dense(&self, basis: &HermiteBasis) -> DMatrix<f64> {
        let n = basis.len();
        let mut q = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.apply(basis, &e);
            for i in 0..n {
                q[(i, j)] = col[i].re;
            }
        }
        q
    }
}

/// Subspace on which the coercivity constant is minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoercivityMode {
    /// `⟨g, −Lg⟩ ≥ λ0 |(I−P0) g|²_ν`.
    ComplementP0,
    /// `⟨g, −Lg⟩ ≥ λ0 |(I−P) g|²_ν + |u|²`.
    ComplementP,
}

impl CoercivityMode {
    pub fn name(self) -> &'static str {
        match self {
            CoercivityMode::ComplementP0 => "complement_P0",
            CoercivityMode::ComplementP => "complement_P",
        }
    }

    fn projection(self) -> Projection {
        match self {
            CoercivityMode::ComplementP0 => Projection::ComplementP0,
            CoercivityMode::ComplementP => Projection::ComplementP,
        }
    }
}

/// Result of the coercivity eigensolve.
#[derive(Clone, Debug)]
pub struct Coercivity {
    pub lambda0: f64,
    /// Real minimizing vector over the full basis (zero outside the subspace),
    /// normalized so that its ν-norm is 1.
    pub minimizer: Vec<f64>,
}

/// Minimum of `⟨g, −Lg⟩ / |g|²_ν` over the complement subspace of `mode`.
///
/// Solved as the generalized problem `diag(|m|) x = λ Q x`: with `D = diag(|m|)`
/// positive on the subspace, `λ_min = 1 / λ_max(D^{-1/2} Q D^{-1/2})`.
pub fn coercivity_lambda0(
    basis: &HermiteBasis,
    nu: &NuForm,
    mode: CoercivityMode,
) -> Result<Coercivity, HermiteError> {
    if basis.len() > MAX_DENSE_BLOCK {
        return Err(HermiteError::TooLarge(basis.len()));
    }
    let sub: Vec<usize> = (0..basis.len())
        .filter(|&i| basis.in_projection(i, mode.projection()))
        .collect();
    if sub.is_empty() {
        return Err(HermiteError::EmptySubspace {
            dim: basis.dim(),
            cutoff: basis.cutoff(),
            mode,
        });
    }
    let q = nu.dense(basis);
    let n = sub.len();
    let inv_sqrt: Vec<f64> = sub
        .iter()
        .map(|&i| 1.0 / (basis.level(i) as f64).sqrt())
        .collect();
    let scaled = DMatrix::<f64>::from_fn(n, n, |a, b| {
        inv_sqrt[a] * q[(sub[a], sub[b])] * inv_sqrt[b]
    });
    let failed = || HermiteError::EigenFailed {
        dim: basis.dim(),
        cutoff: basis.cutoff(),
        mode,
    };
    let eig = SymmetricEigen::try_new(scaled, 1e-15, 10_000).ok_or_else(failed)?;
    let (top, &mu_max) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(failed)?;
    if !(mu_max.is_finite() && mu_max > 0.0) {
        return Err(failed());
    }
    let y = eig.eigenvectors.column(top);
    let mut minimizer = vec![0.0; basis.len()];
    for (a, &i) in sub.iter().enumerate() {
        minimizer[i] = inv_sqrt[a] * y[a];
    }
    let x: Vec<Complex64> = minimizer.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let norm = nu.norm_sq(basis, &x).sqrt();
    minimizer.iter_mut().for_each(|v| *v /= norm);
    // deterministic sign: largest-magnitude entry positive
    let pivot = minimizer
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if pivot < 0.0 {
        minimizer.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(Coercivity {
        lambda0: 1.0 / mu_max,
        minimizer,
    })
}

/// `κ = min{λ0/2, 1/8}`.
pub fn kappa(lambda0: f64) -> f64 {
    (0.5 * lambda0).min(0.125)
}

/// Decay rate `η = 2κ/5`.
pub fn eta(kappa: f64) -> f64 {
    0.4 * kappa
}
