//! Dense per-wavevector reference for the linearized system.
//!
//! Without the quadratic term the system decouples across Fourier modes: each
//! `ĝ(k, ·)` obeys `d/dt x = G(k) x` with
//!
//! ```text
//! G(k) = −i Σ_j k_j (A_j + C_j) − diag(|m|) + (field coupling: column m=0 → row e_j, −i k_j/|k|²)
//! ```
//!
//! The matrices here are assembled entry by entry from those rules, independently of
//! the matrix-free right-hand side in [`crate::dynamics`].

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::exec::Exec;
use crate::state::{Layout, SpectralState, Wavevector, MAX_DENSE_BLOCK};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("dense block of size {0} exceeds the limit {MAX_DENSE_BLOCK}")]
    TooLarge(usize),
    #[error("eigensolve failed at k = {0:?}")]
    EigenFailed(Wavevector),
    #[error("trajectory mismatch: {0}")]
    Mismatch(String),
    #[error("negative evolution time {0}")]
    NegativeTime(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGenerator {
    pub k: Wavevector,
    pub matrix: DMatrix<Complex64>,
}

pub fn assemble_generator(layout: &Layout, k_index: usize) -> Result<DenseGenerator, OracleError> {
    let basis = &layout.basis;
    let n = basis.len();
    if n > MAX_DENSE_BLOCK {
        return Err(OracleError::TooLarge(n));
    }
    let k = layout.grid.wavevector(k_index);
    let k2 = layout.grid.norm_sq(k_index);
    let mut g = DMatrix::<Complex64>::zeros(n, n);
    for col in 0..n {
        let m = basis.index(col);
        g[(col, col)] = Complex64::new(-(basis.level(col) as f64), 0.0);
        for j in 0..layout.dim() {
            if k[j] == 0 {
                continue;
            }
            let coef = Complex64::new(0.0, -(k[j] as f64));
            // v_j ψ_m = √(m_j+1) ψ_{m+e_j} + √m_j ψ_{m−e_j}
            if let Some(row) = basis.raised(col, j) {
                g[(row, col)] += coef * ((m[j] + 1) as f64).sqrt();
            }
            if let Some(row) = basis.lowered(col, j) {
                g[(row, col)] += coef * (m[j] as f64).sqrt();
            }
            if col == 0 {
                g[(basis.unit(j), 0)] += coef / k2;
            }
        }
    }
    Ok(DenseGenerator { k, matrix: g })
}

/// `exp(G t) g0` via Padé scaling and squaring.
pub fn evolve_dense(gen: &DenseGenerator, g0: &[Complex64], t: f64) -> Result<Vec<Complex64>, OracleError> {
    if t < 0.0 {
        return Err(OracleError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(g0.to_vec());
    }
    let e = (&gen.matrix * Complex64::new(t, 0.0)).exp();
    let x = DVector::from_column_slice(g0);
    Ok((e * x).iter().copied().collect())
}

/// Eigenvalues of a generator.
///
/// The similarity `S = diag(i^{|m|})` maps every generator to a real matrix (transport
/// entries pick up `i^{±1}`, the field entry `i^{-1}`), so a real Schur form suffices.
pub fn generator_eigenvalues(gen: &DenseGenerator, basis: &crate::hermite::HermiteBasis) -> Result<Vec<Complex64>, OracleError> {
    let n = gen.matrix.nrows();
    let phase = |i: usize| -> Complex64 {
        match basis.level(i) % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    };
    let real = DMatrix::<f64>::from_fn(n, n, |a, b| {
        let v = phase(a).conj() * gen.matrix[(a, b)] * phase(b);
        debug_assert!(v.im.abs() <= 1e-12 * (1.0 + v.re.abs()));
        v.re
    });
    let schur = Schur::try_new(real, 1e-15, 100_000).ok_or(OracleError::EigenFailed(gen.k))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// `max_{k≠0} max Re λ(G(k))`.
    pub abscissa: f64,
    pub k: Wavevector,
    pub eigenvalue: Complex64,
    /// Per nonzero wavevector: `(k, max Re λ)`, in layout order.
    pub per_k: Vec<(Wavevector, f64)>,
}

pub fn spectral_abscissa(layout: &Layout, exec: Exec) -> Result<SpectrumReport, OracleError> {
    let zero = layout.grid.zero_index();
    let per: Vec<Result<(Wavevector, Complex64), OracleError>> = exec.map(layout.n_k(), |ki| {
        let gen = assemble_generator(layout, ki)?;
        let eig = generator_eigenvalues(&gen, &layout.basis)?;
        let top = eig
            .into_iter()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .ok_or(OracleError::EigenFailed(gen.k))?;
        Ok((gen.k, top))
    });
    let mut report = SpectrumReport {
        abscissa: f64::NEG_INFINITY,
        k: [0; 3],
        eigenvalue: Complex64::new(f64::NEG_INFINITY, 0.0),
        per_k: Vec::with_capacity(layout.n_k().saturating_sub(1)),
    };
    for (ki, r) in per.into_iter().enumerate() {
        if ki == zero {
            continue;
        }
        let (k, top) = r?;
        report.per_k.push((k, top.re));
        if top.re > report.abscissa {
            report.abscissa = top.re;
            report.k = k;
            report.eigenvalue = top;
        }
    }
    Ok(report)
}

/// Reference linearized trajectory: `exp(G(k) t) ĝ0(k, ·)` for every `k` and time.
pub fn oracle_trajectory(
    initial: &SpectralState,
    times: &[f64],
    exec: Exec,
) -> Result<Vec<SpectralState>, OracleError> {
    let layout = initial.layout();
    let n_m = layout.n_m();
    let t0 = initial.t;
    let per_k: Vec<Result<Vec<Vec<Complex64>>, OracleError>> = exec.map(layout.n_k(), |ki| {
        let gen = assemble_generator(layout, ki)?;
        let x0 = initial.k_slice(ki);
        times.iter().map(|&t| evolve_dense(&gen, x0, t - t0)).collect()
    });
    let mut states: Vec<SpectralState> = times
        .iter()
        .map(|&t| {
            let mut s = SpectralState::zeros(initial.layout_arc().clone());
            s.t = t;
            s
        })
        .collect();
    for (ki, slices) in per_k.into_iter().enumerate() {
        for (s, x) in states.iter_mut().zip(slices?) {
            s.coeffs[ki * n_m..(ki + 1) * n_m].copy_from_slice(&x);
        }
    }
    Ok(states)
}

/// Max over matching times of `‖a − b‖ / ‖b‖` (plain `‖a − b‖` where `b = 0`).
pub fn compare_trajectories(spectral: &[SpectralState], oracle: &[SpectralState]) -> Result<f64, OracleError> {
    if spectral.len() != oracle.len() {
        return Err(OracleError::Mismatch(format!(
            "{} spectral snapshots vs {} oracle snapshots",
            spectral.len(),
            oracle.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in spectral.iter().zip(oracle) {
        if a.layout() != b.layout() {
            return Err(OracleError::Mismatch("layouts differ".into()));
        }
        if (a.t - b.t).abs() > 1e-9 * (1.0 + b.t.abs()) {
            return Err(OracleError::Mismatch(format!("times differ: {} vs {}", a.t, b.t)));
        }
        let diff: f64 = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).norm_sqr()).sum();
        let norm = b.norm_sq();
        let err = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn k_zero_is_collision_only() {
        let layout = Layout::new(2, 2, 3);
        let gen = assemble_generator(&layout, layout.grid.zero_index()).unwrap();
        for a in 0..layout.n_m() {
            for b in 0..layout.n_m() {
                let want = if a == b { -(layout.basis.level(a) as f64) } else { 0.0 };
                assert_eq!(gen.matrix[(a, b)], Complex64::new(want, 0.0));
            }
        }
        let eig = generator_eigenvalues(&gen, &layout.basis).unwrap();
        assert_eq!(eig.iter().filter(|e| e.norm() < 1e-14).count(), 1);
        let next = eig.iter().filter(|e| e.norm() >= 1e-14).map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        assert!((next + 1.0).abs() < 1e-14);
    }

    #[test]
    fn trace_identity() {
        let layout = Layout::new(2, 2, 3);
        for ki in 0..layout.n_k() {
            let gen = assemble_generator(&layout, ki).unwrap();
            let trace: Complex64 = (0..layout.n_m()).map(|i| gen.matrix[(i, i)]).sum();
            let want: f64 = -(0..layout.n_m()).map(|i| layout.basis.level(i) as f64).sum::<f64>();
            assert_eq!(trace, Complex64::new(want, 0.0));
        }
    }

    #[test]
    fn two_by_two_example() {
        let layout = Layout::new(1, 1, 1);
        let gen = assemble_generator(&layout, layout.grid.index_of(&[1]).unwrap()).unwrap();
        let want = [
            [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
            [Complex64::new(0.0, -2.0), Complex64::new(-1.0, 0.0)],
        ];
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(gen.matrix[(a, b)], want[a][b]);
            }
        }
        // λ² + λ + 2 = 0
        let mut eig = generator_eigenvalues(&gen, &layout.basis).unwrap();
        eig.sort_by(|a, b| a.im.total_cmp(&b.im));
        let r = 7f64.sqrt() / 2.0;
        assert!((eig[0] - Complex64::new(-0.5, -r)).norm() < 1e-14);
        assert!((eig[1] - Complex64::new(-0.5, r)).norm() < 1e-14);
        let spec = spectral_abscissa(&layout, Exec::default()).unwrap();
        assert!((spec.abscissa + 0.5).abs() < 1e-14);
    }

    #[test]
    fn evolve_examples() {
        let layout = Layout::new(1, 2, 3);
        let gen = assemble_generator(&layout, layout.grid.zero_index()).unwrap();
        let mut g0 = vec![Complex64::new(0.0, 0.0); 4];
        g0[2] = Complex64::new(1.0, 0.0);
        assert_eq!(evolve_dense(&gen, &g0, 0.0).unwrap(), g0);
        let g1 = evolve_dense(&gen, &g0, 1.0).unwrap();
        assert!((g1[2].re - (-2.0f64).exp()).abs() < 1e-15);
        assert!(evolve_dense(&gen, &g0, -1.0).is_err());
    }

    #[test]
    fn evolve_matches_eigen_solution_2x2() {
        // closed form via the eigenbasis of [[0,-i],[-2i,-1]]
        let layout = Layout::new(1, 1, 1);
        let gen = assemble_generator(&layout, 2).unwrap();
        let x0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let t = 0.7;
        let r = 7f64.sqrt() / 2.0;
        let l1 = Complex64::new(-0.5, r);
        let l2 = Complex64::new(-0.5, -r);
        // x(t)_0 = (λ1 e^{λ2 t} − λ2 e^{λ1 t}) / (λ1 − λ2) · x0_0 + ... with x0 = e_0:
        // for x' = Gx, x0 = e0: x_0(t) = ((λ1+1) e^{λ1 t} − (λ2+1) e^{λ2 t}) / (λ1 − λ2)
        let e1 = (l1 * t).exp();
        let e2 = (l2 * t).exp();
        let x_0 = ((l1 + 1.0) * e1 - (l2 + 1.0) * e2) / (l1 - l2);
        let x_1 = Complex64::new(0.0, -2.0) * (e1 - e2) / (l1 - l2);
        let got = evolve_dense(&gen, &x0, t).unwrap();
        assert!((got[0] - x_0).norm() < 1e-14);
        assert!((got[1] - x_1).norm() < 1e-14);
    }

    #[test]
    fn compare_identical_is_zero() {
        let s = SpectralState::zeros(Arc::new(Layout::new(1, 2, 2)));
        assert_eq!(compare_trajectories(&[s.clone()], &[s.clone()]).unwrap(), 0.0);
        assert!(compare_trajectories(&[s.clone()], &[]).is_err());
    }

    #[test]
    fn block_cap() {
        let layout = Layout::new(3, 1, 16);
        assert!(matches!(assemble_generator(&layout, 0), Err(OracleError::TooLarge(_))));
    }
}
