//! Fourier-side utilities for real fields on the torus `[0, 2π)^d`.

use num_complex::Complex64;

use crate::state::FourierGrid;

/// Neutrality tolerance for the Poisson solve.
pub const NEUTRALITY_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("Poisson problem not solvable: mean density {0:e} is not zero")]
    NotNeutral(f64),
    #[error("field has {got} entries, grid has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// `φ̂(k) = σ̂(k)/|k|²` for `k ≠ 0`, `φ̂(0) = 0` (zero-mean gauge).
pub fn solve_poisson(grid: &FourierGrid, sigma: &[Complex64]) -> Result<Vec<Complex64>, FieldError> {
    if sigma.len() != grid.len() {
        return Err(FieldError::SizeMismatch {
            expected: grid.len(),
            got: sigma.len(),
        });
    }
    let z = grid.zero_index();
    let mean = sigma[z].norm();
    if mean > NEUTRALITY_TOL {
        return Err(FieldError::NotNeutral(mean));
    }
    Ok(sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if i == z {
                Complex64::new(0.0, 0.0)
            } else {
                s / grid.norm_sq(i)
            }
        })
        .collect())
}

/// `−Δ` in Fourier space: multiplication by `|k|²`.
pub fn neg_laplacian(grid: &FourierGrid, field: &[Complex64]) -> Vec<Complex64> {
    field
        .iter()
        .enumerate()
        .map(|(i, &f)| grid.norm_sq(i) * f)
        .collect()
}

/// Component `i` of the gradient is `i k_i f̂(k)`.
pub fn spectral_gradient(grid: &FourierGrid, field: &[Complex64]) -> Vec<Vec<Complex64>> {
    (0..grid.dim())
        .map(|c| {
            field
                .iter()
                .enumerate()
                .map(|(i, &f)| Complex64::new(0.0, grid.wavevector(i)[c] as f64) * f)
                .collect()
        })
        .collect()
}

/// `w_N(k) = Σ_{|a| ≤ N} Π_i k_i^{2 a_i}`, the symbol of `Σ_{|a|≤N} ‖∂^a f‖²`.
///
/// Evaluated as `Σ_{j≤N} h_j(k_1², …, k_d²)` with the complete homogeneous symmetric
/// polynomials built one variable at a time.
pub fn sobolev_weight(k: &[i32], order: usize) -> f64 {
    // h[j] holds h_j over the variables processed so far
    let mut h = vec![0.0; order + 1];
    h[0] = 1.0;
    for &kc in k {
        let x = (kc as f64) * (kc as f64);
        // h_j(new) = Σ_t x^t h_{j−t}(old) = h_j(old) + x h_{j−1}(new)
        for j in 1..=order {
            h[j] += x * h[j - 1];
        }
    }
    h.iter().sum()
}

/// Weights `w_N(k)` for every wavevector of the grid.
pub fn sobolev_weights(grid: &FourierGrid, order: usize) -> Vec<f64> {
    grid.wavevectors()
        .iter()
        .map(|k| sobolev_weight(&k[..grid.dim()], order))
        .collect()
}

/// `Σ_k w_N(k) |f̂(k)|²`.
pub fn sobolev_norm_sq(grid: &FourierGrid, field: &[Complex64], order: usize) -> f64 {
    field
        .iter()
        .enumerate()
        .map(|(i, f)| sobolev_weight(&grid.wavevector(i)[..grid.dim()], order) * f.norm_sqr())
        .sum()
}

/// Max relative deviation of the per-mode identity `|k|^{s+2}|φ̂(k)| = |k|^s|σ̂(k)|`.
pub fn elliptic_regularity_check(
    grid: &FourierGrid,
    sigma: &[Complex64],
    phi: &[Complex64],
    s: u32,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        if i == grid.zero_index() {
            worst = worst.max(phi[i].norm());
            continue;
        }
        let k = grid.norm_sq(i).sqrt();
        let lhs = k.powi(s as i32 + 2) * phi[i].norm();
        let rhs = k.powi(s as i32) * sigma[i].norm();
        let scale = lhs.max(rhs);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}
