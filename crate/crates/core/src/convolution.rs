//! Galerkin-truncated Fourier convolutions for the quadratic field–particle term.
//!
//! Both methods compute, for every wavevector `k` of the grid,
//! `out(k, m) = Σ_j Σ_{k'} F_j(k') H_j(k − k', m)` over pairs with `k − k'` inside the
//! grid, i.e. the exact product projected back onto `|k_i| ≤ K`. The pseudospectral
//! method zero-pads to `L ≥ 3K + 1` points per direction, which removes aliasing
//! entirely, so the two methods agree to rounding.
//!
//! Inputs are Fourier transforms of real fields, so the output is Hermitian: only
//! the half `k ≥ 0` (in storage order) is computed and the other half is filled by
//! conjugation. That keeps Hermitian symmetry of the state exact under time stepping.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::exec::Exec;
use crate::state::FourierGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvolutionMethod {
    Direct,
    Pseudospectral,
    /// Pick whichever has the smaller operation-count estimate for the grid.
    Auto,
}

/// One term `F_j ⋆ H_j`: a scalar field and a field with `n_m` components per wavevector
/// (stored k-major).
pub struct ConvolutionTerm<'a> {
    pub scalar: &'a [Complex64],
    pub vector: &'a [Complex64],
}

pub struct Convolver {
    grid: FourierGrid,
    method: ConvolutionMethod,
    padded: Option<PaddedGrid>,
    exec: Exec,
}

struct PaddedGrid {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Convolver {
    pub fn new(grid: FourierGrid, method: ConvolutionMethod, exec: Exec) -> Self {
        let method = match method {
            ConvolutionMethod::Auto => auto_method(&grid),
            m => m,
        };
        let padded = (method == ConvolutionMethod::Pseudospectral).then(|| {
            let len = padded_len(grid.cutoff());
            let mut planner = FftPlanner::new();
            PaddedGrid {
                len,
                forward: planner.plan_fft_forward(len),
                inverse: planner.plan_fft_inverse(len),
            }
        });
        Self {
            grid,
            method,
            padded,
            exec,
        }
    }

    pub fn method(&self) -> ConvolutionMethod {
        self.method
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    /// `Σ_j F_j ⋆ H_j`, Hermitian-symmetrized, with `n_m` components per wavevector.
    pub fn convolve(&self, terms: &[ConvolutionTerm<'_>], n_m: usize) -> Vec<Complex64> {
        for t in terms {
            assert_eq!(t.scalar.len(), self.grid.len());
            assert_eq!(t.vector.len(), self.grid.len() * n_m);
        }
        let mut out = match self.method {
            ConvolutionMethod::Pseudospectral => self.pseudospectral(terms, n_m),
            _ => self.direct(terms, n_m),
        };
        mirror_hermitian(&self.grid, &mut out, n_m);
        out
    }

    fn direct(&self, terms: &[ConvolutionTerm<'_>], n_m: usize) -> Vec<Complex64> {
        let grid = &self.grid;
        let n_k = grid.len();
        let zero = grid.zero_index();
        let mut out = vec![Complex64::new(0.0, 0.0); n_k * n_m];
        let dim = grid.dim();
        let cutoff = grid.cutoff() as i32;
        let side = 2 * cutoff + 1;
        self.exec
            .for_each_chunk(&mut out[zero * n_m..], n_m, |offset, block| {
                let k = grid.wavevector(zero + offset);
                for kp in 0..n_k {
                    let q = grid.wavevector(kp);
                    let mut idx = 0i32;
                    let mut inside = true;
                    for c in 0..dim {
                        let diff = k[c] - q[c];
                        if diff.abs() > cutoff {
                            inside = false;
                            break;
                        }
                        idx = idx * side + diff + cutoff;
                    }
                    if !inside {
                        continue;
                    }
                    let idx = idx as usize;
                    for t in terms {
                        let f = t.scalar[kp];
                        if f.re == 0.0 && f.im == 0.0 {
                            continue;
                        }
                        let h = &t.vector[idx * n_m..(idx + 1) * n_m];
                        for (o, &hv) in block.iter_mut().zip(h) {
                            *o += f * hv;
                        }
                    }
                }
            });
        out
    }

    fn pseudospectral(&self, terms: &[ConvolutionTerm<'_>], n_m: usize) -> Vec<Complex64> {
        let pad = self.padded.as_ref().expect("padded grid planned");
        let grid = &self.grid;
        let dim = grid.dim();
        let len = pad.len;
        let total = len.pow(dim as u32);
        let placement: Vec<usize> = grid
            .wavevectors()
            .iter()
            .map(|k| {
                let mut idx = 0usize;
                for &kc in &k[..dim] {
                    idx = idx * len + kc.rem_euclid(len as i32) as usize;
                }
                idx
            })
            .collect();
        let to_physical = |spec: &mut dyn Iterator<Item = (usize, Complex64)>| {
            let mut buf = vec![Complex64::new(0.0, 0.0); total];
            for (i, v) in spec {
                buf[placement[i]] = v;
            }
            fft_nd(&mut buf, len, dim, &pad.inverse);
            buf
        };
        let scalars: Vec<Vec<Complex64>> = terms
            .iter()
            .map(|t| to_physical(&mut t.scalar.iter().copied().enumerate()))
            .collect();
        let norm = 1.0 / total as f64;
        let columns = self.exec.map(n_m, |m| {
            let mut acc = vec![Complex64::new(0.0, 0.0); total];
            for (t, s) in terms.iter().zip(&scalars) {
                let mut col = (0..grid.len()).map(|i| (i, t.vector[i * n_m + m]));
                let phys = to_physical(&mut col);
                for ((a, &p), &f) in acc.iter_mut().zip(&phys).zip(s) {
                    *a += p * f;
                }
            }
            fft_nd(&mut acc, len, dim, &pad.forward);
            placement.iter().map(|&p| acc[p] * norm).collect::<Vec<_>>()
        });
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len() * n_m];
        for (m, col) in columns.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                out[i * n_m + m] = v;
            }
        }
        out
    }
}

/// Smallest alias-free padded length `≥ 3K + 1`, rounded up to a 2·3·5-smooth size.
pub fn padded_len(cutoff: usize) -> usize {
    let mut n = 3 * cutoff + 1;
    loop {
        let mut r = n;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

fn auto_method(grid: &FourierGrid) -> ConvolutionMethod {
    let n_k = grid.len() as f64;
    let direct = 0.5 * n_k * n_k;
    let total = (padded_len(grid.cutoff()) as f64).powi(grid.dim() as i32);
    let spectral = 3.0 * total * total.log2().max(1.0);
    if direct <= spectral {
        ConvolutionMethod::Direct
    } else {
        ConvolutionMethod::Pseudospectral
    }
}

/// Overwrites the `k < 0` half (storage order) with conjugates of the `k > 0` half and
/// makes the `k = 0` entries real.
pub fn mirror_hermitian(grid: &FourierGrid, data: &mut [Complex64], n_m: usize) {
    let zero = grid.zero_index();
    for v in &mut data[zero * n_m..(zero + 1) * n_m] {
        v.im = 0.0;
    }
    for ki in 0..zero {
        let pi = grid.partner(ki);
        for m in 0..n_m {
            data[ki * n_m + m] = data[pi * n_m + m].conj();
        }
    }
}

/// In-place unnormalized d-dimensional FFT on a row-major cube of side `len`.
fn fft_nd(buf: &mut [Complex64], len: usize, dim: usize, plan: &Arc<dyn Fft<f64>>) {
    let total = buf.len();
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for axis in 0..dim {
        let stride = len.pow((dim - 1 - axis) as u32);
        let block = stride * len;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = buf[base + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, l) in line.iter().enumerate() {
                    buf[base + j * stride] = *l;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hermitian_field(grid: &FourierGrid, n_m: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![Complex64::new(0.0, 0.0); grid.len() * n_m];
        for ki in grid.zero_index()..grid.len() {
            for m in 0..n_m {
                v[ki * n_m + m] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        mirror_hermitian(grid, &mut v, n_m);
        v
    }

    /// Textbook double loop over every (k, k') pair, no symmetry tricks.
    fn brute(grid: &FourierGrid, f: &[Complex64], h: &[Complex64], n_m: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len() * n_m];
        for (ki, k) in grid.wavevectors().iter().enumerate() {
            for (qi, q) in grid.wavevectors().iter().enumerate() {
                let diff = [k[0] - q[0], k[1] - q[1], k[2] - q[2]];
                if let Some(di) = grid.index_of(&diff) {
                    for m in 0..n_m {
                        out[ki * n_m + m] += f[qi] * h[di * n_m + m];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn direct_matches_brute_force() {
        for (d, k, n_m) in [(1, 4, 3), (2, 2, 2), (3, 1, 2)] {
            let grid = FourierGrid::new(d, k);
            let f = hermitian_field(&grid, 1, 1);
            let h = hermitian_field(&grid, n_m, 2);
            let conv = Convolver::new(grid.clone(), ConvolutionMethod::Direct, Exec::default());
            let got = conv.convolve(&[ConvolutionTerm { scalar: &f, vector: &h }], n_m);
            let want = brute(&grid, &f, &h, n_m);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-13, "d={d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pseudospectral_matches_direct() {
        for (d, k, n_m) in [(1, 5, 3), (2, 3, 2), (3, 2, 2)] {
            let grid = FourierGrid::new(d, k);
            let f1 = hermitian_field(&grid, 1, 3);
            let f2 = hermitian_field(&grid, 1, 4);
            let h1 = hermitian_field(&grid, n_m, 5);
            let h2 = hermitian_field(&grid, n_m, 6);
            let terms = [
                ConvolutionTerm { scalar: &f1, vector: &h1 },
                ConvolutionTerm { scalar: &f2, vector: &h2 },
            ];
            let a = Convolver::new(grid.clone(), ConvolutionMethod::Direct, Exec::default())
                .convolve(&terms, n_m);
            let b = Convolver::new(grid.clone(), ConvolutionMethod::Pseudospectral, Exec::default())
                .convolve(&terms, n_m);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-12, "d={d}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let grid = FourierGrid::new(2, 3);
        let f = hermitian_field(&grid, 1, 9);
        let h = hermitian_field(&grid, 4, 10);
        let terms = [ConvolutionTerm { scalar: &f, vector: &h }];
        for method in [ConvolutionMethod::Direct, ConvolutionMethod::Pseudospectral] {
            let a = Convolver::new(grid.clone(), method, Exec::Sequential).convolve(&terms, 4);
            let b = Convolver::new(grid.clone(), method, Exec::Parallel).convolve(&terms, 4);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn padded_lengths() {
        assert_eq!(padded_len(1), 4);
        assert_eq!(padded_len(2), 8);
        assert_eq!(padded_len(8), 25);
        assert_eq!(padded_len(4), 15);
    }
}
