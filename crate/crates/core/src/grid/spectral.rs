//! Exact inversion of stencil-based operators in the discrete Fourier basis.
//!
//! The periodic fourth-order Laplacian is diagonal in the DFT basis, so the
//! Poisson solve and the shifted-Laplacian preconditioner are pointwise
//! divisions by its symbol.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{FieldMatrix, Grid3, ScalarField, STENCIL};
use crate::error::{Error, Result};
use crate::par;

/// Relative neutrality tolerance for Poisson sources.
pub const NEUTRALITY_TOL: f64 = 1e-8;

/// Eigenvalue of the 1D fourth-order stencil for mode `m` of `n` points.
pub fn stencil_symbol_1d(m: usize, n: usize, h: f64) -> f64 {
    if m % n == 0 {
        // the weights sum to zero, but not in floating point
        return 0.0;
    }
    let theta = 2.0 * PI * m as f64 / n as f64;
    (STENCIL[0] + 2.0 * STENCIL[1] * theta.cos() + 2.0 * STENCIL[2] * (2.0 * theta).cos())
        / (h * h)
}

struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Cached FFT plans and Laplacian symbol for one grid.
pub struct SpectralOps {
    grid: Grid3,
    plans: [AxisPlans; 3],
    symbol: Vec<f64>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps").field("grid", &self.grid).finish()
    }
}

impl SpectralOps {
    pub fn new(grid: Grid3) -> Self {
        let mut planner = FftPlanner::new();
        let plans = grid.n.map(|n| AxisPlans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        });
        let h = grid.spacing();
        let axis: Vec<Vec<f64>> = (0..3)
            .map(|a| {
                (0..grid.n[a])
                    .map(|m| stencil_symbol_1d(m, grid.n[a], h[a]))
                    .collect()
            })
            .collect();
        let symbol = (0..grid.len())
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                axis[0][i] + axis[1][j] + axis[2][k]
            })
            .collect();
        Self {
            grid,
            plans,
            symbol,
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// Laplacian eigenvalue of every Fourier mode, in grid order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let [nx, ny, nz] = self.grid.n;
        let plane = nx * ny;
        let pick = |a: usize| {
            if inverse {
                &self.plans[a].inverse
            } else {
                &self.plans[a].forward
            }
        };

        let px = pick(0);
        par::for_each_chunk_mut(data, plane, |_, chunk| px.process(chunk));

        let py = pick(1);
        par::for_each_chunk_mut(data, plane, |_, chunk| {
            let mut t = vec![Complex64::default(); plane];
            for y in 0..ny {
                for x in 0..nx {
                    t[x * ny + y] = chunk[y * nx + x];
                }
            }
            py.process(&mut t);
            for y in 0..ny {
                for x in 0..nx {
                    chunk[y * nx + x] = t[x * ny + y];
                }
            }
        });

        let pz = pick(2);
        let mut t = vec![Complex64::default(); data.len()];
        {
            let src: &[Complex64] = data;
            par::for_each_chunk_mut(&mut t, nz, |p, line| {
                for (z, v) in line.iter_mut().enumerate() {
                    *v = src[z * plane + p];
                }
                pz.process(line);
            });
        }
        par::for_each_chunk_mut(data, plane, |z, chunk| {
            for (p, v) in chunk.iter_mut().enumerate() {
                *v = t[p * nz + z];
            }
        });
    }

    /// Applies the Fourier multiplier `mult(λ)` to a real field.
    fn apply_multiplier<F>(&self, input: &[f64], mult: F) -> Vec<f64>
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let m = self.grid.len();
        let mut buf: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        let scale = 1.0 / m as f64;
        par::for_each_chunk_pair_mut(&mut buf, &self.symbol, par::REDUCE_BLOCK, |b, s| {
            for (z, &lambda) in b.iter_mut().zip(s) {
                *z *= mult(lambda) * scale;
            }
        });
        self.transform(&mut buf, true);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Solves ∇²_FD v = −4π·src in the zero-mean gauge.
    pub fn poisson(&self, src: &ScalarField) -> Result<ScalarField> {
        let net = src.integrate();
        let tol = NEUTRALITY_TOL * src.l1() * self.grid.cell_volume();
        if net.abs() > tol {
            return Err(Error::NonNeutralSource { net, tol });
        }
        Ok(self.poisson_unchecked(src))
    }

    /// Poisson solve without the neutrality guard; any net charge is
    /// implicitly compensated by a uniform background.
    pub fn poisson_unchecked(&self, src: &ScalarField) -> ScalarField {
        let mut values = self.apply_multiplier(&src.values, |lambda| {
            if lambda == 0.0 {
                0.0
            } else {
                -4.0 * PI / lambda
            }
        });
        let mean = par::sum_blocks(values.len(), |r| values[r].iter().sum()) / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// (−½∇²_FD + σ)⁻¹ applied to every column.
    pub fn precondition(&self, f: &FieldMatrix, shift: f64) -> Result<FieldMatrix> {
        if !(shift > 0.0) {
            return Err(Error::NonPositiveShift(shift));
        }
        let m = self.grid.len();
        let cols = par::map_range(f.ncols(), |j| {
            self.apply_multiplier(f.column(j).as_slice(), |lambda| 1.0 / (shift - 0.5 * lambda))
        });
        let mut out = FieldMatrix::zeros(m, f.ncols());
        for (j, c) in cols.into_iter().enumerate() {
            out.column_mut(j).copy_from_slice(&c);
        }
        Ok(out)
    }
}

/// One-shot Poisson solve on `src`'s grid.
pub fn poisson_solve(src: &ScalarField) -> Result<ScalarField> {
    SpectralOps::new(src.grid).poisson(src)
}

/// Poisson solve without the neutrality guard.
pub fn poisson_solve_unchecked(src: &ScalarField) -> ScalarField {
    SpectralOps::new(src.grid).poisson_unchecked(src)
}

/// One-shot shifted inverse-Laplacian preconditioner.
pub fn precondition_apply(grid: &Grid3, f: &FieldMatrix, shift: f64) -> Result<FieldMatrix> {
    SpectralOps::new(*grid).precondition(f, shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, laplacian_apply, laplacian_columns};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, k: usize, seed: u64) -> FieldMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FieldMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_source_gives_zero_potential() {
        let g = Grid3::cubic(8, 12.0).unwrap();
        let v = poisson_solve(&ScalarField::zeros(g)).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn sine_source_inverts_through_symbol() {
        let g = Grid3::new([16, 8, 12], [12.0, 10.0, 11.0]).unwrap();
        let lx = g.lengths[0];
        let src = ScalarField::from_fn(g, |r| (2.0 * PI * r.x / lx).sin());
        let lambda = stencil_symbol_1d(1, 16, g.spacing()[0]);
        let v = poisson_solve(&src).unwrap();
        for (a, s) in v.values.iter().zip(&src.values) {
            assert!((a + 4.0 * PI / lambda * s).abs() < 1e-10);
        }
    }

    #[test]
    fn dipole_residual_and_gauge() {
        let g = Grid3::cubic(32, 12.0).unwrap();
        let norm = 1.0 / (PI.sqrt() * 0.9).powi(3);
        let src = ScalarField::from_fn(g, |r| {
            let a = (r - nalgebra::Vector3::new(1.0, 0.0, 0.0)).norm_squared();
            let b = (r + nalgebra::Vector3::new(1.0, 0.0, 0.0)).norm_squared();
            norm * ((-a / 0.81).exp() - (-b / 0.81).exp())
        });
        let v = poisson_solve(&src).unwrap();
        let lap = laplacian_apply(&v);
        let resid = lap
            .values
            .iter()
            .zip(&src.values)
            .fold(0.0f64, |m, (l, s)| m.max((l + 4.0 * PI * s).abs()));
        assert!(resid / src.max_abs() <= 1e-10, "residual {resid}");
        assert!(v.mean().abs() <= 1e-12);
    }

    #[test]
    fn charged_source_is_rejected() {
        let g = Grid3::cubic(8, 12.0).unwrap();
        let err = poisson_solve(&ScalarField::constant(g, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NonNeutralSource { .. }));
    }

    #[test]
    fn preconditioner_inverts_shifted_operator() {
        let g = Grid3::new([8, 10, 12], [8.0, 9.0, 10.0]).unwrap();
        let sigma = 0.5;
        let x = random_matrix(g.len(), 3, 4);
        let lap = laplacian_columns(&g, &x);
        let forward = &x * sigma - lap * 0.5;
        let back = precondition_apply(&g, &forward, sigma).unwrap();
        assert!((back - &x).amax() < 1e-10);
    }

    #[test]
    fn preconditioner_on_constant_and_large_shift() {
        let g = Grid3::cubic(8, 12.0).unwrap();
        let ones = FieldMatrix::from_element(g.len(), 1, 2.0);
        let out = precondition_apply(&g, &ones, 0.5).unwrap();
        assert!((out.add_scalar(-4.0)).amax() < 1e-12);

        let x = random_matrix(g.len(), 1, 9);
        let sigma = 1e6;
        let out = precondition_apply(&g, &x, sigma).unwrap();
        let lmax = 0.5 * 3.0 * 16.0 / 3.0 / (1.5f64 * 1.5);
        let bound = lmax / (sigma * sigma) * x.amax() * 10.0;
        assert!((out - &x / sigma).amax() <= bound);
        assert!(matches!(
            precondition_apply(&g, &x, 0.0),
            Err(Error::NonPositiveShift(_))
        ));
    }

    #[test]
    fn preconditioner_is_positive() {
        let g = Grid3::cubic(8, 6.0).unwrap();
        for seed in 0..5 {
            let x = random_matrix(g.len(), 1, seed);
            let kx = precondition_apply(&g, &x, 0.5).unwrap();
            let f = ScalarField::from_values(g, x.as_slice().to_vec()).unwrap();
            let k = ScalarField::from_values(g, kx.as_slice().to_vec()).unwrap();
            assert!(inner_product(&f, &k) > 0.0);
        }
    }
}
