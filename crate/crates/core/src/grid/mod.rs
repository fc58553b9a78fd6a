//! Uniform periodic grids, real fields on them, and the fourth-order
//! finite-difference Laplacian.
//!
//! Fields are stored x fastest, then y, then z. That ordering is also the
//! on-disk layout of every field and snapshot column.

mod spectral;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub use spectral::{
    poisson_solve, poisson_solve_unchecked, precondition_apply, stencil_symbol_1d, SpectralOps,
};

/// M×k matrix whose columns are grid fields.
pub type FieldMatrix = DMatrix<f64>;

/// Fourth-order central second-difference weights for offsets 0, ±1, ±2.
pub const STENCIL: [f64; 3] = [-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];

/// Smallest number of points allowed along an axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub n: [usize; 3],
    pub lengths: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid3 {
    /// Grid centered on the origin.
    pub fn new(n: [usize; 3], lengths: [f64; 3]) -> Result<Self> {
        for axis in 0..3 {
            if n[axis] < MIN_POINTS {
                return Err(Error::InvalidInput(format!(
                    "grid needs at least {MIN_POINTS} points per axis, got {}",
                    n[axis]
                )));
            }
            if !(lengths[axis] > 0.0 && lengths[axis].is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "box length must be positive, got {}",
                    lengths[axis]
                )));
            }
        }
        let origin = [-lengths[0] / 2.0, -lengths[1] / 2.0, -lengths[2] / 2.0];
        Ok(Self { n, lengths, origin })
    }

    pub fn cubic(n: usize, length: f64) -> Result<Self> {
        Self::new([n; 3], [length; 3])
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.lengths[0] / self.n[0] as f64,
            self.lengths[1] / self.n[1] as f64,
            self.lengths[2] / self.n[2] as f64,
        ]
    }

    /// Quadrature weight h_x·h_y·h_z.
    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n[0] * (iy + self.n[1] * iz)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let ix = idx % self.n[0];
        let rest = idx / self.n[0];
        [ix, rest % self.n[1], rest / self.n[1]]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Vector3<f64> {
        let [ix, iy, iz] = self.coords(idx);
        let h = self.spacing();
        Vector3::new(
            self.origin[0] + ix as f64 * h[0],
            self.origin[1] + iy as f64 * h[1],
            self.origin[2] + iz as f64 * h[2],
        )
    }

    /// Minimum-image displacement `r - center`.
    #[inline]
    pub fn min_image(&self, r: &Vector3<f64>, center: &Vector3<f64>) -> Vector3<f64> {
        let mut d = r - center;
        for axis in 0..3 {
            let l = self.lengths[axis];
            d[axis] -= l * (d[axis] / l).round();
        }
        d
    }

    /// Wraps a position into the box.
    pub fn wrap(&self, r: &Vector3<f64>) -> Vector3<f64> {
        let mut w = *r;
        for axis in 0..3 {
            let l = self.lengths[axis];
            let o = self.origin[axis];
            w[axis] = o + (w[axis] - o).rem_euclid(l);
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid3, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn(Vector3<f64>) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; grid.len()];
        let plane = grid.n[0] * grid.n[1];
        par::for_each_chunk_mut(&mut values, plane, |iz, chunk| {
            for (local, v) in chunk.iter_mut().enumerate() {
                *v = f(grid.point(iz * plane + local));
            }
        });
        Self { grid, values }
    }

    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    pub fn mean(&self) -> f64 {
        par::sum_blocks(self.values.len(), |r| self.values[r].iter().sum()) / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1(&self) -> f64 {
        par::sum_blocks(self.values.len(), |r| {
            self.values[r].iter().map(|v| v.abs()).sum()
        })
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Quadrature h_x·h_y·h_z·Σ values.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_volume() * par::sum_blocks(f.values.len(), |r| f.values[r].iter().sum())
}

/// Quadrature-weighted inner product of two fields.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> f64 {
    f.grid.cell_volume() * dot(&f.values, &g.values)
}

/// Deterministic blocked dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    par::sum_blocks(a.len(), |r| {
        a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum()
    })
}

/// Applies the 13-point fourth-order periodic Laplacian.
pub fn laplacian_apply(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    ScalarField {
        grid: f.grid,
        values: out,
    }
}

/// Laplacian of every column of a field matrix.
pub fn laplacian_columns(grid: &Grid3, phi: &FieldMatrix) -> FieldMatrix {
    let m = grid.len();
    let mut out = FieldMatrix::zeros(m, phi.ncols());
    par::for_each_chunk_pair_mut(out.as_mut_slice(), phi.as_slice(), m, |o, i| {
        laplacian_into(grid, i, o)
    });
    out
}

fn wrapped_offsets(n: usize) -> Vec<[usize; 4]> {
    (0..n)
        .map(|i| [(i + n - 2) % n, (i + n - 1) % n, (i + 1) % n, (i + 2) % n])
        .collect()
}

/// Stencil application on raw slices in the grid's linearization order.
pub fn laplacian_into(grid: &Grid3, input: &[f64], out: &mut [f64]) {
    let [nx, ny, _nz] = grid.n;
    let h = grid.spacing();
    let inv2 = [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])];
    let center = STENCIL[0] * (inv2[0] + inv2[1] + inv2[2]);
    let c1 = inv2.map(|w| STENCIL[1] * w);
    let c2 = inv2.map(|w| STENCIL[2] * w);
    let ox = wrapped_offsets(nx);
    let oy = wrapped_offsets(ny);
    let oz = wrapped_offsets(grid.n[2]);
    let plane = nx * ny;

    par::for_each_chunk_mut(out, plane, |iz, chunk| {
        let [zm2, zm1, zp1, zp2] = oz[iz];
        for iy in 0..ny {
            let [ym2, ym1, yp1, yp2] = oy[iy];
            let row = iz * plane + iy * nx;
            for ix in 0..nx {
                let [xm2, xm1, xp1, xp2] = ox[ix];
                let at = |x: usize, y: usize, z: usize| input[x + nx * (y + ny * z)];
                let s = center * input[row + ix]
                    + c1[0] * (at(xm1, iy, iz) + at(xp1, iy, iz))
                    + c2[0] * (at(xm2, iy, iz) + at(xp2, iy, iz))
                    + c1[1] * (at(ix, ym1, iz) + at(ix, yp1, iz))
                    + c2[1] * (at(ix, ym2, iz) + at(ix, yp2, iz))
                    + c1[2] * (at(ix, iy, zm1) + at(ix, iy, zp1))
                    + c2[2] * (at(ix, iy, zm2) + at(ix, iy, zp2));
                chunk[iy * nx + ix] = s;
            }
        }
    });
}

/// Quadrature-weighted Gram-type product AᵀB·h³.
pub fn weighted_tr_mul(grid: &Grid3, a: &FieldMatrix, b: &FieldMatrix) -> DMatrix<f64> {
    let w = grid.cell_volume();
    let mut out = DMatrix::zeros(a.ncols(), b.ncols());
    for i in 0..a.ncols() {
        for j in 0..b.ncols() {
            out[(i, j)] = w * dot(a.column(i).as_slice(), b.column(j).as_slice());
        }
    }
    out
}
