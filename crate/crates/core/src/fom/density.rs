//! Ionic core charges and electron densities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::species::AtomicConfiguration;
use crate::error::{Error, Result};
use crate::grid::{dot, weighted_tr_mul, FieldMatrix, Grid3, ScalarField};
use crate::par;

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Discretized orbitals Φ (M×N) and the number of occupied orbitals.
#[derive(Clone, Debug, PartialEq)]
pub struct WavefunctionSet {
    pub grid: Grid3,
    pub phi: FieldMatrix,
    pub n_occ: usize,
}

impl WavefunctionSet {
    pub fn new(grid: Grid3, phi: FieldMatrix, n_occ: usize) -> Result<Self> {
        if phi.nrows() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "orbital matrix has {} rows, grid has {} points",
                phi.nrows(),
                grid.len()
            )));
        }
        if phi.ncols() < n_occ {
            return Err(Error::InvalidInput(format!(
                "{} orbitals cannot hold {} occupied states",
                phi.ncols(),
                n_occ
            )));
        }
        Ok(Self { grid, phi, n_occ })
    }

    /// Seeded random orbitals, orthonormalized by Gram-Schmidt.
    pub fn random(grid: Grid3, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phi = FieldMatrix::from_fn(grid.len(), n, |_, _| rng.random_range(-1.0..1.0));
        gram_schmidt(&grid, &mut phi);
        Self {
            grid,
            phi,
            n_occ: n,
        }
    }

    pub fn n_orbitals(&self) -> usize {
        self.phi.ncols()
    }

    /// S = ΦᵀΦ·h³.
    pub fn gram(&self) -> DMatrix<f64> {
        weighted_tr_mul(&self.grid, &self.phi, &self.phi)
    }

    /// Returns a copy with orthonormal columns spanning the same subspace.
    pub fn orthonormalized(&self) -> Result<Self> {
        let mut out = self.clone();
        out.phi = orthonormalize(&self.grid, &self.phi)?;
        Ok(out)
    }
}

/// Modified Gram-Schmidt under the h³-weighted inner product.
pub fn gram_schmidt(grid: &Grid3, phi: &mut FieldMatrix) {
    let w = grid.cell_volume();
    for j in 0..phi.ncols() {
        for i in 0..j {
            let proj = w * dot(phi.column(i).as_slice(), phi.column(j).as_slice());
            let qi = phi.column(i).clone_owned();
            phi.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let norm = (w * dot(phi.column(j).as_slice(), phi.column(j).as_slice())).sqrt();
        phi.column_mut(j).scale_mut(1.0 / norm);
    }
}

/// Φ·L⁻ᵀ with S = LLᵀ, i.e. orthonormal columns under the h³ product.
pub fn orthonormalize(grid: &Grid3, phi: &FieldMatrix) -> Result<FieldMatrix> {
    let s = weighted_tr_mul(grid, phi, phi);
    check_condition(&s)?;
    let chol = s.cholesky().ok_or(Error::SingularGram {
        cond: f64::INFINITY,
    })?;
    let l_inv_t = chol
        .l()
        .try_inverse()
        .ok_or(Error::SingularGram {
            cond: f64::INFINITY,
        })?
        .transpose();
    Ok(phi * l_inv_t)
}

fn check_condition(s: &DMatrix<f64>) -> Result<f64> {
    let eig = SymmetricEigen::new(s.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { cond });
    }
    Ok(cond)
}

/// S⁻¹ after a conditioning check, via Cholesky so that tr(S⁻¹S) stays exact
/// to rounding even when the columns of Φ have very different norms.
pub fn gram_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = check_condition(s)?;
    let inv = s
        .clone()
        .cholesky()
        .ok_or(Error::SingularGram { cond })?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// ρ(r) = 2 Σ_ij X_ij φ_i(r) φ_j(r) for a symmetric weight matrix X.
pub fn density_from_matrix(grid: &Grid3, phi: &FieldMatrix, x: &DMatrix<f64>) -> ScalarField {
    let weighted = phi * x;
    let m = grid.len();
    let n = phi.ncols();
    let mut values = vec![0.0; m];
    let p = phi.as_slice();
    let w = weighted.as_slice();
    let block = par::REDUCE_BLOCK;
    par::for_each_chunk_mut(&mut values, block, |b, chunk| {
        let start = b * block;
        for j in 0..n {
            let pc = &p[j * m + start..j * m + start + chunk.len()];
            let wc = &w[j * m + start..j * m + start + chunk.len()];
            for ((v, a), c) in chunk.iter_mut().zip(pc).zip(wc) {
                *v += a * c;
            }
        }
        chunk.iter_mut().for_each(|v| *v *= 2.0);
    });
    ScalarField { grid: *grid, values }
}

/// Electron density with the Gram inverse as density matrix.
pub fn electron_density(wf: &WavefunctionSet) -> Result<ScalarField> {
    let s_inv = gram_inverse(&wf.gram())?;
    Ok(density_from_matrix(&wf.grid, &wf.phi, &s_inv))
}

/// Gaussian core charge ρ_s = Σ_I −Z_I/(√π rc)³ exp(−d²/rc²) with
/// minimum-image distances.
pub fn core_charge_density(grid: &Grid3, cfg: &AtomicConfiguration) -> Result<ScalarField> {
    cfg.validate_on(grid)?;
    Ok(core_charge_unchecked(grid, cfg))
}

pub(crate) fn core_charge_unchecked(grid: &Grid3, cfg: &AtomicConfiguration) -> ScalarField {
    let mut field = ScalarField::zeros(*grid);
    for atom in 0..cfg.len() {
        let part = single_core_charge(grid, cfg, atom);
        field.values.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    field
}

/// Core charge of one ion, as raw grid values.
pub(crate) fn single_core_charge(grid: &Grid3, cfg: &AtomicConfiguration, atom: usize) -> Vec<f64> {
    let s = cfg.species_of(atom);
    let center = cfg.atoms[atom].position;
    let norm = -s.z / (PI.sqrt() * s.rc).powi(3);
    let rc2 = s.rc * s.rc;
    ScalarField::from_fn(*grid, |r| {
        let d2 = grid.min_image(&r, &center).norm_squared();
        norm * (-d2 / rc2).exp()
    })
    .values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::species::Species;
    use crate::grid::integrate;
    use nalgebra::Vector3;

    fn single_ion(z: f64, rc: f64, at: Vector3<f64>) -> AtomicConfiguration {
        AtomicConfiguration {
            species: vec![Species {
                z,
                rc,
                ..Species::oxygen()
            }],
            atoms: vec![super::super::species::Atom {
                species: 0,
                position: at,
                pinned: false,
            }],
        }
    }

    #[test]
    fn core_charge_integrates_to_minus_z() {
        let g = Grid3::cubic(64, 12.0).unwrap();
        let cfg = single_ion(6.0, 1.0, Vector3::new(0.3, -0.2, 0.1));
        let rho = core_charge_density(&g, &cfg).unwrap();
        assert!((integrate(&rho) + 6.0).abs() < 6e-6);
    }

    #[test]
    fn core_charge_is_additive_and_empty_is_zero() {
        let g = Grid3::cubic(16, 12.0).unwrap();
        let mut cfg = single_ion(1.0, 1.6, Vector3::new(1.0, 0.0, 0.0));
        let one = core_charge_density(&g, &cfg).unwrap();
        let mut other = cfg.clone();
        other.atoms[0].position = Vector3::new(-2.0, 0.5, 0.0);
        let two = core_charge_density(&g, &other).unwrap();
        cfg.atoms.push(other.atoms[0].clone());
        let both = core_charge_density(&g, &cfg).unwrap();
        for ((a, b), c) in one.values.iter().zip(&two.values).zip(&both.values) {
            assert!((a + b - c).abs() < 1e-14);
        }
        cfg.atoms.clear();
        assert_eq!(core_charge_density(&g, &cfg).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn too_narrow_core_is_rejected() {
        let g = Grid3::cubic(16, 12.0).unwrap();
        let cfg = single_ion(6.0, 1.0, Vector3::zeros());
        assert!(matches!(
            core_charge_density(&g, &cfg),
            Err(Error::WidthTooSmall { .. })
        ));
    }

    #[test]
    fn density_counts_electrons() {
        let g = Grid3::cubic(12, 8.0).unwrap();
        let one = WavefunctionSet::random(g, 1, 3);
        assert!((integrate(&electron_density(&one).unwrap()) - 2.0).abs() < 1e-10);
        let four = WavefunctionSet::random(g, 4, 5);
        let rho = electron_density(&four).unwrap();
        assert!((integrate(&rho) - 8.0).abs() < 1e-10);
        assert!(rho.values.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn density_is_invariant_under_basis_change() {
        let g = Grid3::cubic(10, 8.0).unwrap();
        let wf = WavefunctionSet::random(g, 3, 11);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.5, 1.0, 0.2, -0.4, 0.1, 0.7]);
        let mixed = WavefunctionSet {
            phi: &wf.phi * a,
            ..wf.clone()
        };
        let r1 = electron_density(&wf).unwrap();
        let r2 = electron_density(&mixed).unwrap();
        for (x, y) in r1.values.iter().zip(&r2.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_gram_is_detected() {
        let g = Grid3::cubic(8, 8.0).unwrap();
        let wf = WavefunctionSet::random(g, 2, 1);
        let mut phi = wf.phi.clone();
        let c0 = phi.column(0).clone_owned();
        phi.set_column(1, &c0);
        let bad = WavefunctionSet { phi, ..wf };
        assert!(matches!(
            electron_density(&bad),
            Err(Error::SingularGram { .. })
        ));
    }

    #[test]
    fn orthonormalization_gives_identity_gram() {
        let g = Grid3::cubic(8, 8.0).unwrap();
        let wf = WavefunctionSet::random(g, 3, 2);
        let skewed = WavefunctionSet {
            phi: &wf.phi * DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0, 0.5, 0.0, 1.0]),
            ..wf
        };
        let on = skewed.orthonormalized().unwrap();
        assert!((on.gram() - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}
