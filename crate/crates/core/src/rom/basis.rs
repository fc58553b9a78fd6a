//! Snapshot collection and POD basis construction.

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sampling::{config_with_species, SamplingPlan, WaterParameters};
use crate::error::{Error, Result};
use crate::fom::{abpg_solve, ScfParams, Species, WavefunctionSet};
use crate::grid::{weighted_tr_mul, FieldMatrix, Grid3, SpectralOps};
use crate::par;

/// FOM settings shared by every training solve.
#[derive(Clone, Debug)]
pub struct SnapshotSettings {
    pub oxygen: Species,
    pub hydrogen: Species,
    pub scf: ScfParams,
    /// Seed of the cold-start orbitals (the same for every sample).
    pub seed: u64,
}

impl Default for SnapshotSettings {
    fn default() -> Self {
        Self {
            oxygen: Species::oxygen(),
            hydrogen: Species::hydrogen(),
            scf: ScfParams::default(),
            seed: 7,
        }
    }
}

/// Snapshot matrix Y: the orthonormalized ground-state orbitals of each
/// sample, concatenated in sample order.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    pub grid: Grid3,
    pub parameters: Vec<WaterParameters>,
    pub n_occ: usize,
    pub y: FieldMatrix,
}

impl SnapshotSet {
    pub fn n_snapshots(&self) -> usize {
        self.y.ncols()
    }

    /// Orbitals of sample `i`.
    pub fn sample(&self, i: usize) -> FieldMatrix {
        self.y.columns(i * self.n_occ, self.n_occ).into_owned()
    }
}

/// Solves the FOM at every sample; solves run in parallel and are assembled
/// in input order.
pub fn collect_snapshots(
    ops: &SpectralOps,
    samples: &[WaterParameters],
    settings: &SnapshotSettings,
) -> Result<SnapshotSet> {
    if samples.is_empty() {
        return Err(Error::EmptySnapshot);
    }
    let grid = *ops.grid();
    let solved = par::try_map_range(samples.len(), |i| {
        let nu = samples[i];
        let cfg = config_with_species(&nu, settings.oxygen.clone(), settings.hydrogen.clone());
        let attach = |e: Error| Error::AtParameters {
            s1: nu.s1,
            s2: nu.s2,
            s_theta: nu.s_theta,
            source: Box::new(e),
        };
        let n = cfg.n_occupied().map_err(attach)?;
        let guess = WavefunctionSet::random(grid, n, settings.seed);
        let out = abpg_solve(ops, &cfg, &guess, &settings.scf).map_err(attach)?;
        debug!(
            "snapshot {i}: s = ({}, {}, {}), {} iterations, E = {:.8}",
            nu.s1, nu.s2, nu.s_theta, out.iterations, out.energy.total
        );
        Ok::<_, Error>(out.wavefunctions)
    })?;
    let n_occ = solved[0].n_occ;
    let mut y = FieldMatrix::zeros(grid.len(), n_occ * solved.len());
    for (i, wf) in solved.iter().enumerate() {
        y.columns_mut(i * n_occ, n_occ).copy_from(&wf.phi);
    }
    info!("collected {} snapshots from {} samples", y.ncols(), samples.len());
    Ok(SnapshotSet {
        grid,
        parameters: samples.to_vec(),
        n_occ,
        y,
    })
}

/// Snapshots for the full training enumeration of `plan`.
pub fn collect_training_snapshots(
    ops: &SpectralOps,
    plan: &SamplingPlan,
    settings: &SnapshotSettings,
) -> Result<SnapshotSet> {
    collect_snapshots(ops, &super::sampling::enumerate_training_set(plan)?, settings)
}

/// Where a basis came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisProvenance {
    pub plan: Option<SamplingPlan>,
    pub delta_ef: f64,
}

/// POD basis Q (M×r) with QᵀQ·h³ = I and the full weighted singular
/// spectrum of the snapshot matrix.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub grid: Grid3,
    pub q: FieldMatrix,
    /// All singular values of Y·√h³, descending.
    pub singular_values: Vec<f64>,
    pub n_occ: usize,
    pub provenance: BasisProvenance,
}

impl ReducedBasis {
    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    /// ‖QᵀQ·h³ − I‖_max.
    pub fn orthonormality_error(&self) -> f64 {
        let g = weighted_tr_mul(&self.grid, &self.q, &self.q);
        (g - DMatrix::identity(self.rank(), self.rank())).amax()
    }

    /// Weighted squared residual ‖Y − QQᵀh³Y‖²_F·h³ of projecting `y`.
    pub fn projection_residual(&self, y: &FieldMatrix) -> f64 {
        let w = self.grid.cell_volume();
        let coef = (self.q.transpose() * y) * w;
        let diff = y - &self.q * coef;
        diff.norm_squared() * w
    }
}

/// Relative singular-value cutoff for the numerical rank.
fn rank_tolerance(m: usize, k: usize) -> f64 {
    m.max(k) as f64 * f64::EPSILON
}

/// Smallest r with Σ_{j≤r} σ_j² ≥ (1 − δ_EF) Σ σ_j², capped by the
/// numerical rank and floored at `n_occ`. The test is evaluated on the
/// discarded tail Σ_{j>r} σ_j² ≤ δ_EF Σ σ_j² so that small tails are not
/// lost to rounding.
pub fn truncation_rank(singular_values: &[f64], delta_ef: f64, n_occ: usize, numerical_rank: usize) -> usize {
    let k = singular_values.len();
    let mut tail = vec![0.0; k + 1];
    for j in (0..k).rev() {
        tail[j] = tail[j + 1] + singular_values[j] * singular_values[j];
    }
    let bound = delta_ef * tail[0];
    let r = (1..=k).find(|&r| tail[r] <= bound).unwrap_or(k);
    r.min(numerical_rank).max(n_occ)
}

/// Weighted thin SVD of the snapshots through a QR factorization
/// Y√h³ = Q₁R followed by the SVD of the small factor R.
pub fn build_reduced_basis(snapshots: &SnapshotSet, delta_ef: f64) -> Result<ReducedBasis> {
    build_reduced_basis_from(&snapshots.grid, &snapshots.y, snapshots.n_occ, delta_ef, None)
}

pub fn build_reduced_basis_from(
    grid: &Grid3,
    y: &FieldMatrix,
    n_occ: usize,
    delta_ef: f64,
    plan: Option<SamplingPlan>,
) -> Result<ReducedBasis> {
    if !(0.0..1.0).contains(&delta_ef) {
        return Err(Error::InvalidInput(format!(
            "delta_ef must lie in [0, 1), got {delta_ef}"
        )));
    }
    if y.ncols() == 0 || y.amax() == 0.0 {
        return Err(Error::EmptySnapshot);
    }
    if y.nrows() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "snapshot rows {} vs grid points {}",
            y.nrows(),
            grid.len()
        )));
    }
    let sw = grid.cell_volume().sqrt();
    let k = y.ncols();
    let qr = (y * sw).qr();
    let (q1, r) = qr.unpack();
    let svd = r.svd(true, false);
    let u_r = svd.u.ok_or(Error::EmptySnapshot)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let tol = sigma[0] * rank_tolerance(y.nrows(), k);
    let numerical_rank = sigma.iter().filter(|&&s| s > tol).count();
    let r = truncation_rank(&sigma, delta_ef, n_occ, numerical_rank);
    if r > k {
        return Err(Error::InfeasibleFilling { n_occ, r: k });
    }
    let mut u = DMatrix::zeros(k, r);
    for (c, &i) in order.iter().take(r).enumerate() {
        u.set_column(c, &u_r.column(i));
    }
    let q = (q1 * u) / sw;
    info!("reduced basis: r = {r} of {k} snapshots (numerical rank {numerical_rank}, delta_ef {delta_ef:e})");
    Ok(ReducedBasis {
        grid: *grid,
        q,
        singular_values: sigma,
        n_occ,
        provenance: BasisProvenance { plan, delta_ef },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::orthonormalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> FieldMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FieldMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn truncation_rule_examples() {
        let s = [2.0, 1.0, 0.1];
        assert_eq!(truncation_rank(&s, 0.01, 1, 3), 2);
        assert_eq!(truncation_rank(&s, 0.0, 1, 3), 3);
        assert_eq!(truncation_rank(&s, 0.25, 1, 3), 1);
        assert_eq!(truncation_rank(&s, 0.999, 2, 3), 2);
        assert_eq!(truncation_rank(&s, 0.0, 1, 2), 2);
    }

    #[test]
    fn basis_is_weighted_orthonormal_and_optimal() {
        let g = Grid3::cubic(8, 4.0).unwrap();
        let y = random_matrix(g.len(), 12, 3);
        let full = build_reduced_basis_from(&g, &y, 2, 0.0, None).unwrap();
        assert_eq!(full.rank(), 12);
        assert!(full.orthonormality_error() < 1e-10);
        for w in full.singular_values.windows(2) {
            assert!(w[0] >= w[1] && w[1] >= 0.0);
        }
        let cut = build_reduced_basis_from(&g, &y, 2, 0.2, None).unwrap();
        let tail: f64 = full.singular_values[cut.rank()..].iter().map(|s| s * s).sum();
        let res = cut.projection_residual(&y);
        assert!((res - tail).abs() <= 1e-8 * tail, "{res} vs {tail}");
        assert!(full.projection_residual(&y) < 1e-20 * y.norm_squared());
    }

    #[test]
    fn repeated_sample_has_rank_n_occ() {
        let g = Grid3::cubic(8, 4.0).unwrap();
        let phi = orthonormalize(&g, &random_matrix(g.len(), 4, 9)).unwrap();
        let mut y = FieldMatrix::zeros(g.len(), 12);
        for i in 0..3 {
            y.columns_mut(4 * i, 4).copy_from(&phi);
        }
        let b = build_reduced_basis_from(&g, &y, 4, 0.0, None).unwrap();
        assert_eq!(b.rank(), 4);
        assert!(b.orthonormality_error() < 1e-10);
    }

    #[test]
    fn rejects_empty_and_bad_delta() {
        let g = Grid3::cubic(8, 4.0).unwrap();
        let y = FieldMatrix::zeros(g.len(), 3);
        assert!(matches!(
            build_reduced_basis_from(&g, &y, 1, 0.0, None),
            Err(Error::EmptySnapshot)
        ));
        let y = random_matrix(g.len(), 3, 1);
        assert!(build_reduced_basis_from(&g, &y, 1, 1.0, None).is_err());
    }
}
