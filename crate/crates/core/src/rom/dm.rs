//! Density-matrix optimization in the reduced subspace.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::basis::ReducedBasis;
use crate::error::{Error, Result};
use crate::fom::potential::{density_terms, DensityTerms};
use crate::fom::{density_from_matrix, AtomicConfiguration, EnergyBreakdown, IonicBackground};
use crate::grid::{laplacian_columns, weighted_tr_mul, FieldMatrix, Grid3, ScalarField, SpectralOps};

/// Occupations are clamped to [ε, 1 − ε] before taking logarithms.
const ENTROPY_CLAMP: f64 = 1e-15;
/// Bisection bracket half-width in units of kT beyond the spectrum.
const BRACKET_KT: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmParams {
    /// Iteration cap K_DM.
    pub max_iter: usize,
    /// Free-energy change threshold δ_DM (Hartree).
    pub tol: f64,
    /// Mixing parameter β.
    pub beta: f64,
    /// Electronic temperature kT (Hartree).
    pub kt: f64,
}

impl Default for DmParams {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            beta: 0.8,
            kt: 1e-3,
        }
    }
}

impl DmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.beta > 0.0 && self.beta <= 1.0) || !(self.kt > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density-matrix parameters need max_iter ≥ 1, β ∈ (0, 1], kT > 0 and tol > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Basis with its precomputed kinetic block T_q = −½QᵀLQ·h³.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub basis: ReducedBasis,
    pub kinetic: DMatrix<f64>,
}

impl ReducedModel {
    pub fn new(basis: ReducedBasis) -> Self {
        let lap = laplacian_columns(&basis.grid, &basis.q);
        let t = weighted_tr_mul(&basis.grid, &basis.q, &lap) * -0.5;
        let kinetic = (&t + t.transpose()) * 0.5;
        Self { basis, kinetic }
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn grid(&self) -> &Grid3 {
        &self.basis.grid
    }

    /// diag(1, …, 1, 0, …, 0) with N0 ones.
    pub fn cold_start(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.rank(), self.rank());
        for i in 0..self.basis.n_occ.min(self.rank()) {
            x[(i, i)] = 1.0;
        }
        x
    }

    /// Ĥ = T_q + Qᵀ diag(v) Q·h³, symmetrized.
    pub fn project_hamiltonian(&self, v_loc: &ScalarField) -> DMatrix<f64> {
        let vq = potential_block(&self.basis.grid, &self.basis.q, v_loc);
        let h = &self.kinetic + vq;
        (&h + h.transpose()) * 0.5
    }
}

/// Qᵀ diag(v) Q·h³ without symmetrization.
pub fn potential_block(grid: &Grid3, q: &FieldMatrix, v: &ScalarField) -> DMatrix<f64> {
    let mut vq = q.clone();
    for mut col in vq.column_iter_mut() {
        col.iter_mut().zip(&v.values).for_each(|(a, b)| *a *= b);
    }
    q.transpose() * vq * grid.cell_volume()
}

/// Projection of the full Hamiltonian onto Q, symmetrized.
pub fn project_hamiltonian(grid: &Grid3, q: &FieldMatrix, v_loc: &ScalarField) -> DMatrix<f64> {
    let lap = laplacian_columns(grid, q);
    let h = weighted_tr_mul(grid, q, &lap) * -0.5 + potential_block(grid, q, v_loc);
    (&h + h.transpose()) * 0.5
}

/// f_i = 1/(exp((ε_i − μ)/kT) + 1) with μ bisected so that Σf = N0.
pub fn fermi_occupations(eigs: &[f64], kt: f64, n_occ: usize) -> Result<(Vec<f64>, f64)> {
    let r = eigs.len();
    if n_occ > r {
        return Err(Error::InfeasibleFilling { n_occ, r });
    }
    if !(kt > 0.0) {
        return Err(Error::InvalidInput(format!("kT must be positive, got {kt}")));
    }
    let lo0 = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if n_occ == r {
        warn!("all {r} reduced states are filled; occupations fixed to 1");
        return Ok((vec![1.0; r], hi0 + BRACKET_KT * kt));
    }
    let target = n_occ as f64;
    let fill = |mu: f64| -> Vec<f64> { eigs.iter().map(|e| fermi(e - mu, kt)).collect() };
    let count = |mu: f64| -> f64 { fill(mu).iter().sum() };
    let (mut lo, mut hi) = (lo0 - BRACKET_KT * kt, hi0 + BRACKET_KT * kt);
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..2000 {
        mu = 0.5 * (lo + hi);
        let n = count(mu);
        if (n - target).abs() <= 1e-12 || hi - lo <= f64::EPSILON * mu.abs().max(1.0) {
            break;
        }
        if n < target {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    Ok((fill(mu), mu))
}

fn fermi(x: f64, kt: f64) -> f64 {
    let t = x / kt;
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// S/k_B = −2 Σ [f ln f + (1−f) ln(1−f)] over the eigenvalues f of X̂.
pub fn entropy(occupations: &[f64]) -> f64 {
    -2.0 * occupations
        .iter()
        .map(|&f| {
            let f = f.clamp(ENTROPY_CLAMP, 1.0 - ENTROPY_CLAMP);
            f * f.ln() + (1.0 - f) * (1.0 - f).ln()
        })
        .sum::<f64>()
}

/// ρ̂ = 2 Σ_ij X̂_ij q_i q_j.
pub fn reduced_density(basis: &ReducedBasis, x_hat: &DMatrix<f64>) -> ScalarField {
    density_from_matrix(&basis.grid, &basis.q, x_hat)
}

/// Converged reduced density matrix with its chemical potential and
/// occupations (eigenvalues of X̂).
#[derive(Clone, Debug)]
pub struct ReducedDensityMatrix {
    pub x_hat: DMatrix<f64>,
    pub chemical_potential: f64,
    pub occupations: Vec<f64>,
}

impl ReducedDensityMatrix {
    pub fn trace(&self) -> f64 {
        self.x_hat.trace()
    }

    /// Eigenvalues of X̂, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.x_hat)
    }
}

fn sorted_eigenvalues(x: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(x.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Free energy and its parts at one density matrix.
#[derive(Clone, Debug)]
pub struct FreeEnergy {
    pub density: ScalarField,
    pub terms: DensityTerms,
    pub energy: EnergyBreakdown,
    /// S/k_B.
    pub entropy: f64,
    /// A = E_KS − kT·S/k_B.
    pub free: f64,
}

/// A_r[X̂] = E_KS[ρ̂, X̂] − kT·S_r[X̂].
pub fn mermin_free_energy(
    model: &ReducedModel,
    ops: &SpectralOps,
    ions: &IonicBackground,
    x_hat: &DMatrix<f64>,
    kt: f64,
) -> Result<FreeEnergy> {
    let density = reduced_density(&model.basis, x_hat);
    let terms = density_terms(ops, ions, &density)?;
    let kinetic = 2.0 * model.kinetic.component_mul(x_hat).sum();
    let energy = EnergyBreakdown::new(kinetic, &terms);
    let s = entropy(&sorted_eigenvalues(x_hat));
    Ok(FreeEnergy {
        free: energy.total - kt * s,
        density,
        terms,
        energy,
        entropy: s,
    })
}

/// Per-iteration record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmRecord {
    pub free_energy: f64,
    pub delta: f64,
    pub trace: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub fermi_error: f64,
}

#[derive(Clone, Debug)]
pub struct DmOutcome {
    pub dm: ReducedDensityMatrix,
    pub state: FreeEnergy,
    pub iterations: usize,
    /// |A_k − A_{k+1}| at termination.
    pub delta: f64,
    pub history: Vec<DmRecord>,
}

/// Fixed-β mixing of the Fermi-Dirac projector of the reduced Hamiltonian,
/// stopped on the change of the free energy.
pub fn dm_solve(
    model: &ReducedModel,
    ops: &SpectralOps,
    cfg: &AtomicConfiguration,
    params: &DmParams,
    x0: Option<&DMatrix<f64>>,
) -> Result<DmOutcome> {
    params.validate()?;
    let r = model.rank();
    let n_occ = model.basis.n_occ;
    if n_occ > r {
        return Err(Error::InfeasibleFilling { n_occ, r });
    }
    let mut x = match x0 {
        Some(x) if x.nrows() == r && x.ncols() == r => x.clone(),
        Some(x) => {
            return Err(Error::DimensionMismatch(format!(
                "initial density matrix is {}×{}, basis rank is {r}",
                x.nrows(),
                x.ncols()
            )))
        }
        None => model.cold_start(),
    };
    let ions = IonicBackground::new(ops.grid(), cfg)?;
    let mut state = mermin_free_energy(model, ops, &ions, &x, params.kt)?;
    let mut history = Vec::new();
    let mut delta = f64::INFINITY;
    for k in 0..params.max_iter {
        let h = model.project_hamiltonian(&state.terms.v_loc);
        let eig = SymmetricEigen::new(h);
        let (f, mu) = fermi_occupations(eig.eigenvalues.as_slice(), params.kt, n_occ)?;
        let fermi_error = (f.iter().sum::<f64>() - n_occ as f64).abs();
        let v = &eig.eigenvectors;
        let projector = v * DMatrix::from_diagonal(&DVector::from_column_slice(&f)) * v.transpose();
        let next = &x * (1.0 - params.beta) + projector * params.beta;
        x = (&next + next.transpose()) * 0.5;
        let new_state = mermin_free_energy(model, ops, &ions, &x, params.kt)?;
        delta = (state.free - new_state.free).abs();
        state = new_state;
        let occupations = sorted_eigenvalues(&x);
        history.push(DmRecord {
            free_energy: state.free,
            delta,
            trace: x.trace(),
            min_eig: occupations[0],
            max_eig: occupations[r - 1],
            fermi_error,
        });
        if !delta.is_finite() {
            break;
        }
        if delta < params.tol {
            debug!("dm_solve converged in {} iterations, A = {:.10}", k + 1, state.free);
            return Ok(DmOutcome {
                dm: ReducedDensityMatrix {
                    x_hat: x,
                    chemical_potential: mu,
                    occupations,
                },
                state,
                iterations: k + 1,
                delta,
                history,
            });
        }
    }
    Err(Error::DmNotConverged {
        iterations: history.len(),
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{orthonormalize, Species};
    use crate::rom::basis::build_reduced_basis_from;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fermi_examples() {
        let (f, mu) = fermi_occupations(&[0.0, 0.1], 0.1, 1).unwrap();
        assert!((mu - 0.05).abs() < 1e-10);
        assert!((f[0] - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-10);
        assert!((f[1] - 1.0 / (1.0 + 0.5f64.exp())).abs() < 1e-10);

        let (f, _) = fermi_occupations(&[-1.0, 0.0, 1.0], 1e-3, 1).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!((f[0] - 1.0).abs() < 1e-12 && f[1] < 1e-12 && f[2] < 1e-12);

        assert!((fermi(0.0, 0.3) - 0.5).abs() < 1e-15);
        assert!(matches!(
            fermi_occupations(&[0.0], 0.1, 2),
            Err(Error::InfeasibleFilling { .. })
        ));
        let (f, _) = fermi_occupations(&[0.0, 1.0], 0.1, 2).unwrap();
        assert_eq!(f, vec![1.0, 1.0]);
    }

    #[test]
    fn entropy_limits() {
        assert!(entropy(&[0.0, 1.0, 1.0, 0.0]).abs() < 1e-12);
        let r = 5;
        let s = entropy(&vec![0.5; r]);
        assert!((s - 2.0 * r as f64 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    fn small_basis(n: usize, r: usize, n_occ: usize) -> ReducedBasis {
        let g = Grid3::cubic(n, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = FieldMatrix::from_fn(g.len(), r, |_, _| rng.random_range(-1.0..1.0));
        let y = orthonormalize(&g, &y).unwrap();
        build_reduced_basis_from(&g, &y, n_occ, 0.0, None).unwrap()
    }

    #[test]
    fn reduced_density_matches_double_loop() {
        let b = small_basis(8, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let x = (&a + a.transpose()) * 0.5;
        let rho = reduced_density(&b, &x);
        for p in 0..b.grid.len() {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    s += 2.0 * x[(i, j)] * b.q[(p, i)] * b.q[(p, j)];
                }
            }
            assert!((rho.values[p] - s).abs() < 1e-12);
        }
        let mut d = DMatrix::zeros(5, 5);
        d[(0, 0)] = 1.0;
        assert!((reduced_density(&b, &d).integrate() - 2.0).abs() < 1e-10);
        let four = DMatrix::identity(5, 5) * 0.8;
        assert!((reduced_density(&b, &four).integrate() - 8.0).abs() < 1e-10);
    }

    #[test]
    fn full_basis_projection_reproduces_dense_spectrum() {
        let g = Grid3::cubic(8, 6.0).unwrap();
        let m = g.len();
        let y = orthonormalize(&g, &DMatrix::identity(m, m)).unwrap();
        let b = build_reduced_basis_from(&g, &y, 1, 0.0, None).unwrap();
        assert_eq!(b.rank(), m);
        let v = ScalarField::from_fn(g, |r| 0.3 * (r.x).cos() - 0.2 * r.y * r.z / 36.0);
        let lap = laplacian_columns(&g, &b.q);
        let raw = weighted_tr_mul(&g, &b.q, &lap) * -0.5 + potential_block(&g, &b.q, &v);
        assert!((&raw - raw.transpose()).amax() < 1e-10);
        let h = project_hamiltonian(&g, &b.q, &v);
        let id = DMatrix::<f64>::identity(m, m);
        let dense_lap = laplacian_columns(&g, &id);
        let mut dense = dense_lap * -0.5;
        for i in 0..m {
            dense[(i, i)] += v.values[i];
        }
        let dense = (&dense + dense.transpose()) * 0.5;
        let mut a = sorted_eigenvalues(&h);
        let mut d = sorted_eigenvalues(&dense);
        a.sort_by(f64::total_cmp);
        d.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&d) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        // a smaller subspace interlaces from above
        let sub = build_reduced_basis_from(&g, &y.columns(0, 10).into_owned(), 1, 0.0, None).unwrap();
        let hs = project_hamiltonian(&g, &sub.q, &v);
        assert!(sorted_eigenvalues(&hs)[0] >= d[0] - 1e-10);
    }

    #[test]
    fn dm_solve_keeps_invariants() {
        let g = Grid3::cubic(20, 12.0).unwrap();
        let ops = SpectralOps::new(g);
        let h = Species { rc: 1.2, ..Species::hydrogen() };
        let cfg = AtomicConfiguration::water_with(
            Species { rc: 1.2, ..Species::oxygen() },
            h,
            [Vector3::zeros(), Vector3::new(1.2, 1.5, 0.0), Vector3::new(1.2, -1.5, 0.0)],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = FieldMatrix::from_fn(g.len(), 10, |i, j| {
            let p = g.point(i);
            (-(p.norm_squared()) / (1.0 + j as f64)).exp() * (1.0 + 0.1 * rng.random_range(-1.0..1.0))
        });
        let b = build_reduced_basis_from(&g, &y, 4, 0.0, None).unwrap();
        let model = ReducedModel::new(b);
        let params = DmParams { max_iter: 400, tol: 1e-8, ..DmParams::default() };
        let out = dm_solve(&model, &ops, &cfg, &params, None).unwrap();
        assert!(out.delta < params.tol);
        for rec in &out.history {
            assert!((rec.trace - 4.0).abs() <= 1e-10);
            assert!(rec.min_eig >= -1e-10 && rec.max_eig <= 1.0 + 1e-10);
            assert!(rec.fermi_error <= 1e-12);
        }
        assert!((out.state.density.integrate() - 8.0).abs() < 1e-8);
        let x = &out.dm.x_hat;
        assert!((x - x.transpose()).amax() <= 1e-12);
        // warm start from the converged matrix stops immediately
        let again = dm_solve(&model, &ops, &cfg, &params, Some(x)).unwrap();
        assert!(again.iterations <= 3);
        assert!((again.state.free - out.state.free).abs() < 1e-7);
    }
}
