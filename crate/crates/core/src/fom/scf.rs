//! Accelerated block preconditioned gradient (ABPG) solver for the occupied
//! Kohn-Sham subspace, with one-step Anderson extrapolation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::density::{density_from_matrix, gram_inverse, WavefunctionSet};
use super::hamiltonian::{hamiltonian_from_laplacian, residual_with};
use super::potential::{density_terms, DensityTerms, EnergyBreakdown, IonicBackground};
use super::species::AtomicConfiguration;
use crate::error::{Error, Result};
use crate::grid::{laplacian_columns, weighted_tr_mul, FieldMatrix, Grid3, ScalarField, SpectralOps};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScfParams {
    /// Convergence threshold on the residual norm of the orthonormalized
    /// orbitals, ‖R S^{-1/2}‖_F·√h³.
    pub tol: f64,
    pub max_iter: usize,
    /// Preconditioner shift σ (Hartree).
    pub shift: f64,
}

impl Default for ScfParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            shift: 1.5,
        }
    }
}

/// Everything derived from one orbital matrix at fixed ions.
#[derive(Clone, Debug)]
pub struct ScfEvaluation {
    pub density: ScalarField,
    pub terms: DensityTerms,
    pub energy: EnergyBreakdown,
    pub h_phi: FieldMatrix,
    pub residual: FieldMatrix,
    /// Residual norm of the equivalent orthonormal orbitals.
    pub residual_norm: f64,
}

pub fn evaluate(
    ops: &SpectralOps,
    ions: &IonicBackground,
    wf: &WavefunctionSet,
) -> Result<ScfEvaluation> {
    let grid = &wf.grid;
    let s_inv = gram_inverse(&wf.gram())?;
    let density = density_from_matrix(grid, &wf.phi, &s_inv);
    let terms = density_terms(ops, ions, &density)?;
    let lap = laplacian_columns(grid, &wf.phi);
    let kinetic = -(&s_inv * weighted_tr_mul(grid, &wf.phi, &lap)).trace();
    let energy = EnergyBreakdown::new(kinetic, &terms);
    let h_phi = hamiltonian_from_laplacian(&terms.v_loc, &wf.phi, &lap);
    let residual = residual_with(grid, &wf.phi, &h_phi, &s_inv);
    let residual_norm = orthonormal_residual_norm(grid, &residual, &s_inv);
    Ok(ScfEvaluation {
        density,
        terms,
        energy,
        h_phi,
        residual,
        residual_norm,
    })
}

/// ‖R L⁻ᵀ‖_F·√h³ with S = LLᵀ: the residual norm of the orthonormal orbitals
/// spanning the same subspace. Equals ‖R‖_F·√h³ when S = I and, unlike it,
/// does not grow with the column norms of Φ.
fn orthonormal_residual_norm(grid: &Grid3, residual: &FieldMatrix, s_inv: &DMatrix<f64>) -> f64 {
    // ‖R L⁻ᵀ‖²_F = tr(RᵀR S⁻¹)
    let rr = weighted_tr_mul(grid, residual, residual);
    (rr.component_mul(s_inv).sum()).max(0.0).sqrt()
}

/// Kohn-Sham energy of an arbitrary (not necessarily converged) orbital set.
pub fn total_energy(
    ops: &SpectralOps,
    wf: &WavefunctionSet,
    cfg: &AtomicConfiguration,
) -> Result<EnergyBreakdown> {
    let ions = IonicBackground::new(ops.grid(), cfg)?;
    Ok(evaluate(ops, &ions, wf)?.energy)
}

/// θ = ⟨P_k − P_{k−1}, P_k⟩_F / ‖P_k − P_{k−1}‖²_F, or 0 when the
/// difference is negligible.
pub fn anderson_coefficient(p_k: &DMatrix<f64>, p_km1: &DMatrix<f64>) -> f64 {
    let diff = p_k - p_km1;
    let dd = diff.norm_squared();
    if dd.sqrt() < 1e-14 * p_k.norm() || dd == 0.0 {
        return 0.0;
    }
    diff.dot(p_k) / dd
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScfRecord {
    pub energy: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ScfOutcome {
    /// Converged orbitals, orthonormalized.
    pub wavefunctions: WavefunctionSet,
    pub energy: EnergyBreakdown,
    pub density: ScalarField,
    /// Electrostatic potential v_H + v_s of the converged density.
    pub electrostatic: ScalarField,
    /// Number of orbital updates performed.
    pub iterations: usize,
    pub residual: f64,
    /// Energy and residual at every evaluated iterate.
    pub history: Vec<ScfRecord>,
}

/// Minimizes the Kohn-Sham energy over N = N0 orbitals.
///
/// Each iteration rebuilds the density (Gram-inverse weights), the local
/// potential and the gradient R = HΦ − ΦS⁻¹ΦᵀHΦ, stops once ‖R‖ < tol, and
/// otherwise steps along the preconditioned gradient P = K·R. From the second
/// step on, iterate and correction are both extrapolated with the Anderson
/// coefficient before the step is taken.
pub fn abpg_solve(
    ops: &SpectralOps,
    cfg: &AtomicConfiguration,
    phi0: &WavefunctionSet,
    params: &ScfParams,
) -> Result<ScfOutcome> {
    if params.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    if !(params.shift > 0.0) {
        return Err(Error::NonPositiveShift(params.shift));
    }
    let n_occ = cfg.n_occupied()?;
    if phi0.n_orbitals() != n_occ {
        return Err(Error::InvalidInput(format!(
            "solver needs exactly {n_occ} orbitals, got {}",
            phi0.n_orbitals()
        )));
    }
    let ions = IonicBackground::new(ops.grid(), cfg)?;
    let grid = phi0.grid;

    let mut phi = phi0.phi.clone();
    let mut prev: Option<(FieldMatrix, FieldMatrix)> = None;
    let mut history = Vec::new();
    let mut k = 0;
    loop {
        let wf = WavefunctionSet {
            grid,
            phi: phi.clone(),
            n_occ,
        };
        let eval = evaluate(ops, &ions, &wf)?;
        history.push(ScfRecord {
            energy: eval.energy.total,
            residual: eval.residual_norm,
        });
        log::trace!(
            "abpg iter {k}: E = {:.12} residual = {:.3e}",
            eval.energy.total,
            eval.residual_norm
        );
        if eval.residual_norm < params.tol {
            return Ok(ScfOutcome {
                wavefunctions: wf.orthonormalized()?,
                energy: eval.energy,
                density: eval.density,
                electrostatic: eval.terms.electrostatic,
                iterations: k,
                residual: eval.residual_norm,
                history,
            });
        }
        if k == params.max_iter {
            return Err(Error::NotConverged {
                iterations: k,
                residual: eval.residual_norm,
            });
        }
        if !eval.residual_norm.is_finite() {
            return Err(Error::NotConverged {
                iterations: k,
                residual: eval.residual_norm,
            });
        }

        let p = ops.precondition(&eval.residual, params.shift)?;
        let next = match &prev {
            None => &phi - &p,
            Some((phi_prev, p_prev)) => {
                let theta = anderson_coefficient(&p, p_prev);
                let phi_bar = &phi + (phi_prev - &phi) * theta;
                let p_bar = &p + (p_prev - &p) * theta;
                phi_bar - p_bar
            }
        };
        prev = Some((phi, p));
        phi = next;
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anderson_coefficient_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(anderson_coefficient(&b, &b), 0.0);
        assert!((anderson_coefficient(&b, &a) - 0.5).abs() < 1e-15);
        let p = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        assert!((anderson_coefficient(&p, &(&p * 2.0)) + 1.0).abs() < 1e-15);
    }
}
