//! Full-order real-space Kohn-Sham model.

pub mod density;
pub mod forces;
pub mod hamiltonian;
pub mod potential;
pub mod scf;
pub mod species;
pub mod xc;

pub use density::{
    core_charge_density, density_from_matrix, electron_density, gram_inverse, orthonormalize,
    WavefunctionSet,
};
pub use forces::forces_from_density;
pub use hamiltonian::{apply_hamiltonian, scf_residual};
pub use potential::{build_local_potential, EnergyBreakdown, IonicBackground};
pub use scf::{
    abpg_solve, anderson_coefficient, evaluate, total_energy, ScfOutcome, ScfParams, ScfRecord,
};
pub use species::{Atom, AtomicConfiguration, Species};
pub use xc::{xc_energy_potential, ExchangeCorrelation, SlaterExchange};

use nalgebra::Vector3;

use crate::error::Result;
use crate::grid::SpectralOps;

/// Forces at a converged ground state.
pub fn hellmann_feynman_forces(
    ops: &SpectralOps,
    cfg: &AtomicConfiguration,
    outcome: &ScfOutcome,
) -> Vec<Vector3<f64>> {
    forces_from_density(ops.grid(), cfg, &outcome.density, &outcome.electrostatic)
}

/// Converged ground state and forces for one configuration.
pub fn ground_state(
    ops: &SpectralOps,
    cfg: &AtomicConfiguration,
    guess: &WavefunctionSet,
    params: &ScfParams,
) -> Result<(ScfOutcome, Vec<Vector3<f64>>)> {
    let outcome = abpg_solve(ops, cfg, guess, params)?;
    let forces = hellmann_feynman_forces(ops, cfg, &outcome);
    Ok((outcome, forces))
}
