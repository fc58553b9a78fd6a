//! Hellmann-Feynman forces.
//!
//! The forces are the exact derivatives of the discrete energy with respect to
//! ion positions at fixed electron density: the grid samples of ρ_s and w are
//! differentiated analytically and summed with the same quadrature weight.

use nalgebra::Vector3;

use super::potential::screened_pair_forces;
use super::species::AtomicConfiguration;
use crate::grid::{Grid3, ScalarField};
use crate::par;

/// F_I = −h³ Σ_r [v_tot ∂ρ_s,I/∂R_I + ρ ∂w_I/∂R_I] + pair terms.
///
/// `electrostatic` is the periodic solution for ρ + ρ_s that was used to
/// obtain `rho`.
pub fn forces_from_density(
    grid: &Grid3,
    cfg: &AtomicConfiguration,
    rho: &ScalarField,
    electrostatic: &ScalarField,
) -> Vec<Vector3<f64>> {
    let w = grid.cell_volume();
    let mut forces = screened_pair_forces(grid, cfg);
    for (atom, f) in forces.iter_mut().enumerate() {
        let s = cfg.species_of(atom);
        let center = cfg.atoms[atom].position;
        let rc2 = s.rc * s.rc;
        let norm = -s.z / (std::f64::consts::PI.sqrt() * s.rc).powi(3);
        let g = par::sum_blocks3(grid.len(), |range| {
            let mut acc = [0.0; 3];
            for idx in range {
                let d = grid.min_image(&grid.point(idx), &center);
                let d2 = d.norm_squared();
                // ∂ρ_s/∂R = ρ_s·2d/rc², ∂w/∂R = −(∇_r w)
                let core = norm * (-d2 / rc2).exp() * 2.0 / rc2;
                let coef = electrostatic.values[idx] * core
                    - rho.values[idx] * s.short_range_radial_gradient(d2);
                for k in 0..3 {
                    acc[k] += coef * d[k];
                }
            }
            acc
        });
        *f -= Vector3::new(g[0], g[1], g[2]) * w;
    }
    forces
}
