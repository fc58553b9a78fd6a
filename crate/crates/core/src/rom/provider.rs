//! Reduced-order forces and the force provider for molecular dynamics.

use log::warn;
use nalgebra::{DMatrix, Vector3};

use super::dm::{dm_solve, reduced_density, DmOutcome, DmParams, ReducedModel};
use super::frame::canonical_frame_transform;
use super::sampling::WaterParameters;
use crate::bomd::{bond_observables, ForceProvider, ForceSample};
use crate::error::Result;
use crate::fom::potential::density_terms;
use crate::fom::{forces_from_density, AtomicConfiguration, IonicBackground};
use crate::grid::SpectralOps;

/// Hellmann-Feynman forces with ρ̂ = 2 Σ X̂_ij q_i q_j as the electron density.
pub fn rom_forces(
    model: &ReducedModel,
    ops: &SpectralOps,
    cfg: &AtomicConfiguration,
    x_hat: &DMatrix<f64>,
) -> Result<Vec<Vector3<f64>>> {
    let rho = reduced_density(&model.basis, x_hat);
    let ions = IonicBackground::new(ops.grid(), cfg)?;
    let terms = density_terms(ops, &ions, &rho)?;
    Ok(forces_from_density(ops.grid(), cfg, &rho, &terms.electrostatic))
}

/// Forces from a finished density-matrix solve (its density and potential
/// are reused).
pub fn forces_from_outcome(
    ops: &SpectralOps,
    cfg: &AtomicConfiguration,
    out: &DmOutcome,
) -> Vec<Vector3<f64>> {
    forces_from_density(ops.grid(), cfg, &out.state.density, &out.state.terms.electrostatic)
}

/// Reduced-order forces for a pinned water molecule: align with the frame
/// of the basis, solve for X̂ (warm started), rotate the forces back.
pub struct RomForceProvider<'a> {
    ops: &'a SpectralOps,
    model: &'a ReducedModel,
    template: AtomicConfiguration,
    params: DmParams,
    x_hat: Option<DMatrix<f64>>,
    /// Outcome of the last solve, in the canonical frame.
    pub last: Option<DmOutcome>,
}

impl<'a> RomForceProvider<'a> {
    pub fn new(
        ops: &'a SpectralOps,
        model: &'a ReducedModel,
        template: &AtomicConfiguration,
        params: DmParams,
    ) -> Self {
        Self {
            ops,
            model,
            template: template.clone(),
            params,
            x_hat: None,
            last: None,
        }
    }

    pub fn with_initial_density_matrix(mut self, x0: DMatrix<f64>) -> Self {
        self.x_hat = Some(x0);
        self
    }

    pub fn density_matrix(&self) -> Option<&DMatrix<f64>> {
        self.x_hat.as_ref()
    }
}

impl ForceProvider for RomForceProvider<'_> {
    fn evaluate(&mut self, positions: &[Vector3<f64>]) -> Result<ForceSample> {
        let frame = canonical_frame_transform(positions)?;
        let canonical = frame.to_canonical(positions);
        let (l1, l2, theta) = bond_observables(&canonical)?;
        let nu = WaterParameters::from_observables(l1, l2, theta);
        if !nu.in_domain() {
            warn!(
                "geometry outside the training domain: s = ({:.4}, {:.4}, {:.3})",
                nu.s1, nu.s2, nu.s_theta
            );
        }
        let cfg = self.template.with_positions(&canonical);
        let out = dm_solve(self.model, self.ops, &cfg, &self.params, self.x_hat.as_ref())?;
        let forces = frame.vectors_to_lab(&forces_from_outcome(self.ops, &cfg, &out));
        let sample = ForceSample {
            forces,
            energy: out.state.free,
            iterations: out.iterations,
        };
        self.x_hat = Some(out.dm.x_hat.clone());
        self.last = Some(out);
        Ok(sample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{abpg_solve, hellmann_feynman_forces, ScfParams, Species, WavefunctionSet};
    use crate::grid::Grid3;
    use crate::rom::basis::build_reduced_basis_from;
    use crate::rom::sampling::{canonical_positions, config_with_species};
    use nalgebra::{Rotation3, Unit};

    fn soft() -> (Species, Species) {
        (
            Species { rc: 1.3, ..Species::oxygen() },
            Species { rc: 1.3, ..Species::hydrogen() },
        )
    }

    #[test]
    fn single_state_basis_reproduces_fom_forces() {
        let g = Grid3::cubic(20, 12.0).unwrap();
        let ops = SpectralOps::new(g);
        let (o, h) = soft();
        let cfg = config_with_species(&WaterParameters::new(1.0, 1.0, 0.0), o, h);
        let guess = WavefunctionSet::random(g, 4, 3);
        let params = ScfParams { tol: 1e-9, max_iter: 2000, ..ScfParams::default() };
        let out = abpg_solve(&ops, &cfg, &guess, &params).unwrap();
        let fom = hellmann_feynman_forces(&ops, &cfg, &out);
        let basis = build_reduced_basis_from(&g, &out.wavefunctions.phi, 4, 0.0, None).unwrap();
        let model = ReducedModel::new(basis);
        let x = DMatrix::identity(4, 4);
        let rom = rom_forces(&model, &ops, &cfg, &x).unwrap();
        for (a, b) in fom.iter().zip(&rom) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
        // symmetric geometry gives mirror-image hydrogen forces
        let (f1, f2) = (rom[1], rom[2]);
        assert!((f1.x - f2.x).abs() < 1e-6 && (f1.y + f2.y).abs() < 1e-6);
    }

    #[test]
    fn provider_is_rotation_equivariant() {
        let g = Grid3::cubic(20, 12.0).unwrap();
        let ops = SpectralOps::new(g);
        let (o, h) = soft();
        let nu = WaterParameters::new(1.02, 0.98, 2.0);
        let cfg = config_with_species(&nu, o, h);
        let guess = WavefunctionSet::random(g, 4, 3);
        let out = abpg_solve(&ops, &cfg, &guess, &ScfParams { max_iter: 2000, ..ScfParams::default() }).unwrap();
        let basis = build_reduced_basis_from(&g, &out.wavefunctions.phi, 4, 0.0, None).unwrap();
        let model = ReducedModel::new(basis);
        let params = DmParams::default();

        let lab0 = canonical_positions(&nu).to_vec();
        let mut p0 = RomForceProvider::new(&ops, &model, &cfg, params);
        let f0 = p0.evaluate(&lab0).unwrap();

        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.2, 0.9, -0.4)), 1.3)
            .into_inner();
        // swapped labels as well as a rotation
        let lab1 = vec![lab0[0], rot * lab0[2], rot * lab0[1]];
        let mut p1 = RomForceProvider::new(&ops, &model, &cfg, params);
        let f1 = p1.evaluate(&lab1).unwrap();
        assert!((f0.energy - f1.energy).abs() < 1e-10);
        let expect = [rot * f0.forces[0], rot * f0.forces[2], rot * f0.forces[1]];
        for (a, b) in f1.forces.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }
}
