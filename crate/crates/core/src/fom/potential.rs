//! Local Kohn-Sham potential and the electrostatic energy bookkeeping.
//!
//! Ion cores are represented by Gaussian charges ρ_s so that ρ + ρ_s is
//! neutral and the Hartree and core Coulomb potentials come from a single
//! periodic Poisson solve. The energy then needs the Gaussian self-energies
//! removed and the short-range erfc remainder of each ion pair added back.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::density::core_charge_density;
use super::species::AtomicConfiguration;
use super::xc::xc_energy_potential;
use crate::error::Result;
use crate::grid::{dot, Grid3, ScalarField, SpectralOps};

/// Ion-dependent fields of one configuration.
#[derive(Clone, Debug)]
pub struct IonicBackground {
    /// Gaussian core charge ρ_s.
    pub core: ScalarField,
    /// Short-range potential w.
    pub short_range: ScalarField,
    /// Σ Z²/(√(2π) rc).
    pub self_energy: f64,
    /// Σ_{I<J} Z_I Z_J erfc(d/γ)/d.
    pub pair_energy: f64,
}

impl IonicBackground {
    pub fn new(grid: &Grid3, cfg: &AtomicConfiguration) -> Result<Self> {
        let core = core_charge_density(grid, cfg)?;
        Ok(Self {
            core,
            short_range: short_range_potential(grid, cfg),
            self_energy: gaussian_self_energy(cfg),
            pair_energy: screened_pair_energy(grid, cfg),
        })
    }
}

/// w(r) = Σ_I (c0 + c2 d²) exp(−d²/rw²).
pub fn short_range_potential(grid: &Grid3, cfg: &AtomicConfiguration) -> ScalarField {
    ScalarField::from_fn(*grid, |r| {
        (0..cfg.len())
            .map(|i| {
                let d2 = grid.min_image(&r, &cfg.atoms[i].position).norm_squared();
                cfg.species_of(i).short_range(d2)
            })
            .sum()
    })
}

pub fn gaussian_self_energy(cfg: &AtomicConfiguration) -> f64 {
    (0..cfg.len())
        .map(|i| {
            let s = cfg.species_of(i);
            s.z * s.z / ((2.0 * PI).sqrt() * s.rc)
        })
        .sum()
}

fn pair_width(cfg: &AtomicConfiguration, i: usize, j: usize) -> f64 {
    let (a, b) = (cfg.species_of(i).rc, cfg.species_of(j).rc);
    (a * a + b * b).sqrt()
}

pub fn screened_pair_energy(grid: &Grid3, cfg: &AtomicConfiguration) -> f64 {
    let mut e = 0.0;
    for i in 0..cfg.len() {
        for j in i + 1..cfg.len() {
            let d = grid
                .min_image(&cfg.atoms[i].position, &cfg.atoms[j].position)
                .norm();
            let gamma = pair_width(cfg, i, j);
            e += cfg.species_of(i).z * cfg.species_of(j).z * erfc(d / gamma) / d;
        }
    }
    e
}

/// g(d) = erfc(d/γ)/d² + 2 exp(−d²/γ²)/(√π γ d), the magnitude of −dE/dd
/// per unit Z_I Z_J for the screened pair term.
pub fn screened_pair_kernel(d: f64, gamma: f64) -> f64 {
    erfc(d / gamma) / (d * d) + 2.0 * (-(d * d) / (gamma * gamma)).exp() / (PI.sqrt() * gamma * d)
}

/// Forces from the screened pair energy.
pub fn screened_pair_forces(grid: &Grid3, cfg: &AtomicConfiguration) -> Vec<Vector3<f64>> {
    let mut f = vec![Vector3::zeros(); cfg.len()];
    for i in 0..cfg.len() {
        for j in 0..cfg.len() {
            if i == j {
                continue;
            }
            let r = grid.min_image(&cfg.atoms[i].position, &cfg.atoms[j].position);
            let d = r.norm();
            let zz = cfg.species_of(i).z * cfg.species_of(j).z;
            f[i] += r * (zz * screened_pair_kernel(d, pair_width(cfg, i, j)) / d);
        }
    }
    f
}

/// Density-dependent potential pieces and energies.
#[derive(Clone, Debug)]
pub struct DensityTerms {
    /// Solution of the neutral Poisson problem, v_H + v_s.
    pub electrostatic: ScalarField,
    pub mu_xc: ScalarField,
    /// v_tot + μ_xc + w.
    pub v_loc: ScalarField,
    pub e_es: f64,
    pub e_xc: f64,
    pub e_sr: f64,
}

pub fn density_terms(
    ops: &SpectralOps,
    ions: &IonicBackground,
    rho: &ScalarField,
) -> Result<DensityTerms> {
    let source = rho.add(&ions.core);
    let electrostatic = ops.poisson(&source)?;
    let (e_xc, mu_xc) = xc_energy_potential(rho);
    let w = rho.grid.cell_volume();
    let e_es = 0.5 * w * dot(&source.values, &electrostatic.values) - ions.self_energy
        + ions.pair_energy;
    let e_sr = w * dot(&rho.values, &ions.short_range.values);
    let v_loc = ScalarField {
        grid: rho.grid,
        values: electrostatic
            .values
            .iter()
            .zip(&mu_xc.values)
            .zip(&ions.short_range.values)
            .map(|((a, b), c)| a + b + c)
            .collect(),
    };
    Ok(DensityTerms {
        electrostatic,
        mu_xc,
        v_loc,
        e_es,
        e_xc,
        e_sr,
    })
}

/// v_loc = poisson(ρ + ρ_s) + μ_xc(ρ) + w.
pub fn build_local_potential(
    ops: &SpectralOps,
    rho: &ScalarField,
    cfg: &AtomicConfiguration,
) -> Result<ScalarField> {
    let ions = IonicBackground::new(ops.grid(), cfg)?;
    Ok(density_terms(ops, &ions, rho)?.v_loc)
}

/// Kohn-Sham energy split into kinetic, electrostatic, exchange-correlation
/// and short-range pseudopotential parts (Hartree).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub electrostatic: f64,
    pub xc: f64,
    pub short_range: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(kinetic: f64, terms: &DensityTerms) -> Self {
        Self {
            kinetic,
            electrostatic: terms.e_es,
            xc: terms.e_xc,
            short_range: terms.e_sr,
            total: kinetic + terms.e_es + terms.e_xc + terms.e_sr,
        }
    }
}
