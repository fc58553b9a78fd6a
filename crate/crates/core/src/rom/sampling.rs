//! Parametric sampling of pinned water geometries.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{AtomicConfiguration, Species};

/// Reference bond length (Bohr) scaled by s1 and s2.
pub const REFERENCE_BOND: f64 = 1.83;
/// Reference bond angle (degrees) shifted by s_theta.
pub const REFERENCE_ANGLE: f64 = 104.5;
/// Bond scaling range of the training domain.
pub const BOND_SCALE_RANGE: (f64, f64) = (0.95, 1.05);
/// Angle offset range of the training domain (degrees).
pub const ANGLE_SHIFT_RANGE: (f64, f64) = (-5.0, 5.0);

/// Geometry parameters: L1 = 1.83 s1, L2 = 1.83 s2, θ = 104.5° + s_theta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterParameters {
    pub s1: f64,
    pub s2: f64,
    pub s_theta: f64,
}

impl WaterParameters {
    pub fn new(s1: f64, s2: f64, s_theta: f64) -> Self {
        Self { s1, s2, s_theta }
    }

    /// Parameters of a geometry already in the canonical frame.
    pub fn from_observables(l1: f64, l2: f64, theta_deg: f64) -> Self {
        Self {
            s1: l1 / REFERENCE_BOND,
            s2: l2 / REFERENCE_BOND,
            s_theta: theta_deg - REFERENCE_ANGLE,
        }
    }

    pub fn bond_lengths(&self) -> (f64, f64) {
        (REFERENCE_BOND * self.s1, REFERENCE_BOND * self.s2)
    }

    pub fn angle_deg(&self) -> f64 {
        REFERENCE_ANGLE + self.s_theta
    }

    /// Whether the parameters lie in the training domain.
    pub fn in_domain(&self) -> bool {
        let eps = 1e-12;
        let (lo, hi) = BOND_SCALE_RANGE;
        let (tlo, thi) = ANGLE_SHIFT_RANGE;
        self.s2 >= lo - eps
            && self.s2 <= self.s1 + eps
            && self.s1 <= hi + eps
            && self.s_theta >= tlo - eps
            && self.s_theta <= thi + eps
    }

    /// Equality up to 1e−12 in every component.
    pub fn matches(&self, other: &Self) -> bool {
        (self.s1 - other.s1).abs() <= 1e-12
            && (self.s2 - other.s2).abs() <= 1e-12
            && (self.s_theta - other.s_theta).abs() <= 1e-12
    }
}

/// Numbers of sampling intervals for the bond scalings and the angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub k_l: usize,
    pub k_theta: usize,
}

impl SamplingPlan {
    pub fn new(k_l: usize, k_theta: usize) -> Result<Self> {
        let plan = Self { k_l, k_theta };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_l == 0 || self.k_theta == 0 {
            return Err(Error::InvalidPlan(format!(
                "interval counts must be at least 1, got K_L = {}, K_theta = {}",
                self.k_l, self.k_theta
            )));
        }
        Ok(())
    }

    /// (K_L+1)(K_L+2)(K_θ+1)/2.
    pub fn n_configurations(&self) -> usize {
        (self.k_l + 1) * (self.k_l + 2) * (self.k_theta + 1) / 2
    }

    fn bond_scale(&self, i: usize) -> f64 {
        let (lo, hi) = BOND_SCALE_RANGE;
        lo + i as f64 * (hi - lo) / self.k_l as f64
    }

    fn angle_shift(&self, j: usize) -> f64 {
        let (lo, hi) = ANGLE_SHIFT_RANGE;
        lo + j as f64 * (hi - lo) / self.k_theta as f64
    }
}

/// Training set in lexicographic (s1, s2, s_theta) order with s2 ≤ s1.
pub fn enumerate_training_set(plan: &SamplingPlan) -> Result<Vec<WaterParameters>> {
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.n_configurations());
    for i in 0..=plan.k_l {
        for j in 0..=i {
            for k in 0..=plan.k_theta {
                out.push(WaterParameters {
                    s1: plan.bond_scale(i),
                    s2: plan.bond_scale(j),
                    s_theta: plan.angle_shift(k),
                });
            }
        }
    }
    Ok(out)
}

/// Canonical positions: O at the origin, H1 and H2 in the z = 0 plane
/// symmetric about +x, H1 at y > 0.
pub fn canonical_positions(nu: &WaterParameters) -> [Vector3<f64>; 3] {
    let (l1, l2) = nu.bond_lengths();
    let half = nu.angle_deg().to_radians() / 2.0;
    let (s, c) = half.sin_cos();
    [
        Vector3::zeros(),
        Vector3::new(l1 * c, l1 * s, 0.0),
        Vector3::new(l2 * c, -l2 * s, 0.0),
    ]
}

/// Water configuration for `nu` with the default species.
pub fn config_from_parameters(nu: &WaterParameters) -> AtomicConfiguration {
    config_with_species(nu, Species::oxygen(), Species::hydrogen())
}

pub fn config_with_species(
    nu: &WaterParameters,
    oxygen: Species,
    hydrogen: Species,
) -> AtomicConfiguration {
    AtomicConfiguration::water_with(oxygen, hydrogen, canonical_positions(nu))
}
