//! Run configuration: a strict JSON schema and its canonical hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bomd::MdParams;
use crate::error::{Error, Result};
use crate::fom::{Atom, AtomicConfiguration, ScfParams, Species};
use crate::grid::Grid3;
use crate::rom::{DmParams, SamplingPlan, SnapshotSettings};

/// Default starting geometry of the water molecule (Bohr), O first.
pub const WATER_INITIAL_POSITIONS: [[f64; 3]; 3] =
    [[0.0, 0.0, 0.0], [-0.45, 1.57, -1.07], [-0.45, -1.48, -0.97]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis.
    pub n: usize,
    /// Cubic box length (Bohr).
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    /// Species label.
    pub label: String,
    pub position: [f64; 3],
    #[serde(default)]
    pub pinned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Residual tolerance δ_ES.
    pub tol: f64,
    /// Iteration cap K_ES.
    pub max_iter: usize,
    /// Preconditioner shift σ (Hartree).
    pub shift: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomConfig {
    pub k_l: usize,
    pub k_theta: usize,
    pub delta_ef: f64,
    pub beta: f64,
    /// Free-energy tolerance δ_DM.
    pub tol: f64,
    /// Iteration cap K_DM.
    pub max_iter: usize,
    /// Electronic temperature (Hartree).
    pub kt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdConfig {
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub verlet_paper_halved: bool,
    /// Mass overrides by species label (electron masses).
    #[serde(default)]
    pub masses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_velocities: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub snapshots: PathBuf,
    pub basis: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub species: Vec<Species>,
    pub atoms: Vec<AtomConfig>,
    pub solver: SolverConfig,
    pub rom: RomConfig,
    pub md: MdConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    /// Pinned water on a 32³ grid in a 12 Bohr box.
    fn default() -> Self {
        let scf = ScfParams::default();
        let dm = DmParams::default();
        let md = MdParams::default();
        let labels = ["O", "H", "H"];
        Self {
            grid: GridConfig { n: 32, length: 12.0 },
            species: vec![Species::oxygen(), Species::hydrogen()],
            atoms: labels
                .iter()
                .zip(WATER_INITIAL_POSITIONS)
                .enumerate()
                .map(|(i, (l, p))| AtomConfig {
                    label: l.to_string(),
                    position: p,
                    pinned: i == 0,
                })
                .collect(),
            solver: SolverConfig {
                tol: scf.tol,
                max_iter: scf.max_iter,
                shift: scf.shift,
                seed: 7,
            },
            rom: RomConfig {
                k_l: 2,
                k_theta: 2,
                delta_ef: 1e-8,
                beta: dm.beta,
                tol: dm.tol,
                max_iter: dm.max_iter,
                kt: dm.kt,
            },
            md: MdConfig {
                dt: md.dt,
                steps: md.steps,
                verlet_paper_halved: false,
                masses: BTreeMap::new(),
                initial_velocities: None,
            },
            paths: PathsConfig {
                snapshots: "snapshots.romd".into(),
                basis: "basis.romd".into(),
                output_dir: "out".into(),
            },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses and validates; unknown keys are rejected by name.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_text(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        positive("grid.length", self.grid.length)?;
        positive("solver.tol", self.solver.tol)?;
        positive("solver.shift", self.solver.shift)?;
        positive("rom.tol", self.rom.tol)?;
        positive("rom.kt", self.rom.kt)?;
        positive("md.dt", self.md.dt)?;
        if !(0.0..1.0).contains(&self.rom.delta_ef) {
            return Err(Error::Config(format!(
                "`rom.delta_ef` must lie in [0, 1), got {}",
                self.rom.delta_ef
            )));
        }
        if !(self.rom.beta > 0.0 && self.rom.beta <= 1.0) {
            return Err(Error::Config(format!("`rom.beta` must lie in (0, 1], got {}", self.rom.beta)));
        }
        if self.solver.max_iter == 0 || self.rom.max_iter == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        self.plan()?;
        for s in &self.species {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for (label, m) in &self.md.masses {
            positive(&format!("md.masses.{label}"), *m)?;
            self.species_index(label)?;
        }
        if let Some(v) = &self.md.initial_velocities {
            if v.len() != self.atoms.len() {
                return Err(Error::Config(format!(
                    "`md.initial_velocities` has {} entries for {} atoms",
                    v.len(),
                    self.atoms.len()
                )));
            }
        }
        let cfg = self.configuration()?;
        cfg.validate_on(&self.grid()?)
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.n_occupied().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn species_index(&self, label: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::Config(format!("unknown species label `{label}`")))
    }

    pub fn grid(&self) -> Result<Grid3> {
        Grid3::cubic(self.grid.n, self.grid.length).map_err(|e| Error::Config(e.to_string()))
    }

    /// Atoms and species with mass overrides applied.
    pub fn configuration(&self) -> Result<AtomicConfiguration> {
        let mut species = self.species.clone();
        for s in &mut species {
            if let Some(m) = self.md.masses.get(&s.label) {
                s.mass = *m;
            }
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                Ok(Atom {
                    species: self.species_index(&a.label)?,
                    position: Vector3::from(a.position),
                    pinned: a.pinned,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        AtomicConfiguration::new(species, atoms).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scf_params(&self) -> ScfParams {
        ScfParams {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            shift: self.solver.shift,
        }
    }

    pub fn dm_params(&self) -> DmParams {
        DmParams {
            max_iter: self.rom.max_iter,
            tol: self.rom.tol,
            beta: self.rom.beta,
            kt: self.rom.kt,
        }
    }

    pub fn md_params(&self) -> MdParams {
        MdParams {
            dt: self.md.dt,
            steps: self.md.steps,
            verlet_paper_halved: self.md.verlet_paper_halved,
            initial_velocities: self.md.initial_velocities.clone(),
        }
    }

    pub fn plan(&self) -> Result<SamplingPlan> {
        SamplingPlan::new(self.rom.k_l, self.rom.k_theta).map_err(|e| Error::Config(e.to_string()))
    }

    /// Training settings; needs species labelled `O` and `H`.
    pub fn snapshot_settings(&self) -> Result<SnapshotSettings> {
        let cfg = self.configuration()?;
        let pick = |l: &str| -> Result<Species> { Ok(cfg.species[self.species_index(l)?].clone()) };
        Ok(SnapshotSettings {
            oxygen: pick("O")?,
            hydrogen: pick("H")?,
            scf: self.scf_params(),
            seed: self.solver.seed,
        })
    }

    /// Sorted-key compact JSON; the basis of [`RunConfig::hash`].
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("configuration serializes");
        value.to_string()
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}
