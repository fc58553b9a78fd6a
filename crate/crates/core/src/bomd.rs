//! Born-Oppenheimer molecular dynamics: position Verlet, the time loop and
//! water bond observables.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{
    ground_state, AtomicConfiguration, EnergyBreakdown, ScfParams, WavefunctionSet,
};
use crate::grid::SpectralOps;

/// Electronic energy and forces for one ionic configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceSample {
    pub forces: Vec<Vector3<f64>>,
    /// Electronic (Born-Oppenheimer) energy, Hartree.
    pub energy: f64,
    /// Iterations spent by the electronic solver.
    pub iterations: usize,
}

/// Source of Born-Oppenheimer forces for the time loop.
pub trait ForceProvider {
    fn evaluate(&mut self, positions: &[Vector3<f64>]) -> Result<ForceSample>;
}

impl<F> ForceProvider for F
where
    F: FnMut(&[Vector3<f64>]) -> Result<ForceSample>,
{
    fn evaluate(&mut self, positions: &[Vector3<f64>]) -> Result<ForceSample> {
        self(positions)
    }
}

/// Full-order forces: ABPG ground state plus Hellmann-Feynman forces, warm
/// started from the previous step's orbitals.
pub struct FomForceProvider<'a> {
    ops: &'a SpectralOps,
    template: AtomicConfiguration,
    params: ScfParams,
    orbitals: WavefunctionSet,
    /// Energy breakdown of the last evaluation.
    pub last_energy: Option<EnergyBreakdown>,
}

impl<'a> FomForceProvider<'a> {
    /// Cold start from seeded random orbitals.
    pub fn new(
        ops: &'a SpectralOps,
        cfg: &AtomicConfiguration,
        params: ScfParams,
        seed: u64,
    ) -> Result<Self> {
        let n = cfg.n_occupied()?;
        Ok(Self::with_guess(
            ops,
            cfg,
            params,
            WavefunctionSet::random(*ops.grid(), n, seed),
        ))
    }

    pub fn with_guess(
        ops: &'a SpectralOps,
        cfg: &AtomicConfiguration,
        params: ScfParams,
        guess: WavefunctionSet,
    ) -> Self {
        Self {
            ops,
            template: cfg.clone(),
            params,
            orbitals: guess,
            last_energy: None,
        }
    }

    /// Orbitals that seed the next solve.
    pub fn orbitals(&self) -> &WavefunctionSet {
        &self.orbitals
    }
}

impl ForceProvider for FomForceProvider<'_> {
    fn evaluate(&mut self, positions: &[Vector3<f64>]) -> Result<ForceSample> {
        let cfg = self.template.with_positions(positions);
        let (outcome, forces) = ground_state(self.ops, &cfg, &self.orbitals, &self.params)?;
        self.last_energy = Some(outcome.energy);
        let sample = ForceSample {
            forces,
            energy: outcome.energy.total,
            iterations: outcome.iterations,
        };
        self.orbitals = outcome.wavefunctions;
        Ok(sample)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdParams {
    /// Time step, atomic units.
    pub dt: f64,
    /// Number of recorded steps K_MD.
    pub steps: usize,
    /// Use Δt²/(2M) instead of Δt²/M for k ≥ 1.
    pub verlet_paper_halved: bool,
    /// Initial velocities (Bohr per atomic time unit); zero when absent.
    pub initial_velocities: Option<Vec<[f64; 3]>>,
}

impl Default for MdParams {
    fn default() -> Self {
        Self {
            dt: 40.0,
            steps: 50,
            verlet_paper_halved: false,
            initial_velocities: None,
        }
    }
}

/// Ionic state of the Verlet recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct MdState {
    pub positions_now: Vec<Vector3<f64>>,
    pub positions_prev: Vec<Vector3<f64>>,
    /// Used only at step 0.
    pub velocities_init: Vec<Vector3<f64>>,
    pub forces_now: Option<Vec<Vector3<f64>>>,
    pub step_index: usize,
    pub time: f64,
}

impl MdState {
    pub fn initial(positions: Vec<Vector3<f64>>, velocities: Vec<Vector3<f64>>) -> Self {
        Self {
            positions_prev: positions.clone(),
            positions_now: positions,
            velocities_init: velocities,
            forces_now: None,
            step_index: 0,
            time: 0.0,
        }
    }

    /// Swaps current and previous positions, reversing the direction of time
    /// for the two-step recursion.
    pub fn reversed(&self) -> Self {
        Self {
            positions_now: self.positions_prev.clone(),
            positions_prev: self.positions_now.clone(),
            forces_now: None,
            ..self.clone()
        }
    }
}

/// Advances one Verlet step.
///
/// Step 0: R₁ = R₀ + Δt V₀ + Δt²/(2M) F₀. Later steps:
/// R_{k+1} = 2R_k − R_{k−1} + c Δt²/M F_k with c = 1, or ½ when `halved`.
pub fn verlet_step(
    state: &MdState,
    masses: &[f64],
    dt: f64,
    pinned: &[bool],
    halved: bool,
) -> Result<MdState> {
    let forces = state.forces_now.as_ref().ok_or(Error::MissingForces)?;
    let n = state.positions_now.len();
    for len in [masses.len(), pinned.len(), forces.len(), state.positions_prev.len()] {
        if len != n {
            return Err(Error::LengthMismatch(len, n));
        }
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let first = state.step_index == 0;
    if first && state.velocities_init.len() != n {
        return Err(Error::LengthMismatch(state.velocities_init.len(), n));
    }
    let next = (0..n)
        .map(|i| {
            let r = state.positions_now[i];
            if pinned[i] {
                return r;
            }
            let accel = forces[i] * (dt * dt / masses[i]);
            if first {
                r + state.velocities_init[i] * dt + accel * 0.5
            } else {
                let c = if halved { 0.5 } else { 1.0 };
                r * 2.0 - state.positions_prev[i] + accel * c
            }
        })
        .collect();
    Ok(MdState {
        positions_prev: state.positions_now.clone(),
        positions_now: next,
        velocities_init: state.velocities_init.clone(),
        forces_now: None,
        step_index: state.step_index + 1,
        time: state.time + dt,
    })
}

/// (L1, L2, θ in degrees) for an O, H1, H2 ordered triple.
pub fn bond_observables(positions: &[Vector3<f64>]) -> Result<(f64, f64, f64)> {
    if positions.len() != 3 {
        return Err(Error::LengthMismatch(positions.len(), 3));
    }
    let b1 = positions[1] - positions[0];
    let b2 = positions[2] - positions[0];
    let (l1, l2) = (b1.norm(), b2.norm());
    if l1 < 1e-6 || l2 < 1e-6 {
        return Err(Error::DegenerateGeometry);
    }
    let c = (b1.dot(&b2) / (l1 * l2)).clamp(-1.0, 1.0);
    Ok((l1, l2, c.acos().to_degrees()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub step: usize,
    pub time: f64,
    pub positions: Vec<[f64; 3]>,
    pub forces: Vec<[f64; 3]>,
    pub l1: f64,
    pub l2: f64,
    pub theta_deg: f64,
    /// Electronic energy plus ionic kinetic energy.
    pub e_total: f64,
    pub e_ks: f64,
    pub kinetic: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<TrajectoryFrame>,
    /// State after the last recorded step, ready to continue the run.
    pub final_state: MdState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// max_t |E_total(t) − E_total(0)|.
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.frames.first() else {
            return 0.0;
        };
        self.frames
            .iter()
            .map(|f| (f.e_total - first.e_total).abs())
            .fold(0.0, f64::max)
    }
}

fn to_array(v: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    v.iter().map(|x| [x[0], x[1], x[2]]).collect()
}

/// Runs `cfg0` for `params.steps` recorded steps.
///
/// Kinetic energy at step k uses the central difference
/// (R_{k+1} − R_{k−1})/(2Δt), and V₀ at step 0.
pub fn bomd_run(
    cfg0: &AtomicConfiguration,
    params: &MdParams,
    provider: &mut dyn ForceProvider,
) -> Result<Trajectory> {
    let n = cfg0.len();
    let velocities = match &params.initial_velocities {
        Some(v) if v.len() != n => return Err(Error::LengthMismatch(v.len(), n)),
        Some(v) => v.iter().map(|a| Vector3::from(*a)).collect(),
        None => vec![Vector3::zeros(); n],
    };
    let state = MdState::initial(cfg0.positions(), velocities);
    run_from_state(cfg0, state, params, provider)
}

/// Continues the Verlet recursion from an arbitrary state.
pub fn run_from_state(
    cfg: &AtomicConfiguration,
    mut state: MdState,
    params: &MdParams,
    provider: &mut dyn ForceProvider,
) -> Result<Trajectory> {
    if params.steps == 0 {
        return Err(Error::InvalidInput("number of MD steps must be at least 1".into()));
    }
    let masses = cfg.masses();
    let pinned = cfg.pinned();
    let water = cfg.len() == 3;
    let mut frames = Vec::with_capacity(params.steps);
    for _ in 0..params.steps {
        let step = state.step_index;
        let at_step = |e: Error| Error::AtStep {
            step,
            source: Box::new(e),
        };
        let sample = provider.evaluate(&state.positions_now).map_err(at_step)?;
        if sample.forces.len() != state.positions_now.len() {
            return Err(at_step(Error::LengthMismatch(
                sample.forces.len(),
                state.positions_now.len(),
            )));
        }
        state.forces_now = Some(sample.forces.clone());
        let next = verlet_step(&state, &masses, params.dt, &pinned, params.verlet_paper_halved)
            .map_err(at_step)?;
        let kinetic = (0..masses.len())
            .filter(|&i| !pinned[i])
            .map(|i| {
                let v = if step == 0 {
                    state.velocities_init[i]
                } else {
                    (next.positions_now[i] - state.positions_prev[i]) / (2.0 * params.dt)
                };
                0.5 * masses[i] * v.norm_squared()
            })
            .sum::<f64>();
        let (l1, l2, theta_deg) = if water {
            bond_observables(&state.positions_now).map_err(at_step)?
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        frames.push(TrajectoryFrame {
            step,
            time: state.time,
            positions: to_array(&state.positions_now),
            forces: to_array(&sample.forces),
            l1,
            l2,
            theta_deg,
            e_total: sample.energy + kinetic,
            e_ks: sample.energy,
            kinetic,
            iterations: sample.iterations,
        });
        log::debug!(
            "md step {step}: E_total = {:.10} iterations = {}",
            sample.energy + kinetic,
            sample.iterations
        );
        state = next;
    }
    Ok(Trajectory {
        frames,
        final_state: state,
    })
}
