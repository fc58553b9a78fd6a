//! Reduced-order model: parametric sampling, POD basis, projected
//! density-matrix solver and reduced forces.

pub mod basis;
pub mod dm;
pub mod frame;
pub mod provider;
pub mod sampling;

pub use basis::{
    build_reduced_basis, build_reduced_basis_from, collect_snapshots, collect_training_snapshots,
    truncation_rank, BasisProvenance, ReducedBasis, SnapshotSet, SnapshotSettings,
};
pub use dm::{
    dm_solve, entropy, fermi_occupations, mermin_free_energy, project_hamiltonian,
    reduced_density, DmOutcome, DmParams, DmRecord, FreeEnergy, ReducedDensityMatrix,
    ReducedModel,
};
pub use frame::{canonical_frame_transform, kabsch_rotation, FrameTransform};
pub use provider::{forces_from_outcome, rom_forces, RomForceProvider};
pub use sampling::{
    canonical_positions, config_from_parameters, config_with_species, enumerate_training_set,
    SamplingPlan, WaterParameters,
};
