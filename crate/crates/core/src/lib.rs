//! Real-space Kohn-Sham molecular dynamics with a reduced-order
//! density-matrix solver.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: periodic grids, the fourth-order Laplacian, Poisson solver and
//!   preconditioner.
//! - [`fom`]: the full-order Kohn-Sham model, its gradient-based orbital
//!   optimizer and Hellmann-Feynman forces.
//! - [`bomd`]: Verlet integration and the Born-Oppenheimer MD loop.
//! - [`rom`]: parametric sampling, POD bases, the projected density-matrix
//!   solver and the reduced MD force provider.
//! - [`study`]: force-accuracy and trajectory comparison studies.
//! - [`io`]: run configuration, binary snapshot/basis files and CSV output.

pub mod bomd;
pub mod error;
pub mod fom;
pub mod grid;
pub mod io;
pub mod par;
pub mod rom;
pub mod study;

pub use error::{Error, Result};
