//! Orbital minimization for pseudospectrally discretized 2D periodic
//! Schrödinger Hamiltonians.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`], [`potential`] and [`hamiltonian`] build the periodic grid, the
//!   test potentials and the FFT-applied operator `-Δ/2 + V - σ`;
//! * [`oracle`] holds dense reference computations (eigendecomposition,
//!   subspace distance, Hessian, condition bounds);
//! * [`omm`] implements the OMM energy, its gradient, the exact quartic line
//!   search and the preconditioned nonlinear CG driver;
//! * [`kinetic`] provides the diagonal-in-k preconditioners (shifted
//!   Laplacian, TPA, gTPA);
//! * [`poles`], [`projection`], [`gmres`] and [`sparsify`] build the
//!   approximate Fermi-operator projection preconditioner;
//! * [`harness`] assembles the benchmark problems and writes table CSVs.

pub mod block;
pub mod error;
pub mod gmres;
pub mod grid;
pub mod hamiltonian;
pub mod harness;
pub mod kinetic;
pub mod omm;
pub mod operator;
pub mod oracle;
pub mod poles;
pub mod potential;
pub mod projection;
pub mod rrqr;
pub mod sparsify;

pub use block::WaveBlock;
pub use error::{Error, Result};
pub use gmres::{GmresConfig, GmresPrecond};
pub use grid::SpectralGrid;
pub use hamiltonian::HamiltonianOp;
pub use kinetic::{FilterKind, KineticFilter};
pub use omm::{IdentityPrecond, OmmConfig, OmmReport, Preconditioner};
pub use operator::{BlockOperator, DenseOperator};
pub use oracle::SpectralData;
pub use poles::{Contour, PoleSet, SpectralWindow};
pub use potential::{PotentialSpec, RealField, VacancyMode};
pub use projection::{PoleSolver, ProjectionMode, ProjectionPrecond};
pub use sparsify::SparsifiedSystem;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
