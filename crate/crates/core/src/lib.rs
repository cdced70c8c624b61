//! Numerical laboratory for the Langevin–Smoluchowski diffusion
//! `dX = -Ψ'(X) dt + dW` on the line, read as the Wasserstein gradient flow
//! of relative entropy with respect to `q = e^{-2Ψ}`.

pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod functionals;
pub mod io;
pub mod measure;
pub mod oracle;
pub mod pde;
pub mod potential;
pub mod sde;
pub mod stochastic_analysis;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use measure::{Grid, GridDensity, GridFunction, ScoreField};
pub use oracle::GaussianState;
pub use pde::{solve_backward_kolmogorov, solve_forward, FlowSnapshotSeries, SolverOptions};
pub use potential::{Perturbation, Potential};
