//! Symmetry-aware small-signal modal analysis for power systems built from
//! groups of identical (or nearly identical) inverter-based subsystems.
//!
//! The crate is organised bottom-up:
//!
//! * [`lti`]: complex state-space models and their parallel interconnection
//!   with an external grid.
//! * [`symmetry`]: grouping of subsystems, the similarity transform that
//!   splits inner-group dynamics from the group-grid dynamics, and the
//!   resulting decomposition.
//! * [`modal`]: eigen-analysis, participation factors, mode clusters, group
//!   participation factors and the relative-change invariance metric.
//! * [`devices`]: small-signal templates (RL branch, RL grid, grid-forming and
//!   grid-following inverters, user-supplied LTI blocks).
//! * [`network`]: radial network topologies turned into assembled systems.
//! * [`simkit`]: exact zero-order-hold simulation and FFT peak extraction.

pub mod devices;
pub mod linalg;
pub mod lti;
pub mod modal;
pub mod network;
pub mod simkit;
pub mod symmetry;

mod dual;

pub use linalg::CMat;
pub use num_complex::Complex64;

use thiserror::Error;

/// Umbrella error for callers that chain several stages of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lti(#[from] lti::LtiError),
    #[error(transparent)]
    Symmetry(#[from] symmetry::SymmetryError),
    #[error(transparent)]
    Modal(#[from] modal::ModalError),
    #[error(transparent)]
    Device(#[from] devices::DeviceError),
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Sim(#[from] simkit::SimError),
}
