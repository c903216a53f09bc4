//! Eigen-analysis, participation factors and mode clusters.
//!
//! * [`modal_analysis`] returns eigenvalues with biorthonormal right/left
//!   eigenvectors and the participation-factor matrix.
//! * [`cluster_modes`] groups repeated or close eigenvalues.
//! * [`group_participation`] and [`group_participation_projector`] compute the
//!   participation of a state in a whole cluster, from eigenvectors or from
//!   the resolvent.
//! * [`classify_clusters`] labels clusters as inner-group or group-grid.
//! * [`relative_change`] measures how far tracked modes move between two
//!   systems.

mod analysis;
mod cluster;
mod gpf;
mod invariance;

pub use analysis::{geometric_multiplicity, modal_analysis, ModalResult, DEFAULT_RANK_TOL};
pub use cluster::{
    classify_clusters, cluster_modes, default_cluster_tol, guided_cluster_tol, Classification,
    ModeCluster,
};
pub use gpf::{
    group_participation, group_participation_projector, riesz_projector_diagonal, Contour,
    DEFAULT_QUADRATURE_POINTS,
};
pub use invariance::{relative_change, InvarianceReport, RcEntry};

use num_complex::Complex64;
use thiserror::Error;

/// Default external-participation threshold for ideal systems.
pub const TAU_EXT_IDEAL: f64 = 1e-3;
/// Default external-participation threshold for quasi systems.
pub const TAU_EXT_QUASI: f64 = 5e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModalError {
    #[error("eigensolver did not converge")]
    ConvergenceFailure,
    #[error("cluster {members:?} is defective (geometric multiplicity {geometric:?} for {algebraic} modes)")]
    DefectiveCluster {
        members: Vec<usize>,
        geometric: Option<usize>,
        algebraic: usize,
    },
    #[error("no contour separates the cluster (gap {gap:.3e}, required {required:.3e})")]
    ContourSeparationFailure { gap: f64, required: f64 },
    #[error("ambiguous pairing for {before} between {option_a} and {option_b}")]
    PairingAmbiguous {
        before: Complex64,
        option_a: Complex64,
        option_b: Complex64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
