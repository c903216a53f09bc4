use num_complex::Complex64;

use super::{ModalError, ModalResult, ModeCluster};
use crate::linalg::{cplx, CMat};

pub const DEFAULT_QUADRATURE_POINTS: usize = 64;

/// Circle in the complex plane used for resolvent quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub center: Complex64,
    pub radius: f64,
    pub points: usize,
}

/// `gpf_k = sum_{i in cluster} psi_ik phi_ki`.
///
/// Fails for clusters that contain a defective mode or whose geometric
/// multiplicity is below the cluster size.
pub fn group_participation(
    result: &ModalResult,
    cluster: &ModeCluster,
) -> Result<Vec<Complex64>, ModalError> {
    let defective = cluster.members.iter().any(|&i| result.defective[i]);
    let deficient = cluster
        .geometric_multiplicity
        .is_some_and(|g| g < cluster.n_g());
    if defective || deficient {
        return Err(ModalError::DefectiveCluster {
            members: cluster.members.clone(),
            geometric: cluster.geometric_multiplicity,
            algebraic: cluster.n_g(),
        });
    }
    let n = result.n();
    Ok((0..n)
        .map(|k| cluster.members.iter().map(|&i| result.pf[(k, i)]).sum())
        .collect())
}

/// Diagonal of the spectral projector `(1/2 pi i) \oint (sI - A)^-1 ds` by the
/// trapezoid rule on `contour`.
pub fn riesz_projector_diagonal(a: &CMat, contour: &Contour) -> Result<Vec<Complex64>, ModalError> {
    let n = a.nrows();
    if contour.points < 3 || contour.radius <= 0.0 || !contour.radius.is_finite() {
        return Err(ModalError::InvalidParameter(
            "contour needs a positive radius and at least 3 points".into(),
        ));
    }
    let mut diag = vec![cplx(0.0, 0.0); n];
    let big_n = contour.points as f64;
    for j in 0..contour.points {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / big_n;
        let offset = Complex64::from_polar(contour.radius, theta);
        let s = contour.center + offset;
        let shifted = CMat::identity(n, n) * s - a;
        let resolvent = shifted
            .lu()
            .try_inverse()
            .ok_or(ModalError::ContourSeparationFailure {
                gap: 0.0,
                required: 0.0,
            })?;
        let w = offset / big_n;
        for (k, d) in diag.iter_mut().enumerate() {
            *d += w * resolvent[(k, k)];
        }
    }
    Ok(diag)
}

/// Group participation from the resolvent on an automatically placed
/// circle around the cluster centroid.
///
/// The radius is halfway between the cluster radius and the nearest outside
/// eigenvalue; the gap between them must be at least `4 * cluster_tol`.
pub fn group_participation_projector(
    result: &ModalResult,
    cluster: &ModeCluster,
    cluster_tol: f64,
    points: usize,
) -> Result<Vec<Complex64>, ModalError> {
    let c = cluster.centroid;
    let rho = cluster.radius;
    let d_ext = result
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| !cluster.members.contains(i))
        .map(|(_, z)| (z - c).norm())
        .fold(f64::INFINITY, f64::min);
    let radius = if d_ext.is_infinite() {
        rho + rho.max(1.0)
    } else {
        let gap = d_ext - rho;
        let required = 4.0 * cluster_tol;
        if gap < required {
            return Err(ModalError::ContourSeparationFailure { gap, required });
        }
        0.5 * d_ext + 0.5 * rho
    };
    riesz_projector_diagonal(
        &result.a,
        &Contour {
            center: c,
            radius,
            points,
        },
    )
}
