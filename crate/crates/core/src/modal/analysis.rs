use num_complex::Complex64;

use super::ModalError;
use crate::linalg::{self, CMat};

/// Eigenvector-matrix condition number above which left eigenvectors are
/// computed separately instead of by inversion.
const INVERSE_COND_LIMIT: f64 = 1e10;
/// `|psi_raw . phi| < DEFECT_TOL * |psi_raw| |phi|` marks a defective mode.
const DEFECT_TOL: f64 = 1e-8;
/// Default relative rank threshold for geometric multiplicities.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalResult {
    /// State matrix the result was computed from.
    pub a: CMat,
    /// Sorted by real part, then imaginary part, both descending.
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as columns.
    pub phi: CMat,
    /// Left eigenvectors as rows, scaled so that `psi_i . phi_i = 1`.
    pub psi: CMat,
    /// `pf[(k, i)] = psi[(i, k)] * phi[(k, i)]`.
    pub pf: CMat,
    /// No reliable eigenvector basis for this mode.
    pub defective: Vec<bool>,
    /// Mode shares its eigenvalue (within the default cluster tolerance) with
    /// another mode, so its individual PF column is basis dependent.
    pub non_unique: Vec<bool>,
    /// Condition number of the right eigenvector matrix.
    pub eigvec_condition: f64,
}

impl ModalResult {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// True when the state matrix is real, so the spectrum is conjugate
    /// symmetric.
    pub fn is_real_system(&self) -> bool {
        linalg::is_real(&self.a)
    }

    pub fn norm_a(&self) -> f64 {
        linalg::frobenius(&self.a)
    }

    /// Participation-factor column of mode `i`.
    pub fn pf_column(&self, i: usize) -> Vec<Complex64> {
        self.pf.column(i).iter().copied().collect()
    }
}

fn sort_key(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

/// Eigendecomposition with biorthonormal eigenvectors and participation
/// factors.
pub fn modal_analysis(a: &CMat) -> Result<ModalResult, ModalError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(ModalError::DimensionMismatch(format!(
            "state matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if linalg::all_finite(a).is_some() {
        return Err(ModalError::InvalidParameter(
            "state matrix has non-finite entries".into(),
        ));
    }
    let (values, vectors) = linalg::eigen(a).ok_or(ModalError::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sort_key(&values[i], &values[j]));
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| values[i]).collect();
    let phi = CMat::from_fn(n, n, |r, c| vectors[(r, order[c])]);

    let eigvec_condition = linalg::condition_number(&phi);
    let mut defective = vec![false; n];
    let psi = if eigvec_condition < INVERSE_COND_LIMIT {
        phi.clone()
            .try_inverse()
            .ok_or(ModalError::ConvergenceFailure)?
    } else {
        log::warn!(
            "eigenvector matrix condition number {eigvec_condition:.3e}; computing left eigenvectors separately"
        );
        left_by_adjoint(a, &eigenvalues, &phi, &mut defective)?
    };

    let pf = CMat::from_fn(n, n, |k, i| psi[(i, k)] * phi[(k, i)]);
    let tol = super::default_cluster_tol(a);
    let non_unique = (0..n)
        .map(|i| (0..n).any(|j| j != i && (eigenvalues[i] - eigenvalues[j]).norm() <= tol))
        .collect();
    Ok(ModalResult {
        a: a.clone(),
        eigenvalues,
        phi,
        psi,
        pf,
        defective,
        non_unique,
        eigvec_condition,
    })
}

fn left_by_adjoint(
    a: &CMat,
    eigenvalues: &[Complex64],
    phi: &CMat,
    defective: &mut [bool],
) -> Result<CMat, ModalError> {
    let n = a.nrows();
    let (adj_values, w) = linalg::eigen(&a.adjoint()).ok_or(ModalError::ConvergenceFailure)?;
    let conj: Vec<Complex64> = adj_values.iter().map(|z| z.conj()).collect();
    let mut psi = CMat::zeros(n, n);
    for (i, j, _) in linalg::match_greedy(eigenvalues, &conj) {
        let wj = w.column(j);
        let row: Vec<Complex64> = wj.iter().map(|z| z.conj()).collect();
        let dot: Complex64 = row
            .iter()
            .zip(phi.column(i).iter())
            .map(|(x, y)| x * y)
            .sum();
        let scale = wj.norm() * phi.column(i).norm();
        if dot.norm() < DEFECT_TOL * scale {
            defective[i] = true;
            continue;
        }
        for k in 0..n {
            psi[(i, k)] = row[k] / dot;
        }
    }
    Ok(psi)
}

/// `n - rank(A - lambda I)` with rank threshold `rank_tol * sigma_max`.
pub fn geometric_multiplicity(a: &CMat, lambda: Complex64, rank_tol: f64) -> usize {
    let n = a.nrows();
    let shifted = a - CMat::identity(n, n) * lambda;
    n - linalg::rank(&shifted, rank_tol)
}
