use num_complex::Complex64;

use super::{ModalError, ModalResult, ModeCluster};
use crate::linalg;

/// One tracked mode before and after a change.
#[derive(Debug, Clone, PartialEq)]
pub struct RcEntry {
    /// Index of the tracked cluster in the slice given to [`relative_change`].
    pub cluster: usize,
    pub before: Complex64,
    pub after: Complex64,
    /// `|after - before| / |before| * 100`.
    pub rc_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvarianceReport {
    pub entries: Vec<RcEntry>,
}

impl InvarianceReport {
    /// Largest relative change among the members of a tracked cluster.
    pub fn max_rc(&self, cluster: usize) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.cluster == cluster)
            .map(|e| e.rc_percent)
            .reduce(f64::max)
    }

    /// After-values matched to a tracked cluster.
    pub fn after_values(&self, cluster: usize) -> Vec<Complex64> {
        self.entries
            .iter()
            .filter(|e| e.cluster == cluster)
            .map(|e| e.after)
            .collect()
    }
}

fn rc(before: Complex64, after: Complex64) -> f64 {
    (after - before).norm() / before.norm() * 100.0
}

/// Pairs every member of the tracked clusters (computed on `before`) with an
/// eigenvalue of `after` and reports the relative change.
///
/// For real systems only modes with non-negative imaginary part take part;
/// clusters lying wholly in the lower half-plane are skipped. Pairing is the
/// globally greedy closest-pair matching.
pub fn relative_change(
    before: &ModalResult,
    after: &ModalResult,
    tracked: &[ModeCluster],
) -> Result<InvarianceReport, ModalError> {
    if before.n() != after.n() {
        return Err(ModalError::DimensionMismatch(format!(
            "{} modes before, {} after",
            before.n(),
            after.n()
        )));
    }
    let conj_sym = before.is_real_system() && after.is_real_system();
    let keep = |z: &Complex64| !conj_sym || z.im >= 0.0;

    let mut owners = Vec::new();
    let mut b_vals = Vec::new();
    for (ci, cl) in tracked.iter().enumerate() {
        for &i in &cl.members {
            let z = before.eigenvalues[i];
            if keep(&z) {
                owners.push(ci);
                b_vals.push(z);
            }
        }
    }
    let a_vals: Vec<Complex64> = after.eigenvalues.iter().copied().filter(keep).collect();
    let pairs = linalg::match_greedy(&b_vals, &a_vals);

    let scale = before
        .eigenvalues
        .iter()
        .chain(&after.eigenvalues)
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    let tie = 1e-9 * scale;
    for (x, p) in pairs.iter().enumerate() {
        for q in &pairs[x + 1..] {
            let (bi, bj) = (b_vals[p.0], b_vals[q.0]);
            let (ai, aj) = (a_vals[p.1], a_vals[q.1]);
            if (bi - bj).norm() <= tie || (ai - aj).norm() <= tie {
                continue;
            }
            let current = p.2 + q.2;
            let swapped = (bi - aj).norm() + (bj - ai).norm();
            let moves = (rc(bi, ai) - rc(bi, aj)).abs() > 1e-9;
            if (current - swapped).abs() <= tie && moves {
                return Err(ModalError::PairingAmbiguous {
                    before: bi,
                    option_a: ai,
                    option_b: aj,
                });
            }
        }
    }
    let entries = pairs
        .into_iter()
        .map(|(bi, ai, _)| RcEntry {
            cluster: owners[bi],
            before: b_vals[bi],
            after: a_vals[ai],
            rc_percent: rc(b_vals[bi], a_vals[ai]),
        })
        .collect();
    Ok(InvarianceReport { entries })
}
