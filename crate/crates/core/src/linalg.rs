//! Dense complex linear-algebra helpers shared by the analysis modules.

use faer::{c64, Mat};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;

#[inline]
pub fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Embeds a real matrix with zero imaginary parts.
pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn all_finite(m: &CMat) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

fn to_faer(a: &CMat) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues and unit-norm right eigenvectors (columns), unsorted.
pub fn eigen(a: &CMat) -> Option<(Vec<Complex64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Some((Vec::new(), CMat::zeros(0, 0)));
    }
    let evd = to_faer(a).eigen().ok()?;
    let s = evd.S();
    let u = evd.U();
    let values: Vec<Complex64> = (0..n).map(|i| s[i]).collect();
    let mut vectors = CMat::from_fn(n, n, |i, j| u[(i, j)]);
    for mut col in vectors.column_iter_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
    }
    if values
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return None;
    }
    Some((values, vectors))
}

pub fn eigenvalues(a: &CMat) -> Option<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    let values = to_faer(a).eigenvalues().ok()?;
    if values
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return None;
    }
    Some(values)
}

/// Singular values in descending order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// 2-norm condition number; `inf` for rank-deficient matrices.
pub fn condition_number(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank(a: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&hi) = s.first() else { return 0 };
    if hi == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * hi).count()
}

/// Inverse that refuses matrices whose condition number exceeds `max_cond`.
pub fn guarded_inverse(a: &CMat, max_cond: f64) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(CMat::zeros(0, 0));
    }
    if condition_number(a) > max_cond {
        return None;
    }
    a.clone().try_inverse()
}

/// Greedy closest-pair matching of two multisets of complex numbers.
///
/// Returns `(index_in_a, index_in_b, distance)` triples, one per element of
/// the shorter input, chosen by repeatedly taking the globally closest
/// unmatched pair.
pub fn match_greedy(a: &[Complex64], b: &[Complex64]) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j, d));
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

/// Largest pairing distance between two spectra (infinite if sizes differ).
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    match_greedy(a, b).iter().map(|p| p.2).fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Matrix exponential.
pub fn expm(a: &CMat) -> CMat {
    if a.nrows() == 0 {
        return a.clone();
    }
    a.clone().exp()
}
