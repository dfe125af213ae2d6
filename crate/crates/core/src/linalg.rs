//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Tensors in this crate are row-major; nalgebra is column-major. The
//! helpers here do the transposition bookkeeping in one place.

use nalgebra::DMatrix;

/// Thin SVD with singular values sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let raw = m.clone().svd(true, true);
    let u = raw.u.expect("u requested");
    let vt = raw.v_t.expect("v_t requested");
    let sv = raw.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let s = order.iter().map(|&i| sv[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vt = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)]);
    Svd { u, s, vt }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Flip singular-vector pairs so the largest-magnitude entry of each of the
/// first `r` left vectors is positive. Ties go to the lowest index.
pub fn fix_signs(svd: &mut Svd, r: usize) {
    for c in 0..r.min(svd.u.ncols()) {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..svd.u.nrows() {
            let v = svd.u[(i, c)].abs();
            if v > best_abs {
                best_abs = v;
                best = i;
            }
        }
        if svd.u[(best, c)] < 0.0 {
            svd.u.column_mut(c).neg_mut();
            svd.vt.row_mut(c).neg_mut();
        }
    }
}

/// Result of a pseudoinverse least-squares solve.
#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub x: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rank: usize,
    pub residual: f64,
}

/// Minimum-norm least-squares solution of `a x = b` via the SVD
/// pseudoinverse, discarding singular values below `rcond * sigma_max`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> LstsqSolution {
    let d = svd(a);
    let sigma_max = d.s.first().copied().unwrap_or(0.0);
    let sigma_min = if d.s.len() < a.ncols() {
        0.0
    } else {
        d.s.last().copied().unwrap_or(0.0)
    };
    let cutoff = rcond * sigma_max;
    let rank = d.s.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    let ut_b = d.u.columns(0, rank).transpose() * b;
    let mut scaled = ut_b;
    for i in 0..rank {
        let inv = 1.0 / d.s[i];
        scaled.row_mut(i).scale_mut(inv);
    }
    let x = d.vt.rows(0, rank).transpose() * scaled;
    let residual = (a * &x - b).norm();
    LstsqSolution {
        x,
        sigma_min,
        sigma_max,
        rank,
        residual,
    }
}

/// Moore–Penrose pseudoinverse with the same cutoff rule as [`lstsq`].
pub fn pinv(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    lstsq(a, &DMatrix::identity(a.nrows(), a.nrows()), rcond).x
}

/// Interpret row-major data as an `rows x cols` matrix.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Row-major data of a matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Row-major product of an `m x k` and a `k x n` row-major matrix.
pub fn matmul_rm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let at = DMatrix::from_column_slice(k, m, a);
    let bt = DMatrix::from_column_slice(n, k, b);
    (bt * at).as_slice().to_vec()
}
