//! Reference solvers and diagnostics: the unsketched core equations,
//! rotation-aligned core distances, perturbation and sample-size constants.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::{tt_rs, Fit, RankSpec, LSTSQ_RCOND};
use crate::error::{Result, TtError};
use crate::linalg::{self, lstsq};
use crate::markov::{markov_to_tt, MarkovSpec};
use crate::sketch::{markov_sketch_plan, SketchInput};
use crate::tensor::DenseTensor;
use crate::tt::{triple_norm, TensorTrain};

/// Largest dense input accepted by [`solve_cde_full`].
pub const FULL_CDE_CAP: usize = 100_000;
/// Relative singular-value cutoff defining the numerical rank of an unfolding.
pub const NUMERICAL_RANK_TOL: f64 = 1e-10;

/// Solve the unsketched core equations of a dense tensor.
///
/// `ranks` are `r_1..r_{d-1}` and must equal the numerical ranks of the
/// unfoldings.
pub fn solve_cde_full(p: &DenseTensor, ranks: &[usize]) -> Result<TensorTrain> {
    let d = p.ndim();
    if p.len() > FULL_CDE_CAP {
        return Err(TtError::Size {
            entries: p.len() as u128,
            cap: FULL_CDE_CAP as u128,
        });
    }
    if d < 2 {
        return Err(TtError::Argument("need at least 2 modes".into()));
    }
    if ranks.len() != d - 1 {
        return Err(TtError::Rank(format!("{} ranks given for d={d}", ranks.len())));
    }
    let ext = p.shape().to_vec();
    // phi[k] spans the column space of the unfolding after mode k.
    let mut phi: Vec<DMatrix<f64>> = Vec::with_capacity(d - 1);
    for k in 1..d {
        let unf = p.unfold(k)?;
        let mut s = linalg::svd(unf.matrix());
        let top = s.s.first().copied().unwrap_or(0.0);
        let numerical = s.s.iter().filter(|&&v| v > NUMERICAL_RANK_TOL * top).count();
        let r = ranks[k - 1];
        if numerical != r {
            return Err(TtError::Rank(format!(
                "unfolding {k} has numerical rank {numerical}, declared {r}"
            )));
        }
        linalg::fix_signs(&mut s, r);
        phi.push(s.u.columns(0, r).into_owned());
    }
    let mut cores = Vec::with_capacity(d);
    cores.push(DenseTensor::from_matrix(&phi[0], vec![1, ext[0], ranks[0]])?);
    let mut rows = ext[0];
    for k in 1..d {
        let r1 = if k == d - 1 { 1 } else { ranks[k] };
        // phi[k] is (rows * n_k) x r1; regroup it as rows x (n_k r1).
        let rhs = if k == d - 1 {
            p.to_matrix(rows, ext[k])?
        } else {
            let flat = linalg::to_row_major(&phi[k]);
            linalg::from_row_major(rows, ext[k] * r1, &flat)
        };
        let sol = lstsq(&phi[k - 1], &rhs, LSTSQ_RCOND);
        cores.push(DenseTensor::from_matrix(&sol.x, vec![ranks[k - 1], ext[k], r1])?);
        rows *= ext[k];
    }
    TensorTrain::new(cores)
}

/// Outcome of the rotation-aligned core comparison.
#[derive(Clone, Debug)]
pub struct CoreDistanceResult {
    /// Triple norm of `R1 . g_hat . R2 - g_star` at the best rotations found.
    pub distance: f64,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const PROCRUSTES_MAX_ITER: usize = 100;
const PROCRUSTES_TOL: f64 = 1e-10;

/// `(R1 . g . R2)(a, x, b) = sum R1(a, a') g(a', x, b') R2(b', b)`.
fn rotate(g: &DenseTensor, r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> DenseTensor {
    let [a, n, b] = [g.shape()[0], g.shape()[1], g.shape()[2]];
    let left = r1 * g.to_matrix(a, n * b).expect("shape");
    let t = DenseTensor::from_matrix(&left, vec![a, n, b]).expect("shape");
    let right = t.to_matrix(a * n, b).expect("shape") * r2;
    DenseTensor::from_matrix(&right, vec![a, n, b]).expect("shape")
}

fn polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = linalg::svd(m);
    &s.u * &s.vt
}

fn difference(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    DenseTensor::new(a.shape().to_vec(), data).expect("shape")
}

/// Upper bound on `min_{R1, R2 orthogonal} |||R1 . g_hat . R2 - g_star|||`.
///
/// Alternates closed-form orthogonal Procrustes steps on the Frobenius
/// objective, starting at the identity, and reports the smallest triple norm
/// among the visited rotations.
pub fn core_distance(g_hat: &DenseTensor, g_star: &DenseTensor) -> Result<CoreDistanceResult> {
    if g_hat.ndim() != 3 || g_hat.shape() != g_star.shape() {
        return Err(TtError::Shape(format!(
            "cores have shapes {:?} and {:?}",
            g_hat.shape(),
            g_star.shape()
        )));
    }
    let [a, n, b] = [g_hat.shape()[0], g_hat.shape()[1], g_hat.shape()[2]];
    let mut r1 = DMatrix::identity(a, a);
    let mut r2 = DMatrix::identity(b, b);
    let star_1 = g_star.to_matrix(a, n * b)?;
    let star_3 = g_star.to_matrix(a * n, b)?;
    let diff = difference(g_hat, g_star);
    let mut best = (triple_norm(&diff), r1.clone(), r2.clone());
    let mut frob = diff.frobenius_norm();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < PROCRUSTES_MAX_ITER {
        iterations += 1;
        let h = rotate(g_hat, &DMatrix::identity(a, a), &r2).to_matrix(a, n * b)?;
        r1 = polar(&(&star_1 * h.transpose()));
        let k = rotate(g_hat, &r1, &DMatrix::identity(b, b)).to_matrix(a * n, b)?;
        r2 = polar(&(k.transpose() * &star_3));
        let diff = difference(&rotate(g_hat, &r1, &r2), g_star);
        let t = triple_norm(&diff);
        if t < best.0 {
            best = (t, r1.clone(), r2.clone());
        }
        let f = diff.frobenius_norm();
        let decrease = frob - f;
        frob = f;
        if decrease.abs() <= PROCRUSTES_TOL {
            converged = true;
            break;
        }
    }
    Ok(CoreDistanceResult {
        distance: best.0,
        r1: best.1,
        r2: best.2,
        iterations,
        converged,
    })
}

/// Markov-sketch fit on the exact train of `spec`.
pub fn fit_exact_markov(spec: &MarkovSpec, ranks: &RankSpec) -> Result<Fit> {
    let tt = markov_to_tt(spec)?;
    let plan = markov_sketch_plan(spec.extents(), spec.order())?;
    tt_rs(SketchInput::Train(&tt), ranks, &plan)
}

/// Constants entering the sample-complexity bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Smallest retained singular value over the sketched marginal unfoldings.
    pub c_p: f64,
    /// Smallest core triple norm.
    pub c_g: f64,
    /// `max(1, max_k ||A_k^+||)`.
    pub c_a: f64,
    /// Full spectrum of each sketched unfolding.
    pub spectra: Vec<Vec<f64>>,
    pub core_norms: Vec<f64>,
    pub pinv_norms: Vec<f64>,
}

/// Constants of an already computed fit.
pub fn diagnostics(fit: &Fit) -> DiagnosticsReport {
    let ranks = &fit.report.ranks;
    let c_p = fit
        .report
        .singular_values
        .iter()
        .enumerate()
        .map(|(k, s)| s.get(ranks[k + 1] - 1).copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    let core_norms: Vec<f64> = fit.tt.cores().iter().map(triple_norm).collect();
    let pinv_norms: Vec<f64> = fit.report.conditioning.iter().map(|c| c.pinv_norm()).collect();
    DiagnosticsReport {
        c_p,
        c_g: core_norms.iter().copied().fold(f64::INFINITY, f64::min),
        c_a: pinv_norms.iter().copied().fold(1.0, f64::max),
        spectra: fit.report.singular_values.clone(),
        core_norms,
        pinv_norms,
    }
}

/// Fit the exact chain with its Markov sketch and report the constants.
pub fn compute_constants(spec: &MarkovSpec, ranks: &RankSpec) -> Result<DiagnosticsReport> {
    Ok(diagnostics(&fit_exact_markov(spec, ranks)?))
}

/// Sample sizes sufficient for the per-core and the full-contraction guarantees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub per_core: f64,
    pub contraction: f64,
}

/// `16 c_A^2 (1 + 1/c_G)^2 (1 + 1/c_P)^2 n^5 r log(2 n^3 d / eta) / delta^2`,
/// and the contraction variant with `144` and an extra `d^2`.
pub fn check_sample_complexity(
    report: &DiagnosticsReport,
    n: usize,
    r: usize,
    d: usize,
    delta: f64,
    eta: f64,
) -> Result<SampleComplexity> {
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;
    if !(finite_pos(report.c_a) && finite_pos(report.c_g) && finite_pos(report.c_p)) {
        return Err(TtError::DegenerateInput(format!(
            "constants must be finite and positive: c_A={}, c_G={}, c_P={}",
            report.c_a, report.c_g, report.c_p
        )));
    }
    if !(finite_pos(delta) && eta > 0.0 && eta < 1.0) || n == 0 || r == 0 || d == 0 {
        return Err(TtError::Argument(format!(
            "need delta > 0, 0 < eta < 1 and positive n, r, d; got delta={delta}, eta={eta}, n={n}, r={r}, d={d}"
        )));
    }
    let nf = n as f64;
    let base = report.c_a.powi(2)
        * (1.0 + 1.0 / report.c_g).powi(2)
        * (1.0 + 1.0 / report.c_p).powi(2)
        * nf.powi(5)
        * r as f64
        * (2.0 * nf.powi(3) * d as f64 / eta).ln()
        / (delta * delta);
    Ok(SampleComplexity {
        per_core: 16.0 * base,
        contraction: 144.0 * (d * d) as f64 * base,
    })
}

/// Deviation bound `sqrt(log(2 n^s d / eta) / (2 N))` holding with probability
/// `1 - eta` simultaneously for every `s`-variable window marginal.
pub fn concentration_bound(n: usize, s: usize, d: usize, n_samples: usize, eta: f64) -> f64 {
    let count = 2.0 * (n as f64).powi(s as i32) * d as f64;
    ((count / eta).ln() / (2.0 * n_samples as f64)).sqrt()
}

/// Least-squares solution of `A . X = B` contracting the columns of `A`
/// with the first index of `X`; `B` is `(m, l1, l2)`.
pub fn solve_tensor_equation(a: &DMatrix<f64>, b: &DenseTensor) -> Result<DenseTensor> {
    if b.ndim() != 3 || b.shape()[0] != a.nrows() {
        return Err(TtError::Shape(format!(
            "matrix is {}x{}, right-hand side {:?}",
            a.nrows(),
            a.ncols(),
            b.shape()
        )));
    }
    let (l1, l2) = (b.shape()[1], b.shape()[2]);
    let sol = lstsq(a, &b.to_matrix(a.nrows(), l1 * l2)?, LSTSQ_RCOND);
    DenseTensor::from_matrix(&sol.x, vec![a.ncols(), l1, l2])
}

/// Bound on `|||dX|||` for the perturbed tensor equation `(A + dA) . (X + dX) = B + dB`:
/// `sqrt(2 m l2) ||A^+|| / (1 - ||A^+|| ||dA||) (||dA|| |||X||| + ||dB||_max)`.
///
/// `None` when `||A^+|| ||dA|| >= 1` or `A` lacks full column rank.
pub fn perturbation_bound(
    a: &DMatrix<f64>,
    delta_a: &DMatrix<f64>,
    x: &DenseTensor,
    delta_b: &DenseTensor,
) -> Option<f64> {
    let s = linalg::singular_values(a);
    if s.len() < a.ncols() || s.last().map_or(true, |&v| v <= 0.0) {
        return None;
    }
    let pinv = 1.0 / s[s.len() - 1];
    let da = linalg::spectral_norm(delta_a);
    if pinv * da >= 1.0 {
        return None;
    }
    let l2 = x.shape()[2] as f64;
    let db = delta_b.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Some((2.0 * a.nrows() as f64 * l2).sqrt() * pinv / (1.0 - pinv * da) * (da * triple_norm(x) + db))
}
