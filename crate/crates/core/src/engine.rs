//! Trimming, system forming and core solving.
//!
//! Shapes follow the sketching module: `b[k]` is `(m_k, n_k, r_{k+1})` and the
//! system matrix `a[k]` for the bond after core `k` is `(m_{k+1}, r_{k+1})`.
//! Core `k >= 1` solves `a[k-1] G_k = b[k]` with `b[k]` unfolded as
//! `m_k x (n_k r_{k+1})`.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::linalg::{self, lstsq};
use crate::sketch::{run_sketching, run_sketching_with_psi, SketchInput, SketchPlan};
use crate::tensor::DenseTensor;
use crate::tt::TensorTrain;

/// Relative cutoff of the pseudoinverse.
pub const LSTSQ_RCOND: f64 = 1e-12;
/// Default relative threshold for rank selection by singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// `sigma_min / sigma_max` below which a system matrix is flagged.
pub const ILL_CONDITIONED: f64 = 1e-10;

/// Target bond ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RankSpec {
    /// `r_1..r_{d-1}`.
    Explicit(Vec<usize>),
    /// Keep singular values above `tau * sigma_1`.
    Threshold(f64),
}

impl RankSpec {
    pub fn uniform(d: usize, r: usize) -> Self {
        Self::Explicit(vec![r; d.saturating_sub(1)])
    }
}

#[derive(Clone, Debug)]
pub struct TrimResult {
    /// `b[k]` of shape `(m_k, n_k, r_{k+1})`; the last one is the last sketch itself.
    pub b: Vec<DenseTensor>,
    /// `(r_0, ..., r_d)`.
    pub ranks: Vec<usize>,
    /// Full singular spectrum of each trimmed unfolding.
    pub singular_values: Vec<Vec<f64>>,
    /// `q[k] = V Sigma^{-1}` of shape `(ell_{k+1}, r_{k+1})`, when requested.
    pub projections: Option<Vec<DMatrix<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rank: usize,
    pub ill_conditioned: bool,
}

impl Conditioning {
    fn of(a: &DMatrix<f64>) -> Self {
        let s = linalg::singular_values(a);
        let sigma_max = s.first().copied().unwrap_or(0.0);
        let sigma_min = if s.len() < a.ncols() { 0.0 } else { s.last().copied().unwrap_or(0.0) };
        let rank = s.iter().filter(|&&v| v > LSTSQ_RCOND * sigma_max && v > 0.0).count();
        Self {
            sigma_min,
            sigma_max,
            rank,
            ill_conditioned: sigma_min <= ILL_CONDITIONED * sigma_max,
        }
    }

    /// `||A^+||`, infinite for a zero matrix.
    pub fn pinv_norm(&self) -> f64 {
        if self.sigma_min > 0.0 {
            1.0 / self.sigma_min
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug)]
pub struct SystemMatrices {
    pub a: Vec<DMatrix<f64>>,
    pub conditioning: Vec<Conditioning>,
}

impl SystemMatrices {
    pub fn new(a: Vec<DMatrix<f64>>) -> Self {
        let conditioning = a.iter().map(Conditioning::of).collect();
        Self { a, conditioning }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub sketch_ms: f64,
    pub trim_ms: f64,
    pub system_ms: f64,
    pub solve_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub algorithm: String,
    pub ranks: Vec<usize>,
    /// Frobenius residual of each core equation; zero for the first core.
    pub residuals: Vec<f64>,
    /// One entry per system matrix.
    pub conditioning: Vec<Conditioning>,
    pub singular_values: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub tt: TensorTrain,
    pub report: FitReport,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Keep the leading left singular vectors of every sketched moment.
pub fn trim(phis: &[DenseTensor], ranks: &RankSpec, keep_projections: bool) -> Result<TrimResult> {
    let d = phis.len();
    if d == 0 {
        return Err(TtError::Argument("no sketches to trim".into()));
    }
    for (k, p) in phis.iter().enumerate() {
        if p.ndim() != 3 {
            return Err(TtError::Shape(format!("sketch {k} is {}-way", p.ndim())));
        }
    }
    if phis[0].shape()[0] != 1 || phis[d - 1].shape()[2] != 1 {
        return Err(TtError::Shape("first sketch needs m_0 = 1 and last needs ell_d = 1".into()));
    }
    if let RankSpec::Explicit(r) = ranks {
        if r.len() != d - 1 {
            return Err(TtError::Rank(format!("{} ranks given for d={d}", r.len())));
        }
    }
    let mut b = Vec::with_capacity(d);
    let mut rank_list = vec![1];
    let mut spectra = Vec::with_capacity(d - 1);
    let mut proj = Vec::new();
    for (k, phi) in phis.iter().enumerate().take(d - 1) {
        let (m, n, ell) = (phi.shape()[0], phi.shape()[1], phi.shape()[2]);
        let mat = phi.to_matrix(m * n, ell)?;
        if mat.iter().all(|&v| v == 0.0) {
            return Err(TtError::DegenerateInput(format!("sketch {k} is identically zero")));
        }
        let mut s = linalg::svd(&mat);
        let r = match ranks {
            RankSpec::Explicit(r) => {
                let r = r[k];
                if r == 0 || r > s.s.len() {
                    return Err(TtError::Rank(format!(
                        "rank {r} at bond {} exceeds the {}x{ell} sketch",
                        k + 1,
                        m * n
                    )));
                }
                r
            }
            RankSpec::Threshold(tau) => s.s.iter().filter(|&&v| v > tau * s.s[0]).count().max(1),
        };
        linalg::fix_signs(&mut s, r);
        let u = s.u.columns(0, r).into_owned();
        b.push(DenseTensor::from_matrix(&u, vec![m, n, r])?);
        if keep_projections {
            let sr = s.s[r - 1];
            if sr <= 1e-14 * s.s[0] {
                return Err(TtError::DegenerateTrim { core: k, sigma: sr });
            }
            let mut q = s.vt.rows(0, r).transpose();
            for (c, &sv) in s.s.iter().enumerate().take(r) {
                q.column_mut(c).scale_mut(1.0 / sv);
            }
            proj.push(q);
        }
        rank_list.push(r);
        spectra.push(s.s);
    }
    b.push(phis[d - 1].clone());
    rank_list.push(1);
    Ok(TrimResult {
        b,
        ranks: rank_list,
        singular_values: spectra,
        projections: keep_projections.then_some(proj),
    })
}

/// System matrices from the plan's recursive left blocks.
pub fn form_system(trim: &TrimResult, plan: &SketchPlan) -> Result<SystemMatrices> {
    form_system_with_blocks(trim, &plan.left_blocks()?)
}

/// `a[k](b', alpha) = sum_{x, b} s_k(b', x, b) B_k(b, x, alpha)`.
pub fn form_system_with_blocks(trim: &TrimResult, blocks: &[DenseTensor]) -> Result<SystemMatrices> {
    let d = trim.b.len();
    if blocks.len() < d - 1 {
        return Err(TtError::Shape(format!("{} left blocks for {d} cores", blocks.len())));
    }
    let a = (0..d - 1)
        .map(|k| {
            let (s, bk) = (&blocks[k], &trim.b[k]);
            let (m, n, r) = (bk.shape()[0], bk.shape()[1], bk.shape()[2]);
            if s.ndim() != 3 || s.shape()[1] != n || s.shape()[2] != m {
                return Err(TtError::Shape(format!(
                    "left block {k} has shape {:?}, sketch core has (m, n) = ({m}, {n})",
                    s.shape()
                )));
            }
            let mp = s.shape()[0];
            let mut out = DMatrix::zeros(mp, r);
            for x in 0..n {
                let sx = DMatrix::from_fn(mp, m, |i, j| s.data()[(i * n + x) * m + j]);
                let bx = DMatrix::from_fn(m, r, |i, j| bk.data()[(i * n + x) * r + j]);
                out += sx * bx;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemMatrices::new(a))
}

/// System matrices `a[k] = psi[k] q[k]` of the non-recursive variant.
pub fn form_system_projected(trim: &TrimResult, psi: &[DenseTensor]) -> Result<SystemMatrices> {
    let q = trim
        .projections
        .as_ref()
        .ok_or_else(|| TtError::Argument("trim was run without projections".into()))?;
    let a = q
        .iter()
        .zip(psi)
        .enumerate()
        .map(|(k, (q, p))| {
            if p.ndim() != 2 || p.shape()[1] != q.nrows() {
                return Err(TtError::Shape(format!(
                    "psi {k} has shape {:?}, projection has {} rows",
                    p.shape(),
                    q.nrows()
                )));
            }
            Ok(p.to_matrix(p.shape()[0], p.shape()[1])? * q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemMatrices::new(a))
}

/// Solve all core equations; returns the train and per-core residuals.
pub fn solve_cores(sys: &SystemMatrices, trim: &TrimResult) -> Result<(TensorTrain, Vec<f64>)> {
    let d = trim.b.len();
    if sys.a.len() != d - 1 {
        return Err(TtError::Shape(format!("{} system matrices for {d} cores", sys.a.len())));
    }
    let solved: Vec<(DenseTensor, f64)> = (1..d)
        .into_par_iter()
        .map(|k| {
            let a = &sys.a[k - 1];
            let bk = &trim.b[k];
            let (m, n, r) = (bk.shape()[0], bk.shape()[1], bk.shape()[2]);
            if a.nrows() != m {
                return Err(TtError::Shape(format!(
                    "system matrix {} has {} rows, core {k} sketch has {m}",
                    k - 1,
                    a.nrows()
                )));
            }
            let rhs = bk.to_matrix(m, n * r)?;
            let sol = lstsq(a, &rhs, LSTSQ_RCOND);
            Ok((DenseTensor::from_matrix(&sol.x, vec![a.ncols(), n, r])?, sol.residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cores = vec![trim.b[0].clone()];
    let mut residuals = vec![0.0];
    for (c, res) in solved {
        cores.push(c);
        residuals.push(res);
    }
    Ok((TensorTrain::new(cores)?, residuals))
}

fn report(
    algorithm: &str,
    trim: &TrimResult,
    sys: &SystemMatrices,
    residuals: Vec<f64>,
    timings: StageTimings,
) -> FitReport {
    let warnings = sys
        .conditioning
        .iter()
        .enumerate()
        .filter(|(_, c)| c.ill_conditioned)
        .map(|(k, c)| {
            format!(
                "system matrix {} is ill-conditioned: sigma_min {:.3e}, sigma_max {:.3e}",
                k + 1,
                c.sigma_min,
                c.sigma_max
            )
        })
        .collect();
    FitReport {
        algorithm: algorithm.into(),
        ranks: trim.ranks.clone(),
        residuals,
        conditioning: sys.conditioning.clone(),
        singular_values: trim.singular_values.clone(),
        warnings,
        timings,
    }
}

/// Trim, form the system with explicit left blocks, and solve.
pub fn fit_from_sketches(
    phis: &[DenseTensor],
    ranks: &RankSpec,
    blocks: &[DenseTensor],
    algorithm: &str,
) -> Result<Fit> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let tr = trim(phis, ranks, false)?;
    timings.trim_ms = ms(t);
    let t = Instant::now();
    let sys = form_system_with_blocks(&tr, blocks)?;
    timings.system_ms = ms(t);
    let t = Instant::now();
    let (tt, residuals) = solve_cores(&sys, &tr)?;
    timings.solve_ms = ms(t);
    Ok(Fit {
        tt,
        report: report(algorithm, &tr, &sys, residuals, timings),
    })
}

/// Tensor train via recursive sketching.
pub fn tt_rs(input: SketchInput, ranks: &RankSpec, plan: &SketchPlan) -> Result<Fit> {
    if !plan.is_recursive() {
        return Err(TtError::Argument("recursive sketching needs a recursive left sketch".into()));
    }
    let t = Instant::now();
    let phis = run_sketching(input, plan)?;
    let sketch_ms = ms(t);
    let mut fit = fit_from_sketches(&phis, ranks, &plan.left_blocks()?, "tt-rs")?;
    fit.report.timings.sketch_ms = sketch_ms;
    Ok(fit)
}

/// Tensor train via non-recursive sketching with explicit projections.
pub fn tt_s(input: SketchInput, ranks: &RankSpec, plan: &SketchPlan) -> Result<Fit> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let sk = run_sketching_with_psi(input, plan)?;
    timings.sketch_ms = ms(t);
    let t = Instant::now();
    let tr = trim(&sk.phi, ranks, true)?;
    timings.trim_ms = ms(t);
    let t = Instant::now();
    let sys = form_system_projected(&tr, sk.psi.as_deref().expect("psi requested"))?;
    timings.system_ms = ms(t);
    let t = Instant::now();
    let (tt, residuals) = solve_cores(&sys, &tr)?;
    timings.solve_ms = ms(t);
    Ok(Fit {
        tt,
        report: report("tt-s", &tr, &sys, residuals, timings),
    })
}
