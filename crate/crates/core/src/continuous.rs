//! Tensor-train estimation of a continuous chain density in an orthonormal
//! basis, and the L2 error decomposition against a reference chain density.
//!
//! A density `p(y)` on `[a, b]^d` is represented by its coefficient tensor
//! `nu(j_1, ..., j_d) = int p(y) phi_{j_1}(y_1) ... phi_{j_d}(y_d) dy`, with
//! `phi_0` constant. The fit runs the discrete engine on coefficient indices:
//! the left sketch keeps the previous coefficient index and sends the ones
//! before it to the constant function, the right sketch keeps the next one.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::ContinuousSamples;
use crate::engine::{fit_from_sketches, FitReport, RankSpec};
use crate::error::{Result, TtError};
use crate::io::write_atomic;
use crate::markov::{log_sum_exp, GinzburgLandauSpec};
use crate::tensor::DenseTensor;
use crate::tt::{ByteReader, TensorTrain};

const MAGIC: &[u8; 6] = b"TTRSC1";
/// Samples per accumulation chunk.
const CHUNK: usize = 8192;
/// Quadrature order used by the reference computations unless overridden.
pub const DEFAULT_QUADRATURE: usize = 50;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes come from the eigenvalues of the Jacobi matrix and are then polished
/// by Newton steps on the Legendre polynomial.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q > 0, "quadrature needs at least one node");
    let jacobi = DMatrix::from_fn(q, q, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(q);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = legendre(q, *x);
            *x -= p / dp;
        }
        let (_, dp) = legendre(q, *x);
        weights.push(2.0 / ((1.0 - *x * *x) * dp * dp));
    }
    (nodes, weights)
}

/// `(P_q(x), P_q'(x))` by the three-term recurrence.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn gauss_legendre(q: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(q);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Self {
            nodes: x.iter().map(|&t| mid + half * t).collect(),
            weights: w.iter().map(|&v| half * v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    /// `1/sqrt(L)`, then `sqrt(2/L) cos(2 pi k t/L)`, `sqrt(2/L) sin(2 pi k t/L)`
    /// for `k = 1, 2, ...` with `t = x - a`.
    Fourier,
}

/// `M` orthonormal functions on `[a, b]`, the first one constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub family: BasisFamily,
    pub size: usize,
    pub a: f64,
    pub b: f64,
}

impl BasisSet {
    pub fn fourier(size: usize, a: f64, b: f64) -> Result<Self> {
        let basis = Self {
            family: BasisFamily::Fourier,
            size,
            a,
            b,
        };
        basis.validate()?;
        Ok(basis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(TtError::Argument("basis size must be positive".into()));
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return Err(TtError::Argument(format!("invalid interval [{}, {}]", self.a, self.b)));
        }
        Ok(())
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Value of the constant first function.
    pub fn constant(&self) -> f64 {
        1.0 / (self.b - self.a).sqrt()
    }

    /// Write `phi_0(x), ..., phi_{M-1}(x)` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.size);
        match self.family {
            BasisFamily::Fourier => {
                let l = self.b - self.a;
                out[0] = 1.0 / l.sqrt();
                let amp = (2.0 / l).sqrt();
                let theta = 2.0 * std::f64::consts::PI * (x - self.a) / l;
                let (s1, c1) = theta.sin_cos();
                let (mut s, mut c) = (s1, c1);
                let mut i = 1;
                while i < self.size {
                    out[i] = amp * c;
                    if i + 1 < self.size {
                        out[i + 1] = amp * s;
                    }
                    i += 2;
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        self.eval_into(x, &mut out);
        out
    }

    /// `G[i][j] = sum_q w_q phi_i(z_q) phi_j(z_q)`.
    pub fn gram(&self, quad: &Quadrature) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.size, self.size);
        let mut v = vec![0.0; self.size];
        for (&z, &w) in quad.nodes.iter().zip(&quad.weights) {
            self.eval_into(z, &mut v);
            for i in 0..self.size {
                for j in 0..self.size {
                    g[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        g
    }
}

/// Sketched coefficient moments, one per core.
///
/// `nu[0]` is `(1, M, M)`, `nu[k]` for `0 < k < d-1` is `(M, M, M)` and the
/// last is `(M, M, 1)`. Moment `k >= 1` carries the factor `c^{k-1}`, `c` the
/// constant basis value, so that the last one is the exact coefficient marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTensors {
    pub basis: BasisSet,
    pub nu: Vec<DenseTensor>,
    pub n_samples: usize,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Default)]
struct Compensated {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl Compensated {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    fn add(&mut self, v: &[f64]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(v) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    fn total(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

/// Raw sums of `phi(y_{k-1}) x phi(y_k) x phi(y_{k+1})` over one chunk of rows.
fn chunk_moments(values: &[f64], d: usize, basis: &BasisSet) -> Vec<Vec<f64>> {
    let m = basis.size;
    let rows = values.len() / d;
    // phi[k] is rows x m, column-major for GEMM.
    let mut phi: Vec<DMatrix<f64>> = (0..d).map(|_| DMatrix::zeros(rows, m)).collect();
    let mut v = vec![0.0; m];
    for i in 0..rows {
        for k in 0..d {
            basis.eval_into(values[i * d + k], &mut v);
            for (j, &val) in v.iter().enumerate() {
                phi[k][(i, j)] = val;
            }
        }
    }
    let mut out = Vec::with_capacity(d);
    // first: (j, gamma) = sum phi_j(y_0) phi_gamma(y_1)
    out.push(row_major(&(phi[0].transpose() * &phi[1])));
    let mut z = DMatrix::zeros(rows, m * m);
    for k in 1..d - 1 {
        for i in 0..rows {
            for b in 0..m {
                let pb = phi[k - 1][(i, b)];
                for j in 0..m {
                    z[(i, b * m + j)] = pb * phi[k][(i, j)];
                }
            }
        }
        out.push(row_major(&(z.transpose() * &phi[k + 1])));
    }
    out.push(row_major(&(phi[d - 2].transpose() * &phi[d - 1])));
    out
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Empirical coefficient moments of a continuous sample set.
pub fn estimate_coeff_marginals(s: &ContinuousSamples, basis: &BasisSet) -> Result<CoeffTensors> {
    basis.validate()?;
    let d = s.dims();
    if d < 2 {
        return Err(TtError::Argument("coefficient moments need at least 2 variables".into()));
    }
    if let Some(pos) = s.values().iter().position(|v| !(basis.a..=basis.b).contains(v)) {
        return Err(TtError::Range {
            row: pos / d + 1,
            col: pos % d + 1,
            value: s.values()[pos].to_string(),
        });
    }
    let m = basis.size;
    let n = s.n_samples();
    let partials: Vec<Vec<Vec<f64>>> = s
        .values()
        .par_chunks(CHUNK * d)
        .map(|chunk| chunk_moments(chunk, d, basis))
        .collect();
    let sizes: Vec<usize> = (0..d)
        .map(|k| if k == 0 || k == d - 1 { m * m } else { m * m * m })
        .collect();
    let mut acc: Vec<Compensated> = sizes.iter().map(|&l| Compensated::new(l)).collect();
    for part in &partials {
        for (a, p) in acc.iter_mut().zip(part) {
            a.add(p);
        }
    }
    let c = basis.constant();
    let nu = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let shape = if k == 0 {
                vec![1, m, m]
            } else if k == d - 1 {
                vec![m, m, 1]
            } else {
                vec![m, m, m]
            };
            let factor = if k == 0 { 1.0 } else { c.powi(k as i32 - 1) } / n as f64;
            let data = a.total().into_iter().map(|v| v * factor).collect();
            DenseTensor::new(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoeffTensors {
        basis: basis.clone(),
        nu,
        n_samples: n,
    })
}

/// Left blocks of the coefficient-space sketch: `(M, M, 1)` selecting the
/// first index, then `(M, M, M)` with `s(b', j, b) = [b' = j][b = 0]`.
fn coeff_left_blocks(d: usize, m: usize) -> Vec<DenseTensor> {
    let mut blocks = vec![DenseTensor::from_fn(&[m, m, 1], |i| (i[0] == i[1]) as u8 as f64)];
    for _ in 1..d.saturating_sub(1) {
        blocks.push(DenseTensor::from_fn(&[m, m, m], |i| {
            (i[0] == i[1] && i[2] == 0) as u8 as f64
        }));
    }
    blocks
}

/// Fit a coefficient tensor train to given moments.
pub fn fit_coeff_tensors(coeffs: &CoeffTensors, ranks: &RankSpec) -> Result<ContinuousFit> {
    let d = coeffs.nu.len();
    let m = coeffs.basis.size;
    if let RankSpec::Explicit(r) = ranks {
        if let Some(&bad) = r.iter().find(|&&v| v > m) {
            return Err(TtError::Rank(format!("rank {bad} exceeds basis size {m}")));
        }
    }
    let fit = fit_from_sketches(&coeffs.nu, ranks, &coeff_left_blocks(d, m), "tt-rs-continuous")?;
    Ok(ContinuousFit {
        tt: ContinuousTT::new(fit.tt, coeffs.basis.clone())?,
        report: fit.report,
    })
}

/// Estimate moments from samples and fit.
pub fn tt_rs_continuous_markov(
    s: &ContinuousSamples,
    basis: &BasisSet,
    ranks: &RankSpec,
) -> Result<ContinuousFit> {
    let t = std::time::Instant::now();
    let coeffs = estimate_coeff_marginals(s, basis)?;
    let sketch_ms = t.elapsed().as_secs_f64() * 1e3;
    let mut fit = fit_coeff_tensors(&coeffs, ranks)?;
    fit.report.timings.sketch_ms = sketch_ms;
    Ok(fit)
}

#[derive(Clone, Debug)]
pub struct ContinuousFit {
    pub tt: ContinuousTT,
    pub report: FitReport,
}

/// Function `q(y) = sum_j g(j_1, ..., j_d) phi_{j_1}(y_1) ... phi_{j_d}(y_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousTT {
    coeffs: TensorTrain,
    basis: BasisSet,
}

impl ContinuousTT {
    pub fn new(coeffs: TensorTrain, basis: BasisSet) -> Result<Self> {
        basis.validate()?;
        if let Some(&n) = coeffs.extents().iter().find(|&&n| n != basis.size) {
            return Err(TtError::Shape(format!(
                "coefficient extent {n} does not match basis size {}",
                basis.size
            )));
        }
        Ok(Self { coeffs, basis })
    }

    pub fn coeffs(&self) -> &TensorTrain {
        &self.coeffs
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn dims(&self) -> usize {
        self.coeffs.dims()
    }

    /// Function core `G_k(., x, .) = sum_j g_k(., j, .) phi_j(x)` as an `r x r'` matrix.
    pub fn function_core(&self, k: usize, x: f64) -> DMatrix<f64> {
        let core = self.coeffs.core(k);
        let [r0, m, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
        let phi = self.basis.eval(x);
        DMatrix::from_fn(r0, r1, |a, b| {
            (0..m).map(|j| core.data()[(a * m + j) * r1 + b] * phi[j]).sum()
        })
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dims() {
            return Err(TtError::Argument(format!(
                "point has {} coordinates, function has {}",
                y.len(),
                self.dims()
            )));
        }
        let mut v = DMatrix::from_element(1, 1, 1.0);
        for (k, &x) in y.iter().enumerate() {
            if !(self.basis.a..=self.basis.b).contains(&x) {
                return Err(TtError::Range {
                    row: 1,
                    col: k + 1,
                    value: x.to_string(),
                });
            }
            v = v * self.function_core(k, x);
        }
        Ok(v[(0, 0)])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.push(match self.basis.family {
            BasisFamily::Fourier => 0,
        });
        out.extend_from_slice(&(self.basis.size as u64).to_le_bytes());
        out.extend_from_slice(&self.basis.a.to_le_bytes());
        out.extend_from_slice(&self.basis.b.to_le_bytes());
        out.extend_from_slice(&self.coeffs.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(TtError::Format("not a continuous tensor-train file".into()));
        }
        let family = match r.u8()? {
            0 => BasisFamily::Fourier,
            t => return Err(TtError::Format(format!("unknown basis family tag {t}"))),
        };
        let size = r.u64()? as usize;
        let a = r.f64()?;
        let b = r.f64()?;
        let rest = r.take(bytes.len() - MAGIC.len() - 25)?;
        let basis = BasisSet { family, size, a, b };
        Self::new(TensorTrain::from_bytes(rest)?, basis)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Unnormalized chain density `exp(f_0(y_0) + sum_{k>=1} f_k(y_{k-1}, y_k))` on `[a, b]^d`.
pub trait ChainDensity: Sync {
    fn dims(&self) -> usize;
    fn interval(&self) -> (f64, f64);
    fn log_first(&self, x: f64) -> f64;
    /// Log factor linking variable `k - 1` (value `x`) to variable `k` (value `y`).
    fn log_pair(&self, k: usize, x: f64, y: f64) -> f64;
}

impl ChainDensity for GinzburgLandauSpec {
    fn dims(&self) -> usize {
        self.d
    }

    fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    fn log_first(&self, x: f64) -> f64 {
        let bc = if self.d == 1 { self.pair_energy(x, 0.0) } else { 0.0 };
        -(self.site_energy(0.0) + self.pair_energy(0.0, x) + self.site_energy(x) + bc)
    }

    fn log_pair(&self, k: usize, x: f64, y: f64) -> f64 {
        let bc = if k + 1 == self.d { self.pair_energy(y, 0.0) } else { 0.0 };
        -(self.pair_energy(x, y) + self.site_energy(y) + bc)
    }
}

/// Log factors on the quadrature grid, each shifted by its maximum.
/// `first[q]`, `pairs[k-1][q * Q + q']`.
struct GridFactors {
    first: Vec<f64>,
    pairs: Vec<Vec<f64>>,
}

fn grid_factors<D: ChainDensity + ?Sized>(density: &D, quad: &Quadrature) -> GridFactors {
    let z = &quad.nodes;
    let shift = |v: Vec<f64>| {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.into_iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let first = shift(z.iter().map(|&x| density.log_first(x)).collect());
    let pairs = (1..density.dims())
        .map(|k| {
            shift(
                z.iter()
                    .flat_map(|&x| z.iter().map(move |&y| (x, y)))
                    .map(|(x, y)| density.log_pair(k, x, y))
                    .collect(),
            )
        })
        .collect();
    GridFactors { first, pairs }
}

/// `log sum_y w(y) exp(power * sum_k f_k)` over the quadrature grid.
fn log_chain_integral(g: &GridFactors, quad: &Quadrature, power: f64) -> f64 {
    let q = quad.len();
    let lw: Vec<f64> = quad.weights.iter().map(|w| w.ln()).collect();
    let mut msg: Vec<f64> = (0..q).map(|i| lw[i] + power * g.first[i]).collect();
    for pair in &g.pairs {
        msg = (0..q)
            .map(|j| {
                let terms: Vec<f64> = (0..q).map(|i| msg[i] + power * pair[i * q + j]).collect();
                lw[j] + log_sum_exp(&terms)
            })
            .collect();
    }
    log_sum_exp(&msg)
}

/// Coefficient tensor train of the normalized chain density, by chain quadrature.
///
/// The bond index is the quadrature node of the current variable, so the
/// ranks equal the number of nodes.
pub fn markov_to_coeff_tt<D: ChainDensity + ?Sized>(
    density: &D,
    basis: &BasisSet,
    q: usize,
) -> Result<TensorTrain> {
    Ok(coeff_tt_and_norm(density, basis, q)?.0)
}

fn check_reference<D: ChainDensity + ?Sized>(density: &D, basis: &BasisSet, q: usize) -> Result<Quadrature> {
    basis.validate()?;
    if q < DEFAULT_QUADRATURE {
        return Err(TtError::Argument(format!(
            "quadrature needs at least {DEFAULT_QUADRATURE} nodes, got {q}"
        )));
    }
    if density.dims() == 0 {
        return Err(TtError::Argument("density has no variables".into()));
    }
    let (a, b) = density.interval();
    if (a, b) != basis.interval() {
        return Err(TtError::Argument(format!(
            "density interval [{a}, {b}] differs from basis interval [{}, {}]",
            basis.a, basis.b
        )));
    }
    Ok(Quadrature::gauss_legendre(q, a, b))
}

/// Coefficient train and `||p||^2`.
fn coeff_tt_and_norm<D: ChainDensity + ?Sized>(
    density: &D,
    basis: &BasisSet,
    q: usize,
) -> Result<(TensorTrain, f64)> {
    let quad = check_reference(density, basis, q)?;
    let d = density.dims();
    let m = basis.size;
    let g = grid_factors(density, &quad);
    let log_z = log_chain_integral(&g, &quad, 1.0);
    let log_s = log_chain_integral(&g, &quad, 2.0);
    let norm_sq = (log_s - 2.0 * log_z).exp();
    let per_core = (-log_z / d as f64).exp();
    let phi: Vec<Vec<f64>> = quad.nodes.iter().map(|&z| basis.eval(z)).collect();
    let w = &quad.weights;
    let mut cores = Vec::with_capacity(d);
    let first_rank = if d == 1 { 1 } else { q };
    let mut c0 = DenseTensor::zeros(&[1, m, first_rank]);
    for i in 0..q {
        let f = per_core * w[i] * g.first[i].exp();
        for j in 0..m {
            let off = if d == 1 { j } else { j * q + i };
            c0.data_mut()[off] += f * phi[i][j];
        }
    }
    cores.push(c0);
    for (k, pair) in g.pairs.iter().enumerate() {
        let last = k + 2 == d;
        let r1 = if last { 1 } else { q };
        let mut c = DenseTensor::zeros(&[q, m, r1]);
        let data = c.data_mut();
        for a in 0..q {
            for b in 0..q {
                let f = per_core * w[b] * pair[a * q + b].exp();
                for j in 0..m {
                    let off = (a * m + j) * r1 + if last { 0 } else { b };
                    data[off] += f * phi[b][j];
                }
            }
        }
        cores.push(c);
    }
    Ok((TensorTrain::new(cores)?, norm_sq))
}

/// Relative L2 errors of a fitted function against a reference density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Errors {
    /// Basis truncation error `||p - p_A|| / ||p||`.
    pub err_a: f64,
    /// Estimation error `||p_A - q|| / ||p||`.
    pub err_e: f64,
    /// Total error `||p - q|| / ||p||`.
    pub err_t: f64,
}

/// Precomputed reference quantities for repeated error evaluation.
#[derive(Clone, Debug)]
pub struct L2Reference {
    pub basis: BasisSet,
    /// Coefficient train of the reference density.
    pub nu: TensorTrain,
    /// `||p||^2`.
    pub p_norm_sq: f64,
    /// `||p_A||^2 = ||nu||^2`.
    pub pa_norm_sq: f64,
}

/// `sqrt(x)`, tolerating round-off below zero.
fn checked_sqrt(x: f64, scale: f64) -> Result<f64> {
    if x < -1e-10 * scale {
        return Err(TtError::Numerical(x));
    }
    Ok(x.max(0.0).sqrt())
}

impl L2Reference {
    pub fn new<D: ChainDensity + ?Sized>(density: &D, basis: &BasisSet, q: usize) -> Result<Self> {
        let (nu, p_norm_sq) = coeff_tt_and_norm(density, basis, q)?;
        let pa_norm_sq = nu.inner(&nu)?;
        if !(p_norm_sq > 0.0) {
            return Err(TtError::DegenerateReference);
        }
        Ok(Self {
            basis: basis.clone(),
            nu,
            p_norm_sq,
            pa_norm_sq,
        })
    }

    pub fn err_a(&self) -> Result<f64> {
        Ok(checked_sqrt(self.p_norm_sq - self.pa_norm_sq, self.p_norm_sq)? / self.p_norm_sq.sqrt())
    }

    pub fn errors(&self, fit: &ContinuousTT) -> Result<L2Errors> {
        if fit.basis() != &self.basis {
            return Err(TtError::Argument("fit and reference use different bases".into()));
        }
        let err_e = self.nu.difference(fit.coeffs())?.norm() / self.p_norm_sq.sqrt();
        let err_a = self.err_a()?;
        Ok(L2Errors {
            err_a,
            err_e,
            err_t: (err_a * err_a + err_e * err_e).sqrt(),
        })
    }
}

/// One-shot error decomposition of `fit` against a chain density.
pub fn l2_error_decomposition<D: ChainDensity + ?Sized>(
    density: &D,
    basis: &BasisSet,
    fit: &ContinuousTT,
    q: usize,
) -> Result<L2Errors> {
    L2Reference::new(density, basis, q)?.errors(fit)
}
