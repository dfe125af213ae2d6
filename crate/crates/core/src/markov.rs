//! Ground-truth chain models and their exact tensor trains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::tensor::{checked_len, decode, encode, DenseTensor, DEFAULT_ENTRY_CAP};
use crate::tt::TensorTrain;

const STOCHASTIC_TOL: f64 = 1e-10;

/// Transition kernels of a Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernels {
    /// One kernel reused at every site.
    Homogeneous(DenseTensor),
    /// `kernels[j - order]` drives variable `j`.
    PerSite(Vec<DenseTensor>),
}

/// Order-`m` Markov chain: `p(x_0..x_{m-1}) prod_j p(x_j | x_{j-m}..x_{j-1})`.
///
/// A kernel for variable `j` has shape `(n_{j-m}, ..., n_{j-1}, n_j)` and sums
/// to one over its last index.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSpec {
    order: usize,
    extents: Vec<usize>,
    initial: DenseTensor,
    kernels: Kernels,
}

impl MarkovSpec {
    pub fn new(order: usize, extents: Vec<usize>, initial: DenseTensor, kernels: Kernels) -> Result<Self> {
        let d = extents.len();
        if order == 0 || order > d {
            return Err(TtError::Argument(format!("order {order} invalid for d={d}")));
        }
        if initial.shape() != &extents[..order] {
            return Err(TtError::Shape(format!(
                "initial marginal has shape {:?}, expected {:?}",
                initial.shape(),
                &extents[..order]
            )));
        }
        if initial.data().iter().any(|&v| v < 0.0) || (initial.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(TtError::Argument("initial marginal is not a distribution".into()));
        }
        if let Kernels::PerSite(ks) = &kernels {
            if ks.len() != d - order {
                return Err(TtError::Shape(format!(
                    "{} kernels for {} transitions",
                    ks.len(),
                    d - order
                )));
            }
        }
        let spec = Self {
            order,
            extents,
            initial,
            kernels,
        };
        for j in order..d {
            let k = spec.kernel(j);
            let want = &spec.extents[j - order..=j];
            if k.shape() != want {
                return Err(TtError::Shape(format!(
                    "kernel for variable {j} has shape {:?}, expected {want:?}",
                    k.shape()
                )));
            }
            let n = want[order];
            for (row, chunk) in k.data().chunks(n).enumerate() {
                let s: f64 = chunk.iter().sum();
                if chunk.iter().any(|&v| v < 0.0) || (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(TtError::Argument(format!(
                        "kernel for variable {j} is not stochastic in row {row}"
                    )));
                }
            }
        }
        Ok(spec)
    }

    /// Homogeneous chain on `d` variables with a common alphabet size `n`.
    pub fn homogeneous(order: usize, d: usize, initial: DenseTensor, kernel: DenseTensor) -> Result<Self> {
        let n = kernel.shape().last().copied().unwrap_or(0);
        Self::new(order, vec![n; d], initial, Kernels::Homogeneous(kernel))
    }

    /// Random chain with strictly positive entries drawn from a seeded generator.
    pub fn random(order: usize, extents: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = extents.len();
        if order == 0 || order > d {
            return Err(TtError::Argument(format!("order {order} invalid for d={d}")));
        }
        let initial = random_stochastic(&mut rng, &extents[..order], None);
        let kernels = (order..d)
            .map(|j| random_stochastic(&mut rng, &extents[j - order..=j], Some(extents[j])))
            .collect();
        Self::new(order, extents.to_vec(), initial, Kernels::PerSite(kernels))
    }

    /// Random homogeneous order-1 chain on `d` variables with alphabet size `n`,
    /// started from the stationary distribution of its kernel.
    pub fn random_homogeneous(n: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = random_stochastic(&mut rng, &[n, n], Some(n));
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            let next: Vec<f64> = (0..n)
                .map(|b| (0..n).map(|a| pi[a] * kernel.data()[a * n + b]).sum())
                .collect();
            let delta: f64 = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        let s: f64 = pi.iter().sum();
        let initial = DenseTensor::new(vec![n], pi.iter().map(|v| v / s).collect())?;
        Self::homogeneous(1, d, initial, kernel)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn initial(&self) -> &DenseTensor {
        &self.initial
    }

    pub fn kernels(&self) -> &Kernels {
        &self.kernels
    }

    /// Kernel driving variable `j` (`order <= j < d`).
    pub fn kernel(&self, j: usize) -> &DenseTensor {
        match &self.kernels {
            Kernels::Homogeneous(k) => k,
            Kernels::PerSite(ks) => &ks[j - self.order],
        }
    }

    /// Probability of one 0-based configuration.
    pub fn density(&self, x: &[usize]) -> Result<f64> {
        let m = self.order;
        let mut p = self.initial.get(&x[..m])?;
        for j in m..self.dims() {
            p *= self.kernel(j).get(&x[j - m..=j])?;
        }
        Ok(p)
    }

    /// Dense joint table by direct enumeration.
    pub fn to_dense(&self, cap: u128) -> Result<DenseTensor> {
        checked_len(&self.extents, cap)?;
        Ok(DenseTensor::from_fn(&self.extents, |x| {
            self.density(x).expect("index in range")
        }))
    }
}

fn random_stochastic(rng: &mut ChaCha8Rng, shape: &[usize], row: Option<usize>) -> DenseTensor {
    let mut t = DenseTensor::from_fn(shape, |_| rng.gen_range(0.05..1.0));
    let chunk = row.unwrap_or(t.len());
    for c in t.data_mut().chunks_mut(chunk) {
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|v| *v /= s);
    }
    t
}

/// Exact tensor train of a Markov chain density.
///
/// The bond after variable `j` carries the joint state of the last
/// `min(order, j + 1)` variables.
pub fn markov_to_tt(spec: &MarkovSpec) -> Result<TensorTrain> {
    markov_to_tt_capped(spec, DEFAULT_ENTRY_CAP)
}

pub fn markov_to_tt_capped(spec: &MarkovSpec, cap: u128) -> Result<TensorTrain> {
    let d = spec.dims();
    let m = spec.order;
    let ext = &spec.extents;
    let state = |j: usize| -> std::ops::Range<usize> {
        if j == d {
            j..j
        } else {
            j.saturating_sub(m)..j
        }
    };
    let mut cores = Vec::with_capacity(d);
    for j in 0..d {
        let sin = state(j);
        let sout = state(j + 1);
        let rin: Vec<usize> = ext[sin.clone()].to_vec();
        let rout: Vec<usize> = ext[sout.clone()].to_vec();
        let (r0, n) = (rin.iter().product::<usize>(), ext[j]);
        let r1: usize = rout.iter().product();
        checked_len(&[r0, n, r1], cap)?;
        let mut core = DenseTensor::zeros(&[r0, n, r1]);
        let mut digits = vec![0; rin.len()];
        let mut window = Vec::with_capacity(rin.len() + 1);
        for a in 0..r0 {
            decode(a, &rin, &mut digits);
            for x in 0..n {
                window.clear();
                window.extend_from_slice(&digits);
                window.push(x);
                let factor = match j.cmp(&(m - 1)) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Equal => spec.initial.at(&window),
                    std::cmp::Ordering::Greater => spec.kernel(j).at(&window),
                };
                let keep = rout.len();
                let b = encode(window[window.len() - keep..].iter().copied(), &rout);
                core.data_mut()[(a * n + x) * r1 + b] = factor;
            }
        }
        cores.push(core);
    }
    TensorTrain::new(cores)
}

/// Chain of log-potentials; factor `j` covers variables `max(0, j - order)..=j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainFactors {
    order: usize,
    extents: Vec<usize>,
    log_factors: Vec<DenseTensor>,
}

impl ChainFactors {
    pub fn new(order: usize, extents: Vec<usize>, log_factors: Vec<DenseTensor>) -> Result<Self> {
        let d = extents.len();
        if order == 0 || d == 0 || log_factors.len() != d {
            return Err(TtError::Argument(format!(
                "need one factor per variable and a positive order (d={d}, {} factors)",
                log_factors.len()
            )));
        }
        for (j, f) in log_factors.iter().enumerate() {
            let want = &extents[j.saturating_sub(order)..=j];
            if f.shape() != want {
                return Err(TtError::Shape(format!(
                    "factor {j} has shape {:?}, expected {want:?}",
                    f.shape()
                )));
            }
        }
        Ok(Self {
            order,
            extents,
            log_factors,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn log_factor(&self, j: usize) -> &DenseTensor {
        &self.log_factors[j]
    }

    /// Unnormalized log density.
    pub fn log_weight(&self, x: &[usize]) -> f64 {
        (0..self.dims())
            .map(|j| self.log_factors[j].at(&x[j.saturating_sub(self.order)..=j]))
            .sum()
    }

    /// Normalized Markov chain with the same law, by backward log-messages.
    pub fn to_markov(&self) -> Result<MarkovSpec> {
        let d = self.dims();
        let m = self.order.min(d);
        let ext = &self.extents;
        // msg[j] is over the state x_{j-m+1..=j}, defined for j >= m - 1.
        let mut msg: Vec<Option<DenseTensor>> = vec![None; d];
        msg[d - 1] = Some(DenseTensor::zeros(&ext[d - m..d]));
        for j in (m.saturating_sub(1)..d - 1).rev() {
            let sshape = &ext[j + 1 - m..=j];
            let next = msg[j + 1].as_ref().expect("filled above");
            let f = &self.log_factors[j + 1];
            let t = DenseTensor::from_fn(sshape, |s| {
                let terms: Vec<f64> = (0..ext[j + 1])
                    .map(|x| {
                        let mut w: Vec<usize> = s.to_vec();
                        w.push(x);
                        f.at(&w[w.len() - f.ndim()..]) + next.at(&w[1..])
                    })
                    .collect();
                log_sum_exp(&terms)
            });
            msg[j] = Some(t);
        }
        let mut init = DenseTensor::from_fn(&ext[..m], |s| {
            let local: f64 = (0..m).map(|j| self.log_factors[j].at(&s[..=j])).sum();
            local + msg[m - 1].as_ref().expect("filled").at(s)
        });
        exp_normalize(init.data_mut());
        let kernels = (m..d)
            .map(|j| {
                let beta = msg[j].as_ref().expect("filled");
                let f = &self.log_factors[j];
                let mut k = DenseTensor::from_fn(&ext[j - m..=j], |w| f.at(w) + beta.at(&w[1..]));
                for row in k.data_mut().chunks_mut(ext[j]) {
                    exp_normalize(row);
                }
                k
            })
            .collect();
        MarkovSpec::new(m, ext.clone(), init, Kernels::PerSite(kernels))
    }

    /// Dense normalized density by brute-force enumeration.
    pub fn to_dense_normalized(&self, cap: u128) -> Result<DenseTensor> {
        checked_len(&self.extents, cap)?;
        let mut t = DenseTensor::from_fn(&self.extents, |x| self.log_weight(x));
        exp_normalize(t.data_mut());
        Ok(t)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Replace log-weights by normalized weights in place.
pub(crate) fn exp_normalize(v: &mut [f64]) {
    let lse = log_sum_exp(v);
    v.iter_mut().for_each(|x| *x = (*x - lse).exp());
}

/// Ginzburg–Landau chain with zero boundary values.
///
/// Energy `beta * sum_{k=0}^{d} [ lambda/2 ((x_k - x_{k+1})/h)^2 + (x_k^2 - 1)^2 / (4 lambda) ]`
/// with `x_0 = x_{d+1} = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GinzburgLandauSpec {
    pub d: usize,
    pub beta: f64,
    pub lambda: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
}

impl GinzburgLandauSpec {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            beta: 1.0,
            lambda: 1.0,
            h: 1.0,
            a: -4.0,
            b: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !(self.beta > 0.0 && self.lambda > 0.0 && self.h > 0.0) || !(self.a < self.b) {
            return Err(TtError::Argument(format!("invalid Ginzburg-Landau parameters {self:?}")));
        }
        Ok(())
    }

    /// `beta (x^2 - 1)^2 / (4 lambda)`.
    pub fn site_energy(&self, x: f64) -> f64 {
        self.beta * (x * x - 1.0).powi(2) / (4.0 * self.lambda)
    }

    /// `beta lambda/2 ((x - y)/h)^2`.
    pub fn pair_energy(&self, x: f64, y: f64) -> f64 {
        let t = (x - y) / self.h;
        self.beta * self.lambda * 0.5 * t * t
    }

    /// Energy of `x = (x_1, ..., x_d)`, including the boundary terms.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut e = self.site_energy(0.0);
        let mut prev = 0.0;
        for &v in x {
            e += self.pair_energy(prev, v) + self.site_energy(v);
            prev = v;
        }
        e + self.pair_energy(prev, 0.0)
    }

    /// `n` equispaced points `a + i (b - a)/(n - 1)`.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.a + i as f64 * (self.b - self.a) / (n as f64 - 1.0))
            .collect()
    }

    /// Log-potentials of the chain restricted to the `n`-point grid.
    pub fn chain_factors(&self, n: usize) -> Result<ChainFactors> {
        self.validate()?;
        if n < 2 {
            return Err(TtError::Argument("grid needs at least 2 points".into()));
        }
        let z = self.grid(n);
        let d = self.d;
        let mut factors = Vec::with_capacity(d);
        let last_bc = |v: f64| if d == 1 { self.pair_energy(v, 0.0) } else { 0.0 };
        factors.push(DenseTensor::from_fn(&[n], |i| {
            let v = z[i[0]];
            -(self.site_energy(0.0) + self.pair_energy(0.0, v) + self.site_energy(v) + last_bc(v))
        }));
        for j in 1..d {
            factors.push(DenseTensor::from_fn(&[n, n], |i| {
                let (u, v) = (z[i[0]], z[i[1]]);
                let bc = if j == d - 1 { self.pair_energy(v, 0.0) } else { 0.0 };
                -(self.pair_energy(u, v) + self.site_energy(v) + bc)
            }));
        }
        ChainFactors::new(1, vec![n; d], factors)
    }
}

/// Discretize the Ginzburg–Landau density on an `n`-point grid as an order-1 chain.
pub fn gl_discretize(spec: &GinzburgLandauSpec, n: usize) -> Result<MarkovSpec> {
    spec.chain_factors(n)?.to_markov()
}

/// One-dimensional Ising chain `p ∝ exp(-beta sum_{i,j} J_ij x_i x_j)`, with the
/// double sum over all ordered pairs and `J_ij = -1/(1 + |i - j|)` for `|i - j| <= 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingSpec {
    pub d: usize,
    pub beta: f64,
    pub alphabet: Vec<f64>,
}

impl IsingSpec {
    pub fn spins(d: usize, beta: f64) -> Self {
        Self {
            d,
            beta,
            alphabet: vec![-1.0, 1.0],
        }
    }

    /// Alphabet `{-2, -1, 0, 1, 2}`.
    pub fn extended(d: usize, beta: f64) -> Self {
        Self {
            d,
            beta,
            alphabet: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        }
    }

    pub fn coupling(i: usize, j: usize) -> f64 {
        let gap = i.abs_diff(j);
        if gap <= 2 {
            -1.0 / (1.0 + gap as f64)
        } else {
            0.0
        }
    }

    /// `-beta sum_{i,j} J_ij x_i x_j` for 0-based codes.
    pub fn log_weight(&self, x: &[usize]) -> f64 {
        let v: Vec<f64> = x.iter().map(|&c| self.alphabet[c]).collect();
        let mut s = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                s += Self::coupling(i, j) * v[i] * v[j];
            }
        }
        -self.beta * s
    }

    pub fn chain_factors(&self) -> Result<ChainFactors> {
        if self.d == 0 || !(self.beta > 0.0) || self.alphabet.is_empty() {
            return Err(TtError::Argument(format!("invalid Ising parameters {self:?}")));
        }
        let n = self.alphabet.len();
        let v = &self.alphabet;
        let factors = (0..self.d)
            .map(|j| {
                let w = j.min(2) + 1;
                DenseTensor::from_fn(&vec![n; w], |idx| {
                    let xj = v[idx[w - 1]];
                    let mut s = Self::coupling(j, j) * xj * xj;
                    for back in 1..w {
                        s += 2.0 * Self::coupling(j, j - back) * v[idx[w - 1 - back]] * xj;
                    }
                    -self.beta * s
                })
            })
            .collect();
        ChainFactors::new(2, vec![n; self.d], factors)
    }
}

/// The Ising density as an order-2 Markov chain.
pub fn ising_spec_to_markov(spec: &IsingSpec) -> Result<MarkovSpec> {
    spec.chain_factors()?.to_markov()
}
