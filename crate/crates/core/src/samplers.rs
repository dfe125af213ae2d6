//! Ancestral, Gibbs, Metropolis–Hastings and conditional tensor-train sampling.
//!
//! Every sampler is a deterministic function of its inputs and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::empirical::{ContinuousSamples, DiscreteSamples};
use crate::error::{Result, TtError};
use crate::markov::{exp_normalize, ChainFactors, GinzburgLandauSpec, MarkovSpec};
use crate::tensor::encode;
use crate::tt::TensorTrain;

/// Burn-in and thinning, both counted in full sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thin: 10,
        }
    }
}

/// Provenance recorded next to generated samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerMeta {
    pub sampler: String,
    pub seed: u64,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub proposal_sigma: Option<f64>,
    pub acceptance_rate: Option<f64>,
    /// Sites where a conditional had no positive mass and a uniform draw was used.
    pub fallback_sites: u64,
}

impl SamplerMeta {
    fn new(sampler: &str, seed: u64) -> Self {
        Self {
            sampler: sampler.into(),
            seed,
            burn_in: None,
            thin: None,
            proposal_sigma: None,
            acceptance_rate: None,
            fallback_sites: 0,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, cdf: &[f64]) -> usize {
    let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    w.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Exact i.i.d. draws by sequential conditional sampling along the chain.
pub fn sample_ancestral(spec: &MarkovSpec, n: usize, seed: u64) -> Result<DiscreteSamples> {
    if n == 0 {
        return Err(TtError::Argument("sample count must be positive".into()));
    }
    let d = spec.dims();
    let m = spec.order();
    let ext = spec.extents();
    let init_cdf = cumulative(spec.initial().data());
    let kernel_cdfs: Vec<Vec<Vec<f64>>> = (m..d)
        .map(|j| spec.kernel(j).data().chunks(ext[j]).map(cumulative).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = Vec::with_capacity(n * d);
    let mut x = vec![0usize; d];
    let mut head = vec![0usize; m];
    for _ in 0..n {
        let flat = draw(&mut rng, &init_cdf);
        crate::tensor::decode(flat, &ext[..m], &mut head);
        x[..m].copy_from_slice(&head);
        for j in m..d {
            let row = encode(x[j - m..j].iter().copied(), &ext[j - m..j]);
            x[j] = draw(&mut rng, &kernel_cdfs[j - m][row]);
        }
        codes.extend(x.iter().map(|&v| v as u16));
    }
    DiscreteSamples::new(ext.to_vec(), codes)
}

/// Single-site systematic-scan Gibbs sampler for a chain of log-potentials.
pub fn sample_gibbs(
    factors: &ChainFactors,
    n: usize,
    opts: McmcOptions,
    seed: u64,
) -> Result<(DiscreteSamples, SamplerMeta)> {
    if opts.thin == 0 {
        return Err(TtError::Argument("thin must be at least 1".into()));
    }
    if n == 0 {
        return Err(TtError::Argument("sample count must be positive".into()));
    }
    let d = factors.dims();
    let m = factors.order();
    let ext = factors.extents().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<usize> = ext.iter().map(|&k| rng.gen_range(0..k)).collect();
    let mut logw = Vec::new();
    let mut sweep = |x: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        for i in 0..d {
            logw.clear();
            for v in 0..ext[i] {
                x[i] = v;
                let s: f64 = (i..(i + m + 1).min(d))
                    .map(|j| factors.log_factor(j).at(&x[j.saturating_sub(m)..=j]))
                    .sum();
                logw.push(s);
            }
            exp_normalize(&mut logw);
            x[i] = draw(rng, &cumulative(&logw));
        }
    };
    for _ in 0..opts.burn_in {
        sweep(&mut x, &mut rng);
    }
    let mut codes = Vec::with_capacity(n * d);
    for _ in 0..n {
        for _ in 0..opts.thin {
            sweep(&mut x, &mut rng);
        }
        codes.extend(x.iter().map(|&v| v as u16));
    }
    let mut meta = SamplerMeta::new("gibbs", seed);
    meta.burn_in = Some(opts.burn_in);
    meta.thin = Some(opts.thin);
    Ok((DiscreteSamples::new(ext, codes)?, meta))
}

/// Reflect `v` into `[a, b]`.
pub fn reflect(v: f64, a: f64, b: f64) -> f64 {
    if (a..=b).contains(&v) {
        return v;
    }
    let l = b - a;
    let mut t = (v - a).rem_euclid(2.0 * l);
    if t > l {
        t = 2.0 * l - t;
    }
    a + t
}

/// Random-walk Metropolis–Hastings on the continuous Ginzburg–Landau density.
///
/// Each step perturbs every coordinate by an independent `N(0, sigma^2)`
/// draw, reflects into `[a, b]` and accepts with probability
/// `min(1, exp(-dE))`. Burn-in and thinning count such steps.
pub fn sample_mh_continuous(
    spec: &GinzburgLandauSpec,
    n: usize,
    sigma: f64,
    opts: McmcOptions,
    seed: u64,
) -> Result<(ContinuousSamples, SamplerMeta)> {
    spec.validate()?;
    if !(sigma > 0.0) {
        return Err(TtError::Argument("proposal sigma must be positive".into()));
    }
    if opts.thin == 0 {
        return Err(TtError::Argument("thin must be at least 1".into()));
    }
    if n == 0 {
        return Err(TtError::Argument("sample count must be positive".into()));
    }
    let d = spec.d;
    let (a, b) = (spec.a, spec.b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = if (a..=b).contains(&0.0) { 0.0 } else { 0.5 * (a + b) };
    let mut x = vec![start; d];
    let mut energy = spec.energy(&x);
    let mut y = vec![0.0; d];
    let mut accepted: u64 = 0;
    let mut proposed: u64 = 0;
    let mut step = |x: &mut Vec<f64>, energy: &mut f64, rng: &mut ChaCha8Rng| {
        for (yi, &xi) in y.iter_mut().zip(x.iter()) {
            let z: f64 = rng.sample(StandardNormal);
            *yi = reflect(xi + sigma * z, a, b);
        }
        let e = spec.energy(&y);
        let u: f64 = rng.gen();
        let accept = e <= *energy || u < (*energy - e).exp();
        if accept {
            x.copy_from_slice(&y);
            *energy = e;
        }
        accept
    };
    for _ in 0..opts.burn_in {
        step(&mut x, &mut energy, &mut rng);
    }
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        for _ in 0..opts.thin {
            proposed += 1;
            accepted += step(&mut x, &mut energy, &mut rng) as u64;
        }
        values.extend_from_slice(&x);
    }
    let mut meta = SamplerMeta::new("metropolis-hastings", seed);
    meta.burn_in = Some(opts.burn_in);
    meta.thin = Some(opts.thin);
    meta.proposal_sigma = Some(sigma);
    meta.acceptance_rate = Some(accepted as f64 / proposed.max(1) as f64);
    Ok((ContinuousSamples::new(d, (a, b), values)?, meta))
}

/// Conditional sampling from a tensor train read as an unnormalized density.
///
/// Negative conditional weights are clipped to zero; a conditional with no
/// positive mass falls back to a uniform draw and is counted in the metadata.
pub fn sample_from_tt(tt: &TensorTrain, n: usize, seed: u64) -> Result<(DiscreteSamples, SamplerMeta)> {
    if n == 0 {
        return Err(TtError::Argument("sample count must be positive".into()));
    }
    let d = tt.dims();
    let ext = tt.extents();
    // right[j] = sum over x_{j..d} of G_j ... G_{d-1}, a vector of length r_j.
    let mut right = vec![vec![1.0]; d + 1];
    // proj[j][x] = G_j(:, x, :) right[j + 1]
    let mut proj: Vec<Vec<Vec<f64>>> = vec![Vec::new(); d];
    for j in (0..d).rev() {
        let c = tt.core(j);
        let [r0, nj, r1] = [c.shape()[0], c.shape()[1], c.shape()[2]];
        proj[j] = (0..nj)
            .map(|x| {
                (0..r0)
                    .map(|a| (0..r1).map(|b| c.data()[(a * nj + x) * r1 + b] * right[j + 1][b]).sum())
                    .collect()
            })
            .collect();
        right[j] = (0..r0).map(|a| (0..nj).map(|x| proj[j][x][a]).sum()).collect();
    }
    let total = right[0][0];
    if !(total > 0.0) {
        return Err(TtError::DegenerateDensity(total));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meta = SamplerMeta::new("tensor-train", seed);
    let mut codes = Vec::with_capacity(n * d);
    let mut w = Vec::new();
    for _ in 0..n {
        let mut left = vec![1.0];
        for j in 0..d {
            w.clear();
            w.extend(proj[j].iter().map(|p| p.iter().zip(&left).map(|(a, b)| a * b).sum::<f64>().max(0.0)));
            let x = if w.iter().sum::<f64>() > 0.0 {
                draw(&mut rng, &cumulative(&w))
            } else {
                meta.fallback_sites += 1;
                rng.gen_range(0..ext[j])
            };
            codes.push(x as u16);
            let c = tt.core(j);
            let [r0, nj, r1] = [c.shape()[0], c.shape()[1], c.shape()[2]];
            left = (0..r1)
                .map(|b| (0..r0).map(|a| left[a] * c.data()[(a * nj + x) * r1 + b]).sum())
                .collect();
            let scale = left.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale > 0.0 {
                left.iter_mut().for_each(|v| *v /= scale);
            }
        }
    }
    Ok((DiscreteSamples::new(ext, codes)?, meta))
}
