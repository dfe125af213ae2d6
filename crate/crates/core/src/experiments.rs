//! Trial drivers and summary statistics shared by the command-line harness
//! and the acceptance run.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::continuous::{tt_rs_continuous_markov, BasisSet, L2Errors, L2Reference};
use crate::empirical::DiscreteSamples;
use crate::engine::{tt_rs, tt_s, Fit, RankSpec};
use crate::error::{Result, TtError};
use crate::markov::{GinzburgLandauSpec, MarkovSpec};
use crate::samplers::{sample_ancestral, sample_mh_continuous, McmcOptions};
use crate::sketch::{SketchInput, SketchPlan};
use crate::tt::{rel_l2_error, TensorTrain};

/// Seed offset between consecutive trials of one setting.
pub const TRIAL_STRIDE: u64 = 10_007;
/// Seed offset between consecutive settings of one grid.
pub const SETTING_STRIDE: u64 = 1_000_003;

/// `base + setting * 1000003 + trial * 10007`, wrapping.
pub fn trial_seed(base: u64, setting: u64, trial: u64) -> u64 {
    base.wrapping_add(setting.wrapping_mul(SETTING_STRIDE))
        .wrapping_add(trial.wrapping_mul(TRIAL_STRIDE))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[default]
    #[serde(rename = "tt-rs")]
    TtRs,
    #[serde(rename = "tt-s")]
    TtS,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::TtRs => "tt-rs",
            Self::TtS => "tt-s",
        }
    }

    pub fn fit(self, input: SketchInput, ranks: &RankSpec, plan: &SketchPlan) -> Result<Fit> {
        match self {
            Self::TtRs => tt_rs(input, ranks, plan),
            Self::TtS => tt_s(input, ranks, plan),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = TtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tt-rs" => Ok(Self::TtRs),
            "tt-s" => Ok(Self::TtS),
            other => Err(TtError::Argument(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Cap each requested rank by the sketch widths on both sides of its bond.
pub fn clamp_ranks(ranks: &[usize], plan: &SketchPlan) -> Vec<usize> {
    ranks
        .iter()
        .enumerate()
        .map(|(i, &r)| r.min(plan.left_size(i + 1)).min(plan.right_size(i + 1)))
        .collect()
}

/// `r` everywhere except `edge` on the two outer bonds.
pub fn edge_ranks(d: usize, r: usize, edge: usize) -> Vec<usize> {
    let mut out = vec![r; d.saturating_sub(1)];
    if let Some(first) = out.first_mut() {
        *first = edge;
    }
    if let Some(last) = out.last_mut() {
        *last = edge;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Relative L2 error of the fitted train against the truth.
    pub err: f64,
    pub wall_ms: f64,
}

/// Fit `samples` and score the result against `truth`.
pub fn score_samples(
    samples: &DiscreteSamples,
    truth: &TensorTrain,
    ranks: &RankSpec,
    plan: &SketchPlan,
    algorithm: Algorithm,
) -> Result<TrialOutcome> {
    let t = Instant::now();
    let fit = algorithm.fit(SketchInput::Samples(samples), ranks, plan)?;
    let wall_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(TrialOutcome {
        err: rel_l2_error(truth, &fit.tt)?,
        wall_ms,
    })
}

/// Draw `n` exact samples from `spec`, fit them and score against `truth`.
pub fn discrete_trial(
    spec: &MarkovSpec,
    truth: &TensorTrain,
    n: usize,
    ranks: &RankSpec,
    plan: &SketchPlan,
    algorithm: Algorithm,
    seed: u64,
) -> Result<TrialOutcome> {
    let samples = sample_ancestral(spec, n, seed)?;
    score_samples(&samples, truth, ranks, plan, algorithm)
}

/// Settings of one continuous Ginzburg–Landau trial.
#[derive(Clone, Debug)]
pub struct ContinuousTrial<'a> {
    pub spec: &'a GinzburgLandauSpec,
    pub basis: &'a BasisSet,
    pub reference: &'a L2Reference,
    pub n: usize,
    pub ranks: &'a RankSpec,
    pub sigma: f64,
    pub mcmc: McmcOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOutcome {
    pub errors: L2Errors,
    pub acceptance_rate: f64,
    pub wall_ms: f64,
}

impl ContinuousTrial<'_> {
    pub fn run(&self, seed: u64) -> Result<ContinuousOutcome> {
        let (samples, meta) = sample_mh_continuous(self.spec, self.n, self.sigma, self.mcmc, seed)?;
        let t = Instant::now();
        let fit = tt_rs_continuous_markov(&samples, self.basis, self.ranks)?;
        let wall_ms = t.elapsed().as_secs_f64() * 1e3;
        Ok(ContinuousOutcome {
            errors: self.reference.errors(&fit.tt)?,
            acceptance_rate: meta.acceptance_rate.unwrap_or(f64::NAN),
            wall_ms,
        })
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (denominator `n - 1`); zero for a single value.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    LineFit {
        slope,
        intercept,
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    }
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).slope
}
