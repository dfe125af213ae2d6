//! Ground-truth models named by the configuration.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use ttrs_core::continuous::{BasisSet, L2Reference};
use ttrs_core::markov::Kernels;
use ttrs_core::sketch::SketchPlan;
use ttrs_core::{
    gl_discretize, ising_spec_to_markov, markov_to_tt, ChainFactors, DenseTensor, GinzburgLandauSpec, IsingSpec,
    MarkovSpec, RankSpec, TensorTrain,
};

use crate::config::{ExperimentConfig, Model, OneOrMany, Sampler};
use crate::error::CliError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorJson {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorJson {
    fn build(self) -> ttrs_core::Result<DenseTensor> {
        DenseTensor::new(self.shape, self.data)
    }
}

/// On-disk chain description: either one homogeneous `kernel` or `kernels`
/// for variables `order..d`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkovJson {
    order: usize,
    extents: Vec<usize>,
    initial: TensorJson,
    kernel: Option<TensorJson>,
    kernels: Option<Vec<TensorJson>>,
}

pub fn load_markov_file(path: &Path) -> Result<MarkovSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("markov_file: cannot read {}: {e}", path.display())))?;
    let raw: MarkovJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("markov_file {}: {e}", path.display())))?;
    let as_config = |e: ttrs_core::TtError| CliError::Config(format!("markov_file {}: {e}", path.display()));
    let kernels = match (raw.kernel, raw.kernels) {
        (Some(k), None) => Kernels::Homogeneous(k.build().map_err(as_config)?),
        (None, Some(ks)) => Kernels::PerSite(
            ks.into_iter()
                .map(TensorJson::build)
                .collect::<ttrs_core::Result<_>>()
                .map_err(as_config)?,
        ),
        _ => {
            return Err(CliError::Config(format!(
                "markov_file {}: give exactly one of kernel and kernels",
                path.display()
            )))
        }
    };
    MarkovSpec::new(raw.order, raw.extents, raw.initial.build().map_err(as_config)?, kernels).map_err(as_config)
}

/// Discrete ground truth for one chain length.
pub struct DiscreteModel {
    pub spec: MarkovSpec,
    pub truth: TensorTrain,
    pub factors: Option<ChainFactors>,
}

impl DiscreteModel {
    pub fn alphabet(&self) -> usize {
        self.spec.extents().iter().copied().max().unwrap_or(0)
    }
}

pub fn gl_spec(cfg: &ExperimentConfig, d: usize) -> GinzburgLandauSpec {
    GinzburgLandauSpec {
        d,
        beta: cfg.beta(),
        lambda: cfg.lambda,
        h: cfg.h,
        a: cfg.interval.0,
        b: cfg.interval.1,
    }
}

pub fn discrete_model(cfg: &ExperimentConfig, d: usize) -> anyhow::Result<DiscreteModel> {
    let gibbs = cfg.sampler() == Sampler::Gibbs;
    let (spec, factors) = match cfg.model() {
        Model::GlDiscrete => {
            let gl = gl_spec(cfg, d);
            let factors = if gibbs { Some(gl.chain_factors(cfg.n)?) } else { None };
            (gl_discretize(&gl, cfg.n)?, factors)
        }
        Model::Ising => {
            let mut ising = IsingSpec::spins(d, cfg.beta());
            if let Some(a) = &cfg.alphabet {
                ising.alphabet = a.clone();
            }
            let factors = if gibbs { Some(ising.chain_factors()?) } else { None };
            (ising_spec_to_markov(&ising)?, factors)
        }
        Model::MarkovFile => {
            let path = cfg.markov_file.as_ref().expect("validated");
            (load_markov_file(path).map_err(|e| anyhow::anyhow!("{e}"))?, None)
        }
        Model::GlContinuous => unreachable!("continuous model has no discrete truth"),
    };
    let truth = markov_to_tt(&spec).context("building the ground-truth train")?;
    Ok(DiscreteModel { spec, truth, factors })
}

/// Chain lengths of the grid; a markov file fixes its own.
pub fn dims(cfg: &ExperimentConfig) -> Result<Vec<usize>, CliError> {
    if cfg.model() != Model::MarkovFile {
        return Ok(cfg.d.clone());
    }
    let spec = load_markov_file(cfg.markov_file.as_ref().expect("validated"))?;
    let d = spec.dims();
    if cfg.d.iter().any(|&x| x != d) {
        return Err(CliError::Config(format!("d: markov file has d={d}, config asks for {:?}", cfg.d)));
    }
    Ok(vec![d])
}

/// Discrete truths keyed by chain length.
pub fn discrete_models(cfg: &ExperimentConfig, dims: &[usize]) -> anyhow::Result<BTreeMap<usize, DiscreteModel>> {
    let mut out = BTreeMap::new();
    for &d in dims {
        if !out.contains_key(&d) {
            out.insert(d, discrete_model(cfg, d)?);
        }
    }
    Ok(out)
}

/// Continuous references keyed by `(d, M)`.
pub fn continuous_references(
    cfg: &ExperimentConfig,
    dims: &[usize],
) -> anyhow::Result<BTreeMap<(usize, usize), L2Reference>> {
    let mut out = BTreeMap::new();
    for &d in dims {
        for &m in &cfg.basis {
            if out.contains_key(&(d, m)) {
                continue;
            }
            let basis = basis(cfg, m)?;
            out.insert((d, m), L2Reference::new(&gl_spec(cfg, d), &basis, cfg.quadrature)?);
        }
    }
    Ok(out)
}

pub fn basis(cfg: &ExperimentConfig, m: usize) -> ttrs_core::Result<BasisSet> {
    BasisSet::fourier(m, cfg.interval.0, cfg.interval.1)
}

/// Requested ranks for chain length `d`, before clamping.
pub fn requested_ranks(cfg: &ExperimentConfig, d: usize) -> Vec<usize> {
    let mut r = match &cfg.ranks {
        OneOrMany::One(r) => vec![*r; d.saturating_sub(1)],
        OneOrMany::Many(v) => v.clone(),
    };
    if let Some(e) = cfg.edge_rank {
        if let Some(first) = r.first_mut() {
            *first = e;
        }
        if let Some(last) = r.last_mut() {
            *last = e;
        }
    }
    r
}

/// Ranks for a discrete fit, capped by the sketch widths.
pub fn discrete_ranks(cfg: &ExperimentConfig, d: usize, plan: &SketchPlan) -> RankSpec {
    RankSpec::Explicit(ttrs_core::experiments::clamp_ranks(&requested_ranks(cfg, d), plan))
}

/// Ranks for a continuous fit, capped by the basis size.
pub fn continuous_ranks(cfg: &ExperimentConfig, d: usize, m: usize) -> RankSpec {
    RankSpec::Explicit(requested_ranks(cfg, d).into_iter().map(|r| r.min(m)).collect())
}
