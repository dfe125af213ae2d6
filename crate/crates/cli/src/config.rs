use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ttrs_core::experiments::Algorithm;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    GlDiscrete,
    GlContinuous,
    Ising,
    MarkovFile,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Self::GlDiscrete => "gl-discrete",
            Self::GlContinuous => "gl-continuous",
            Self::Ising => "ising",
            Self::MarkovFile => "markov-file",
        }
    }

    pub fn is_continuous(self) -> bool {
        self == Self::GlContinuous
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Ancestral,
    Gibbs,
    Mh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Binary,
    Csv,
}

/// A single number or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

/// Experiment grid and model parameters, read from JSON and then overridden
/// from the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<Model>,
    /// Chain lengths.
    #[serde(default)]
    pub d: Vec<usize>,
    /// Grid points (Ginzburg–Landau discrete); ignored elsewhere.
    #[serde(default = "default_grid")]
    pub n: usize,
    /// Sample sizes.
    #[serde(default, rename = "N")]
    pub samples: Vec<usize>,
    /// Basis sizes of the continuous model.
    #[serde(default = "default_basis", rename = "M")]
    pub basis: Vec<usize>,
    pub beta: Option<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "default_interval")]
    pub interval: (f64, f64),
    /// Ising alphabet; `{-1, 1}` when absent.
    pub alphabet: Option<Vec<f64>>,
    /// Chain description for `markov-file`.
    pub markov_file: Option<PathBuf>,
    /// Sketch orders; several orders are fitted on the same samples.
    #[serde(default = "default_order")]
    pub order: OneOrMany,
    /// Uniform rank or explicit `r_1..r_{d-1}`.
    #[serde(default = "default_ranks")]
    pub ranks: OneOrMany,
    /// Rank of the two outer bonds, when different from `ranks`.
    pub edge_rank: Option<usize>,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub sampler: Option<Sampler>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
    pub jobs: Option<usize>,
}

fn default_grid() -> usize {
    9
}
fn default_basis() -> Vec<usize> {
    vec![15]
}
fn one() -> f64 {
    1.0
}
fn default_interval() -> (f64, f64) {
    (-4.0, 4.0)
}
fn default_order() -> OneOrMany {
    OneOrMany::One(1)
}
fn default_ranks() -> OneOrMany {
    OneOrMany::One(3)
}
fn default_sigma() -> f64 {
    0.5
}
fn default_quadrature() -> usize {
    ttrs_core::continuous::DEFAULT_QUADRATURE
}
fn default_trials() -> usize {
    20
}
fn default_output() -> PathBuf {
    PathBuf::from("ttrs-out")
}
fn default_format() -> Format {
    Format::Binary
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Command-line values that replace config fields when given.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Chain lengths, comma separated.
    #[arg(short = 'd', long = "dims", value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    /// Grid points of the discretized model.
    #[arg(short = 'n', long = "grid")]
    pub n: Option<usize>,
    /// Sample sizes, comma separated.
    #[arg(short = 'N', long = "samples", value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    /// Basis sizes of the continuous model, comma separated.
    #[arg(short = 'M', long = "basis", value_delimiter = ',')]
    pub basis: Option<Vec<usize>>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub markov_file: Option<PathBuf>,
    /// Sketch orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// Uniform rank, or `r_1..r_{d-1}` comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    #[arg(long)]
    pub edge_rank: Option<usize>,
    /// `tt-rs` or `tt-s`.
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long, value_enum)]
    pub sampler: Option<Sampler>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed base; trial `t` of setting `s` uses `seed + s*1000003 + t*10007`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; defaults to TTRS_JOBS, then to available parallelism.
    #[arg(long, env = "TTRS_JOBS")]
    pub jobs: Option<usize>,
}

fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => read_config(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(d, n, samples, basis, output, format, algorithm, sigma, trials, seed);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    c.$field = self.$field.clone();
                }
            )*};
        }
        set_opt!(model, beta, markov_file, edge_rank, sampler, burn_in, thin, jobs);
        if let Some(v) = &self.order {
            c.order = OneOrMany::Many(v.clone());
        }
        if let Some(v) = &self.ranks {
            c.ranks = if v.len() == 1 { OneOrMany::One(v[0]) } else { OneOrMany::Many(v.clone()) };
        }
        c.validate()?;
        Ok(c)
    }
}

impl ExperimentConfig {
    pub fn model(&self) -> Model {
        self.model.expect("validated")
    }

    pub fn orders(&self) -> Vec<usize> {
        self.order.to_vec()
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler.unwrap_or(if self.model().is_continuous() { Sampler::Mh } else { Sampler::Ancestral })
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(if self.model() == Model::Ising { 0.4 } else { 1.0 })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let Some(model) = self.model else {
            return bad("model: required (gl-discrete, gl-continuous, ising or markov-file)".into());
        };
        if self.trials == 0 {
            return bad("trials: must be at least 1".into());
        }
        if self.samples.is_empty() {
            return bad("N: sample-size list must not be empty".into());
        }
        if self.samples.contains(&0) {
            return bad("N: sample sizes must be positive".into());
        }
        if model == Model::MarkovFile {
            if self.markov_file.is_none() {
                return bad("markov_file: required for model markov-file".into());
            }
        } else if self.d.is_empty() {
            return bad("d: dimension list must not be empty".into());
        }
        if self.d.contains(&0) || (model.is_continuous() && self.d.iter().any(|&d| d < 2)) {
            return bad(format!("d: invalid dimension in {:?}", self.d));
        }
        if model.is_continuous() {
            if self.basis.is_empty() || self.basis.contains(&0) {
                return bad("M: basis sizes must be a non-empty list of positive sizes".into());
            }
            if self.sampler() != Sampler::Mh {
                return bad("sampler: the continuous model supports only mh".into());
            }
            if self.algorithm != Algorithm::TtRs {
                return bad("algorithm: the continuous model is fitted with tt-rs only".into());
            }
            if !(self.sigma > 0.0) {
                return bad("sigma: must be positive".into());
            }
        } else if self.sampler() == Sampler::Mh {
            return bad("sampler: mh applies only to gl-continuous".into());
        }
        if model == Model::MarkovFile && self.sampler() == Sampler::Gibbs {
            return bad("sampler: gibbs needs chain factors, which markov-file does not provide".into());
        }
        let orders = self.orders();
        if orders.is_empty() || orders.contains(&0) {
            return bad("order: sketch orders must be positive".into());
        }
        let ranks = self.ranks.to_vec();
        if ranks.is_empty() || ranks.contains(&0) {
            return bad("ranks: must be positive".into());
        }
        if let OneOrMany::Many(r) = &self.ranks {
            if self.d.len() > 1 || self.d.first().is_some_and(|&d| r.len() + 1 != d) {
                return bad(format!("ranks: {} explicit ranks need exactly one d equal to {}", r.len(), r.len() + 1));
            }
        }
        if model == Model::GlDiscrete && self.n < 2 {
            return bad("n: grid needs at least 2 points".into());
        }
        if self.thin == Some(0) {
            return bad("thin: must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs: must be at least 1".into());
        }
        if !(self.interval.0 < self.interval.1) {
            return bad(format!("interval: [{}, {}] is empty", self.interval.0, self.interval.1));
        }
        if !(self.beta() > 0.0 && self.lambda > 0.0 && self.h > 0.0) {
            return bad("beta, lambda, h: must be positive".into());
        }
        Ok(())
    }
}
