//! The four subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ttrs_core::continuous::{tt_rs_continuous_markov, L2Reference};
use ttrs_core::experiments::trial_seed;
use ttrs_core::io::write_atomic;
use ttrs_core::samplers::SamplerMeta;
use ttrs_core::sketch::{markov_sketch_plan, SketchInput};
use ttrs_core::{
    load_samples, rel_l2_error, sample_ancestral, sample_gibbs, sample_mh_continuous, save_samples, ContinuousTT,
    FitReport, McmcOptions, SampleFormat, SampleSchema, SampleSet, TensorTrain,
};

use crate::config::{ExperimentConfig, Format, Model, Sampler};
use crate::error::CliError;
use crate::models::{self, DiscreteModel};

/// One `(d, N)` point of the grid; `index` enters the trial seeds.
#[derive(Clone, Copy, Debug)]
pub struct Setting {
    pub index: u64,
    pub d: usize,
    pub n_samples: usize,
}

pub fn settings(dims: &[usize], cfg: &ExperimentConfig) -> Vec<Setting> {
    let mut out = Vec::new();
    for &d in dims {
        for &n_samples in &cfg.samples {
            out.push(Setting {
                index: out.len() as u64,
                d,
                n_samples,
            });
        }
    }
    out
}

/// What is fitted to one sample set: a sketch order or a basis size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Order(usize),
    Basis(usize),
}

fn variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    if cfg.model().is_continuous() {
        cfg.basis.iter().map(|&m| Variant::Basis(m)).collect()
    } else {
        cfg.orders().into_iter().map(Variant::Order).collect()
    }
}

fn setting_label(cfg: &ExperimentConfig, s: &Setting) -> String {
    format!("{}-d{}-N{}", cfg.model().name(), s.d, s.n_samples)
}

fn variant_label(cfg: &ExperimentConfig, v: Variant) -> String {
    match v {
        Variant::Order(m) => format!("{}-order{m}", cfg.algorithm.name()),
        Variant::Basis(m) => format!("{}-M{m}", cfg.algorithm.name()),
    }
}

fn sketch_name(cfg: &ExperimentConfig, v: Variant) -> String {
    match v {
        Variant::Order(m) => format!("{}:order{m}", cfg.algorithm.name()),
        Variant::Basis(_) => format!("{}:coefficient", cfg.algorithm.name()),
    }
}

fn trial_stem(trial: usize) -> String {
    format!("trial-{trial:03}")
}

fn samples_path(cfg: &ExperimentConfig, s: &Setting, trial: usize) -> PathBuf {
    let ext = match cfg.format {
        Format::Binary => "bin",
        Format::Csv => "csv",
    };
    cfg.output
        .join("samples")
        .join(setting_label(cfg, s))
        .join(format!("{}.{ext}", trial_stem(trial)))
}

/// Existing sample file of a cell in either format, preferring the configured one.
fn find_samples(cfg: &ExperimentConfig, s: &Setting, trial: usize) -> Option<PathBuf> {
    let preferred = samples_path(cfg, s, trial);
    let other = preferred.with_extension(if cfg.format == Format::Binary { "csv" } else { "bin" });
    [preferred, other].into_iter().find(|p| p.exists())
}

fn fit_path(cfg: &ExperimentConfig, s: &Setting, v: Variant, trial: usize) -> PathBuf {
    cfg.output
        .join("fits")
        .join(setting_label(cfg, s))
        .join(variant_label(cfg, v))
        .join(format!("{}.tt", trial_stem(trial)))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn pool(cfg: &ExperimentConfig) -> anyhow::Result<rayon::ThreadPool> {
    let jobs = cfg
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Run metadata next to the outputs; deliberately free of timestamps.
fn write_run_metadata(cfg: &ExperimentConfig, command: &str) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Run<'a> {
        command: &'a str,
        version: &'a str,
        seed_rule: &'a str,
        config: &'a ExperimentConfig,
    }
    write_json(
        &cfg.output.join(format!("{command}.json")),
        &Run {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed_rule: "seed + setting_index * 1000003 + trial * 10007",
            config: cfg,
        },
    )
}

fn mcmc(cfg: &ExperimentConfig) -> McmcOptions {
    let d = McmcOptions::default();
    McmcOptions {
        burn_in: cfg.burn_in.unwrap_or(d.burn_in),
        thin: cfg.thin.unwrap_or(d.thin),
    }
}

fn ancestral_meta(seed: u64) -> SamplerMeta {
    SamplerMeta {
        sampler: "ancestral".into(),
        seed,
        burn_in: None,
        thin: None,
        proposal_sigma: None,
        acceptance_rate: None,
        fallback_sites: 0,
    }
}

/// Ground truths for the whole grid.
enum Truths {
    Discrete(BTreeMap<usize, DiscreteModel>),
    Continuous(BTreeMap<(usize, usize), L2Reference>),
}

impl Truths {
    fn build(cfg: &ExperimentConfig, dims: &[usize]) -> anyhow::Result<Self> {
        Ok(if cfg.model().is_continuous() {
            Self::Continuous(models::continuous_references(cfg, dims)?)
        } else {
            Self::Discrete(models::discrete_models(cfg, dims)?)
        })
    }

    fn discrete(&self, d: usize) -> &DiscreteModel {
        match self {
            Self::Discrete(m) => &m[&d],
            Self::Continuous(_) => unreachable!("continuous grid"),
        }
    }
}

fn draw(cfg: &ExperimentConfig, truths: &Truths, s: &Setting, seed: u64) -> anyhow::Result<(SampleSet, SamplerMeta)> {
    Ok(match cfg.sampler() {
        Sampler::Ancestral => {
            let m = truths.discrete(s.d);
            (SampleSet::Discrete(sample_ancestral(&m.spec, s.n_samples, seed)?), ancestral_meta(seed))
        }
        Sampler::Gibbs => {
            let factors = truths.discrete(s.d).factors.as_ref().ok_or_else(|| anyhow!("no chain factors"))?;
            let (x, meta) = sample_gibbs(factors, s.n_samples, mcmc(cfg), seed)?;
            (SampleSet::Discrete(x), meta)
        }
        Sampler::Mh => {
            let spec = models::gl_spec(cfg, s.d);
            let (x, meta) = sample_mh_continuous(&spec, s.n_samples, cfg.sigma, mcmc(cfg), seed)?;
            (SampleSet::Continuous(x), meta)
        }
    })
}

fn schema(cfg: &ExperimentConfig, truths: &Truths, d: usize) -> SampleSchema {
    match truths {
        Truths::Discrete(m) => SampleSchema::Discrete {
            extents: m[&d].spec.extents().to_vec(),
        },
        Truths::Continuous(_) => SampleSchema::Continuous {
            dims: d,
            interval: cfg.interval,
        },
    }
}

enum Fitted {
    Discrete(TensorTrain),
    Continuous(ContinuousTT),
}

struct FitOutput {
    fitted: Fitted,
    report: FitReport,
    wall_ms: f64,
}

fn fit_one(cfg: &ExperimentConfig, samples: &SampleSet, v: Variant) -> anyhow::Result<FitOutput> {
    let t = Instant::now();
    let (fitted, report) = match (samples, v) {
        (SampleSet::Discrete(x), Variant::Order(order)) => {
            let plan = markov_sketch_plan(x.extents(), order)?;
            let ranks = models::discrete_ranks(cfg, x.dims(), &plan);
            let fit = cfg.algorithm.fit(SketchInput::Samples(x), &ranks, &plan)?;
            (Fitted::Discrete(fit.tt), fit.report)
        }
        (SampleSet::Continuous(x), Variant::Basis(m)) => {
            let basis = models::basis(cfg, m)?;
            let fit = tt_rs_continuous_markov(x, &basis, &models::continuous_ranks(cfg, x.dims(), m))?;
            (Fitted::Continuous(fit.tt), fit.report)
        }
        _ => return Err(anyhow!("sample kind does not match the model")),
    };
    Ok(FitOutput {
        fitted,
        report,
        wall_ms: t.elapsed().as_secs_f64() * 1e3,
    })
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: String,
    pub sketch: String,
    pub d: usize,
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[serde(rename = "N")]
    pub samples: usize,
    pub trial: usize,
    pub err: Option<f64>,
    pub err_a: Option<f64>,
    pub err_e: Option<f64>,
    pub err_t: Option<f64>,
    pub wall_ms: f64,
}

fn score(
    cfg: &ExperimentConfig,
    truths: &Truths,
    s: &Setting,
    v: Variant,
    trial: usize,
    fitted: &Fitted,
    wall_ms: f64,
) -> anyhow::Result<Row> {
    let mut row = Row {
        model: cfg.model().name().into(),
        sketch: sketch_name(cfg, v),
        d: s.d,
        n: None,
        m: None,
        samples: s.n_samples,
        trial,
        err: None,
        err_a: None,
        err_e: None,
        err_t: None,
        wall_ms: (wall_ms * 1e3).round() / 1e3,
    };
    match (truths, fitted, v) {
        (Truths::Discrete(m), Fitted::Discrete(tt), _) => {
            let model = &m[&s.d];
            row.n = Some(model.alphabet());
            row.err = Some(rel_l2_error(&model.truth, tt)?);
        }
        (Truths::Continuous(refs), Fitted::Continuous(q), Variant::Basis(m)) => {
            let e = refs[&(s.d, m)].errors(q)?;
            row.m = Some(m);
            (row.err_a, row.err_e, row.err_t) = (Some(e.err_a), Some(e.err_e), Some(e.err_t));
        }
        _ => return Err(anyhow!("fitted train does not match the model")),
    }
    Ok(row)
}

fn write_results(cfg: &ExperimentConfig, rows: &[Row]) -> anyhow::Result<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    let path = cfg.output.join("results.csv");
    write_atomic(&path, &bytes)?;
    Ok(path)
}

fn finish(failures: Vec<String>) -> Result<(), CliError> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(failures))
    }
}

fn cells(grid: &[Setting], trials: usize) -> Vec<(Setting, usize)> {
    grid.iter().flat_map(|s| (0..trials).map(move |t| (*s, t))).collect()
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    model: &'a str,
    d: usize,
    n_samples: usize,
    trial: usize,
    #[serde(flatten)]
    sampler: &'a SamplerMeta,
}

pub fn sample(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dims = models::dims(cfg)?;
    let truths = Truths::build(cfg, &dims)?;
    let grid = settings(&dims, cfg);
    let format = match cfg.format {
        Format::Binary => SampleFormat::Binary,
        Format::Csv => SampleFormat::Csv,
    };
    write_run_metadata(cfg, "sample")?;
    let results: Vec<anyhow::Result<()>> = pool(cfg)?.install(|| {
        cells(&grid, cfg.trials)
            .par_iter()
            .map(|(s, t)| {
                let seed = trial_seed(cfg.seed, s.index, *t as u64);
                let (x, meta) = draw(cfg, &truths, s, seed)?;
                let path = samples_path(cfg, s, *t);
                save_samples(&path, &x, format)?;
                let record = SampleRecord {
                    model: cfg.model().name(),
                    d: s.d,
                    n_samples: s.n_samples,
                    trial: *t,
                    sampler: &meta,
                };
                write_json(&sidecar(&path, "meta.json"), &record)
                    .with_context(|| format!("{}", path.display()))
            })
            .collect()
    });
    let failures = results.into_iter().filter_map(|r| r.err().map(|e| format!("{e:#}"))).collect();
    finish(failures)
}

#[derive(Serialize, Deserialize)]
struct FitRecord {
    wall_ms: f64,
    requested_ranks: Vec<usize>,
    report: FitReport,
}

pub fn fit(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dims = models::dims(cfg)?;
    let grid = settings(&dims, cfg);
    let jobs = cells(&grid, cfg.trials);
    let present = jobs.iter().filter(|(s, t)| find_samples(cfg, s, *t).is_some()).count();
    if present == 0 {
        return Err(CliError::MissingInput(format!(
            "no sample files under {}",
            cfg.output.join("samples").display()
        )));
    }
    let truths = Truths::build(cfg, &dims)?;
    write_run_metadata(cfg, "fit")?;
    let results: Vec<anyhow::Result<()>> = pool(cfg)?.install(|| {
        jobs.par_iter()
            .map(|(s, t)| {
                let path = find_samples(cfg, s, *t)
                    .ok_or_else(|| anyhow!("no samples for {} trial {t}", setting_label(cfg, s)))?;
                let x = load_samples(&path, &schema(cfg, &truths, s.d))
                    .with_context(|| format!("reading {}", path.display()))?;
                for v in variants(cfg) {
                    let out = fit_one(cfg, &x, v).with_context(|| format!("fitting {}", path.display()))?;
                    let target = fit_path(cfg, s, v, *t);
                    match &out.fitted {
                        Fitted::Discrete(tt) => tt.save(&target)?,
                        Fitted::Continuous(q) => q.save(&target)?,
                    }
                    let record = FitRecord {
                        wall_ms: out.wall_ms,
                        requested_ranks: models::requested_ranks(cfg, s.d),
                        report: out.report,
                    };
                    write_json(&sidecar(&target, "report.json"), &record)?;
                }
                Ok(())
            })
            .collect()
    });
    let failures = results.into_iter().filter_map(|r| r.err().map(|e| format!("{e:#}"))).collect();
    finish(failures)
}

pub fn eval(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dims = models::dims(cfg)?;
    let grid = settings(&dims, cfg);
    let mut jobs = Vec::new();
    for (s, t) in cells(&grid, cfg.trials) {
        for v in variants(cfg) {
            jobs.push((s, v, t));
        }
    }
    if !jobs.iter().any(|(s, v, t)| fit_path(cfg, s, *v, *t).exists()) {
        return Err(CliError::MissingInput(format!(
            "no fitted trains under {}",
            cfg.output.join("fits").display()
        )));
    }
    let truths = Truths::build(cfg, &dims)?;
    write_run_metadata(cfg, "eval")?;
    let results: Vec<anyhow::Result<Row>> = pool(cfg)?.install(|| {
        jobs.par_iter()
            .map(|(s, v, t)| {
                let path = fit_path(cfg, s, *v, *t);
                let fitted = if cfg.model().is_continuous() {
                    Fitted::Continuous(ContinuousTT::load(&path)?)
                } else {
                    Fitted::Discrete(TensorTrain::load(&path)?)
                };
                let record: FitRecord = serde_json::from_slice(&std::fs::read(sidecar(&path, "report.json"))?)?;
                score(cfg, &truths, s, *v, *t, &fitted, record.wall_ms).with_context(|| format!("{}", path.display()))
            })
            .collect()
    });
    let (rows, failures) = split(results);
    write_results(cfg, &rows)?;
    finish(failures)
}

fn split(results: Vec<anyhow::Result<Row>>) -> (Vec<Row>, Vec<String>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    (rows, failures)
}

/// Everything that determines the rows of one sweep cell.
#[derive(Serialize)]
struct CellKey<'a> {
    model: &'a str,
    d: usize,
    n_samples: usize,
    grid: usize,
    beta: f64,
    lambda: f64,
    h: f64,
    interval: (f64, f64),
    alphabet: &'a Option<Vec<f64>>,
    markov_file_sha256: Option<String>,
    orders: Vec<usize>,
    basis: &'a [usize],
    ranks: Vec<usize>,
    algorithm: &'a str,
    sampler: Sampler,
    mcmc: McmcOptions,
    sigma: f64,
    quadrature: usize,
    trial: usize,
    seed: u64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cell_path(cfg: &ExperimentConfig, s: &Setting, trial: usize, file_sha: &Option<String>) -> anyhow::Result<PathBuf> {
    let key = CellKey {
        model: cfg.model().name(),
        d: s.d,
        n_samples: s.n_samples,
        grid: cfg.n,
        beta: cfg.beta(),
        lambda: cfg.lambda,
        h: cfg.h,
        interval: cfg.interval,
        alphabet: &cfg.alphabet,
        markov_file_sha256: file_sha.clone(),
        orders: cfg.orders(),
        basis: &cfg.basis,
        ranks: models::requested_ranks(cfg, s.d),
        algorithm: cfg.algorithm.name(),
        sampler: cfg.sampler(),
        mcmc: mcmc(cfg),
        sigma: cfg.sigma,
        quadrature: cfg.quadrature,
        trial,
        seed: trial_seed(cfg.seed, s.index, trial as u64),
    };
    let digest = Sha256::digest(serde_json::to_vec(&key)?);
    Ok(cfg.output.join("cells").join(format!("{}.json", hex(&digest))))
}

fn run_cell(cfg: &ExperimentConfig, truths: &Truths, s: &Setting, trial: usize) -> anyhow::Result<Vec<Row>> {
    let seed = trial_seed(cfg.seed, s.index, trial as u64);
    let (x, _) = draw(cfg, truths, s, seed)?;
    variants(cfg)
        .into_iter()
        .map(|v| {
            let out = fit_one(cfg, &x, v)?;
            score(cfg, truths, s, v, trial, &out.fitted, out.wall_ms)
        })
        .collect()
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dims = models::dims(cfg)?;
    let truths = Truths::build(cfg, &dims)?;
    let grid = settings(&dims, cfg);
    let file_sha = match (&cfg.markov_file, cfg.model()) {
        (Some(p), Model::MarkovFile) => Some(hex(&Sha256::digest(std::fs::read(p)?))),
        _ => None,
    };
    write_run_metadata(cfg, "sweep")?;
    let jobs = cells(&grid, cfg.trials);
    let results: Vec<anyhow::Result<Vec<Row>>> = pool(cfg)?.install(|| {
        jobs.par_iter()
            .map(|(s, t)| {
                let path = cell_path(cfg, s, *t, &file_sha)?;
                if let Ok(bytes) = std::fs::read(&path) {
                    if let Ok(rows) = serde_json::from_slice::<Vec<Row>>(&bytes) {
                        return Ok(rows);
                    }
                }
                let rows = run_cell(cfg, &truths, s, *t)
                    .with_context(|| format!("{} trial {t}", setting_label(cfg, s)))?;
                write_json(&path, &rows)?;
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    write_results(cfg, &rows)?;
    finish(failures)
}
