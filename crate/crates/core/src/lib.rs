//! Tensor-train density estimation from samples.
//!
//! The estimator sketches the empirical density from both sides, trims each
//! sketched moment to its leading left singular vectors and solves one small
//! least-squares problem per core. Markov and higher-order Markov densities
//! have exact window sketches; Gaussian plans cover the generic case.
//!
//! Indices are 0-based throughout the API. Sample files store 1-based codes.

pub mod continuous;
pub mod empirical;
pub mod experiments;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod samplers;
pub mod sketch;
pub mod tensor;
pub mod tt;
pub mod validation;

pub use continuous::{
    estimate_coeff_marginals, fit_coeff_tensors, l2_error_decomposition, markov_to_coeff_tt,
    tt_rs_continuous_markov, BasisSet, ChainDensity, CoeffTensors, ContinuousFit, ContinuousTT,
    L2Errors, L2Reference,
};
pub use empirical::{
    load_samples, marginal, save_samples, ContinuousSamples, DiscreteSamples, MarginalTensor,
    SampleFormat, SampleSchema, SampleSet,
};
pub use engine::{tt_rs, tt_s, Fit, FitReport, RankSpec};
pub use error::{Result, TtError};
pub use markov::{
    gl_discretize, ising_spec_to_markov, markov_to_tt, ChainFactors, GinzburgLandauSpec, IsingSpec,
    MarkovSpec,
};
pub use samplers::{sample_ancestral, sample_from_tt, sample_gibbs, sample_mh_continuous, McmcOptions};
pub use sketch::{
    gaussian_sketch_plan, markov_sketch_plan, run_sketching, window_sketch_plan, SketchInput,
    SketchPlan,
};
pub use tensor::DenseTensor;
pub use tt::{rel_l2_error, triple_norm, TensorTrain};
