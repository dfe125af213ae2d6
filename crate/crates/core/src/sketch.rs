//! Sketch plans and the sketching stage.
//!
//! Indices are 0-based. For a `d`-variable problem the left sketch of prefix
//! length `k` (variables `0..k`) has `m_k` rows with `m_0 = 1`, and the right
//! sketch of the suffix starting at variable `j` has `ell_j` columns with
//! `ell_d = 1`. The sketched moment for core `k` has shape
//! `(m_k, n_k, ell_{k+1})`, so the first and last ones carry a unit mode.

use base64::Engine as _;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{marginal, DiscreteSamples};
use crate::error::{Result, TtError};
use crate::tensor::{decode, encode, DenseTensor, MultiIndex};
use crate::tt::TensorTrain;

const SAMPLE_CHUNK: usize = 4096;

/// Left sketch family `S_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum LeftSketch {
    /// `S_k` selects the joint state of the last `width` variables of the prefix.
    Window { width: usize },
    /// `S_{k+1} = s_k . S_k` with `blocks[k]` of shape `(m_{k+1}, n_k, m_k)`, `k = 0..d-1`.
    Recursive { blocks: Vec<DenseTensor> },
    /// One independent block chain per prefix length; `chains[k-1]` sketches
    /// variables `0..k` and ends with `m_k` rows. Not usable by the recursive solver.
    Independent { chains: Vec<Vec<DenseTensor>> },
}

/// Right sketch family `T_j`.
#[derive(Clone, Debug, PartialEq)]
pub enum RightSketch {
    /// `T_j` selects the joint state of variables `j..min(j + order, d)`.
    Window { order: usize },
    /// `T_j = t_j . T_{j+1}` with `blocks[j-1]` of shape `(ell_j, n_j, ell_{j+1})`.
    Chain { blocks: Vec<DenseTensor> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchPlan {
    extents: Vec<usize>,
    left: LeftSketch,
    right: RightSketch,
}

/// What the sketching stage consumes.
#[derive(Clone, Copy, Debug)]
pub enum SketchInput<'a> {
    Samples(&'a DiscreteSamples),
    Dense(&'a DenseTensor),
    Train(&'a TensorTrain),
}

impl SketchInput<'_> {
    pub fn extents(&self) -> Vec<usize> {
        match self {
            Self::Samples(s) => s.extents().to_vec(),
            Self::Dense(t) => t.shape().to_vec(),
            Self::Train(t) => t.extents(),
        }
    }
}

/// Sketched moments of one input under one plan.
#[derive(Clone, Debug)]
pub struct Sketches {
    /// `phi[k]` of shape `(m_k, n_k, ell_{k+1})`.
    pub phi: Vec<DenseTensor>,
    /// `psi[k] = S_{k+1} . p . T_{k+1}` of shape `(m_{k+1}, ell_{k+1})`, `k = 0..d-1`.
    /// Only filled when requested.
    pub psi: Option<Vec<DenseTensor>>,
}

/// Window-identity plan for an order-`m` Markov model.
pub fn markov_sketch_plan(extents: &[usize], order: usize) -> Result<SketchPlan> {
    if order == 0 || order >= extents.len() {
        return Err(TtError::Argument(format!(
            "order {order} must satisfy 1 <= m < d = {}",
            extents.len()
        )));
    }
    window_sketch_plan(extents, order, order)
}

/// Window-identity plan with independent left width and right order.
pub fn window_sketch_plan(extents: &[usize], left_width: usize, right_order: usize) -> Result<SketchPlan> {
    SketchPlan::new(
        extents.to_vec(),
        LeftSketch::Window { width: left_width },
        RightSketch::Window { order: right_order },
    )
}

fn gaussian_block(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> DenseTensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    DenseTensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn check_sizes(extents: &[usize], left: &[usize], right: &[usize]) -> Result<usize> {
    let d = extents.len();
    if d < 2 {
        return Err(TtError::Argument("sketching needs d >= 2".into()));
    }
    if left.len() != d - 1 || right.len() != d - 1 {
        return Err(TtError::Shape(format!(
            "expected {} left and right sizes, got {} and {}",
            d - 1,
            left.len(),
            right.len()
        )));
    }
    if left.iter().chain(right).any(|&s| s == 0) {
        return Err(TtError::Argument("sketch sizes must be positive".into()));
    }
    Ok(d)
}

/// Dense recursive plan with i.i.d. standard normal blocks.
///
/// `left_sizes` are `m_1..m_{d-1}` and `right_sizes` are `ell_1..ell_{d-1}`.
/// The same seed always yields the same plan.
pub fn gaussian_sketch_plan(
    extents: &[usize],
    left_sizes: &[usize],
    right_sizes: &[usize],
    seed: u64,
) -> Result<SketchPlan> {
    let d = check_sizes(extents, left_sizes, right_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![1];
    m.extend_from_slice(left_sizes);
    let mut ell = right_sizes.to_vec();
    ell.push(1);
    let left = (0..d - 1)
        .map(|k| gaussian_block(&mut rng, [m[k + 1], extents[k], m[k]]))
        .collect();
    let right = (1..d)
        .map(|j| gaussian_block(&mut rng, [ell[j - 1], extents[j], ell[j]]))
        .collect();
    SketchPlan::new(
        extents.to_vec(),
        LeftSketch::Recursive { blocks: left },
        RightSketch::Chain { blocks: right },
    )
}

/// Dense plan whose left sketches are independent block chains, one per prefix.
pub fn gaussian_independent_plan(
    extents: &[usize],
    left_sizes: &[usize],
    right_sizes: &[usize],
    seed: u64,
) -> Result<SketchPlan> {
    let d = check_sizes(extents, left_sizes, right_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chains = (1..d)
        .map(|k| {
            let mk = left_sizes[k - 1];
            (0..k)
                .map(|i| {
                    let inner = if i == 0 { 1 } else { mk };
                    gaussian_block(&mut rng, [mk, extents[i], inner])
                })
                .collect()
        })
        .collect();
    let mut ell = right_sizes.to_vec();
    ell.push(1);
    let right = (1..d)
        .map(|j| gaussian_block(&mut rng, [ell[j - 1], extents[j], ell[j]]))
        .collect();
    SketchPlan::new(
        extents.to_vec(),
        LeftSketch::Independent { chains },
        RightSketch::Chain { blocks: right },
    )
}

impl SketchPlan {
    pub fn new(extents: Vec<usize>, left: LeftSketch, right: RightSketch) -> Result<Self> {
        let d = extents.len();
        if d < 2 {
            return Err(TtError::Argument("sketching needs d >= 2".into()));
        }
        if extents.iter().any(|&n| n == 0) {
            return Err(TtError::Argument("extents must be positive".into()));
        }
        let shape_err = |what: String| Err(TtError::Shape(what));
        match &left {
            LeftSketch::Window { width } if *width == 0 => {
                return Err(TtError::Argument("left window width must be positive".into()))
            }
            LeftSketch::Window { .. } => {}
            LeftSketch::Recursive { blocks } => {
                if blocks.len() != d - 1 {
                    return shape_err(format!("{} left blocks for d={d}", blocks.len()));
                }
                let mut prev = 1;
                for (k, b) in blocks.iter().enumerate() {
                    if b.ndim() != 3 || b.shape()[1] != extents[k] || b.shape()[2] != prev {
                        return shape_err(format!("left block {k} has shape {:?}", b.shape()));
                    }
                    prev = b.shape()[0];
                }
            }
            LeftSketch::Independent { chains } => {
                if chains.len() != d - 1 {
                    return shape_err(format!("{} left chains for d={d}", chains.len()));
                }
                for (c, chain) in chains.iter().enumerate() {
                    if chain.len() != c + 1 {
                        return shape_err(format!("left chain {c} has {} blocks", chain.len()));
                    }
                    let mut prev = 1;
                    for (i, b) in chain.iter().enumerate() {
                        if b.ndim() != 3 || b.shape()[1] != extents[i] || b.shape()[2] != prev {
                            return shape_err(format!(
                                "block {i} of left chain {c} has shape {:?}",
                                b.shape()
                            ));
                        }
                        prev = b.shape()[0];
                    }
                }
            }
        }
        match &right {
            RightSketch::Window { order } if *order == 0 => {
                return Err(TtError::Argument("right window order must be positive".into()))
            }
            RightSketch::Window { .. } => {}
            RightSketch::Chain { blocks } => {
                if blocks.len() != d - 1 {
                    return shape_err(format!("{} right blocks for d={d}", blocks.len()));
                }
                let mut next = 1;
                for j in (1..d).rev() {
                    let b = &blocks[j - 1];
                    if b.ndim() != 3 || b.shape()[1] != extents[j] || b.shape()[2] != next {
                        return shape_err(format!("right block {j} has shape {:?}", b.shape()));
                    }
                    next = b.shape()[0];
                }
            }
        }
        Ok(Self {
            extents,
            left,
            right,
        })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn left(&self) -> &LeftSketch {
        &self.left
    }

    pub fn right(&self) -> &RightSketch {
        &self.right
    }

    /// Whether `S_{k+1}` is obtained from `S_k` by a block, as the recursive solver needs.
    pub fn is_recursive(&self) -> bool {
        !matches!(self.left, LeftSketch::Independent { .. })
    }

    pub fn is_window(&self) -> bool {
        matches!(
            (&self.left, &self.right),
            (LeftSketch::Window { .. }, RightSketch::Window { .. })
        )
    }

    fn left_window(&self, k: usize) -> std::ops::Range<usize> {
        match self.left {
            LeftSketch::Window { width } => k.saturating_sub(width)..k,
            _ => unreachable!("only window sketches have windows"),
        }
    }

    fn right_window(&self, j: usize) -> std::ops::Range<usize> {
        match self.right {
            RightSketch::Window { order } => j..(j + order).min(self.dims()),
            _ => unreachable!("only window sketches have windows"),
        }
    }

    /// `m_k` for `k = 0..d`.
    pub fn left_size(&self, k: usize) -> usize {
        if k == 0 {
            return 1;
        }
        match &self.left {
            LeftSketch::Window { .. } => self.extents[self.left_window(k)].iter().product(),
            LeftSketch::Recursive { blocks } => blocks[k - 1].shape()[0],
            LeftSketch::Independent { chains } => chains[k - 1][k - 1].shape()[0],
        }
    }

    /// `ell_j` for `j = 1..=d`.
    pub fn right_size(&self, j: usize) -> usize {
        if j >= self.dims() {
            return 1;
        }
        match &self.right {
            RightSketch::Window { .. } => self.extents[self.right_window(j)].iter().product(),
            RightSketch::Chain { blocks } => blocks[j - 1].shape()[0],
        }
    }

    /// Left block `s_k` of shape `(m_{k+1}, n_k, m_k)`.
    pub fn left_block(&self, k: usize) -> Result<DenseTensor> {
        match &self.left {
            LeftSketch::Recursive { blocks } => Ok(blocks[k].clone()),
            LeftSketch::Window { .. } => Ok(self.window_left_block(k)),
            LeftSketch::Independent { .. } => Err(TtError::Argument(
                "independent left sketches have no recursive blocks".into(),
            )),
        }
    }

    /// All left blocks `s_0..s_{d-2}`.
    pub fn left_blocks(&self) -> Result<Vec<DenseTensor>> {
        (0..self.dims() - 1).map(|k| self.left_block(k)).collect()
    }

    fn window_left_block(&self, k: usize) -> DenseTensor {
        let from = self.left_window(k);
        let to = self.left_window(k + 1);
        let rf: Vec<usize> = self.extents[from.clone()].to_vec();
        let rt: Vec<usize> = self.extents[to.clone()].to_vec();
        let (mf, n, mt) = (self.left_size(k), self.extents[k], self.left_size(k + 1));
        let mut block = DenseTensor::zeros(&[mt, n, mf]);
        let keep = rt.len() - 1;
        let mut digits = vec![0; rf.len()];
        for beta in 0..mf {
            decode(beta, &rf, &mut digits);
            for x in 0..n {
                let tail = digits[digits.len() - keep..].iter().copied().chain([x]);
                let target = encode(tail, &rt);
                block.data_mut()[(target * n + x) * mf + beta] = 1.0;
            }
        }
        block
    }

    /// Right block `t_j` of shape `(ell_j, n_j, ell_{j+1})`, `j = 1..d`.
    pub fn right_block(&self, j: usize) -> DenseTensor {
        match &self.right {
            RightSketch::Chain { blocks } => blocks[j - 1].clone(),
            RightSketch::Window { .. } => {
                let here = self.right_window(j);
                let rh: Vec<usize> = self.extents[here.clone()].to_vec();
                let rn: Vec<usize> = if j + 1 < self.dims() {
                    self.extents[self.right_window(j + 1)].to_vec()
                } else {
                    Vec::new()
                };
                let (lh, n, ln) = (self.right_size(j), self.extents[j], self.right_size(j + 1));
                let mut block = DenseTensor::zeros(&[lh, n, ln]);
                let keep = rh.len() - 1;
                let mut digits = vec![0; rn.len()];
                for gn in 0..ln {
                    decode(gn, &rn, &mut digits);
                    for x in 0..n {
                        let head = std::iter::once(x).chain(digits[..keep].iter().copied());
                        let target = encode(head, &rh);
                        block.data_mut()[(target * n + x) * ln + gn] = 1.0;
                    }
                }
                block
            }
        }
    }

    /// Blocks whose contraction is the left sketch of prefix length `k >= 1`.
    fn left_chain(&self, k: usize) -> Result<Vec<DenseTensor>> {
        match &self.left {
            LeftSketch::Independent { chains } => Ok(chains[k - 1].clone()),
            _ => (0..k).map(|i| self.left_block(i)).collect(),
        }
    }

    /// Left sketch vectors `S_k(., x_{0..k})` for `k = 0..d-1`.
    fn left_vectors(&self, x: &[usize]) -> Vec<SketchVec> {
        let d = self.dims();
        match &self.left {
            LeftSketch::Window { .. } => (0..d)
                .map(|k| {
                    let w = self.left_window(k);
                    SketchVec::OneHot(encode(x[w.clone()].iter().copied(), &self.extents[w]))
                })
                .collect(),
            LeftSketch::Recursive { blocks } => {
                let mut out = Vec::with_capacity(d);
                let mut v = vec![1.0];
                for k in 0..d {
                    if k > 0 {
                        v = apply_block(&blocks[k - 1], x[k - 1], &v);
                    }
                    out.push(SketchVec::Dense(v.clone()));
                }
                out
            }
            LeftSketch::Independent { chains } => {
                let mut out = vec![SketchVec::OneHot(0)];
                for (k, chain) in chains.iter().enumerate() {
                    let mut v = vec![1.0];
                    for (i, b) in chain.iter().enumerate().take(k + 1) {
                        v = apply_block(b, x[i], &v);
                    }
                    out.push(SketchVec::Dense(v));
                }
                out
            }
        }
    }

    /// Right sketch vectors `T_j(x_{j..d}, .)` for `j = 0..=d`; entry 0 is unused.
    fn right_vectors(&self, x: &[usize]) -> Vec<SketchVec> {
        let d = self.dims();
        match &self.right {
            RightSketch::Window { .. } => (0..=d)
                .map(|j| {
                    if j == 0 || j == d {
                        return SketchVec::OneHot(0);
                    }
                    let w = self.right_window(j);
                    SketchVec::OneHot(encode(x[w.clone()].iter().copied(), &self.extents[w]))
                })
                .collect(),
            RightSketch::Chain { blocks } => {
                let mut out = vec![SketchVec::OneHot(0); d + 1];
                let mut v = vec![1.0];
                for j in (1..d).rev() {
                    v = apply_block(&blocks[j - 1], x[j], &v);
                    out[j] = SketchVec::Dense(v.clone());
                }
                out
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlanJson::from(self)).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: PlanJson = serde_json::from_str(text)?;
        repr.into_plan()
    }
}

/// `out[a] = sum_b block[a, x, b] * v[b]`.
fn apply_block(block: &DenseTensor, x: usize, v: &[f64]) -> Vec<f64> {
    let [r0, n, r1] = [block.shape()[0], block.shape()[1], block.shape()[2]];
    let data = block.data();
    (0..r0)
        .map(|a| {
            let row = &data[(a * n + x) * r1..(a * n + x + 1) * r1];
            row.iter().zip(v).map(|(g, h)| g * h).sum()
        })
        .collect()
}

#[derive(Clone, Debug)]
enum SketchVec {
    OneHot(usize),
    Dense(Vec<f64>),
}

/// `dst[(b * n + x) * ell + g] += w * l[b] * r[g]`.
fn add_outer(dst: &mut [f64], n: usize, ell: usize, l: &SketchVec, x: usize, r: &SketchVec, w: f64) {
    let mut add_row = |b: usize, lv: f64| {
        let base = (b * n + x) * ell;
        match r {
            SketchVec::OneHot(g) => dst[base + g] += w * lv,
            SketchVec::Dense(rv) => {
                for (d, &rg) in dst[base..base + ell].iter_mut().zip(rv) {
                    *d += w * lv * rg;
                }
            }
        }
    };
    match l {
        SketchVec::OneHot(b) => add_row(*b, 1.0),
        SketchVec::Dense(lv) => {
            for (b, &v) in lv.iter().enumerate() {
                add_row(b, v);
            }
        }
    }
}

struct Accumulator {
    phi: Vec<Vec<f64>>,
    psi: Option<Vec<Vec<f64>>>,
}

impl Accumulator {
    fn new(plan: &SketchPlan, with_psi: bool) -> Self {
        let d = plan.dims();
        let phi = (0..d)
            .map(|k| vec![0.0; plan.left_size(k) * plan.extents[k] * plan.right_size(k + 1)])
            .collect();
        let psi = with_psi.then(|| {
            (0..d - 1)
                .map(|k| vec![0.0; plan.left_size(k + 1) * plan.right_size(k + 1)])
                .collect()
        });
        Self { phi, psi }
    }

    fn add(&mut self, plan: &SketchPlan, x: &[usize], w: f64) {
        let left = plan.left_vectors(x);
        let right = plan.right_vectors(x);
        for k in 0..plan.dims() {
            let ell = plan.right_size(k + 1);
            add_outer(&mut self.phi[k], plan.extents[k], ell, &left[k], x[k], &right[k + 1], w);
        }
        if let Some(psi) = &mut self.psi {
            for (k, p) in psi.iter_mut().enumerate() {
                let ell = plan.right_size(k + 1);
                add_outer(p, 1, ell, &left[k + 1], 0, &right[k + 1], w);
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.phi.iter_mut().zip(other.phi) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        if let (Some(pa), Some(pb)) = (&mut self.psi, other.psi) {
            for (a, b) in pa.iter_mut().zip(pb) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        self
    }

    fn finish(self, plan: &SketchPlan) -> Sketches {
        let d = plan.dims();
        let phi = self
            .phi
            .into_iter()
            .enumerate()
            .map(|(k, data)| {
                DenseTensor::new(
                    vec![plan.left_size(k), plan.extents[k], plan.right_size(k + 1)],
                    data,
                )
                .expect("accumulator shape")
            })
            .collect();
        let psi = self.psi.map(|psi| {
            psi.into_iter()
                .enumerate()
                .map(|(k, data)| {
                    DenseTensor::new(vec![plan.left_size(k + 1), plan.right_size(k + 1)], data)
                        .expect("accumulator shape")
                })
                .collect::<Vec<_>>()
        });
        debug_assert!(psi.as_ref().map_or(true, |p| p.len() == d - 1));
        Sketches { phi, psi }
    }
}

fn check_extents(input: &SketchInput, plan: &SketchPlan) -> Result<()> {
    let e = input.extents();
    if e != plan.extents {
        return Err(TtError::Shape(format!(
            "input extents {e:?} differ from plan extents {:?}",
            plan.extents
        )));
    }
    Ok(())
}

/// Sketched moments `phi_k = S_k . p . T_{k+1}` for every core.
pub fn run_sketching(input: SketchInput, plan: &SketchPlan) -> Result<Vec<DenseTensor>> {
    Ok(sketch(input, plan, false)?.phi)
}

/// Sketched moments plus the fully sketched `psi_k = S_{k+1} . p . T_{k+1}`.
pub fn run_sketching_with_psi(input: SketchInput, plan: &SketchPlan) -> Result<Sketches> {
    sketch(input, plan, true)
}

fn sketch(input: SketchInput, plan: &SketchPlan, with_psi: bool) -> Result<Sketches> {
    check_extents(&input, plan)?;
    match input {
        SketchInput::Samples(s) if plan.is_window() => window_counts(s, plan, with_psi),
        SketchInput::Samples(s) => Ok(sample_sums(s, plan, with_psi)),
        SketchInput::Dense(p) => {
            let mut acc = Accumulator::new(plan, with_psi);
            let mut it = MultiIndex::new(p.shape());
            let mut flat = 0;
            while let Some(x) = it.next_index() {
                let w = p.data()[flat];
                flat += 1;
                if w != 0.0 {
                    acc.add(plan, x, w);
                }
            }
            Ok(acc.finish(plan))
        }
        SketchInput::Train(t) => train_contractions(t, plan, with_psi),
    }
}

fn window_counts(s: &DiscreteSamples, plan: &SketchPlan, with_psi: bool) -> Result<Sketches> {
    let d = plan.dims();
    let phi = (0..d)
        .map(|k| {
            let lw = plan.left_window(k);
            let hi = if k + 1 < d { plan.right_window(k + 1).end } else { d };
            let shape = vec![plan.left_size(k), plan.extents[k], plan.right_size(k + 1)];
            marginal(s, lw.start..hi)?.frequencies().reshape(shape)
        })
        .collect::<Result<Vec<_>>>()?;
    let psi = if with_psi {
        Some(
            (0..d - 1)
                .map(|k| {
                    let lw = plan.left_window(k + 1);
                    let hi = plan.right_window(k + 1).end;
                    let shape = vec![plan.left_size(k + 1), plan.right_size(k + 1)];
                    marginal(s, lw.start..hi)?.frequencies().reshape(shape)
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(Sketches { phi, psi })
}

fn sample_sums(s: &DiscreteSamples, plan: &SketchPlan, with_psi: bool) -> Sketches {
    let d = s.dims();
    let w = 1.0 / s.n_samples() as f64;
    let parts: Vec<Accumulator> = s
        .codes()
        .par_chunks(SAMPLE_CHUNK * d)
        .map(|chunk| {
            let mut acc = Accumulator::new(plan, with_psi);
            let mut x = vec![0usize; d];
            for row in chunk.chunks(d) {
                for (xi, &c) in x.iter_mut().zip(row) {
                    *xi = c as usize;
                }
                acc.add(plan, &x, w);
            }
            acc
        })
        .collect();
    let acc = parts
        .into_iter()
        .fold(Accumulator::new(plan, with_psi), Accumulator::merge);
    acc.finish(plan)
}

/// Sketched moment of a single core from samples.
pub fn sketched_moment(s: &DiscreteSamples, plan: &SketchPlan, k: usize) -> Result<DenseTensor> {
    check_extents(&SketchInput::Samples(s), plan)?;
    if k >= plan.dims() {
        return Err(TtError::Argument(format!("core index {k} out of range")));
    }
    let sketches = if plan.is_window() {
        window_counts(s, plan, false)?
    } else {
        sample_sums(s, plan, false)
    };
    Ok(sketches.phi.into_iter().nth(k).expect("k checked"))
}

fn slice(t: &DenseTensor, x: usize) -> DMatrix<f64> {
    let [r0, n, r1] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    DMatrix::from_fn(r0, r1, |a, b| t.data()[(a * n + x) * r1 + b])
}

/// `E'(c', a') = sum_{x,c,a} u[c', x, c] E(c, a) G[a, x, a']`.
fn left_env_step(env: &DMatrix<f64>, u: &DenseTensor, g: &DenseTensor) -> DMatrix<f64> {
    let n = g.shape()[1];
    let mut out = DMatrix::zeros(u.shape()[0], g.shape()[2]);
    for x in 0..n {
        out += slice(u, x) * env * slice(g, x);
    }
    out
}

/// `F(a, c) = sum_{x,a',c'} G[a, x, a'] F'(a', c') t[c, x, c']`.
fn right_env_step(env: &DMatrix<f64>, t: &DenseTensor, g: &DenseTensor) -> DMatrix<f64> {
    let n = g.shape()[1];
    let mut out = DMatrix::zeros(g.shape()[0], t.shape()[0]);
    for x in 0..n {
        out += slice(g, x) * env * slice(t, x).transpose();
    }
    out
}

fn train_contractions(t: &TensorTrain, plan: &SketchPlan, with_psi: bool) -> Result<Sketches> {
    let d = plan.dims();
    let mut lenv: Vec<DMatrix<f64>> = vec![DMatrix::from_element(1, 1, 1.0)];
    if plan.is_recursive() {
        for k in 0..d - 1 {
            let next = left_env_step(&lenv[k], &plan.left_block(k)?, t.core(k));
            lenv.push(next);
        }
    } else {
        for k in 1..d {
            let mut e = DMatrix::from_element(1, 1, 1.0);
            for (i, u) in plan.left_chain(k)?.iter().enumerate() {
                e = left_env_step(&e, u, t.core(i));
            }
            lenv.push(e);
        }
    }
    let mut renv: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); d + 1];
    renv[d] = DMatrix::from_element(1, 1, 1.0);
    for j in (1..d).rev() {
        renv[j] = right_env_step(&renv[j + 1], &plan.right_block(j), t.core(j));
    }
    let phi = (0..d)
        .map(|k| {
            let core = t.core(k);
            let n = core.shape()[1];
            let (m, ell) = (plan.left_size(k), plan.right_size(k + 1));
            let mut out = DenseTensor::zeros(&[m, n, ell]);
            for x in 0..n {
                let s = &lenv[k] * slice(core, x) * &renv[k + 1];
                for b in 0..m {
                    for g in 0..ell {
                        out.data_mut()[(b * n + x) * ell + g] = s[(b, g)];
                    }
                }
            }
            out
        })
        .collect();
    let psi = with_psi.then(|| {
        (0..d - 1)
            .map(|k| {
                let s = &lenv[k + 1] * &renv[k + 1];
                DenseTensor::from_matrix(&s, vec![s.nrows(), s.ncols()]).expect("matrix shape")
            })
            .collect()
    });
    Ok(Sketches { phi, psi })
}

#[derive(Serialize, Deserialize)]
struct TensorB64 {
    shape: Vec<usize>,
    data: String,
}

impl From<&DenseTensor> for TensorB64 {
    fn from(t: &DenseTensor) -> Self {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape: t.shape().to_vec(),
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }
}

impl TensorB64 {
    fn into_tensor(self) -> Result<DenseTensor> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(self.data.as_bytes())
            .map_err(|e| TtError::Format(format!("bad base64 payload: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(TtError::Format("payload is not a whole number of f64".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        DenseTensor::new(self.shape, data)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum LeftJson {
    Window { width: usize },
    Recursive { blocks: Vec<TensorB64> },
    Independent { chains: Vec<Vec<TensorB64>> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum RightJson {
    Window { order: usize },
    Chain { blocks: Vec<TensorB64> },
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    extents: Vec<usize>,
    left: LeftJson,
    right: RightJson,
}

impl From<&SketchPlan> for PlanJson {
    fn from(p: &SketchPlan) -> Self {
        let left = match &p.left {
            LeftSketch::Window { width } => LeftJson::Window { width: *width },
            LeftSketch::Recursive { blocks } => LeftJson::Recursive {
                blocks: blocks.iter().map(TensorB64::from).collect(),
            },
            LeftSketch::Independent { chains } => LeftJson::Independent {
                chains: chains
                    .iter()
                    .map(|c| c.iter().map(TensorB64::from).collect())
                    .collect(),
            },
        };
        let right = match &p.right {
            RightSketch::Window { order } => RightJson::Window { order: *order },
            RightSketch::Chain { blocks } => RightJson::Chain {
                blocks: blocks.iter().map(TensorB64::from).collect(),
            },
        };
        Self {
            extents: p.extents.clone(),
            left,
            right,
        }
    }
}

impl PlanJson {
    fn into_plan(self) -> Result<SketchPlan> {
        let tensors = |v: Vec<TensorB64>| v.into_iter().map(TensorB64::into_tensor).collect::<Result<Vec<_>>>();
        let left = match self.left {
            LeftJson::Window { width } => LeftSketch::Window { width },
            LeftJson::Recursive { blocks } => LeftSketch::Recursive {
                blocks: tensors(blocks)?,
            },
            LeftJson::Independent { chains } => LeftSketch::Independent {
                chains: chains.into_iter().map(tensors).collect::<Result<Vec<_>>>()?,
            },
        };
        let right = match self.right {
            RightJson::Window { order } => RightSketch::Window { order },
            RightJson::Chain { blocks } => RightSketch::Chain {
                blocks: tensors(blocks)?,
            },
        };
        SketchPlan::new(self.extents, left, right)
    }
}
