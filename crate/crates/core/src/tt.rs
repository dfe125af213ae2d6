use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::linalg;
use crate::tensor::{checked_len, DenseTensor, DEFAULT_ENTRY_CAP};

const MAGIC: &[u8; 5] = b"TTRS1";

/// Tensor train with cores of shape `(r_{k-1}, n_k, r_k)` and `r_0 = r_d = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorTrain {
    cores: Vec<DenseTensor>,
}

impl TensorTrain {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(TtError::Shape("a tensor train needs at least one core".into()));
        }
        for (k, c) in cores.iter().enumerate() {
            if c.ndim() != 3 {
                return Err(TtError::Shape(format!(
                    "core {k} is {}-way, expected 3-way",
                    c.ndim()
                )));
            }
        }
        if cores[0].shape()[0] != 1 || cores[cores.len() - 1].shape()[2] != 1 {
            return Err(TtError::Shape("boundary ranks must be 1".into()));
        }
        for k in 1..cores.len() {
            if cores[k - 1].shape()[2] != cores[k].shape()[0] {
                return Err(TtError::Shape(format!(
                    "bond {k}: core {} has right rank {}, core {k} has left rank {}",
                    k - 1,
                    cores[k - 1].shape()[2],
                    cores[k].shape()[0]
                )));
            }
        }
        Ok(Self { cores })
    }

    /// Rank-1 train from one vector per mode (their outer product).
    pub fn rank_one(vectors: &[Vec<f64>]) -> Result<Self> {
        let cores = vectors
            .iter()
            .map(|v| DenseTensor::new(vec![1, v.len(), 1], v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    pub fn zeros(extents: &[usize]) -> Result<Self> {
        Self::rank_one(&extents.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>())
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    pub fn into_cores(self) -> Vec<DenseTensor> {
        self.cores
    }

    pub fn dims(&self) -> usize {
        self.cores.len()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Bond ranks `(r_0, ..., r_d)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.shape()[2]));
        r
    }

    /// Value at a 0-based multi-index.
    pub fn eval(&self, index: &[usize]) -> Result<f64> {
        if index.len() != self.dims() {
            return Err(TtError::Shape(format!(
                "index of length {} for a {}-mode train",
                index.len(),
                self.dims()
            )));
        }
        let mut v = vec![1.0];
        for (mode, (core, &x)) in self.cores.iter().zip(index).enumerate() {
            let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
            if x >= n {
                return Err(TtError::Coordinate {
                    mode,
                    index: x,
                    extent: n,
                });
            }
            let mut next = vec![0.0; r1];
            let data = core.data();
            for (a, &va) in v.iter().enumerate().take(r0) {
                let row = &data[(a * n + x) * r1..(a * n + x + 1) * r1];
                for (nb, &g) in next.iter_mut().zip(row) {
                    *nb += va * g;
                }
            }
            v = next;
        }
        Ok(v[0])
    }

    pub fn contract_full(&self) -> Result<DenseTensor> {
        self.contract_full_capped(DEFAULT_ENTRY_CAP)
    }

    /// Materialize the full tensor, refusing if it would exceed `cap` entries.
    pub fn contract_full_capped(&self, cap: u128) -> Result<DenseTensor> {
        let extents = self.extents();
        checked_len(&extents, cap)?;
        let mut acc = vec![1.0];
        let mut rows = 1;
        for core in &self.cores {
            let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
            acc = linalg::matmul_rm(&acc, rows, r0, core.data(), n * r1);
            rows *= n;
        }
        DenseTensor::new(extents, acc)
    }

    /// Sum over all entries.
    pub fn total_mass(&self) -> f64 {
        let mut v = vec![1.0];
        for core in &self.cores {
            let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
            let mut next = vec![0.0; r1];
            for a in 0..r0 {
                for x in 0..n {
                    let base = (a * n + x) * r1;
                    for b in 0..r1 {
                        next[b] += v[a] * core.data()[base + b];
                    }
                }
            }
            v = next;
        }
        v[0]
    }

    /// `sum_x a(x) b(x)` by left-to-right transfer contraction.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.extents() != other.extents() {
            return Err(TtError::Shape(format!(
                "extents {:?} vs {:?}",
                self.extents(),
                other.extents()
            )));
        }
        // env[a * rb + b]
        let mut env = vec![1.0];
        let mut ra = 1;
        let mut rb = 1;
        for (ca, cb) in self.cores.iter().zip(&other.cores) {
            let n = ca.shape()[1];
            let ra1 = ca.shape()[2];
            let rb1 = cb.shape()[2];
            let (da, db) = (ca.data(), cb.data());
            // t[(x, a', b)] = sum_a env[a, b] * A[a, x, a']
            let mut t = vec![0.0; n * ra1 * rb];
            for a in 0..ra {
                for x in 0..n {
                    let arow = &da[(a * n + x) * ra1..(a * n + x + 1) * ra1];
                    for (a1, &g) in arow.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let dst = &mut t[(x * ra1 + a1) * rb..(x * ra1 + a1 + 1) * rb];
                        let src = &env[a * rb..(a + 1) * rb];
                        for (d, &e) in dst.iter_mut().zip(src) {
                            *d += g * e;
                        }
                    }
                }
            }
            let mut next = vec![0.0; ra1 * rb1];
            for x in 0..n {
                for a1 in 0..ra1 {
                    let trow = &t[(x * ra1 + a1) * rb..(x * ra1 + a1 + 1) * rb];
                    let dst = &mut next[a1 * rb1..(a1 + 1) * rb1];
                    for (b, &tv) in trow.iter().enumerate() {
                        if tv == 0.0 {
                            continue;
                        }
                        let brow = &db[(b * n + x) * rb1..(b * n + x + 1) * rb1];
                        for (d, &g) in dst.iter_mut().zip(brow) {
                            *d += tv * g;
                        }
                    }
                }
            }
            env = next;
            ra = ra1;
            rb = rb1;
        }
        Ok(env[0])
    }

    /// Frobenius norm via a left-to-right QR sweep.
    pub fn norm(&self) -> f64 {
        let mut r = nalgebra::DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
            let g = linalg::from_row_major(r0, n * r1, core.data());
            let m = &r * g;
            // (r', n r1) row-major equals (r' n, r1) row-major
            let tall = linalg::from_row_major(m.nrows() * n, r1, &linalg::to_row_major(&m));
            r = tall.qr().r();
        }
        r.norm()
    }

    /// Train representing `self - other`, with bond ranks added.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.extents() != other.extents() {
            return Err(TtError::Shape(format!(
                "extents {:?} vs {:?}",
                self.extents(),
                other.extents()
            )));
        }
        let d = self.dims();
        let cores = (0..d)
            .map(|k| {
                let (a, b) = (&self.cores[k], &other.cores[k]);
                let n = a.shape()[1];
                let (ra0, ra1, rb0, rb1) = (a.shape()[0], a.shape()[2], b.shape()[0], b.shape()[2]);
                let r0 = if k == 0 { 1 } else { ra0 + rb0 };
                let r1 = if k == d - 1 { 1 } else { ra1 + rb1 };
                let sign = if k == 0 { -1.0 } else { 1.0 };
                let mut c = DenseTensor::zeros(&[r0, n, r1]);
                let data = c.data_mut();
                for x in 0..n {
                    for i in 0..ra0 {
                        for j in 0..ra1 {
                            data[(i * n + x) * r1 + j] = a.data()[(i * n + x) * ra1 + j];
                        }
                    }
                    let (oi, oj) = (if k == 0 { 0 } else { ra0 }, if k == d - 1 { 0 } else { ra1 });
                    for i in 0..rb0 {
                        for j in 0..rb1 {
                            let v = sign * b.data()[(i * n + x) * rb1 + j];
                            if d == 1 {
                                data[(i * n + x) * r1 + j] += v;
                            } else {
                                data[((oi + i) * n + x) * r1 + oj + j] = v;
                            }
                        }
                    }
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    /// Multiply the represented tensor by `factor` (applied to the first core).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut cores = self.cores.clone();
        cores[0].scale(factor);
        Self { cores }
    }

    /// Contract all modes outside `window` with the all-ones vector.
    pub fn window_marginal(&self, window: std::ops::Range<usize>) -> Result<DenseTensor> {
        let d = self.dims();
        if window.start >= window.end || window.end > d {
            return Err(TtError::Argument(format!(
                "window {window:?} invalid for {d} modes"
            )));
        }
        let mut left = vec![1.0];
        for core in &self.cores[..window.start] {
            left = sum_mode(core, &left);
        }
        let mut right = vec![1.0];
        for core in self.cores[window.end..].iter().rev() {
            right = sum_mode_right(core, &right);
        }
        let mut acc = left;
        let mut rows = 1;
        let mut shape = Vec::new();
        for core in &self.cores[window.clone()] {
            let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
            acc = linalg::matmul_rm(&acc, rows, r0, core.data(), n * r1);
            rows *= n;
            shape.push(n);
        }
        let r = right.len();
        let out = linalg::matmul_rm(&acc, rows, r, &right, 1);
        DenseTensor::new(shape, out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims() as u64).to_le_bytes());
        for r in self.ranks() {
            out.extend_from_slice(&(r as u64).to_le_bytes());
        }
        for n in self.extents() {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for core in &self.cores {
            for v in core.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(TtError::Format("missing TTRS1 magic".into()));
        }
        let d = r.u64()? as usize;
        if d == 0 || d > bytes.len() {
            return Err(TtError::Format(format!("implausible mode count {d}")));
        }
        let ranks = (0..=d).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let extents = (0..d).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let shape = vec![ranks[k], extents[k], ranks[k + 1]];
            let len = checked_len(&shape, (bytes.len() / 8) as u128)?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            cores.push(DenseTensor::new(shape, data)?);
        }
        if !r.is_empty() {
            return Err(TtError::Format("trailing bytes after last core".into()));
        }
        Self::new(cores)
    }

    pub fn to_json(&self) -> String {
        let repr = TtJson {
            format: "TTRS1".into(),
            d: self.dims(),
            ranks: self.ranks(),
            extents: self.extents(),
            cores: self.cores.iter().map(|c| c.data().to_vec()).collect(),
        };
        serde_json::to_string_pretty(&repr).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: TtJson = serde_json::from_str(text)?;
        if repr.ranks.len() != repr.d + 1 || repr.extents.len() != repr.d || repr.cores.len() != repr.d {
            return Err(TtError::Format("inconsistent field lengths".into()));
        }
        let cores = repr
            .cores
            .into_iter()
            .enumerate()
            .map(|(k, data)| {
                DenseTensor::new(vec![repr.ranks[k], repr.extents[k], repr.ranks[k + 1]], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TtJson {
    format: String,
    d: usize,
    ranks: Vec<usize>,
    extents: Vec<usize>,
    cores: Vec<Vec<f64>>,
}

fn sum_mode(core: &DenseTensor, left: &[f64]) -> Vec<f64> {
    let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
    let mut out = vec![0.0; r1];
    for a in 0..r0 {
        for x in 0..n {
            for b in 0..r1 {
                out[b] += left[a] * core.data()[(a * n + x) * r1 + b];
            }
        }
    }
    out
}

fn sum_mode_right(core: &DenseTensor, right: &[f64]) -> Vec<f64> {
    let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
    let mut out = vec![0.0; r0];
    for a in 0..r0 {
        for x in 0..n {
            for b in 0..r1 {
                out[a] += core.data()[(a * n + x) * r1 + b] * right[b];
            }
        }
    }
    out
}

/// Relative l2 error `||p - q|| / ||p||`.
///
/// The difference is formed as a train and its norm taken after a QR sweep,
/// so agreement is resolved down to rounding level rather than `sqrt(eps)`.
pub fn rel_l2_error(p: &TensorTrain, q: &TensorTrain) -> Result<f64> {
    let diff = p.difference(q)?;
    let pn = p.norm();
    if !(pn > 0.0) {
        return Err(TtError::DegenerateReference);
    }
    Ok(diff.norm() / pn)
}

/// Max over the middle index of the spectral norm of the slice `G(:, i, :)`.
///
/// Panics if `core` is not 3-way.
pub fn triple_norm(core: &DenseTensor) -> f64 {
    assert_eq!(core.ndim(), 3, "triple_norm needs a 3-way core");
    let [r0, n, r1] = [core.shape()[0], core.shape()[1], core.shape()[2]];
    (0..n)
        .map(|x| {
            let slice = nalgebra::DMatrix::from_fn(r0, r1, |a, b| core.data()[(a * n + x) * r1 + b]);
            linalg::spectral_norm(&slice)
        })
        .fold(0.0, f64::max)
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(TtError::Format(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
