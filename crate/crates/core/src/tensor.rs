use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};

/// Default upper bound on the number of entries any materialized tensor may hold.
pub const DEFAULT_ENTRY_CAP: u128 = 100_000_000;

/// A d-way real array stored row-major (last index fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn checked_len(shape: &[usize], cap: u128) -> Result<usize> {
    let mut n: u128 = 1;
    for &e in shape {
        n = n.saturating_mul(e as u128);
    }
    if n > cap {
        return Err(TtError::Size { entries: n, cap });
    }
    Ok(n as usize)
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TtError::Shape(format!("zero extent in {shape:?}")));
        }
        let len = checked_len(&shape, u128::MAX)?;
        if len != data.len() {
            return Err(TtError::Shape(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor. Panics on a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&e| e > 0), "zero extent in {shape:?}");
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut it = MultiIndex::new(shape);
        let mut flat = 0;
        while let Some(idx) = it.next_index() {
            t.data[flat] = f(idx);
            flat += 1;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(TtError::Shape(format!(
                "index of length {} for a {}-way tensor",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (mode, (&i, &n)) in index.iter().zip(&self.shape).enumerate() {
            if i >= n {
                return Err(TtError::Coordinate {
                    mode,
                    index: i,
                    extent: n,
                });
            }
            off = off * n + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    /// Unchecked-by-result access; panics on a bad index.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.get(index).expect("index in range")
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Largest absolute entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(TtError::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// View the data as a `rows x cols` matrix (row-major reshape).
    pub fn to_matrix(&self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        if rows * cols != self.data.len() {
            return Err(TtError::Shape(format!(
                "cannot view {} entries as {rows}x{cols}",
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }

    pub fn from_matrix(m: &DMatrix<f64>, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, crate::linalg::to_row_major(m))
    }

    /// The k-th unfolding: first `k` modes as rows, remaining modes as columns.
    pub fn unfold(&self, k: usize) -> Result<Unfolding> {
        let d = self.ndim();
        if k == 0 || k >= d {
            return Err(TtError::Argument(format!(
                "split index {k} outside 1..={}",
                d.saturating_sub(1)
            )));
        }
        let rows: usize = self.shape[..k].iter().product();
        let cols: usize = self.shape[k..].iter().product();
        Ok(Unfolding {
            shape: self.shape.clone(),
            split: k,
            matrix: DMatrix::from_row_slice(rows, cols, &self.data),
        })
    }
}

/// Matrix view of a tensor with its modes split into row and column groups.
#[derive(Clone, Debug)]
pub struct Unfolding {
    shape: Vec<usize>,
    split: usize,
    matrix: DMatrix<f64>,
}

impl Unfolding {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Fold back into a tensor of the original shape.
    pub fn fold(&self) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: crate::linalg::to_row_major(&self.matrix),
        }
    }
}

/// Odometer over all multi-indices of a shape in row-major order.
#[derive(Clone, Debug)]
pub struct MultiIndex {
    shape: Vec<usize>,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl MultiIndex {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            current: vec![0; shape.len()],
            started: false,
            done: shape.iter().any(|&e| e == 0),
        }
    }

    /// Advance and return the next index, or `None` when exhausted.
    pub fn next_index(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.current);
        }
        for pos in (0..self.shape.len()).rev() {
            self.current[pos] += 1;
            if self.current[pos] < self.shape[pos] {
                return Some(&self.current);
            }
            self.current[pos] = 0;
        }
        self.done = true;
        None
    }
}

/// Row-major flat offset of `digits` in a mixed radix given by `radix`.
pub(crate) fn encode(digits: impl IntoIterator<Item = usize>, radix: &[usize]) -> usize {
    digits
        .into_iter()
        .zip(radix)
        .fold(0, |acc, (d, &n)| acc * n + d)
}

/// Inverse of [`encode`].
pub(crate) fn decode(mut flat: usize, radix: &[usize], out: &mut [usize]) {
    for pos in (0..radix.len()).rev() {
        out[pos] = flat % radix[pos];
        flat /= radix[pos];
    }
}
