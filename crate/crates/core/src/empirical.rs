//! Sample sets, sample files and marginal counting.
//!
//! Discrete codes are 0-based in memory and 1-based in files.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Result, TtError};
use crate::tensor::{checked_len, DenseTensor, DEFAULT_ENTRY_CAP};
use crate::tt::ByteReader;

const SAMPLE_MAGIC: &[u8; 7] = b"TTSAMP1";
const KIND_DISCRETE: u8 = 0;
const KIND_CONTINUOUS: u8 = 1;
const COUNT_CHUNK: usize = 1 << 14;

/// Integer-coded samples, row-major `N x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSamples {
    extents: Vec<usize>,
    codes: Vec<u16>,
}

impl DiscreteSamples {
    pub fn new(extents: Vec<usize>, codes: Vec<u16>) -> Result<Self> {
        let d = extents.len();
        if d == 0 {
            return Err(TtError::Argument("samples need at least one dimension".into()));
        }
        if let Some(&n) = extents.iter().find(|&&n| n == 0 || n > u16::MAX as usize + 1) {
            return Err(TtError::Argument(format!("unsupported extent {n}")));
        }
        if codes.is_empty() || codes.len() % d != 0 {
            return Err(TtError::Shape(format!(
                "{} codes do not form whole rows of width {d}",
                codes.len()
            )));
        }
        for (i, row) in codes.chunks(d).enumerate() {
            for (j, (&c, &n)) in row.iter().zip(&extents).enumerate() {
                if c as usize >= n {
                    return Err(TtError::Range {
                        row: i + 1,
                        col: j + 1,
                        value: (c as usize + 1).to_string(),
                    });
                }
            }
        }
        Ok(Self { extents, codes })
    }

    pub fn from_rows(extents: Vec<usize>, rows: &[Vec<usize>]) -> Result<Self> {
        let mut codes = Vec::with_capacity(rows.len() * extents.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != extents.len() {
                return Err(TtError::Shape(format!("row {} has {} entries", i + 1, row.len())));
            }
            for (j, &c) in row.iter().enumerate() {
                codes.push(u16::try_from(c).map_err(|_| TtError::Range {
                    row: i + 1,
                    col: j + 1,
                    value: (c + 1).to_string(),
                })?);
            }
        }
        Self::new(extents, codes)
    }

    pub fn n_samples(&self) -> usize {
        self.codes.len() / self.extents.len()
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn row(&self, i: usize) -> &[u16] {
        let d = self.dims();
        &self.codes[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.codes.chunks(self.dims())
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.extents != other.extents {
            return Err(TtError::Shape("extents differ".into()));
        }
        let mut codes = self.codes.clone();
        codes.extend_from_slice(&other.codes);
        Ok(Self {
            extents: self.extents.clone(),
            codes,
        })
    }
}

/// Real-valued samples in `[a, b]^d`, row-major `N x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSamples {
    dims: usize,
    interval: (f64, f64),
    values: Vec<f64>,
}

impl ContinuousSamples {
    pub fn new(dims: usize, interval: (f64, f64), values: Vec<f64>) -> Result<Self> {
        let (a, b) = interval;
        if dims == 0 || !(a < b) {
            return Err(TtError::Argument(format!("bad domain: d={dims}, [{a}, {b}]")));
        }
        if values.is_empty() || values.len() % dims != 0 {
            return Err(TtError::Shape(format!(
                "{} values do not form whole rows of width {dims}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(a..=b).contains(&v) {
                return Err(TtError::Range {
                    row: i / dims + 1,
                    col: i % dims + 1,
                    value: v.to_string(),
                });
            }
        }
        Ok(Self {
            dims,
            interval,
            values,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.dims
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims || self.interval != other.interval {
            return Err(TtError::Shape("domains differ".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self {
            dims: self.dims,
            interval: self.interval,
            values,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SampleSet {
    Discrete(DiscreteSamples),
    Continuous(ContinuousSamples),
}

impl SampleSet {
    pub fn n_samples(&self) -> usize {
        match self {
            Self::Discrete(s) => s.n_samples(),
            Self::Continuous(s) => s.n_samples(),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Self::Discrete(s) => s.dims(),
            Self::Continuous(s) => s.dims(),
        }
    }
}

/// Expected layout of a sample file.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleSchema {
    Discrete { extents: Vec<usize> },
    Continuous { dims: usize, interval: (f64, f64) },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Binary,
}

pub fn load_samples(path: &Path, schema: &SampleSchema) -> Result<SampleSet> {
    let bytes = std::fs::read(path)?;
    parse_samples(&bytes, schema)
}

/// Parse sample bytes; binary files are recognized by their magic prefix.
pub fn parse_samples(bytes: &[u8], schema: &SampleSchema) -> Result<SampleSet> {
    if bytes.starts_with(SAMPLE_MAGIC) {
        parse_binary(bytes, schema)
    } else {
        parse_csv(bytes, schema)
    }
}

pub fn save_samples(path: &Path, samples: &SampleSet, format: SampleFormat) -> Result<()> {
    crate::io::write_atomic(path, &encode_samples(samples, format))
}

pub fn encode_samples(samples: &SampleSet, format: SampleFormat) -> Vec<u8> {
    match format {
        SampleFormat::Binary => encode_binary(samples),
        SampleFormat::Csv => encode_csv(samples),
    }
}

fn schema_dims(schema: &SampleSchema) -> usize {
    match schema {
        SampleSchema::Discrete { extents } => extents.len(),
        SampleSchema::Continuous { dims, .. } => *dims,
    }
}

fn parse_csv(bytes: &[u8], schema: &SampleSchema) -> Result<SampleSet> {
    let d = schema_dims(schema);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| TtError::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let expected: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(TtError::Parse {
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    let mut codes = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| TtError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(row as u64 + 1),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(row as u64 + 1);
        if rec.len() != d {
            return Err(TtError::Parse {
                line,
                msg: format!("expected {d} fields, found {}", rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            match schema {
                SampleSchema::Discrete { extents } => {
                    let code: i64 = field.parse().map_err(|_| TtError::Parse {
                        line,
                        msg: format!("field {} is not an integer: {field:?}", j + 1),
                    })?;
                    if code < 1 || code as u64 > extents[j] as u64 {
                        return Err(TtError::Range {
                            row,
                            col: j + 1,
                            value: field.to_string(),
                        });
                    }
                    codes.push((code - 1) as u16);
                }
                SampleSchema::Continuous { interval, .. } => {
                    let v: f64 = field.parse().map_err(|_| TtError::Parse {
                        line,
                        msg: format!("field {} is not a number: {field:?}", j + 1),
                    })?;
                    if !(interval.0..=interval.1).contains(&v) {
                        return Err(TtError::Range {
                            row,
                            col: j + 1,
                            value: field.to_string(),
                        });
                    }
                    values.push(v);
                }
            }
        }
    }
    match schema {
        SampleSchema::Discrete { extents } => {
            DiscreteSamples::new(extents.clone(), codes).map(SampleSet::Discrete)
        }
        SampleSchema::Continuous { dims, interval } => {
            ContinuousSamples::new(*dims, *interval, values).map(SampleSet::Continuous)
        }
    }
}

fn encode_csv(samples: &SampleSet) -> Vec<u8> {
    let d = samples.dims();
    let mut out = String::new();
    out.push_str(&(1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(","));
    out.push('\n');
    match samples {
        SampleSet::Discrete(s) => {
            for row in s.rows() {
                let fields: Vec<String> = row.iter().map(|&c| (c as u32 + 1).to_string()).collect();
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        SampleSet::Continuous(s) => {
            for i in 0..s.n_samples() {
                let fields: Vec<String> = s.row(i).iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
    }
    out.into_bytes()
}

fn encode_binary(samples: &SampleSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SAMPLE_MAGIC);
    match samples {
        SampleSet::Discrete(s) => {
            out.push(KIND_DISCRETE);
            out.extend_from_slice(&(s.n_samples() as u64).to_le_bytes());
            out.extend_from_slice(&(s.dims() as u64).to_le_bytes());
            for &n in s.extents() {
                out.extend_from_slice(&(n as u64).to_le_bytes());
            }
            for &c in s.codes() {
                out.extend_from_slice(&(c + 1).to_le_bytes());
            }
        }
        SampleSet::Continuous(s) => {
            out.push(KIND_CONTINUOUS);
            out.extend_from_slice(&(s.n_samples() as u64).to_le_bytes());
            out.extend_from_slice(&(s.dims() as u64).to_le_bytes());
            out.extend_from_slice(&s.interval().0.to_le_bytes());
            out.extend_from_slice(&s.interval().1.to_le_bytes());
            for v in s.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn parse_binary(bytes: &[u8], schema: &SampleSchema) -> Result<SampleSet> {
    let mut r = ByteReader::new(bytes);
    r.take(SAMPLE_MAGIC.len())?;
    let kind = r.u8()?;
    let n = r.u64()? as usize;
    let d = r.u64()? as usize;
    if d != schema_dims(schema) {
        return Err(TtError::Format(format!(
            "file has {d} dimensions, schema expects {}",
            schema_dims(schema)
        )));
    }
    let total = n
        .checked_mul(d)
        .filter(|&t| t <= bytes.len())
        .ok_or_else(|| TtError::Format("implausible sample count".into()))?;
    match (kind, schema) {
        (KIND_DISCRETE, SampleSchema::Discrete { extents }) => {
            let file_extents = (0..d).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            if &file_extents != extents {
                return Err(TtError::Format(format!(
                    "file extents {file_extents:?} differ from schema {extents:?}"
                )));
            }
            let mut codes = Vec::with_capacity(total);
            for i in 0..total {
                let c = r.u16()?;
                if c == 0 || c as usize > extents[i % d] {
                    return Err(TtError::Range {
                        row: i / d + 1,
                        col: i % d + 1,
                        value: c.to_string(),
                    });
                }
                codes.push(c - 1);
            }
            if !r.is_empty() {
                return Err(TtError::Format("trailing bytes".into()));
            }
            DiscreteSamples::new(extents.clone(), codes).map(SampleSet::Discrete)
        }
        (KIND_CONTINUOUS, SampleSchema::Continuous { interval, .. }) => {
            let a = r.f64()?;
            let b = r.f64()?;
            if (a, b) != *interval {
                return Err(TtError::Format(format!(
                    "file interval [{a}, {b}] differs from schema"
                )));
            }
            let values = (0..total).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            if !r.is_empty() {
                return Err(TtError::Format("trailing bytes".into()));
            }
            ContinuousSamples::new(d, *interval, values).map(SampleSet::Continuous)
        }
        (k, _) => Err(TtError::Format(format!(
            "sample kind tag {k} does not match the schema"
        ))),
    }
}

/// Window marginal held as exact counts.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTensor {
    window: Range<usize>,
    shape: Vec<usize>,
    counts: Vec<u64>,
    total: u64,
}

impl MarginalTensor {
    pub fn window(&self) -> Range<usize> {
        self.window.clone()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Frequencies (counts divided by N).
    pub fn frequencies(&self) -> DenseTensor {
        let n = self.total as f64;
        DenseTensor::new(
            self.shape.clone(),
            self.counts.iter().map(|&c| c as f64 / n).collect(),
        )
        .expect("shape matches counts")
    }
}

/// Empirical marginal over the contiguous 0-based window `window`.
pub fn marginal(samples: &DiscreteSamples, window: Range<usize>) -> Result<MarginalTensor> {
    marginal_capped(samples, window, DEFAULT_ENTRY_CAP)
}

pub fn marginal_capped(
    samples: &DiscreteSamples,
    window: Range<usize>,
    cap: u128,
) -> Result<MarginalTensor> {
    let d = samples.dims();
    if window.start >= window.end || window.end > d {
        return Err(TtError::Argument(format!("window {window:?} invalid for d={d}")));
    }
    let shape = samples.extents()[window.clone()].to_vec();
    let len = checked_len(&shape, cap)?;
    let codes = samples.codes();
    let count_chunk = |chunk: &[u16]| {
        let mut local = vec![0u64; len];
        for row in chunk.chunks(d) {
            let mut off = 0;
            for (j, &c) in row[window.clone()].iter().enumerate() {
                off = off * shape[j] + c as usize;
            }
            local[off] += 1;
        }
        local
    };
    let parts: Vec<Vec<u64>> = codes.par_chunks(COUNT_CHUNK * d).map(count_chunk).collect();
    let mut counts = vec![0u64; len];
    for part in parts {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    Ok(MarginalTensor {
        window,
        shape,
        counts,
        total: samples.n_samples() as u64,
    })
}
