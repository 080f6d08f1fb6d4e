//! Dilated convolution and PPV pooling.
//!
//! Each series is convolved with every kernel of a [`FeatureBank`] using
//! "same" zero padding, and the output is pooled to the proportion of values
//! strictly above the kernel's bias. The result is an `n_series x n_features`
//! [`FeatureMatrix`] with entries in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::kernelbank::FeatureBank;
use crate::par::{self, Exec};
use crate::{Error, Result};

/// A set of equal-length univariate series, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub name: String,
    values: Vec<f64>,
    n_series: usize,
    length: usize,
    labels: Option<Vec<usize>>,
}

impl TimeSeriesDataset {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let length = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * length);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != length {
                return Err(Error::Shape(format!(
                    "series {i} has length {}, expected {length}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(name, values, rows.len(), labels)
    }

    pub fn from_flat(
        name: impl Into<String>,
        values: Vec<f64>,
        n_series: usize,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n_series == 0 || values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !values.len().is_multiple_of(n_series) {
            return Err(Error::Shape(format!(
                "{} values do not split into {n_series} series",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value in series {}",
                pos / (values.len() / n_series)
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n_series {
                return Err(Error::Shape(format!(
                    "{} labels for {n_series} series",
                    l.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            length: values.len() / n_series,
            values,
            n_series,
            labels,
        })
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.values[i * self.length..(i + 1) * self.length]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.length)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Per-series z-normalization; constant series become all zeros.
    pub fn z_normalize(&mut self) {
        let len = self.length;
        for row in self.values.chunks_exact_mut(len) {
            let mean = row.iter().sum::<f64>() / len as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64;
            let sd = var.sqrt();
            for v in row.iter_mut() {
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
    }

    /// Concatenates the series of `other` after those of `self`.
    pub fn concat(mut self, other: TimeSeriesDataset) -> Result<Self> {
        if other.length != self.length {
            return Err(Error::VariableLength {
                path: other.name.into(),
                line: 1,
                expected: self.length,
                found: other.length,
            });
        }
        self.labels = match (self.labels, other.labels) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        self.values.extend(other.values);
        self.n_series += other.n_series;
        Ok(self)
    }
}

/// PPV features, row-major `n_series x n_features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    pub bank_fingerprint: u64,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, n_rows: usize, n_cols: usize, bank_fingerprint: u64) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            values,
            n_rows,
            n_cols,
            bank_fingerprint,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    /// CSV with a `f0,f1,...` header and one row per series.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.n_cols).map(|j| format!("f{j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n_rows {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Receptive field of a kernel: `(kernel_length - 1) * dilation + 1`.
pub fn receptive_field(kernel_length: usize, dilation: usize) -> usize {
    (kernel_length - 1) * dilation + 1
}

fn check_conv_args(len: usize, kernel_length: usize, dilation: usize) -> Result<()> {
    if kernel_length == 0 || kernel_length.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "kernel length must be odd, got {kernel_length}"
        )));
    }
    if dilation == 0 {
        return Err(Error::Config("dilation must be at least 1".into()));
    }
    let required = receptive_field(kernel_length, dilation);
    if len < required {
        return Err(Error::DatasetTooShort { length: len, required });
    }
    Ok(())
}

/// Dilated convolution with "same" zero padding of `(k - 1) / 2 * dilation`
/// on each side: `out[t] = sum_j w[j] * x[t + pad - j * dilation]`.
pub fn dilated_convolve(series: &[f64], weights: &[f64], dilation: usize) -> Result<Vec<f64>> {
    check_conv_args(series.len(), weights.len(), dilation)?;
    let pad = (weights.len() - 1) / 2 * dilation;
    let padded = zero_pad(series, pad);
    let mut out = vec![0.0; series.len()];
    convolve_padded(&padded, 0, weights, dilation, &mut out);
    Ok(out)
}

fn zero_pad(series: &[f64], pad: usize) -> Vec<f64> {
    let mut padded = vec![0.0; series.len() + 2 * pad];
    padded[pad..pad + series.len()].copy_from_slice(series);
    padded
}

// `padded` carries at least `(k - 1) / 2 * dilation` zeros on each side of
// the series, starting at `offset`. Fills `out` (one entry per series value,
// or a block of them when called with a shifted offset).
#[inline]
fn convolve_padded(padded: &[f64], offset: usize, weights: &[f64], dilation: usize, out: &mut [f64]) {
    let k = weights.len();
    let n = out.len();
    // tap j reads padded[t + (k - 1 - j) * dilation]
    let first = &padded[offset + (k - 1) * dilation..][..n];
    let w0 = weights[0];
    for (o, x) in out.iter_mut().zip(first) {
        *o = w0 * x;
    }
    for (j, &w) in weights.iter().enumerate().skip(1) {
        let src = &padded[offset + (k - 1 - j) * dilation..][..n];
        for (o, x) in out.iter_mut().zip(src) {
            *o += w * x;
        }
    }
}

/// Proportion of entries with `v - bias > 0`.
pub fn ppv(conv_output: &[f64], bias: f64) -> Result<f64> {
    if conv_output.is_empty() {
        return Err(Error::Domain("PPV of an empty vector".into()));
    }
    Ok(count_above(conv_output, bias) as f64 / conv_output.len() as f64)
}

#[inline]
fn count_above(v: &[f64], bias: f64) -> usize {
    v.iter().map(|&x| usize::from(x - bias > 0.0)).sum()
}

const BLOCK: usize = 1024;

/// Computes every PPV feature of one series into `out` (one slot per
/// feature). `scratch` must hold at least `BLOCK` values.
fn transform_series(series: &[f64], bank: &FeatureBank, max_pad: usize, out: &mut [f64], scratch: &mut [f64]) {
    let len = series.len();
    let padded = zero_pad(series, max_pad);
    for (slot, feature) in out.iter_mut().zip(&bank.features) {
        let pad = (feature.weights.len() - 1) / 2 * feature.dilation;
        let base = max_pad - pad;
        let mut positive = 0usize;
        let mut t0 = 0;
        while t0 < len {
            let b = BLOCK.min(len - t0);
            let buf = &mut scratch[..b];
            convolve_padded(&padded, base + t0, &feature.weights, feature.dilation, buf);
            positive += count_above(buf, feature.bias);
            t0 += b;
        }
        *slot = positive as f64 / len as f64;
    }
}

pub fn transform_dataset(dataset: &TimeSeriesDataset, bank: &FeatureBank) -> Result<FeatureMatrix> {
    transform_dataset_with(dataset, bank, Exec::default())
}

/// Entry `(i, f)` is the PPV of series `i` under feature `f`. Rows are
/// computed independently, so the result does not depend on `exec`.
pub fn transform_dataset_with(dataset: &TimeSeriesDataset, bank: &FeatureBank, exec: Exec) -> Result<FeatureMatrix> {
    if dataset.length() != bank.fitted_input_length {
        return Err(Error::Shape(format!(
            "bank was fitted on series of length {}, dataset {:?} has length {}",
            bank.fitted_input_length,
            dataset.name,
            dataset.length()
        )));
    }
    for f in &bank.features {
        check_conv_args(dataset.length(), f.weights.len(), f.dilation)?;
    }
    let n = dataset.n_series();
    let n_features = bank.features.len();
    let max_pad = bank
        .features
        .iter()
        .map(|f| (f.weights.len() - 1) / 2 * f.dilation)
        .max()
        .unwrap_or(0);
    let mut values = vec![0.0; n * n_features];
    if n_features > 0 {
        par::for_each_chunk_mut(exec, &mut values, n_features, |i, row| {
            let mut scratch = vec![0.0; BLOCK];
            transform_series(dataset.series(i), bank, max_pad, row, &mut scratch);
        });
    }
    FeatureMatrix::new(values, n, n_features, bank.fingerprint())
}
