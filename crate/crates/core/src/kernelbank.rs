//! Random kernel bank: weights in `{-1, 2}`, geometric dilations and
//! quantile biases.
//!
//! Every feature draws from its own substreams (`"weights"`, `"dilations"`,
//! `"bias-series"`, indexed by feature), so the bank does not depend on how
//! features are scheduled across threads. Quantile levels come from the
//! evenly spaced grid `(j + 1) / (F + 1)`; in the default mode the grid is
//! randomly permuted across features, in legacy mode it is assigned in index
//! order, which leaves a trend along the feature axis of the transform.

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::rng::{derive_indexed, derive_stream, RandomStream};
use crate::transform::{dilated_convolve, TimeSeriesDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Exactly `kernel_length / 3` weights equal 2, the rest -1.
    SumZero,
    /// Each weight is 2 with probability 1/3, else -1.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    PermutedQuantiles,
    LegacySorted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub num_features: usize,
    pub kernel_length: usize,
    pub weight_mode: WeightMode,
    pub bias_mode: BiasMode,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            num_features: 500,
            kernel_length: 9,
            weight_mode: WeightMode::SumZero,
            bias_mode: BiasMode::PermutedQuantiles,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 {
            return Err(Error::Config("num_features must be at least 1".into()));
        }
        if self.kernel_length < 3 || self.kernel_length.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel_length must be odd and at least 3, got {}",
                self.kernel_length
            )));
        }
        Ok(())
    }

    /// Short tag such as `500-9`.
    pub fn tag(&self) -> String {
        format!("{}-{}", self.num_features, self.kernel_length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFeature {
    pub weights: Vec<f64>,
    pub dilation: usize,
    pub bias: f64,
    pub quantile_level: f64,
    /// Index of the series the bias was computed from.
    pub reference_series: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    pub config: BankConfig,
    pub features: Vec<KernelFeature>,
    pub fitted_input_length: usize,
}

impl FeatureBank {
    /// Stable 64-bit hash of the bank contents.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.fitted_input_length as u64);
        for f in &self.features {
            for w in &f.weights {
                eat(w.to_bits());
            }
            eat(f.dilation as u64);
            eat(f.bias.to_bits());
        }
        h
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Largest dilation whose receptive field fits a series:
/// `floor((input_length - 1) / (kernel_length - 1))`.
pub fn max_dilation(input_length: usize, kernel_length: usize) -> Result<usize> {
    if kernel_length < 2 || input_length <= kernel_length {
        return Err(Error::DatasetTooShort {
            length: input_length,
            required: kernel_length + 1,
        });
    }
    Ok((input_length - 1) / (kernel_length - 1))
}

pub fn sample_weights(stream: &mut RandomStream, config: &BankConfig) -> Vec<f64> {
    let k = config.kernel_length;
    match config.weight_mode {
        WeightMode::SumZero => {
            let mut w = vec![-1.0; k];
            let twos = stream
                .sample_distinct(k, k / 3)
                .expect("k / 3 <= k");
            for i in twos {
                w[i] = 2.0;
            }
            w
        }
        WeightMode::Iid => (0..k)
            .map(|_| if stream.uniform_real() < 1.0 / 3.0 { 2.0 } else { -1.0 })
            .collect(),
    }
}

/// `floor(2^x)` with `x ~ U[0, log2((L - 1) / (k - 1))]`.
pub fn sample_dilation(stream: &mut RandomStream, input_length: usize, kernel_length: usize) -> Result<usize> {
    let max = max_dilation(input_length, kernel_length)?;
    let upper = ((input_length - 1) as f64 / (kernel_length - 1) as f64).log2();
    let x = stream.uniform_real() * upper;
    Ok((x.exp2().floor() as usize).clamp(1, max))
}

/// Empirical quantile with linear interpolation between order statistics
/// (positions `(n - 1) * level`). Reorders `values`.
pub fn empirical_quantile(values: &mut [f64], level: f64) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let h = (n - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if frac == 0.0 || upper.is_empty() {
        return lo_val;
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

/// Quantile level assigned to each feature: the grid `(j + 1) / (F + 1)`,
/// permuted by the `"bias-perm"` stream unless `bias_mode` is legacy.
pub fn quantile_levels(config: &BankConfig) -> Result<Vec<f64>> {
    let f = config.num_features;
    let order: Vec<usize> = match config.bias_mode {
        BiasMode::LegacySorted => (0..f).collect(),
        BiasMode::PermutedQuantiles => derive_stream(config.seed, "bias-perm")?.permutation(f),
    };
    Ok(order
        .into_iter()
        .map(|j| (j + 1) as f64 / (f + 1) as f64)
        .collect())
}

pub fn fit_bank(config: &BankConfig, dataset: &TimeSeriesDataset) -> Result<FeatureBank> {
    fit_bank_with(config, dataset, Exec::default())
}

pub fn fit_bank_with(config: &BankConfig, dataset: &TimeSeriesDataset, exec: Exec) -> Result<FeatureBank> {
    config.validate()?;
    let length = dataset.length();
    max_dilation(length, config.kernel_length)?;
    let levels = quantile_levels(config)?;
    let n = dataset.n_series();
    let seed = config.seed;

    let features = par::map_range(exec, config.num_features, |i| -> Result<KernelFeature> {
        let idx = i as u64;
        let weights = sample_weights(&mut derive_indexed(seed, "weights", idx)?, config);
        let dilation = sample_dilation(&mut derive_indexed(seed, "dilations", idx)?, length, config.kernel_length)?;
        let reference = derive_indexed(seed, "bias-series", idx)?.choice(n)?;
        let mut conv = dilated_convolve(dataset.series(reference), &weights, dilation)?;
        let level = levels[i];
        let bias = empirical_quantile(&mut conv, level);
        Ok(KernelFeature {
            weights,
            dilation,
            bias,
            quantile_level: level,
            reference_series: reference,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(FeatureBank {
        config: config.clone(),
        features,
        fitted_input_length: length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::HashSet;

    fn noise_dataset(n: usize, len: usize, seed: u64) -> TimeSeriesDataset {
        let mut s = derive_stream(seed, "noise").unwrap();
        let rows = (0..n)
            .map(|_| (0..len).map(|_| StandardNormal.sample(&mut s)).collect())
            .collect();
        TimeSeriesDataset::new("noise", rows, None).unwrap()
    }

    #[test]
    fn max_dilation_fixtures() {
        assert_eq!(max_dilation(128, 9).unwrap(), 15);
        assert_eq!(max_dilation(10, 9).unwrap(), 1);
        assert_eq!(max_dilation(600, 9).unwrap(), 74);
        assert!(matches!(max_dilation(9, 9), Err(Error::DatasetTooShort { .. })));
    }

    #[test]
    fn sum_zero_weights() {
        let cfg = BankConfig::default();
        let mut s = derive_stream(0, "weights").unwrap();
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let w = sample_weights(&mut s, &cfg);
            assert_eq!(w.len(), 9);
            assert_eq!(w.iter().filter(|&&x| x == 2.0).count(), 3);
            assert_eq!(w.iter().sum::<f64>(), 0.0);
            seen.insert(w.iter().map(|&x| x as i8).collect::<Vec<_>>());
        }
        // C(9, 3)
        assert_eq!(seen.len(), 84);
    }

    #[test]
    fn iid_weights_are_in_range() {
        let cfg = BankConfig { weight_mode: WeightMode::Iid, ..Default::default() };
        let mut s = derive_stream(0, "weights").unwrap();
        let mut twos = 0;
        for _ in 0..3000 {
            let w = sample_weights(&mut s, &cfg);
            assert!(w.iter().all(|&x| x == 2.0 || x == -1.0));
            twos += w.iter().filter(|&&x| x == 2.0).count();
        }
        let frac = twos as f64 / 27_000.0;
        assert!((frac - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn dilation_distribution() {
        let mut s = derive_stream(0, "dilations").unwrap();
        for _ in 0..100 {
            assert_eq!(sample_dilation(&mut s, 10, 9).unwrap(), 1);
        }
        let draws = 10_000;
        let mut ones = 0;
        for _ in 0..draws {
            let d = sample_dilation(&mut s, 128, 9).unwrap();
            assert!((1..=15).contains(&d));
            ones += usize::from(d == 1);
        }
        let expected = 1.0 / 15.875f64.log2();
        assert!((ones as f64 / draws as f64 - expected).abs() < 0.03);
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(empirical_quantile(&mut v, 0.5), 2.5);
        assert_eq!(empirical_quantile(&mut v, 0.0), 1.0);
        assert_eq!(empirical_quantile(&mut v, 1.0), 4.0);
        assert!((empirical_quantile(&mut v, 0.25) - 1.75).abs() < 1e-15);
        assert_eq!(empirical_quantile(&mut [7.0], 0.3), 7.0);
    }

    #[test]
    fn default_bank_invariants() {
        let ds = noise_dataset(8, 128, 1);
        let bank = fit_bank(&BankConfig::default(), &ds).unwrap();
        assert_eq!(bank.len(), 500);
        assert_eq!(bank.fitted_input_length, 128);
        for f in &bank.features {
            assert!(f.weights.iter().all(|&w| w == 2.0 || w == -1.0));
            assert_eq!(f.weights.iter().filter(|&&w| w == 2.0).count(), 3);
            assert!((1..=15).contains(&f.dilation));
            assert!(f.quantile_level > 0.0 && f.quantile_level < 1.0);
            assert!(f.reference_series < 8);
        }
    }

    #[test]
    fn single_feature_uses_the_median() {
        let ds = noise_dataset(1, 50, 2);
        let cfg = BankConfig { num_features: 1, ..Default::default() };
        let bank = fit_bank(&cfg, &ds).unwrap();
        let f = &bank.features[0];
        assert_eq!(f.quantile_level, 0.5);
        let mut conv = dilated_convolve(ds.series(0), &f.weights, f.dilation).unwrap();
        conv.sort_by(f64::total_cmp);
        let median = 0.5 * (conv[24] + conv[25]);
        assert!((f.bias - median).abs() < 1e-12);
    }

    #[test]
    fn refit_is_bit_identical_and_schedule_free() {
        let ds = noise_dataset(5, 200, 3);
        let cfg = BankConfig { num_features: 120, seed: 17, ..Default::default() };
        let a = fit_bank_with(&cfg, &ds, Exec::Parallel).unwrap();
        let b = fit_bank_with(&cfg, &ds, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn bias_modes_reorder_the_same_levels() {
        let ds = noise_dataset(5, 128, 4);
        let permuted = fit_bank(&BankConfig { num_features: 60, seed: 3, ..Default::default() }, &ds).unwrap();
        let legacy = fit_bank(
            &BankConfig { num_features: 60, seed: 3, bias_mode: BiasMode::LegacySorted, ..Default::default() },
            &ds,
        )
        .unwrap();
        let levels = |b: &FeatureBank| b.features.iter().map(|f| f.quantile_level).collect::<Vec<_>>();
        let (lp, ll) = (levels(&permuted), levels(&legacy));
        assert_ne!(lp, ll);
        let mut sorted = lp.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, ll);
        // kernels, dilations and reference series are shared between modes
        for (p, l) in permuted.features.iter().zip(&legacy.features) {
            assert_eq!(p.weights, l.weights);
            assert_eq!(p.dilation, l.dilation);
            assert_eq!(p.reference_series, l.reference_series);
        }
        let biases = |b: &FeatureBank| b.features.iter().map(|f| f.bias).collect::<Vec<_>>();
        assert_ne!(biases(&permuted), biases(&legacy));
    }

    #[test]
    fn pinned_convolution_gives_same_bias_multiset_and_sorted_legacy() {
        // With the reference series and kernel pinned, every feature
        // quantizes the same convolution output.
        let ds = noise_dataset(1, 300, 5);
        let w = [2.0, -1.0, -1.0, 2.0, -1.0, -1.0, 2.0, -1.0, -1.0];
        let conv = dilated_convolve(ds.series(0), &w, 3).unwrap();
        let base = BankConfig { num_features: 50, seed: 8, ..Default::default() };
        let bias_of = |mode| {
            let cfg = BankConfig { bias_mode: mode, ..base.clone() };
            quantile_levels(&cfg)
                .unwrap()
                .into_iter()
                .map(|l| empirical_quantile(&mut conv.clone(), l))
                .collect::<Vec<_>>()
        };
        let legacy = bias_of(BiasMode::LegacySorted);
        let permuted = bias_of(BiasMode::PermutedQuantiles);
        assert!(legacy.windows(2).all(|p| p[0] <= p[1]));
        assert_ne!(legacy, permuted);
        let mut sorted = permuted.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, legacy);
    }

    #[test]
    fn config_and_data_errors() {
        let ds = noise_dataset(2, 9, 6);
        assert!(matches!(fit_bank(&BankConfig::default(), &ds), Err(Error::DatasetTooShort { .. })));
        let ds = noise_dataset(2, 40, 6);
        for bad in [
            BankConfig { num_features: 0, ..Default::default() },
            BankConfig { kernel_length: 8, ..Default::default() },
            BankConfig { kernel_length: 1, ..Default::default() },
        ] {
            assert!(matches!(fit_bank(&bad, &ds), Err(Error::Config(_))));
        }
    }

    #[test]
    fn bank_json_round_trip() {
        let ds = noise_dataset(3, 64, 7);
        let bank = fit_bank(&BankConfig { num_features: 10, ..Default::default() }, &ds).unwrap();
        let json = serde_json::to_string(&bank).unwrap();
        let back: FeatureBank = serde_json::from_str(&json).unwrap();
        assert_eq!(back, bank);
    }
}
