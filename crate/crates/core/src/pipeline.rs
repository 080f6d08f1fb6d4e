//! Bank, transform, PCA and K-means composed into one clustering run, plus
//! the restart protocol that keeps the best of several runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_fit_with, KMeansParams};
use crate::dataio::BankArtifact;
use crate::kernelbank::{fit_bank_with, BankConfig, FeatureBank};
use crate::metrics::ari;
use crate::par::{self, Exec};
use crate::reduce::{fit_pca_rows, project_rows, PcaModel, DEFAULT_THRESHOLD};
use crate::rng::derive_stream;
use crate::transform::{transform_dataset_with, FeatureMatrix, TimeSeriesDataset};
use crate::{Error, Result};

pub const DEFAULT_RUNS: usize = 10;
const KMEANS_LABEL: &str = "kmeans-init";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub bank: BankConfig,
    pub pca_enabled: bool,
    pub pca_threshold: f64,
    pub k: usize,
    pub runs: usize,
    pub kmeans: KMeansParams,
    /// Fit the bank once from the base seed and vary only the K-means
    /// initialisation across runs.
    pub fixed_bank: bool,
}

impl PipelineConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bank.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pca_threshold) {
            return Err(Error::Config(format!(
                "pca threshold must lie in [0, 1], got {}",
                self.pca_threshold
            )));
        }
        if self.kmeans.max_iter == 0 || self.kmeans.tol.is_nan() || self.kmeans.tol < 0.0 {
            return Err(Error::Config("k-means needs max_iter >= 1 and tol >= 0".into()));
        }
        Ok(())
    }

    /// Short label for result files, e.g. `500-9` or `500-9-nopca`.
    pub fn tag(&self) -> String {
        let mut tag = self.bank.tag();
        if !self.pca_enabled {
            tag.push_str("-nopca");
        }
        tag
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bank: BankConfig::default(),
            pca_enabled: true,
            pca_threshold: DEFAULT_THRESHOLD,
            k: 2,
            runs: DEFAULT_RUNS,
            kmeans: KMeansParams::default(),
            fixed_bank: false,
        }
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub bank_ms: f64,
    pub transform_ms: f64,
    pub pca_ms: f64,
    pub kmeans_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.bank_ms + self.transform_ms + self.pca_ms + self.kmeans_ms
    }

    fn add(&mut self, other: &StageTimings) {
        self.bank_ms += other.bank_ms;
        self.transform_ms += other.transform_ms;
        self.pca_ms += other.pca_ms;
        self.kmeans_ms += other.kmeans_ms;
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub assignments: Vec<usize>,
    pub ari: Option<f64>,
    pub retained_dims: usize,
    pub inertia: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub base_seed: u64,
    pub runs: Vec<RunResult>,
    pub best_ari: Option<f64>,
    /// Retained dimensions of the run with the best ARI (or the first run
    /// for unlabelled data).
    pub retained_dims: usize,
    /// Stage timings summed over runs.
    pub timings: StageTimings,
    pub wall_ms: f64,
}

impl RunOutcome {
    pub fn ari_runs(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.ari).collect()
    }

    pub fn best_run(&self) -> &RunResult {
        self.runs
            .iter()
            .reduce(|best, r| match (best.ari, r.ari) {
                (Some(b), Some(a)) if a > b => r,
                _ => best,
            })
            .expect("at least one run")
    }
}

fn check_dataset(dataset: &TimeSeriesDataset, config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    if config.k > dataset.n_series() {
        return Err(Error::Infeasible(format!(
            "k = {} exceeds the {} series of {:?}",
            config.k,
            dataset.n_series(),
            dataset.name
        )));
    }
    Ok(())
}

/// A pre-fitted transform shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct Prefit<'a> {
    pub bank: &'a FeatureBank,
    pub pca: Option<&'a PcaModel>,
}

impl<'a> From<&'a BankArtifact> for Prefit<'a> {
    fn from(a: &'a BankArtifact) -> Self {
        Prefit {
            bank: &a.bank,
            pca: a.pca.as_ref(),
        }
    }
}

/// Bank and feature matrix for `seed`: the stochastic half of a run.
pub fn features(dataset: &TimeSeriesDataset, bank: &BankConfig, seed: u64, exec: Exec) -> Result<(FeatureBank, FeatureMatrix)> {
    let config = BankConfig { seed, ..bank.clone() };
    let fitted = fit_bank_with(&config, dataset, exec)?;
    let matrix = transform_dataset_with(dataset, &fitted, exec)?;
    Ok((fitted, matrix))
}

pub fn run_once(dataset: &TimeSeriesDataset, config: &PipelineConfig, seed: u64) -> Result<RunResult> {
    run_once_with(dataset, config, seed, None, Exec::default())
}

/// One run: fit the bank from `seed` (unless `prefit` supplies one),
/// transform, reduce with PCA (or keep the raw features), then K-means with
/// the initialisation stream of `seed`.
pub fn run_once_with(
    dataset: &TimeSeriesDataset,
    config: &PipelineConfig,
    seed: u64,
    prefit: Option<Prefit<'_>>,
    exec: Exec,
) -> Result<RunResult> {
    check_dataset(dataset, config)?;
    run_checked(dataset, config, seed, prefit, exec)
}

fn run_checked(
    dataset: &TimeSeriesDataset,
    config: &PipelineConfig,
    seed: u64,
    prefit: Option<Prefit<'_>>,
    exec: Exec,
) -> Result<RunResult> {
    let mut timings = StageTimings::default();
    let start = Instant::now();
    let owned_bank;
    let bank = match prefit {
        Some(p) => p.bank,
        None => {
            let cfg = BankConfig {
                seed,
                ..config.bank.clone()
            };
            owned_bank = fit_bank_with(&cfg, dataset, exec)?;
            &owned_bank
        }
    };
    timings.bank_ms = elapsed_ms(start);

    let start = Instant::now();
    let features = transform_dataset_with(dataset, bank, exec)?;
    timings.transform_ms = elapsed_ms(start);

    let start = Instant::now();
    let (n, f) = (features.n_rows(), features.n_cols());
    let (points, dim) = if config.pca_enabled {
        let owned_pca;
        let pca = match prefit.and_then(|p| p.pca) {
            Some(model) => model,
            None => {
                owned_pca = fit_pca_rows(features.values(), n, f, config.pca_threshold)?;
                &owned_pca
            }
        };
        let emb = project_rows(features.values(), n, f, pca)?;
        (emb.values, emb.n_cols)
    } else {
        (features.values().to_vec(), f)
    };
    timings.pca_ms = elapsed_ms(start);

    let start = Instant::now();
    let mut stream = derive_stream(seed, KMEANS_LABEL)?;
    let model = kmeans_fit_with(&points, dim, config.k, &mut stream, &config.kmeans, exec)?;
    timings.kmeans_ms = elapsed_ms(start);

    let ari = dataset.labels().map(|l| ari(l, &model.assignments)).transpose()?;
    Ok(RunResult {
        seed,
        assignments: model.assignments,
        ari,
        retained_dims: dim,
        inertia: model.inertia,
        timings,
    })
}

pub fn run_protocol(dataset: &TimeSeriesDataset, config: &PipelineConfig, base_seed: u64) -> Result<RunOutcome> {
    run_protocol_with(dataset, config, base_seed, None, Exec::default())
}

/// Runs seeds `base_seed..base_seed + runs` (independently, possibly in
/// parallel) and keeps every result in seed order.
pub fn run_protocol_with(
    dataset: &TimeSeriesDataset,
    config: &PipelineConfig,
    base_seed: u64,
    prefit: Option<Prefit<'_>>,
    exec: Exec,
) -> Result<RunOutcome> {
    check_dataset(dataset, config)?;
    let start = Instant::now();
    let fixed;
    let prefit = match (prefit, config.fixed_bank) {
        (None, true) => {
            let cfg = BankConfig {
                seed: base_seed,
                ..config.bank.clone()
            };
            fixed = fit_bank_with(&cfg, dataset, exec)?;
            Some(Prefit { bank: &fixed, pca: None })
        }
        (p, _) => p,
    };
    let runs = par::map_range(exec, config.runs, |r| {
        let seed = base_seed.wrapping_add(r as u64);
        run_checked(dataset, config, seed, prefit, exec)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(summarize(base_seed, runs, elapsed_ms(start)))
}

fn summarize(base_seed: u64, runs: Vec<RunResult>, wall_ms: f64) -> RunOutcome {
    let mut timings = StageTimings::default();
    for r in &runs {
        timings.add(&r.timings);
    }
    let best_ari = runs.iter().filter_map(|r| r.ari).reduce(f64::max);
    let mut outcome = RunOutcome {
        base_seed,
        runs,
        best_ari,
        retained_dims: 0,
        timings,
        wall_ms,
    };
    outcome.retained_dims = outcome.best_run().retained_dims;
    outcome
}

/// Reference protocol: K-means directly on the raw series, same seeds and
/// initialisation streams as [`run_protocol`].
pub fn raw_kmeans_protocol(dataset: &TimeSeriesDataset, config: &PipelineConfig, base_seed: u64) -> Result<RunOutcome> {
    check_dataset(dataset, config)?;
    let start = Instant::now();
    let exec = Exec::default();
    let runs = (0..config.runs)
        .map(|r| {
            let seed = base_seed.wrapping_add(r as u64);
            let t = Instant::now();
            let mut stream = derive_stream(seed, KMEANS_LABEL)?;
            let model = kmeans_fit_with(dataset.values(), dataset.length(), config.k, &mut stream, &config.kmeans, exec)?;
            let ari = dataset.labels().map(|l| ari(l, &model.assignments)).transpose()?;
            Ok(RunResult {
                seed,
                assignments: model.assignments,
                ari,
                retained_dims: dataset.length(),
                inertia: model.inertia,
                timings: StageTimings {
                    kmeans_ms: elapsed_ms(t),
                    ..StageTimings::default()
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(base_seed, runs, elapsed_ms(start)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_dataset, SynthKind};

    fn blobs(seed: u64) -> TimeSeriesDataset {
        let mut s = derive_stream(seed, "noise").unwrap();
        synth_dataset(SynthKind::BlobsSine, 40, 96, 2, &mut s).unwrap()
    }

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            bank: BankConfig {
                num_features: 100,
                ..BankConfig::default()
            },
            runs: 3,
            ..PipelineConfig::new(2)
        }
    }

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.bank.num_features, 500);
        assert_eq!(c.bank.kernel_length, 9);
        assert_eq!(c.pca_threshold, 0.01);
        assert_eq!(c.runs, 10);
        assert!(c.pca_enabled && !c.fixed_bank);
        assert_eq!(c.tag(), "500-9");
    }

    #[test]
    fn run_once_is_deterministic_and_clusters_blobs() {
        let ds = blobs(1);
        let cfg = small_config();
        let a = run_once(&ds, &cfg, 5).unwrap();
        let b = run_once(&ds, &cfg, 5).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.ari, b.ari);
        assert!(a.retained_dims < 100);
        assert_eq!(a.assignments.len(), 40);
    }

    #[test]
    fn without_pca_keeps_all_features() {
        let cfg = PipelineConfig {
            pca_enabled: false,
            ..small_config()
        };
        let r = run_once(&blobs(2), &cfg, 0).unwrap();
        assert_eq!(r.retained_dims, 100);
        assert_eq!(cfg.tag(), "100-9-nopca");
    }

    #[test]
    fn protocol_reports_max_and_prefix_property() {
        let ds = blobs(3);
        let cfg = small_config();
        let out = run_protocol(&ds, &cfg, 10).unwrap();
        let aris = out.ari_runs();
        assert_eq!(aris.len(), 3);
        assert_eq!(out.best_ari, aris.iter().copied().reduce(f64::max));
        let one = run_protocol(&ds, &PipelineConfig { runs: 1, ..cfg.clone() }, 10).unwrap();
        assert_eq!(one.best_ari, Some(aris[0]));
        assert!(one.best_ari <= out.best_ari);
        assert_eq!(one.runs[0].assignments, out.runs[0].assignments);
        assert!(out.timings.total_ms() >= 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let ds = blobs(4);
        let cfg = small_config();
        let a = run_protocol_with(&ds, &cfg, 0, None, Exec::Sequential).unwrap();
        let b = run_protocol_with(&ds, &cfg, 0, None, Exec::Parallel).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.assignments, y.assignments);
        }
    }

    #[test]
    fn unlabelled_data_still_clusters() {
        let ds = blobs(5);
        let unlabelled = TimeSeriesDataset::from_flat("u", ds.values().to_vec(), ds.n_series(), None).unwrap();
        let out = run_protocol(&unlabelled, &small_config(), 0).unwrap();
        assert_eq!(out.best_ari, None);
        assert!(out.runs.iter().all(|r| r.assignments.len() == 40 && r.ari.is_none()));
    }

    #[test]
    fn fixed_bank_and_prefit() {
        let ds = blobs(6);
        let cfg = PipelineConfig {
            fixed_bank: true,
            ..small_config()
        };
        let out = run_protocol(&ds, &cfg, 7).unwrap();
        let (bank, _) = features(&ds, &cfg.bank, 7, Exec::default()).unwrap();
        let pre = run_protocol_with(&ds, &small_config(), 7, Some(Prefit { bank: &bank, pca: None }), Exec::default()).unwrap();
        for (x, y) in out.runs.iter().zip(&pre.runs) {
            assert_eq!(x.assignments, y.assignments);
        }
    }

    #[test]
    fn config_errors() {
        let ds = blobs(7);
        assert!(matches!(run_once(&ds, &PipelineConfig::new(0), 0), Err(Error::Config(_))));
        assert!(matches!(run_once(&ds, &PipelineConfig::new(41), 0), Err(Error::Infeasible(_))));
        let cfg = PipelineConfig {
            runs: 0,
            ..small_config()
        };
        assert!(matches!(run_protocol(&ds, &cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn raw_baseline_runs() {
        let ds = blobs(8);
        let out = raw_kmeans_protocol(&ds, &small_config(), 0).unwrap();
        assert_eq!(out.runs.len(), 3);
        assert_eq!(out.retained_dims, 96);
        assert!(out.best_ari.is_some());
    }
}
