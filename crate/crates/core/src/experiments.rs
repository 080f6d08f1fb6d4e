//! Reproducible studies: the white-noise autocorrelation diagnostic, the
//! hyperparameter grid, the scalability sweeps and the multi-dataset
//! benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{synth_dataset, ResultRecord, SynthKind};
use crate::kernelbank::{BankConfig, BiasMode};
use crate::par::Exec;
use crate::pipeline::{features, run_once_with, run_protocol_with, PipelineConfig, Prefit};
use crate::rng::derive_stream;
use crate::stats::{
    aggregate, format_p_value, friedman_test, ljung_box, pairwise_all, pairwise_control, render_summary_markdown,
    AlgorithmSummary, PairwiseReport, ScoreTable, TestResult,
};
use crate::transform::TimeSeriesDataset;
use crate::{Error, Result};

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    pub seeds: usize,
    pub base_seed: u64,
    pub n_series: usize,
    pub length: usize,
    pub max_lag: usize,
    pub alpha: f64,
    pub bank: BankConfig,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            seeds: 100,
            base_seed: 0,
            n_series: 10,
            length: 500,
            max_lag: 20,
            alpha: 0.05,
            bank: BankConfig::default(),
        }
    }
}

/// Ljung-Box rejection rate per lag for both bias modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub tests_per_lag: usize,
    pub legacy: Vec<f64>,
    pub permuted: Vec<f64>,
}

impl DiagnoseReport {
    pub fn mean_legacy(&self) -> f64 {
        mean(&self.legacy)
    }

    pub fn mean_permuted(&self) -> f64 {
        mean(&self.permuted)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,legacy_rejection_rate,permuted_rejection_rate\n");
        for (h, (l, p)) in self.legacy.iter().zip(&self.permuted).enumerate() {
            let _ = writeln!(out, "{},{l},{p}", h + 1);
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "Ljung-Box rejections on white noise ({} tests per lag)\n\n| Lag | Legacy sorted | Permuted |\n|---:|---:|---:|\n",
            self.tests_per_lag
        );
        for (h, (l, p)) in self.legacy.iter().zip(&self.permuted).enumerate() {
            let _ = writeln!(out, "| {} | {l:.3} | {p:.3} |", h + 1);
        }
        let _ = writeln!(out, "| mean | {:.3} | {:.3} |", self.mean_legacy(), self.mean_permuted());
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Transforms white noise in both bias modes and runs Ljung-Box on each
/// series' feature vector, read in feature-index order.
pub fn diagnose(config: &DiagnoseConfig, exec: Exec) -> Result<DiagnoseReport> {
    if config.seeds == 0 || config.n_series == 0 {
        return Err(Error::Config("diagnose needs at least one seed and one series".into()));
    }
    let lags = config.max_lag;
    let mut counts = [vec![0usize; lags], vec![0usize; lags]];
    for s in 0..config.seeds as u64 {
        let seed = config.base_seed.wrapping_add(s);
        let mut noise = derive_stream(seed, "noise")?;
        let ds = synth_dataset(SynthKind::WhiteNoise, config.n_series, config.length, 1, &mut noise)?;
        for (mode, count) in [BiasMode::LegacySorted, BiasMode::PermutedQuantiles].into_iter().zip(counts.iter_mut()) {
            let bank = BankConfig {
                bias_mode: mode,
                ..config.bank.clone()
            };
            let (_, features) = features(&ds, &bank, seed, exec)?;
            for i in 0..features.n_rows() {
                let tests = match ljung_box(features.row(i), lags, config.alpha) {
                    Ok(t) => t,
                    // a constant feature vector has no autocorrelation to find
                    Err(Error::DegenerateData(_)) => continue,
                    Err(e) => return Err(e),
                };
                for (c, t) in count.iter_mut().zip(&tests) {
                    *c += usize::from(t.rejected);
                }
            }
        }
    }
    let total = config.seeds * config.n_series;
    let rate = |c: &[usize]| c.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(DiagnoseReport {
        tests_per_lag: total,
        legacy: rate(&counts[0]),
        permuted: rate(&counts[1]),
    })
}

// ---------------------------------------------------------------- tune

pub const DEFAULT_TUNE_KERNELS: [usize; 5] = [100, 500, 1000, 5000, 10000];
pub const DEFAULT_TUNE_LENGTHS: [usize; 4] = [7, 9, 11, 13];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    /// One column per grid cell, named `kernels-length`.
    pub scores: ScoreTable,
    /// Sorted by mean rank.
    pub summary: Vec<AlgorithmSummary>,
}

impl TuneReport {
    pub fn to_markdown(&self) -> String {
        render_summary_markdown(&self.summary)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,mean_rank,mean_ari,wins\n");
        for s in &self.summary {
            let _ = writeln!(out, "{},{},{},{}", s.algorithm, s.mean_rank, s.mean_score, s.wins);
        }
        out
    }
}

fn labelled_k(ds: &TimeSeriesDataset) -> Result<usize> {
    ds.n_classes()
        .ok_or_else(|| Error::Config(format!("dataset {:?} has no labels to score against", ds.name)))
}

/// Best-of-protocol ARI of every (kernels, length) cell on every dataset.
pub fn tune(
    datasets: &[TimeSeriesDataset],
    kernels: &[usize],
    lengths: &[usize],
    base: &PipelineConfig,
    seed: u64,
    exec: Exec,
) -> Result<TuneReport> {
    if kernels.is_empty() || lengths.is_empty() {
        return Err(Error::Config("tune grid is empty".into()));
    }
    if datasets.is_empty() {
        return Err(Error::Config("tune needs at least one dataset".into()));
    }
    let cells: Vec<BankConfig> = kernels
        .iter()
        .flat_map(|&f| {
            lengths.iter().map(move |&l| BankConfig {
                num_features: f,
                kernel_length: l,
                ..base.bank.clone()
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let k = labelled_k(ds)?;
        let row = cells
            .iter()
            .map(|bank| {
                let cfg = PipelineConfig {
                    bank: bank.clone(),
                    k,
                    ..base.clone()
                };
                let out = run_protocol_with(ds, &cfg, seed, None, exec)?;
                Ok(out.best_ari.expect("labelled dataset"))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let scores = ScoreTable::new(
        datasets.iter().map(|d| d.name.clone()).collect(),
        cells.iter().map(BankConfig::tag).collect(),
        rows,
    )?;
    let mut summary = aggregate(&scores);
    summary.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank));
    Ok(TuneReport { scores, summary })
}

// ---------------------------------------------------------------- scale

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Series count of the length sweep.
    pub length_sweep_series: usize,
    pub lengths: Vec<usize>,
    /// Series length of the size sweep.
    pub size_sweep_length: usize,
    pub sizes: Vec<usize>,
    /// Each point is timed this many times and the fastest kept.
    pub repeats: usize,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            length_sweep_series: 100,
            lengths: (0..7).map(|i| 1000 << i).collect(),
            size_sweep_length: 600,
            sizes: (0..6).map(|i| 500 << i).collect(),
            repeats: 1,
            seed: 0,
            pipeline: PipelineConfig {
                runs: 1,
                ..PipelineConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub parameter: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub length_sweep: Vec<ScalePoint>,
    pub length_slope: f64,
    pub size_sweep: Vec<ScalePoint>,
    pub size_slope: f64,
}

impl ScaleReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,parameter,millis\n");
        for (name, points) in [("length", &self.length_sweep), ("size", &self.size_sweep)] {
            for p in points {
                let _ = writeln!(out, "{name},{},{:.3}", p.parameter, p.millis);
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for (title, points, slope) in [
            ("Series length", &self.length_sweep, self.length_slope),
            ("Number of series", &self.size_sweep, self.size_slope),
        ] {
            let _ = writeln!(out, "| {title} | Time (ms) |\n|---:|---:|");
            for p in points {
                let _ = writeln!(out, "| {} | {:.1} |", p.parameter, p.millis);
            }
            let _ = writeln!(out, "\nlog-log slope: {slope:.3}\n");
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[ScalePoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("a slope needs two points".into()));
    }
    if points.iter().any(|p| p.parameter == 0 || p.millis.is_nan() || p.millis <= 0.0) {
        return Err(Error::Domain("log-log fit needs positive values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.parameter as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.millis.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("all sweep parameters are equal".into()));
    }
    Ok(sxy / sxx)
}

fn time_point(n: usize, length: usize, config: &ScaleConfig, exec: Exec) -> Result<ScalePoint> {
    let mut stream = derive_stream(config.seed, "noise")?;
    let k = config.pipeline.k;
    let ds = synth_dataset(SynthKind::BlobsSine, n, length, k, &mut stream)?;
    let mut best = f64::INFINITY;
    for _ in 0..config.repeats.max(1) {
        let start = Instant::now();
        run_once_with(&ds, &config.pipeline, config.seed, None, exec)?;
        best = best.min(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(ScalePoint {
        parameter: 0,
        millis: best,
    })
}

/// Times one pipeline run per sweep point on synthetic data and fits the
/// log-log slopes.
pub fn scale(config: &ScaleConfig, exec: Exec) -> Result<ScaleReport> {
    let length_sweep = config
        .lengths
        .iter()
        .map(|&l| {
            Ok(ScalePoint {
                parameter: l,
                ..time_point(config.length_sweep_series, l, config, exec)?
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let size_sweep = config
        .sizes
        .iter()
        .map(|&n| {
            Ok(ScalePoint {
                parameter: n,
                ..time_point(n, config.size_sweep_length, config, exec)?
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleReport {
        length_slope: log_log_slope(&length_sweep)?,
        size_slope: log_log_slope(&size_sweep)?,
        length_sweep,
        size_sweep,
    })
}

// ---------------------------------------------------------------- benchmark

pub const ALGORITHM_NAME: &str = "R-Clustering";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub records: Vec<ResultRecord>,
    pub scores: ScoreTable,
    pub summary: Vec<AlgorithmSummary>,
    /// Present when the table has at least two algorithms.
    pub friedman: Option<TestResult>,
    pub control: Option<PairwiseReport>,
    pub pairwise: Option<PairwiseReport>,
}

impl BenchmarkReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("## Scores\n\n");
        out.push_str(&self.scores.to_markdown());
        out.push_str("\n## Summary\n\n");
        out.push_str(&render_summary_markdown(&self.summary));
        if let Some(f) = &self.friedman {
            let _ = writeln!(
                out,
                "\n## Friedman test\n\nstatistic = {:.4}, p = {}, rejected = {}",
                f.statistic,
                format_p_value(f.p_value),
                f.rejected
            );
        }
        if let Some(c) = &self.control {
            out.push_str("\n## Control comparisons\n\n");
            out.push_str(&c.to_markdown());
        }
        if let Some(p) = &self.pairwise {
            out.push_str("\n## Pairwise comparisons\n\n");
            out.push_str(&p.to_markdown());
        }
        out
    }
}

/// Runs the protocol on every dataset (k = its class count), then compares
/// against optional external score columns.
pub fn benchmark(
    datasets: &[TimeSeriesDataset],
    base: &PipelineConfig,
    seed: u64,
    external: Option<&ScoreTable>,
    prefit: Option<Prefit<'_>>,
    alpha: f64,
    exec: Exec,
) -> Result<BenchmarkReport> {
    if datasets.is_empty() {
        return Err(Error::Config("benchmark needs at least one dataset".into()));
    }
    let mut records = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let cfg = PipelineConfig {
            k: labelled_k(ds)?,
            ..base.clone()
        };
        let out = run_protocol_with(ds, &cfg, seed, prefit, exec)?;
        records.push(ResultRecord {
            dataset: ds.name.clone(),
            config: cfg.tag(),
            seed,
            runs: cfg.runs,
            ari_runs: out.ari_runs(),
            best_ari: out.best_ari,
            wall_ms: out.wall_ms,
            retained_dims: out.retained_dims,
        });
    }
    let own = ScoreTable::new(
        records.iter().map(|r| r.dataset.clone()).collect(),
        vec![ALGORITHM_NAME.to_owned()],
        records.iter().map(|r| vec![r.best_ari.expect("labelled dataset")]).collect(),
    )?;
    let scores = match external {
        Some(ext) => own.join(ext)?,
        None => own,
    };
    let summary = aggregate(&scores);
    let (friedman, control, pairwise) = if scores.n_algorithms() >= 2 && scores.n_datasets() >= 2 {
        (
            Some(friedman_test(&scores.scores, alpha)?),
            Some(pairwise_control(&scores, 0, alpha)?),
            Some(pairwise_all(&scores, alpha)?),
        )
    } else {
        (None, None, None)
    };
    Ok(BenchmarkReport {
        records,
        scores,
        summary,
        friedman,
        control,
        pairwise,
    })
}
