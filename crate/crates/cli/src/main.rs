use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rclust::dataio::{
    load_artifact, load_ucr_tsv, read_manifest, render_results, save_artifact, BankArtifact, DatasetSource,
    MergePolicy, OutputFormat, ResultRecord,
};
use rclust::experiments::{
    benchmark, diagnose, scale, tune, DiagnoseConfig, ScaleConfig, DEFAULT_TUNE_KERNELS, DEFAULT_TUNE_LENGTHS,
};
use rclust::kernelbank::{BankConfig, BiasMode, WeightMode};
use rclust::pipeline::{features, run_protocol_with, PipelineConfig, Prefit};
use rclust::reduce::fit_pca_rows;
use rclust::rng::DEFAULT_SEED;
use rclust::stats::{ScoreTable, DEFAULT_ALPHA};
use rclust::transform::TimeSeriesDataset;
use rclust::{Error, Exec, Result};

/// Time-series clustering with random convolutional kernels, PCA and K-means.
#[derive(Parser, Debug)]
#[command(name = "rclust", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Base seed; run r of the protocol uses seed + r.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Number of kernels (features).
    #[arg(long, global = true, default_value_t = 500)]
    kernels: usize,

    /// Kernel length (odd).
    #[arg(long, global = true, default_value_t = 9)]
    kernel_length: usize,

    /// Minimum explained-variance share of a retained principal component.
    #[arg(long, global = true, default_value_t = 0.01)]
    pca_threshold: f64,

    /// Cluster the raw PPV features without PCA.
    #[arg(long, global = true)]
    no_pca: bool,

    /// Restarts of the clustering protocol; the best ARI is reported.
    #[arg(long, global = true, default_value_t = 10)]
    runs: usize,

    /// Assign bias quantiles in feature order instead of a random
    /// permutation. Reproduces the autocorrelation artefact.
    #[arg(long, global = true)]
    legacy_bias: bool,

    #[arg(long, global = true, value_enum, default_value_t = WeightArg::SumZero)]
    weight_mode: WeightArg,

    /// Which split(s) of a UCR dataset to cluster.
    #[arg(long, global = true, value_enum, default_value_t = MergeArg::Merge)]
    merge_policy: MergeArg,

    /// Z-normalize every series before the transform.
    #[arg(long, global = true)]
    znorm: bool,

    /// Fit the bank once and vary only the K-means initialisation.
    #[arg(long, global = true)]
    fixed_bank: bool,

    /// Output file (a directory for `benchmark`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    /// Save the bank fitted from --seed (and its PCA model) as JSON.
    #[arg(long, global = true)]
    save_bank: Option<PathBuf>,

    /// Reuse a saved bank (and PCA model) for every run.
    #[arg(long, global = true, conflicts_with = "save_bank")]
    load_bank: Option<PathBuf>,

    /// Write the PPV feature matrix of the first run as CSV.
    #[arg(long, global = true)]
    dump_features: Option<PathBuf>,

    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, env = "RCLUST_THREADS")]
    threads: Option<usize>,

    /// Significance level of the statistical tests.
    #[arg(long, global = true, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightArg {
    SumZero,
    Iid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MergeArg {
    Merge,
    TrainOnly,
    TestOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster one UCR dataset (TRAIN file, optionally followed by TEST).
    Cluster {
        #[arg(required = true, num_args = 1..=2)]
        data: Vec<PathBuf>,
        /// Number of clusters; defaults to the number of classes.
        #[arg(long)]
        k: Option<usize>,
        /// Dataset name for the results file (default: file stem).
        #[arg(long)]
        name: Option<String>,
    },
    /// Cluster every dataset of a manifest and compare with other algorithms.
    Benchmark {
        /// Lines of `name,train_path,test_path`.
        #[arg(long)]
        manifest: PathBuf,
        /// CSV `dataset,<algorithm>,...` of external ARI scores.
        #[arg(long)]
        external: Option<PathBuf>,
    },
    /// Ljung-Box check of the transform on white noise, in both bias modes.
    ///
    /// Each series' feature vector is read in feature-index order, so the
    /// legacy mode (quantile levels in feature order) shows the spurious
    /// autocorrelation and the permuted mode does not.
    Diagnose {
        /// Number of seeds (seed, seed + 1, ...).
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 10)]
        series: usize,
        #[arg(long, default_value_t = 500)]
        length: usize,
        #[arg(long, default_value_t = 20)]
        max_lag: usize,
    },
    /// Hyperparameter grid over kernel count and kernel length.
    Tune {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TUNE_KERNELS)]
        grid_kernels: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TUNE_LENGTHS)]
        grid_lengths: Vec<usize>,
    },
    /// Runtime against series length and number of series on synthetic data.
    Scale {
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        /// Number of series in the length sweep.
        #[arg(long, default_value_t = 100)]
        length_sweep_series: usize,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Series length in the size sweep.
        #[arg(long, default_value_t = 600)]
        size_sweep_length: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
}

impl Global {
    fn bank(&self) -> BankConfig {
        BankConfig {
            num_features: self.kernels,
            kernel_length: self.kernel_length,
            weight_mode: match self.weight_mode {
                WeightArg::SumZero => WeightMode::SumZero,
                WeightArg::Iid => WeightMode::Iid,
            },
            bias_mode: if self.legacy_bias {
                BiasMode::LegacySorted
            } else {
                BiasMode::PermutedQuantiles
            },
            seed: self.seed,
        }
    }

    fn pipeline(&self, k: usize) -> PipelineConfig {
        PipelineConfig {
            bank: self.bank(),
            pca_enabled: !self.no_pca,
            pca_threshold: self.pca_threshold,
            k,
            runs: self.runs,
            fixed_bank: self.fixed_bank,
            ..PipelineConfig::default()
        }
    }

    fn merge_policy(&self) -> MergePolicy {
        match self.merge_policy {
            MergeArg::Merge => MergePolicy::Merge,
            MergeArg::TrainOnly => MergePolicy::TrainOnly,
            MergeArg::TestOnly => MergePolicy::TestOnly,
        }
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Markdown => OutputFormat::Markdown,
        }
    }

    /// Flag checks that do not need any data.
    fn validate(&self) -> Result<()> {
        self.pipeline(1).validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to `--out` or prints.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_source(source: &DatasetSource) -> Result<TimeSeriesDataset> {
    for path in source.train_path.iter().chain(&source.test_path) {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
    }
    load_ucr_tsv(source)
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if threads.is_some_and(|n| n > 1) {
        eprintln!("warning: built without the parallel feature; --threads is ignored");
    }
    Ok(())
}

fn loaded_artifact(g: &Global) -> Result<Option<BankArtifact>> {
    g.load_bank.as_deref().map(load_artifact).transpose()
}

fn cmd_cluster(g: &Global, data: &[PathBuf], k: Option<usize>, name: Option<String>, exec: Exec) -> Result<()> {
    let source = DatasetSource {
        name,
        train_path: data.first().cloned(),
        test_path: data.get(1).cloned(),
        merge_policy: g.merge_policy(),
        z_normalize: g.znorm,
    };
    let dataset = load_source(&source)?;
    let k = match (k, dataset.n_classes()) {
        (Some(k), _) => k,
        (None, Some(c)) => c,
        (None, None) => return Err(Error::Config("unlabelled dataset: pass --k".into())),
    };
    let artifact = loaded_artifact(g)?;
    let mut config = g.pipeline(k);
    if let Some(a) = &artifact {
        config.bank = a.bank.config.clone();
    }
    config.validate()?;

    if g.save_bank.is_some() || g.dump_features.is_some() {
        let (bank, matrix) = match &artifact {
            Some(a) => (a.bank.clone(), rclust::transform::transform_dataset_with(&dataset, &a.bank, exec)?),
            None => features(&dataset, &config.bank, g.seed, exec)?,
        };
        if let Some(path) = &g.dump_features {
            write_text(path, &matrix.to_csv())?;
        }
        if let Some(path) = &g.save_bank {
            let pca = if config.pca_enabled {
                Some(fit_pca_rows(matrix.values(), matrix.n_rows(), matrix.n_cols(), config.pca_threshold)?)
            } else {
                None
            };
            save_artifact(&BankArtifact { bank, pca }, path)?;
        }
    }

    let prefit = artifact.as_ref().map(Prefit::from);
    let outcome = run_protocol_with(&dataset, &config, g.seed, prefit, exec)?;
    let record = ResultRecord {
        dataset: dataset.name.clone(),
        config: config.tag(),
        seed: g.seed,
        runs: config.runs,
        ari_runs: outcome.ari_runs(),
        best_ari: outcome.best_ari,
        wall_ms: outcome.wall_ms,
        retained_dims: outcome.retained_dims,
    };
    let best = outcome.best_ari.map_or("NA".to_owned(), |a| format!("{a:.4}"));
    let t = &outcome.timings;
    let summary = format!(
        "dataset={} n={} length={} k={k} config={} runs={} best_ari={best} retained_dims={} \
         bank_ms={:.1} transform_ms={:.1} pca_ms={:.1} kmeans_ms={:.1} wall_ms={:.1}",
        dataset.name,
        dataset.n_series(),
        dataset.length(),
        record.config,
        record.runs,
        record.retained_dims,
        t.bank_ms,
        t.transform_ms,
        t.pca_ms,
        t.kmeans_ms,
        outcome.wall_ms
    );
    let rendered = render_results(&[record], g.format())?;
    match &g.out {
        Some(path) => {
            write_text(path, &rendered)?;
            println!("{summary}");
        }
        None => {
            eprintln!("{summary}");
            print!("{rendered}");
        }
    }
    Ok(())
}

fn load_manifest(g: &Global, manifest: &Path) -> Result<Vec<TimeSeriesDataset>> {
    if !manifest.exists() {
        return Err(Error::io(
            manifest,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    read_manifest(manifest)?
        .iter()
        .map(|e| load_source(&e.source(g.merge_policy(), g.znorm)))
        .collect()
}

fn cmd_benchmark(g: &Global, manifest: &Path, external: Option<&Path>, exec: Exec) -> Result<()> {
    let datasets = load_manifest(g, manifest)?;
    let external = external
        .map(|p| {
            let file = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            ScoreTable::from_csv(file, p)
        })
        .transpose()?;
    let artifact = loaded_artifact(g)?;
    let mut base = g.pipeline(1);
    if let Some(a) = &artifact {
        base.bank = a.bank.config.clone();
    }
    let report = benchmark(
        &datasets,
        &base,
        g.seed,
        external.as_ref(),
        artifact.as_ref().map(Prefit::from),
        g.alpha,
        exec,
    )?;
    match &g.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let ext = match g.format() {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
                OutputFormat::Markdown => "md",
            };
            write_text(&dir.join(format!("results.{ext}")), &render_results(&report.records, g.format())?)?;
            write_text(&dir.join("scores.csv"), &report.scores.to_csv())?;
            write_text(&dir.join("scores.md"), &report.scores.to_markdown())?;
            write_text(&dir.join("report.md"), &report.to_markdown())?;
            if let Some(p) = &report.pairwise {
                write_text(&dir.join("pairwise.csv"), &p.to_csv())?;
            }
            if let Some(c) = &report.control {
                write_text(&dir.join("control.csv"), &c.to_csv())?;
            }
            println!("{}", rclust::stats::render_summary_markdown(&report.summary));
        }
        None => print!("{}", report.to_markdown()),
    }
    Ok(())
}

fn cmd_diagnose(g: &Global, seeds: usize, series: usize, length: usize, max_lag: usize, exec: Exec) -> Result<()> {
    let config = DiagnoseConfig {
        seeds,
        base_seed: g.seed,
        n_series: series,
        length,
        max_lag,
        alpha: g.alpha,
        bank: g.bank(),
    };
    let report = diagnose(&config, exec)?;
    let text = match g.format() {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Markdown => report.to_markdown(),
    };
    emit(g.out.as_deref(), &text)
}

fn cmd_tune(g: &Global, manifest: &Path, kernels: &[usize], lengths: &[usize], exec: Exec) -> Result<()> {
    let datasets = load_manifest(g, manifest)?;
    let report = tune(&datasets, kernels, lengths, &g.pipeline(1), g.seed, exec)?;
    let text = match g.format() {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Markdown => report.to_markdown(),
    };
    emit(g.out.as_deref(), &text)
}

struct ScaleArgs {
    lengths: Option<Vec<usize>>,
    length_sweep_series: usize,
    sizes: Option<Vec<usize>>,
    size_sweep_length: usize,
    repeats: usize,
}

fn cmd_scale(g: &Global, a: ScaleArgs, exec: Exec) -> Result<()> {
    let defaults = ScaleConfig::default();
    let config = ScaleConfig {
        length_sweep_series: a.length_sweep_series,
        lengths: a.lengths.unwrap_or(defaults.lengths),
        size_sweep_length: a.size_sweep_length,
        sizes: a.sizes.unwrap_or(defaults.sizes),
        repeats: a.repeats,
        seed: g.seed,
        pipeline: PipelineConfig { runs: 1, ..g.pipeline(2) },
    };
    let report = scale(&config, exec)?;
    let text = match g.format() {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
        OutputFormat::Markdown => report.to_markdown(),
    };
    emit(g.out.as_deref(), &text)?;
    if g.out.is_some() {
        println!(
            "length_slope={:.3} size_slope={:.3}",
            report.length_slope, report.size_slope
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    g.validate()?;
    configure_threads(g.threads)?;
    let exec = Exec::default();
    match cli.command {
        Command::Cluster { data, k, name } => cmd_cluster(g, &data, k, name, exec),
        Command::Benchmark { manifest, external } => cmd_benchmark(g, &manifest, external.as_deref(), exec),
        Command::Diagnose {
            seeds,
            series,
            length,
            max_lag,
        } => cmd_diagnose(g, seeds, series, length, max_lag, exec),
        Command::Tune {
            manifest,
            grid_kernels,
            grid_lengths,
        } => cmd_tune(g, &manifest, &grid_kernels, &grid_lengths, exec),
        Command::Scale {
            lengths,
            length_sweep_series,
            sizes,
            size_sweep_length,
            repeats,
        } => cmd_scale(
            g,
            ScaleArgs {
                lengths,
                length_sweep_series,
                sizes,
                size_sweep_length,
                repeats,
            },
            exec,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
