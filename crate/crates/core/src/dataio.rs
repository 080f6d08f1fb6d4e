//! UCR-format loading, synthetic fixtures and result files.
//!
//! A UCR TSV row is `label<TAB>v1<TAB>v2...`. Labels may be integers or
//! reals; they are densified to `0..C` in ascending order of their value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::kernelbank::FeatureBank;
use crate::reduce::PcaModel;
use crate::rng::RandomStream;
use crate::transform::TimeSeriesDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergePolicy {
    #[default]
    Merge,
    TrainOnly,
    TestOnly,
}

impl std::str::FromStr for MergePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merge" => Ok(Self::Merge),
            "train-only" => Ok(Self::TrainOnly),
            "test-only" => Ok(Self::TestOnly),
            _ => Err(Error::Config(format!(
                "merge policy must be merge, train-only or test-only, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSource {
    pub name: Option<String>,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub merge_policy: MergePolicy,
    pub z_normalize: bool,
}

impl DatasetSource {
    pub fn single(path: impl Into<PathBuf>) -> Self {
        Self {
            name: None,
            train_path: Some(path.into()),
            test_path: None,
            merge_policy: MergePolicy::Merge,
            z_normalize: false,
        }
    }

    fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let path = self.train_path.as_ref().or(self.test_path.as_ref());
        let stem = path
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        stem.trim_end_matches("_TRAIN").trim_end_matches("_TEST").to_owned()
    }
}

struct RawRows {
    labels: Vec<f64>,
    values: Vec<f64>,
    width: usize,
}

fn parse_tsv(text: &str, path: &Path) -> Result<RawRows> {
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::VariableLength {
                path: path.into(),
                line: line_no,
                expected: expected - 1,
                found: fields.len() - 1,
            });
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                column: 1,
                message: "a row needs a label and at least one value".into(),
            });
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: line_no,
                column: col + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    column: col + 1,
                    message: "NaN or infinite value (missing values are not supported)".into(),
                });
            }
            if col == 0 {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let Some(width) = width else {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            column: 1,
            message: "file is empty".into(),
        });
    };
    Ok(RawRows {
        labels,
        values,
        width: width - 1,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_ucr_tsv(source: &DatasetSource) -> Result<TimeSeriesDataset> {
    let paths: Vec<&PathBuf> = match source.merge_policy {
        MergePolicy::Merge => source.train_path.iter().chain(source.test_path.iter()).collect(),
        MergePolicy::TrainOnly => source.train_path.iter().collect(),
        MergePolicy::TestOnly => source.test_path.iter().collect(),
    };
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no input file for merge policy {:?}",
            source.merge_policy
        )));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for path in paths {
        let raw = parse_tsv(&read_file(path)?, path)?;
        let w = *width.get_or_insert(raw.width);
        if raw.width != w {
            return Err(Error::VariableLength {
                path: path.clone(),
                line: 1,
                expected: w,
                found: raw.width,
            });
        }
        labels.extend(raw.labels);
        values.extend(raw.values);
    }
    let mut distinct = labels.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let dense = labels
        .iter()
        .map(|l| distinct.binary_search_by(|d| d.total_cmp(l)).expect("label present"))
        .collect();
    let n = labels.len();
    let mut ds = TimeSeriesDataset::from_flat(source.display_name(), values, n, Some(dense))?;
    if source.z_normalize {
        ds.z_normalize();
    }
    Ok(ds)
}

/// Writes a dataset in UCR TSV form (dense labels, shortest round-trip
/// decimal rendering of each value).
pub fn write_ucr_tsv(dataset: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, row) in dataset.rows().enumerate() {
        let label = dataset.labels().map_or(0, |l| l[i]);
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Class `c` is a sinusoid with `3 + 4c` cycles over the series, random
    /// phase, plus Gaussian noise with sd 0.2.
    BlobsSine,
    WhiteNoise,
}

pub const SINE_NOISE_SD: f64 = 0.2;

/// Synthetic labelled dataset; series `i` belongs to class `i % classes`.
pub fn synth_dataset(kind: SynthKind, n: usize, length: usize, classes: usize, stream: &mut RandomStream) -> Result<TimeSeriesDataset> {
    if classes == 0 || n < classes {
        return Err(Error::Config(format!(
            "need n >= classes >= 1, got n = {n}, classes = {classes}"
        )));
    }
    if length == 0 {
        return Err(Error::Config("series length must be positive".into()));
    }
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut values = Vec::with_capacity(n * length);
    match kind {
        SynthKind::WhiteNoise => {
            let normal = Normal::new(0.0, 1.0).expect("valid sd");
            values.extend((0..n * length).map(|_| normal.sample(stream)));
        }
        SynthKind::BlobsSine => {
            let noise = Normal::new(0.0, SINE_NOISE_SD).expect("valid sd");
            for &c in &labels {
                let cycles = (3 + 4 * c) as f64;
                let phase = stream.uniform_real() * std::f64::consts::TAU;
                for t in 0..length {
                    let angle = std::f64::consts::TAU * cycles * t as f64 / length as f64 + phase;
                    values.push(angle.sin() + noise.sample(stream));
                }
            }
        }
    }
    let name = match kind {
        SynthKind::BlobsSine => "blobs-sine",
        SynthKind::WhiteNoise => "white-noise",
    };
    TimeSeriesDataset::from_flat(name, values, n, Some(labels))
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub config: String,
    pub seed: u64,
    pub runs: usize,
    pub ari_runs: Vec<f64>,
    pub best_ari: Option<f64>,
    pub wall_ms: f64,
    pub retained_dims: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(Error::Config(format!("format must be csv, json or markdown, got {s:?}"))),
        }
    }
}

pub const RESULTS_CSV_HEADER: &str = "dataset,config,seed,runs,ari_runs,best_ari,wall_ms,retained_dims";

fn join_runs(runs: &[f64]) -> String {
    runs.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Renders records. CSV columns follow [`RESULTS_CSV_HEADER`]; `ari_runs` is
/// `;`-separated and `best_ari` is empty for unlabelled data.
pub fn render_results(records: &[ResultRecord], format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(RESULTS_CSV_HEADER.split(','))?;
            for r in records {
                w.write_record([
                    r.dataset.clone(),
                    r.config.clone(),
                    r.seed.to_string(),
                    r.runs.to_string(),
                    join_runs(&r.ari_runs),
                    r.best_ari.map(|v| v.to_string()).unwrap_or_default(),
                    format!("{:.3}", r.wall_ms),
                    r.retained_dims.to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?)
                .expect("csv output is utf-8")
        }
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(records)?;
            s.push('\n');
            s
        }
        OutputFormat::Markdown => {
            let mut s = String::from(
                "| Dataset | Config | Seed | Runs | Best ARI | Wall (ms) | Retained dims |\n|---|---|---:|---:|---:|---:|---:|\n",
            );
            for r in records {
                let best = r.best_ari.map_or("-".to_owned(), |v| format!("{v:.3}"));
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {:.1} | {} |",
                    r.dataset, r.config, r.seed, r.runs, best, r.wall_ms, r.retained_dims
                );
            }
            s
        }
    })
}

pub fn write_results(records: &[ResultRecord], path: &Path, format: OutputFormat) -> Result<()> {
    let text = render_results(records, format)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_results_json(path: &Path) -> Result<Vec<ResultRecord>> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub train_path: PathBuf,
    pub test_path: Option<PathBuf>,
}

/// Parses a manifest: one `name,train_path,test_path` line per dataset
/// (`test_path` may be empty; `#` starts a comment). Relative paths are
/// resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = read_file(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                column: 1,
                message: "expected `name,train_path,test_path`".into(),
            });
        }
        out.push(ManifestEntry {
            name: fields[0].to_owned(),
            train_path: resolve(fields[1]),
            test_path: fields.get(2).filter(|s| !s.is_empty()).map(|s| resolve(s)),
        });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            column: 1,
            message: "manifest lists no datasets".into(),
        });
    }
    Ok(out)
}

impl ManifestEntry {
    pub fn source(&self, merge_policy: MergePolicy, z_normalize: bool) -> DatasetSource {
        DatasetSource {
            name: Some(self.name.clone()),
            train_path: Some(self.train_path.clone()),
            test_path: self.test_path.clone(),
            merge_policy,
            z_normalize,
        }
    }
}

/// Fitted bank plus, optionally, the PCA model fitted on its features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankArtifact {
    pub bank: FeatureBank,
    pub pca: Option<PcaModel>,
}

pub fn save_artifact(artifact: &BankArtifact, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(artifact)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_artifact(path: &Path) -> Result<BankArtifact> {
    let artifact: BankArtifact = serde_json::from_str(&read_file(path)?)?;
    artifact.bank.config.validate()?;
    if artifact.bank.features.len() != artifact.bank.config.num_features {
        return Err(Error::Shape(format!(
            "{}: bank lists {} features, config says {}",
            path.display(),
            artifact.bank.features.len(),
            artifact.bank.config.num_features
        )));
    }
    Ok(artifact)
}
