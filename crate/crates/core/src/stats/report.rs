use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nonparametric::{holm_adjust, rank_row, wilcoxon_signed_rank};
use crate::{Error, Result};

/// Scores (ARI) of `k` algorithms on `N` datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub dataset_names: Vec<String>,
    pub algorithm_names: Vec<String>,
    /// `scores[dataset][algorithm]`
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(dataset_names: Vec<String>, algorithm_names: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if dataset_names.is_empty() || algorithm_names.is_empty() {
            return Err(Error::InsufficientData("score table needs a dataset and an algorithm".into()));
        }
        if scores.len() != dataset_names.len() {
            return Err(Error::Shape(format!(
                "{} score rows for {} datasets",
                scores.len(),
                dataset_names.len()
            )));
        }
        for (name, row) in dataset_names.iter().zip(&scores) {
            if row.len() != algorithm_names.len() {
                return Err(Error::Shape(format!(
                    "dataset {name:?} has {} scores for {} algorithms",
                    row.len(),
                    algorithm_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("dataset {name:?} has a missing score")));
            }
        }
        Ok(Self {
            dataset_names,
            algorithm_names,
            scores,
        })
    }

    pub fn n_datasets(&self) -> usize {
        self.dataset_names.len()
    }

    pub fn n_algorithms(&self) -> usize {
        self.algorithm_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.scores.iter().map(|r| r[j]).collect()
    }

    pub fn algorithm_index(&self, name: &str) -> Option<usize> {
        self.algorithm_names.iter().position(|a| a == name)
    }

    /// Reads `dataset,<algorithm>,<algorithm>,...` CSV. Errors name the
    /// offending line.
    pub fn from_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::Parse {
                path: source.into(),
                line: 1,
                column: 1,
                message: "expected a header `dataset,<algorithm>,...`".into(),
            });
        }
        let algorithms: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut names = Vec::new();
        let mut scores = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != header.len() {
                return Err(Error::Parse {
                    path: source.into(),
                    line,
                    column: record.len().min(header.len()) + 1,
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            names.push(record[0].to_owned());
            let row = record
                .iter()
                .skip(1)
                .enumerate()
                .map(|(j, field)| {
                    field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                        path: source.into(),
                        line,
                        column: j + 2,
                        message: format!("invalid score {field:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            scores.push(row);
        }
        Self::new(names, algorithms, scores)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for a in &self.algorithm_names {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for (name, row) in self.dataset_names.iter().zip(&self.scores) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Dataset |");
        for a in &self.algorithm_names {
            let _ = write!(out, " {a} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.n_algorithms()));
        out.push('\n');
        for (name, row) in self.dataset_names.iter().zip(&self.scores) {
            let _ = write!(out, "| {name} |");
            for v in row {
                let _ = write!(out, " {v:.3} |");
            }
            out.push('\n');
        }
        out
    }

    /// Rows joined on dataset name; only datasets present in both are kept,
    /// in the order of `self`.
    pub fn join(&self, other: &ScoreTable) -> Result<ScoreTable> {
        let mut names = Vec::new();
        let mut rows = Vec::new();
        for (name, row) in self.dataset_names.iter().zip(&self.scores) {
            if let Some(i) = other.dataset_names.iter().position(|n| n == name) {
                names.push(name.clone());
                rows.push(row.iter().chain(&other.scores[i]).copied().collect());
            }
        }
        let algorithms = self.algorithm_names.iter().chain(&other.algorithm_names).cloned().collect();
        ScoreTable::new(names, algorithms, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub mean_rank: f64,
    pub mean_score: f64,
    /// Datasets where this algorithm alone has the best score.
    pub wins: usize,
}

/// Mean rank, mean score and win count per algorithm, in table order.
/// A tie for the best score is a win for nobody.
pub fn aggregate(table: &ScoreTable) -> Vec<AlgorithmSummary> {
    let k = table.n_algorithms();
    let n = table.n_datasets() as f64;
    let mut rank_sum = vec![0.0; k];
    let mut score_sum = vec![0.0; k];
    let mut wins = vec![0usize; k];
    for row in &table.scores {
        for (j, r) in rank_row(row).into_iter().enumerate() {
            rank_sum[j] += r;
            score_sum[j] += row[j];
        }
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let holders: Vec<usize> = (0..k).filter(|&j| row[j] == best).collect();
        if let [only] = holders[..] {
            wins[only] += 1;
        }
    }
    (0..k)
        .map(|j| AlgorithmSummary {
            algorithm: table.algorithm_names[j].clone(),
            mean_rank: rank_sum[j] / n,
            mean_score: score_sum[j] / n,
            wins: wins[j],
        })
        .collect()
}

/// Markdown summary sorted by mean rank: `Algorithm | Mean rank | Mean ARI |
/// Winning count`.
pub fn render_summary_markdown(rows: &[AlgorithmSummary]) -> String {
    let mut sorted: Vec<&AlgorithmSummary> = rows.iter().collect();
    sorted.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank));
    let mut out = String::from("| Algorithm | Mean rank | Mean ARI | Winning count |\n|---|---:|---:|---:|\n");
    for r in sorted {
        let _ = writeln!(
            out,
            "| {} | {:.2} | {:.3} | {} |",
            r.algorithm, r.mean_rank, r.mean_score, r.wins
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub algorithm_1: String,
    pub algorithm_2: String,
    pub p_value: f64,
    pub holm_alpha: f64,
    pub significant: bool,
}

/// Pairwise Wilcoxon comparisons with Holm's correction, sorted by p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    /// Set when every comparison is against one control algorithm.
    pub control: Option<String>,
    pub rows: Vec<PairwiseRow>,
}

fn build_report(table: &ScoreTable, pairs: Vec<(usize, usize)>, control: Option<String>, alpha: f64) -> Result<PairwiseReport> {
    let p_values = pairs
        .iter()
        .map(|&(a, b)| Ok(wilcoxon_signed_rank(&table.column(a), &table.column(b), alpha)?.p_value))
        .collect::<Result<Vec<f64>>>()?;
    let rows = holm_adjust(&p_values, alpha)?
        .into_iter()
        .map(|d| {
            let (a, b) = pairs[d.index];
            let (a, b) = (&table.algorithm_names[a], &table.algorithm_names[b]);
            let (first, second) = if control.is_some() || a <= b { (a, b) } else { (b, a) };
            PairwiseRow {
                algorithm_1: first.clone(),
                algorithm_2: second.clone(),
                p_value: d.p_value,
                holm_alpha: d.threshold,
                significant: d.significant,
            }
        })
        .collect();
    Ok(PairwiseReport { control, rows })
}

/// Every pair of algorithms.
pub fn pairwise_all(table: &ScoreTable, alpha: f64) -> Result<PairwiseReport> {
    let k = table.n_algorithms();
    let pairs = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    build_report(table, pairs, None, alpha)
}

/// `control` against each other algorithm.
pub fn pairwise_control(table: &ScoreTable, control: usize, alpha: f64) -> Result<PairwiseReport> {
    if control >= table.n_algorithms() {
        return Err(Error::Config(format!("no algorithm with index {control}")));
    }
    let pairs = (0..table.n_algorithms()).filter(|&j| j != control).map(|j| (control, j)).collect();
    build_report(table, pairs, Some(table.algorithm_names[control].clone()), alpha)
}

/// Scientific notation with six decimals and a two-digit exponent,
/// e.g. `2.939982e-08`.
pub fn format_p_value(p: f64) -> String {
    let s = format!("{p:.6e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

impl PairwiseReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm_1,algorithm_2,p_value,holm_alpha,significant\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&r.algorithm_1),
                csv_field(&r.algorithm_2),
                r.p_value,
                r.holm_alpha,
                r.significant
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        match &self.control {
            Some(_) => {
                out.push_str("| Algorithm | p-value | alpha w/ Holm correction |\n|---|---:|---:|\n");
                for r in &self.rows {
                    let _ = writeln!(out, "| {} | {:.6} | {:.6} |", r.algorithm_2, r.p_value, r.holm_alpha);
                }
            }
            None => {
                out.push_str("| Algorithm 1 | Algorithm 2 | p value | Significant difference |\n|---|---|---:|:---:|\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} |",
                        r.algorithm_1,
                        r.algorithm_2,
                        format_p_value(r.p_value),
                        if r.significant { "True" } else { "False" }
                    );
                }
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
