//! PCA on the PPV features with the 1% explained-variance rule.
//!
//! Columns are centered (not scaled) and decomposed with a thin SVD. A
//! component is kept while its share of the total variance is at least the
//! threshold (default 0.01); at least one component is always kept.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::transform::FeatureMatrix;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// Retained components, row-major `retained x n_features`.
    pub components: Vec<f64>,
    /// Variance along every computed component, descending.
    pub explained_variance: Vec<f64>,
    /// Share of the total variance for every computed component.
    pub explained_variance_ratio: Vec<f64>,
    pub retained: usize,
    pub threshold: f64,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        let f = self.n_features();
        &self.components[j * f..(j + 1) * f]
    }
}

/// Projected data, row-major `n_series x retained`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Embedding {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Number of leading ratios `>= threshold`, at least 1.
pub fn select_dims(ratios: &[f64], threshold: f64) -> usize {
    ratios.iter().take_while(|&&r| r >= threshold).count().max(1)
}

pub fn fit_pca(features: &FeatureMatrix) -> Result<PcaModel> {
    fit_pca_with_threshold(features, DEFAULT_THRESHOLD)
}

pub fn fit_pca_with_threshold(features: &FeatureMatrix, threshold: f64) -> Result<PcaModel> {
    fit_pca_rows(features.values(), features.n_rows(), features.n_cols(), threshold)
}

/// PCA of a row-major `n x f` matrix.
pub fn fit_pca_rows(values: &[f64], n: usize, f: usize, threshold: f64) -> Result<PcaModel> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("PCA threshold must be in [0, 1], got {threshold}")));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 series, got {n}")));
    }
    if f == 0 || values.len() != n * f {
        return Err(Error::Shape(format!("{} values for a {n}x{f} matrix", values.len())));
    }

    let mut means = vec![0.0; f];
    for row in values.chunks_exact(f) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let raw_ss: f64 = values.iter().map(|v| v * v).sum();
    let centered = DMatrix::from_fn(n, f, |i, j| values[i * f + j] - means[j]);
    let total_ss = centered.norm_squared();
    if total_ss <= 1e-20 * raw_ss || total_ss == 0.0 {
        return Err(Error::DegenerateData(
            "all series produced identical features".into(),
        ));
    }

    let svd = nalgebra::linalg::SVD::try_new(centered, false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::DegenerateData("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let denom = (n - 1) as f64;
    let explained_variance: Vec<f64> = order.iter().map(|&i| sv[i] * sv[i] / denom).collect();
    let total: f64 = explained_variance.iter().sum();
    let explained_variance_ratio: Vec<f64> = explained_variance.iter().map(|v| v / total).collect();

    let retained = select_dims(&explained_variance_ratio, threshold).min((n - 1).min(f));
    let mut components = Vec::with_capacity(retained * f);
    for &i in order.iter().take(retained) {
        let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        components.extend(row);
    }

    Ok(PcaModel {
        means,
        components,
        explained_variance,
        explained_variance_ratio,
        retained,
        threshold,
    })
}

pub fn project(features: &FeatureMatrix, model: &PcaModel) -> Result<Embedding> {
    project_rows(features.values(), features.n_rows(), features.n_cols(), model)
}

pub fn project_rows(values: &[f64], n: usize, f: usize, model: &PcaModel) -> Result<Embedding> {
    if f != model.n_features() || values.len() != n * f {
        return Err(Error::Shape(format!(
            "PCA model expects {} features, got {f}",
            model.n_features()
        )));
    }
    let r = model.retained;
    let mut out = vec![0.0; n * r];
    let mut centered = vec![0.0; f];
    for (row, dst) in values.chunks_exact(f).zip(out.chunks_exact_mut(r)) {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&model.means) {
            *c = v - m;
        }
        for (j, d) in dst.iter_mut().enumerate() {
            *d = model.component(j).iter().zip(&centered).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Embedding {
        values: out,
        n_rows: n,
        n_cols: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use rand_distr::{Distribution, StandardNormal};

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let f = rows[0].len();
        FeatureMatrix::new(rows.concat(), rows.len(), f, 0).unwrap()
    }

    fn gaussian(n: usize, f: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = derive_stream(seed, "noise").unwrap();
        (0..n)
            .map(|_| (0..f).map(|_| StandardNormal.sample(&mut s)).collect())
            .collect()
    }

    #[test]
    fn select_dims_fixtures() {
        assert_eq!(select_dims(&[0.6, 0.3, 0.05, 0.009, 0.001], 0.01), 3);
        assert_eq!(select_dims(&[1.0], 0.01), 1);
        assert_eq!(select_dims(&[0.005; 200], 0.01), 1);
    }

    #[test]
    fn single_varying_column() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![0.3, i as f64 * 0.1, 0.7]).collect();
        let model = fit_pca(&matrix(&rows)).unwrap();
        assert_eq!(model.retained, 1);
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let c = model.component(0);
        assert!(c[0].abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12 && c[2].abs() < 1e-12);
    }

    #[test]
    fn correlated_cloud_first_ratio() {
        // unit variances, correlation 0.9: eigenvalues 1.9 and 0.1
        let mut s = derive_stream(2, "noise").unwrap();
        let rho: f64 = 0.9;
        let rows: Vec<Vec<f64>> = (0..20_000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut s);
                let b: f64 = StandardNormal.sample(&mut s);
                vec![a, rho * a + (1.0 - rho * rho).sqrt() * b]
            })
            .collect();
        let model = fit_pca(&matrix(&rows)).unwrap();
        assert!((model.explained_variance_ratio[0] - 0.95).abs() < 0.005);
    }

    #[test]
    fn ratios_and_orthonormality() {
        let rows = gaussian(15, 40, 3);
        let model = fit_pca_with_threshold(&matrix(&rows), 0.0).unwrap();
        let sum: f64 = model.explained_variance_ratio.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(model.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(model.retained, 14);
        for a in 0..model.retained {
            for b in 0..model.retained {
                let dot: f64 = model.component(a).iter().zip(model.component(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_is_centered_with_component_variances() {
        let rows = gaussian(30, 8, 4);
        let fm = matrix(&rows);
        let model = fit_pca_with_threshold(&fm, 0.0).unwrap();
        let emb = project(&fm, &model).unwrap();
        assert_eq!(emb.n_cols, 8);
        for j in 0..emb.n_cols {
            let col: Vec<f64> = (0..emb.n_rows).map(|i| emb.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9);
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            let want = model.explained_variance[j];
            assert!((var - want).abs() <= 1e-6 * want);
        }
        // full-rank reconstruction
        for (i, row) in rows.iter().enumerate() {
            for (k, want) in row.iter().enumerate() {
                let rec: f64 = model.means[k]
                    + (0..8).map(|j| emb.row(i)[j] * model.component(j)[k]).sum::<f64>();
                assert!((rec - want).abs() < 1e-9);
            }
        }
        // the mean row projects to zero
        let mean_row = FeatureMatrix::new(model.means.clone(), 1, 8, 0).unwrap();
        assert!(project(&mean_row, &model).unwrap().values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sign_convention() {
        let model = fit_pca_with_threshold(&matrix(&gaussian(12, 5, 5)), 0.0).unwrap();
        for j in 0..model.retained {
            let c = model.component(j);
            let pivot = c.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn wide_matrix_retains_at_most_n_minus_one() {
        let model = fit_pca_with_threshold(&matrix(&gaussian(5, 50, 6)), 0.0).unwrap();
        assert_eq!(model.explained_variance_ratio.len(), 5);
        assert_eq!(model.retained, 4);
        assert!(model.explained_variance_ratio[4] < 1e-20);
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_pca(&matrix(&[vec![1.0, 2.0]])), Err(Error::InsufficientData(_))));
        assert!(matches!(
            fit_pca(&matrix(&[vec![0.25, 0.5], vec![0.25, 0.5], vec![0.25, 0.5]])),
            Err(Error::DegenerateData(_))
        ));
        let model = fit_pca(&matrix(&gaussian(5, 3, 7))).unwrap();
        assert!(matches!(project(&matrix(&gaussian(2, 4, 8)), &model), Err(Error::Shape(_))));
    }
}
