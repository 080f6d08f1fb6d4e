//! Lloyd's K-means with Euclidean distance.
//!
//! Centroids start at `k` distinct data points drawn uniformly (Forgy).
//! Iteration stops once no centroid moves more than `tol` times the data
//! diameter, measured as the diagonal of the bounding box. When a cluster
//! runs empty, the point farthest from its centroid (taken from a cluster
//! with at least two members) becomes the centroid of the empty cluster.

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::rng::RandomStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Inertia after every assignment step, the final one included.
    pub inertia_history: Vec<f64>,
}

impl KMeansModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
#[inline]
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

const ASSIGN_CHUNK: usize = 512;

fn assign_all(points: &[f64], centroids: &[f64], dim: usize, exec: Exec) -> (Vec<usize>, Vec<f64>) {
    let n = points.len() / dim;
    let chunks = n.div_ceil(ASSIGN_CHUNK);
    let parts = par::map_range(exec, chunks, |c| {
        let start = c * ASSIGN_CHUNK;
        let end = (start + ASSIGN_CHUNK).min(n);
        (start..end)
            .map(|i| nearest(&points[i * dim..(i + 1) * dim], centroids, dim))
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().unzip()
}

fn check_points(points: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "{} values do not form points of dimension {dim}",
            points.len()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("points must be finite".into()));
    }
    Ok(points.len() / dim)
}

fn bounding_box_diagonal(points: &[f64], dim: usize) -> f64 {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points.chunks_exact(dim) {
        for j in 0..dim {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

/// Fills empty clusters in place. Fails when the points cannot supply `k`
/// non-empty clusters.
fn repair_empty(
    points: &[f64],
    dim: usize,
    centroids: &mut [f64],
    assignments: &mut [usize],
    dists: &mut [f64],
    k: usize,
) -> Result<bool> {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    let mut repaired = false;
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut donor: Option<(usize, f64)> = None;
        for (i, &d) in dists.iter().enumerate() {
            if sizes[assignments[i]] >= 2 && d > donor.map_or(0.0, |b| b.1) {
                donor = Some((i, d));
            }
        }
        let Some((p, _)) = donor else {
            return Err(Error::Infeasible(format!(
                "fewer than {k} distinct points; cannot fill every cluster"
            )));
        };
        sizes[assignments[p]] -= 1;
        sizes[empty] += 1;
        assignments[p] = empty;
        dists[p] = 0.0;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[p * dim..(p + 1) * dim]);
        repaired = true;
    }
    Ok(repaired)
}

fn update_centroids(points: &[f64], dim: usize, assignments: &[usize], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.chunks_exact(dim).zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        let inv = 1.0 / count as f64;
        sums[c * dim..(c + 1) * dim].iter_mut().for_each(|s| *s *= inv);
    }
    sums
}

pub fn kmeans_fit(
    points: &[f64],
    dim: usize,
    k: usize,
    stream: &mut RandomStream,
    params: &KMeansParams,
) -> Result<KMeansModel> {
    kmeans_fit_with(points, dim, k, stream, params, Exec::default())
}

pub fn kmeans_fit_with(
    points: &[f64],
    dim: usize,
    k: usize,
    stream: &mut RandomStream,
    params: &KMeansParams,
    exec: Exec,
) -> Result<KMeansModel> {
    let n = check_points(points, dim)?;
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Infeasible(format!("k = {k} exceeds the {n} points")));
    }
    if params.max_iter == 0 || params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::Config("max_iter must be >= 1 and tol >= 0".into()));
    }

    let mut centroids = Vec::with_capacity(k * dim);
    for i in stream.sample_distinct(n, k)? {
        centroids.extend_from_slice(&points[i * dim..(i + 1) * dim]);
    }
    let tol = params.tol * bounding_box_diagonal(points, dim);

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let (mut assignments, mut dists) = assign_all(points, &centroids, dim, exec);
        repair_empty(points, dim, &mut centroids, &mut assignments, &mut dists, k)?;
        history.push(dists.iter().sum());
        let updated = update_centroids(points, dim, &assignments, k);
        let shift = updated
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = updated;
        iterations += 1;
        if shift <= tol {
            converged = true;
            break;
        }
    }

    // Final assignment to the final centroids; a repair places a point on
    // its own centroid, so one more pass settles any points it attracts.
    let mut assignments;
    let mut dists;
    let mut passes = 0;
    loop {
        (assignments, dists) = assign_all(points, &centroids, dim, exec);
        let repaired = repair_empty(points, dim, &mut centroids, &mut assignments, &mut dists, k)?;
        passes += 1;
        if !repaired || passes > k + 1 {
            break;
        }
    }
    let inertia: f64 = dists.iter().sum();
    history.push(inertia);

    Ok(KMeansModel {
        centroids,
        k,
        dim,
        assignments,
        inertia,
        iterations_run: iterations,
        converged,
        inertia_history: history,
    })
}

/// `restarts` fits, restart `r` initialised from
/// `derive_stream(seed + r, "kmeans-init")`; keeps the lowest inertia
/// (earliest on ties).
pub fn kmeans_best_of(
    points: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
    restarts: usize,
    params: &KMeansParams,
    exec: Exec,
) -> Result<KMeansModel> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let mut best: Option<KMeansModel> = None;
    for r in 0..restarts as u64 {
        let mut stream = crate::rng::derive_stream(seed.wrapping_add(r), "kmeans-init")?;
        let model = kmeans_fit_with(points, dim, k, &mut stream, params, exec)?;
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Nearest-centroid index per point, lowest index on ties.
pub fn assign(model: &KMeansModel, points: &[f64]) -> Result<Vec<usize>> {
    if !points.len().is_multiple_of(model.dim) {
        return Err(Error::Shape(format!(
            "points do not have the model dimension {}",
            model.dim
        )));
    }
    Ok(points
        .chunks_exact(model.dim)
        .map(|p| nearest(p, &model.centroids, model.dim).0)
        .collect())
}

/// Sum of squared distances of each point to its assigned centroid.
pub fn inertia(points: &[f64], dim: usize, centroids: &[f64], assignments: &[usize]) -> f64 {
    points
        .chunks_exact(dim)
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a * dim..(a + 1) * dim]))
        .sum()
}
