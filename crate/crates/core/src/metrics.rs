//! Partition agreement: contingency table, Rand index and adjusted Rand index.
//!
//! Pair counts `C(m, 2)` are accumulated in `u128`, so datasets with millions
//! of series do not overflow.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Row-major `rows x cols`.
    pub counts: Vec<u64>,
    pub rows: usize,
    pub cols: usize,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScore {
    pub ari: f64,
    pub ri: f64,
}

fn densify<T: Ord + Clone>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for l in labels {
        map.entry(l.clone()).or_insert(0usize);
    }
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

pub fn contingency<A: Ord + Clone, B: Ord + Clone>(labels_a: &[A], labels_b: &[B]) -> Result<ContingencyTable> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Shape(format!(
            "label vectors have lengths {} and {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.len() < 2 {
        return Err(Error::InsufficientData("pair counting needs at least 2 items".into()));
    }
    let (a, rows) = densify(labels_a);
    let (b, cols) = densify(labels_b);
    let mut counts = vec![0u64; rows * cols];
    let mut row_sums = vec![0u64; rows];
    let mut col_sums = vec![0u64; cols];
    for (&i, &j) in a.iter().zip(&b) {
        counts[i * cols + j] += 1;
        row_sums[i] += 1;
        col_sums[j] += 1;
    }
    Ok(ContingencyTable {
        counts,
        rows,
        cols,
        row_sums,
        col_sums,
        n: a.len() as u64,
    })
}

#[inline]
fn pairs(m: u64) -> u128 {
    let m = u128::from(m);
    m * m.saturating_sub(1) / 2
}

struct PairCounts {
    index: u128,
    rows: u128,
    cols: u128,
    total: u128,
}

impl ContingencyTable {
    fn pair_counts(&self) -> PairCounts {
        PairCounts {
            index: self.counts.iter().map(|&c| pairs(c)).sum(),
            rows: self.row_sums.iter().map(|&c| pairs(c)).sum(),
            cols: self.col_sums.iter().map(|&c| pairs(c)).sum(),
            total: pairs(self.n),
        }
    }

    /// Both partitions are the same up to relabeling.
    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && self.counts.iter().filter(|&&c| c > 0).count() == self.rows
    }
}

pub fn adjusted_rand_index(table: &ContingencyTable) -> Result<f64> {
    if table.n < 2 {
        return Err(Error::InsufficientData("pair counting needs at least 2 items".into()));
    }
    let p = table.pair_counts();
    // max == expected  <=>  (rows + cols) * total == 2 * rows * cols
    if (p.rows + p.cols) * p.total == 2 * p.rows * p.cols {
        return Ok(if table.is_identity() { 1.0 } else { 0.0 });
    }
    let total = p.total as f64;
    let expected = p.rows as f64 * p.cols as f64 / total;
    let max = 0.5 * (p.rows as f64 + p.cols as f64);
    Ok((p.index as f64 - expected) / (max - expected))
}

pub fn rand_index(table: &ContingencyTable) -> Result<f64> {
    if table.n < 2 {
        return Err(Error::InsufficientData("pair counting needs at least 2 items".into()));
    }
    let p = table.pair_counts();
    // agreeing pairs = together in both + apart in both
    let agree = p.total + 2 * p.index - p.rows - p.cols;
    Ok(agree as f64 / p.total as f64)
}

/// ARI of two labelings.
pub fn ari<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<f64> {
    adjusted_rand_index(&contingency(a, b)?)
}

pub fn score<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<ClusteringScore> {
    let t = contingency(a, b)?;
    Ok(ClusteringScore {
        ari: adjusted_rand_index(&t)?,
        ri: rand_index(&t)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn contingency_fixtures() {
        let t = contingency(&[0, 1], &[1, 0]).unwrap();
        assert_eq!(t.counts, vec![0, 1, 1, 0]);
        let t = contingency(&[3, 3, 7, 7], &[3, 3, 7, 7]).unwrap();
        assert_eq!(t.counts, vec![2, 0, 0, 2]);
        let t = contingency(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!((t.rows, t.cols), (2, 3));
        assert_eq!(t.counts, vec![2, 1, 0, 0, 1, 2]);
        assert_eq!(t.row_sums, vec![3, 3]);
        assert_eq!(t.col_sums, vec![2, 2, 2]);
    }

    #[test]
    fn score_fixtures() {
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        let s = score(&a, &b).unwrap();
        assert!((s.ari - 0.242_424_242_424_242_4).abs() < 1e-12);
        assert!((s.ri - 10.0 / 15.0).abs() < 1e-15);
        assert_eq!(score(&a, &a).unwrap(), ClusteringScore { ari: 1.0, ri: 1.0 });
        assert_eq!(rand_index(&contingency(&[0, 1], &[1, 0]).unwrap()).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(ari(&[0, 1, 2, 3], &[5, 6, 7, 8]).unwrap(), 1.0);
        assert_eq!(ari(&[4, 4, 4], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[-2, 9, 9], &[0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(contingency(&[0, 1], &[0]), Err(Error::Shape(_))));
        assert!(matches!(contingency(&[0], &[0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn huge_counts_do_not_overflow() {
        let t = ContingencyTable {
            counts: vec![1_000_000, 0, 0, 1_000_000],
            rows: 2,
            cols: 2,
            row_sums: vec![1_000_000, 1_000_000],
            col_sums: vec![1_000_000, 1_000_000],
            n: 2_000_000,
        };
        assert_eq!(adjusted_rand_index(&t).unwrap(), 1.0);
        let t = ContingencyTable {
            counts: vec![600_000, 400_000, 400_000, 600_000],
            ..t
        };
        let v = adjusted_rand_index(&t).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_relabel_invariant(
            pairs in prop::collection::vec((0u8..4, 0u8..4), 2..40),
            shift in 1u8..10,
        ) {
            let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let ab = score(&a, &b).unwrap();
            let ba = score(&b, &a).unwrap();
            prop_assert!((ab.ari - ba.ari).abs() < 1e-12);
            prop_assert_eq!(ab.ri, ba.ri);
            // reversed + shifted labels are a relabeling
            let a2: Vec<u8> = a.iter().map(|&x| 3 - x + shift).collect();
            let r = score(&a2, &b).unwrap();
            prop_assert!((r.ari - ab.ari).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab.ari));
            prop_assert!((0.0..=1.0).contains(&ab.ri));
        }
    }
}
