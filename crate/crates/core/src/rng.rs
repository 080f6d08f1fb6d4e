//! Deterministic, labelled random streams.
//!
//! A stream is keyed by `(seed, label)` and optionally an index, so every
//! stochastic decision in the pipeline draws from its own independent
//! sequence. Streams are plain values: a worker thread gets its own stream
//! instead of sharing a generator, which keeps results independent of the
//! schedule.
//!
//! The generator is ChaCha8. The 256-bit key is expanded from the seed and an
//! FNV-1a hash of the label with SplitMix64; the index selects the ChaCha
//! stream id.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const MAX_LABEL_LEN: usize = 32;

/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    label: String,
    index: u64,
    rng: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.len() > MAX_LABEL_LEN || !label.is_ascii() {
        return Err(Error::Config(format!(
            "stream label must be 1..={MAX_LABEL_LEN} ASCII bytes, got {label:?}"
        )));
    }
    Ok(())
}

/// Stream for `(seed, label)`.
pub fn derive_stream(seed: u64, label: &str) -> Result<RandomStream> {
    derive_indexed(seed, label, 0)
}

/// Stream for `(seed, label, index)`; used for per-item substreams such as
/// one stream per kernel.
pub fn derive_indexed(seed: u64, label: &str, index: u64) -> Result<RandomStream> {
    check_label(label)?;
    let mut state = seed ^ fnv1a(label.as_bytes()).rotate_left(17);
    // one extra round so that seeds differing in few bits diverge
    splitmix64(&mut state);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    Ok(RandomStream {
        seed,
        label: label.to_owned(),
        index,
        rng,
    })
}

impl RandomStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn uniform_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform_real(&mut self) -> f64 {
        (self.uniform_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `[0, n)`; Lemire's multiply-and-reject, no modulo bias.
    pub fn choice(&mut self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::Domain("choice over an empty range".into()));
        }
        Ok(self.below(n as u64) as usize)
    }

    fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let mut m = u128::from(self.uniform_u64()) * u128::from(n);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = u128::from(self.uniform_u64()) * u128::from(n);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement
    /// (partial Fisher-Yates).
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::Infeasible(format!(
                "cannot draw {k} distinct items from {n}"
            )));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn draws(s: &mut RandomStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.uniform_u64()).collect()
    }

    #[test]
    fn same_seed_and_label_replays() {
        let mut a = derive_stream(0, "weights").unwrap();
        let mut b = derive_stream(0, "weights").unwrap();
        assert_eq!(draws(&mut a, 100), draws(&mut b, 100));
    }

    #[test]
    fn labels_seeds_and_indices_separate_streams() {
        let first = |seed, label, idx| derive_indexed(seed, label, idx).unwrap().uniform_u64();
        assert_ne!(first(0, "weights", 0), first(0, "dilations", 0));
        assert_ne!(first(0, "weights", 0), first(1, "weights", 0));
        assert_ne!(first(0, "weights", 0), first(0, "weights", 1));

        let mut a = derive_stream(1, "weights").unwrap();
        let mut b = derive_stream(0, "weights").unwrap();
        assert_ne!(draws(&mut a, 16), draws(&mut b, 16));
    }

    #[test]
    fn label_validation() {
        assert!(matches!(derive_stream(0, ""), Err(Error::Config(_))));
        assert!(matches!(
            derive_stream(0, &"x".repeat(33)),
            Err(Error::Config(_))
        ));
        assert!(derive_stream(0, &"x".repeat(32)).is_ok());
    }

    #[test]
    fn trivial_choice_and_shuffle() {
        let mut s = derive_stream(7, "noise").unwrap();
        let mut one = vec![42];
        s.shuffle(&mut one);
        assert_eq!(one, vec![42]);
        for _ in 0..100 {
            assert_eq!(s.choice(1).unwrap(), 0);
        }
        assert!(matches!(s.choice(0), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_real_mean() {
        let mut s = derive_stream(3, "noise").unwrap();
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = s.uniform_real();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn shuffle_of_three_is_uniform() {
        let mut s = derive_stream(11, "bias-perm").unwrap();
        let trials = 60_000;
        let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
        for _ in 0..trials {
            let mut v = vec![0u8, 1, 2];
            s.shuffle(&mut v);
            *counts.entry(v).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            let f = *c as f64 / trials as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn choice_has_no_modulo_bias() {
        // 3 does not divide 2^64
        let mut s = derive_stream(5, "kmeans-init").unwrap();
        let mut counts = [0usize; 3];
        for _ in 0..90_000 {
            counts[s.choice(3).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 90_000.0 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn sample_distinct_is_distinct() {
        let mut s = derive_stream(9, "kmeans-init").unwrap();
        let mut v = s.sample_distinct(50, 20).unwrap();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 20);
        assert!(s.sample_distinct(3, 4).is_err());
    }

    #[test]
    fn clone_replays_from_the_same_point() {
        let mut s = derive_stream(2, "noise").unwrap();
        s.uniform_u64();
        let mut c = s.clone();
        assert_eq!(draws(&mut s, 10), draws(&mut c, 10));
    }
}
