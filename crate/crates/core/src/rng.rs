//! Counter-addressed random streams.
//!
//! Every stream is a ChaCha8 keystream selected by `(seed, stream_id)`; the
//! n-th draw depends only on that pair and `n`, never on what other streams
//! did. Workers, the server coin and bucketing each own separate streams.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Which consumer a stream belongs to. Combined with an index (worker id,
/// trial number, ...) into the 64-bit stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    Coin = 1,
    Sampling = 2,
    Compression = 3,
    Aggregation = 4,
    Downlink = 5,
    Data = 6,
    Trial = 7,
    Test = 8,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn for_purpose(seed: u64, purpose: Purpose, index: u64) -> Self {
        debug_assert!(index < (1 << 32));
        Self::new(seed, ((purpose as u64) << 32) | index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the keystream, in 32-bit words.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            // still consume a draw so the sequence does not depend on p
            let _ = self.uniform();
            return true;
        }
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        index::sample(&mut self.inner, n, n).into_vec()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `b` distinct indices drawn uniformly from `0..m`.
pub fn sample_without_replacement(rng: &mut RngStream, m: usize, b: usize) -> Result<Vec<usize>> {
    if b == 0 || b > m {
        return Err(Error::InvalidArgument(format!(
            "batch size {b} must satisfy 1 <= b <= m = {m}"
        )));
    }
    if b == m {
        return Ok((0..m).collect());
    }
    Ok(index::sample(&mut rng.inner, m, b).into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_same_seed_same_stream_bit_identical() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.word_pos(), b.word_pos());
    }

    #[test]
    fn test_distinct_streams_differ() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 8);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn test_streams_do_not_share_state() {
        // draining one stream must not shift another with the same seed
        let mut reference = RngStream::new(3, 1);
        let expected: Vec<u64> = (0..4).map(|_| reference.next_u64()).collect();
        let mut other = RngStream::new(3, 2);
        for _ in 0..1000 {
            other.next_u64();
        }
        let mut again = RngStream::new(3, 1);
        let got: Vec<u64> = (0..4).map(|_| again.next_u64()).collect();
        assert_eq!(expected, got);
    }

    #[test]
    fn test_full_set_forced() {
        let mut rng = RngStream::new(1, 1);
        let mut s = sample_without_replacement(&mut rng, 5, 5).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn test_distinct_indices() {
        let mut rng = RngStream::new(9, 0);
        for _ in 0..200 {
            let s = sample_without_replacement(&mut rng, 3, 2).unwrap();
            assert_eq!(s.len(), 2);
            assert_ne!(s[0], s[1]);
            assert!(s.iter().all(|&i| i < 3));
        }
    }

    #[test]
    fn test_batch_larger_than_population_rejected() {
        let mut rng = RngStream::new(1, 1);
        assert!(sample_without_replacement(&mut rng, 3, 4).is_err());
        assert!(sample_without_replacement(&mut rng, 3, 0).is_err());
    }

    #[test]
    fn test_single_draw_uniformity() {
        let mut rng = RngStream::new(2024, 5);
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws {
            let s = sample_without_replacement(&mut rng, 10, 1).unwrap();
            counts[s[0]] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() <= 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn test_permutation_is_permutation() {
        let mut rng = RngStream::new(5, 5);
        let mut p = rng.permutation(16);
        p.sort_unstable();
        assert_eq!(p, (0..16).collect::<Vec<_>>());
    }
}
