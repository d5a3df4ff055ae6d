//! Reproducible random streams.
//!
//! Every replica gets its own ChaCha8 stream. The 256-bit key is a SHA-256
//! digest of `(master_seed, purpose, sub_index)` and the ChaCha stream id is
//! the replica index, so replica `r` of a given purpose sees the same numbers
//! no matter how replicas are scheduled across workers, and adding a new
//! purpose never perturbs existing ones.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use sha2::{Digest, Sha256};

pub type ReplicaRng = ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(master_seed: u64, purpose: &str, sub: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"erw-stream-v1");
        h.update(master_seed.to_le_bytes());
        h.update((purpose.len() as u64).to_le_bytes());
        h.update(purpose.as_bytes());
        h.update(sub.to_le_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        Self { key }
    }

    pub fn replica(&self, index: u64) -> ReplicaRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Above this many outstanding successes the negative binomial is drawn as a
/// Gamma-Poisson mixture instead of by scanning coin bits.
const BITSCAN_LIMIT: u64 = 256;

/// Fair coins served 64 at a time from one `u64`.
#[derive(Debug, Clone, Default)]
pub struct FairCoins {
    word: u64,
    left: u32,
}

impl FairCoins {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    fn refill<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        self.word = rng.next_u64();
        self.left = 64;
    }

    /// One fair coin; `true` is a success (right step).
    #[inline]
    pub fn flip<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.left == 0 {
            self.refill(rng);
        }
        let bit = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        bit
    }

    /// Number of failures before the `successes`-th success in a sequence of
    /// fair coin tosses, i.e. a NegativeBinomial(successes, 1/2) draw.
    pub fn failures_before<R: RngCore + ?Sized>(&mut self, successes: u64, rng: &mut R) -> u64 {
        if successes == 0 {
            return 0;
        }
        if successes > BITSCAN_LIMIT {
            return negative_binomial_half(successes, rng);
        }
        let mut need = successes;
        let mut failures = 0u64;
        loop {
            if self.left == 0 {
                self.refill(rng);
            }
            let ones = u64::from(self.word.count_ones());
            if ones < need {
                failures += u64::from(self.left) - ones;
                need -= ones;
                self.left = 0;
                continue;
            }
            let mut w = self.word;
            for _ in 1..need {
                w &= w - 1;
            }
            let pos = w.trailing_zeros();
            failures += u64::from(pos) + 1 - need;
            let used = pos + 1;
            self.word = if used >= 64 { 0 } else { self.word >> used };
            self.left -= used;
            return failures;
        }
    }
}

/// NegativeBinomial(r, 1/2) failures via the Poisson(Gamma(r, 1)) mixture.
pub fn negative_binomial_half<R: RngCore + ?Sized>(r: u64, rng: &mut R) -> u64 {
    if r == 0 {
        return 0;
    }
    let rate = Gamma::new(r as f64, 1.0).expect("shape is positive").sample(rng);
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("rate is positive").sample(rng) as u64
}

/// A success probability as a 53-bit integer threshold, exact for `p = 0`
/// and `p = 1`.
pub fn threshold53(p: f64) -> u64 {
    (p * (1u64 << 53) as f64).round() as u64
}

/// Bernoulli draw against a [`threshold53`] value.
#[inline]
pub fn bernoulli53<R: RngCore + ?Sized>(threshold: u64, rng: &mut R) -> bool {
    (rng.next_u64() >> 11) < threshold
}

/// Bernoulli(p) that routes the fair case through the shared coin buffer.
#[inline]
pub fn bernoulli<R: RngCore + ?Sized>(p: f64, coins: &mut FairCoins, rng: &mut R) -> bool {
    if p == 0.5 {
        coins.flip(rng)
    } else {
        rng.random::<f64>() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let f = StreamFactory::new(42, "walk", 0);
        let a: Vec<u64> = (0..4).map(|_| f.replica(3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(f.replica(3).next_u64(), f.replica(4).next_u64());
        let g = StreamFactory::new(42, "regen", 0);
        assert_ne!(f.replica(0).next_u64(), g.replica(0).next_u64());
        let h = StreamFactory::new(42, "walk", 1);
        assert_ne!(f.replica(0).next_u64(), h.replica(0).next_u64());
    }

    fn mean_var(xs: &[u64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<u64>() as f64 / n;
        let v = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn bitscan_geometric_pmf() {
        let mut rng = StreamFactory::new(1, "t", 0).replica(0);
        let mut coins = FairCoins::new();
        let n = 200_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let f = coins.failures_before(1, &mut rng) as usize;
            if f < 6 {
                counts[f] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = 0.5f64.powi(k as i32 + 1);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(((c as f64 / n as f64) - p).abs() < 5.0 * se, "k = {k}");
        }
    }

    #[test]
    fn negative_binomial_moments_both_paths() {
        // NB(r, 1/2): mean r, variance 2r
        let mut rng = StreamFactory::new(2, "t", 0).replica(0);
        let mut coins = FairCoins::new();
        for r in [3u64, 40, 200, 1000] {
            let xs: Vec<u64> = (0..40_000).map(|_| coins.failures_before(r, &mut rng)).collect();
            let (m, v) = mean_var(&xs);
            let se = (2.0 * r as f64 / xs.len() as f64).sqrt();
            assert!((m - r as f64).abs() < 5.0 * se, "r = {r}, mean {m}");
            assert!((v / (2.0 * r as f64) - 1.0).abs() < 0.05, "r = {r}, var {v}");
        }
    }
}
