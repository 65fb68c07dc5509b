//! Common randomness for frozen bits.
//!
//! The uniform for `(round, level, index)` is word `2 * index` of the ChaCha8
//! stream `round << 32 | level` under the session's shared seed, so either
//! endpoint can regenerate any single variate without replaying the others.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shared uniforms for one `(round, level)` pair.
#[derive(Debug, Clone)]
pub struct SharedStream {
    rng: ChaCha8Rng,
}

impl SharedStream {
    pub fn new(shared_seed: u64, round: usize, level: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(shared_seed);
        rng.set_stream(((round as u64) << 32) | level as u64);
        Self { rng }
    }

    pub fn uniform(&mut self, index: usize) -> f64 {
        self.rng.set_word_pos(2 * index as u128);
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Bit drawn from the prior posterior with the shared uniform of
/// `(round, level, index)`: 1 iff the uniform is below `P(1)`.
pub fn shared_frozen_bit(
    shared_seed: u64,
    round: usize,
    level: usize,
    index: usize,
    prior_posterior: [f64; 2],
) -> u8 {
    let u = SharedStream::new(shared_seed, round, level).uniform(index);
    (u < prior_posterior[1]) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_priors() {
        for j in 0..100 {
            assert_eq!(shared_frozen_bit(5, 1, 2, j, [1.0, 0.0]), 0);
            assert_eq!(shared_frozen_bit(5, 1, 2, j, [0.0, 1.0]), 1);
        }
    }

    #[test]
    fn random_access_matches_sequential() {
        let mut a = SharedStream::new(11, 3, 4);
        let forward: Vec<f64> = (0..50).map(|j| a.uniform(j)).collect();
        let mut b = SharedStream::new(11, 3, 4);
        for j in (0..50).rev() {
            assert_eq!(b.uniform(j), forward[j]);
        }
        assert!(forward.iter().all(|u| (0.0..1.0).contains(u)));
    }

    #[test]
    fn streams_differ() {
        let x = SharedStream::new(1, 1, 1).uniform(0);
        assert_ne!(x, SharedStream::new(1, 1, 2).uniform(0));
        assert_ne!(x, SharedStream::new(1, 2, 1).uniform(0));
        assert_ne!(x, SharedStream::new(2, 1, 1).uniform(0));
    }
}
