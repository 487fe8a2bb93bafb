//! Counter-based normal draws keyed by `(seed, path, step)`.
//!
//! Every Brownian increment is a pure function of the master seed, the path
//! index and the step index, so paths can be simulated in any order or in
//! parallel and still reproduce bit for bit.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream key for one path.
#[inline]
pub fn path_key(seed: u64, path: u64) -> u64 {
    mix64(seed ^ mix64(path.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Stateless-in-spirit generator: output `n` is `mix64(key + n * gamma)`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64, counter: u64) -> Self {
        CounterRng { key, counter }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Standard normal draw for step `k` of the path with stream `key`.
#[inline]
pub fn step_normal(key: u64, k: usize) -> f64 {
    // each step owns 2^16 counter slots; the ziggurat rarely needs more than one
    let mut rng = CounterRng::new(key, (k as u64) << 16);
    StandardNormal.sample(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_pure_functions_of_the_key() {
        let key = path_key(42, 7);
        let a: Vec<f64> = (0..100).map(|k| step_normal(key, k)).collect();
        let b: Vec<f64> = (0..100).rev().map(|k| step_normal(key, k)).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(a, b);
        assert_ne!(path_key(42, 7), path_key(42, 8));
        assert_ne!(path_key(42, 7), path_key(43, 7));
    }

    #[test]
    fn moments_are_standard_normal() {
        let n = 200_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for p in 0..20u64 {
            let key = path_key(1, p);
            for k in 0..n / 20 {
                let z = step_normal(key, k);
                s1 += z;
                s2 += z * z;
                s4 += z * z * z * z;
            }
        }
        let nf = n as f64;
        assert!((s1 / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 4.0 * 2f64.sqrt() / nf.sqrt());
        assert!((s4 / nf - 3.0).abs() < 4.0 * 96f64.sqrt() / nf.sqrt());
    }
}
