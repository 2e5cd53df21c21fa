//! Small deterministic RNG (splitmix64 scrambler over a xorshift state).
//!
//! Every sampling step in the toolkit (weight init, ray batches, supervision
//! points, jitter, surface sampling) must be reproducible bit-for-bit from a
//! u64 seed, so we keep the generator in-tree instead of pulling in a crate
//! whose stream could change between versions.

use crate::math;

#[derive(Clone, Debug)]
pub struct DetRng {
    state: u64,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        // Scramble once so that small seeds do not produce correlated streams.
        let mut s = seed;
        let _ = splitmix64(&mut s);
        DetRng { state: s }
    }

    /// Independent stream derived from this one; advancing either does not
    /// perturb the other.
    pub fn fork(&mut self, tag: u64) -> DetRng {
        let mut s = self.next_u64() ^ tag.wrapping_mul(0xA24B_AED4_963E_E407);
        let _ = splitmix64(&mut s);
        DetRng { state: s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). n must be > 0.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is < 2^-53 for any realistic n.
        (self.next_f64() * n as f64) as usize % n
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 < 1e-300 {
            u1 = 1e-300;
        }
        let u2 = self.next_f64();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * math::PI * u2)
    }
}
