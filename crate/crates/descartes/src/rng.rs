//! Deterministic pseudo-random numbers.
//!
//! The generator is xorshift64* (Marsaglia's xorshift with the standard
//! 12/25/27 shift triple followed by a multiplicative scramble). It is
//! implemented here, rather than pulled in from a crate, because verification
//! grids must be byte-identical across platforms and releases: the algorithm
//! is part of the output contract.

/// xorshift64* generator. A given seed always produces the same stream.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    /// Seed the generator. A zero seed (the one state xorshift cannot leave)
    /// is remapped to a fixed non-zero constant.
    pub fn new(seed: u64) -> Self {
        XorShift64Star {
            state: if seed == 0 { 0x9E3779B97F4A7C15 } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in [0, 1), using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }
}
