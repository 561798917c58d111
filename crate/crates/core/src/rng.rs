//! Counter-based deterministic randomness.
//!
//! Every draw is a pure function of (seed, stream tag, counter, lane), so
//! outputs are independent of evaluation order and identical across runs and
//! platforms. Corruptions, augmentation, and weight init all pull from here;
//! no stateful generator exists anywhere in the crate.

/// splitmix64 finalizer: a full-avalanche 64-bit mixer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless RNG keyed by a seed and a stream tag.
#[derive(Clone, Copy, Debug)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix(seed) }
    }

    /// Derive an independent stream from a string tag (e.g. a parameter name).
    pub fn stream(&self, tag: &str) -> Self {
        let mut h = self.key;
        for b in tag.as_bytes() {
            h = mix(h ^ u64::from(*b));
        }
        Self { key: h }
    }

    /// Derive an independent stream from an integer tag.
    pub fn substream(&self, tag: u64) -> Self {
        Self { key: mix(self.key ^ mix(tag ^ 0xA076_1D64_78BD_642F) ) }
    }

    /// Raw 64-bit draw at (counter, lane).
    #[inline]
    pub fn u64_at(&self, counter: u64, lane: u64) -> u64 {
        mix(mix(self.key ^ mix(counter)) ^ mix(lane ^ 0x2545_F491_4F6C_DD1D))
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform_at(&self, counter: u64, lane: u64) -> f64 {
        (self.u64_at(counter, lane) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n).
    #[inline]
    pub fn index_at(&self, counter: u64, lane: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform_at(counter, lane) * n as f64) as usize % n
    }

    /// Standard normal via Box-Muller; lanes 2k and 2k+1 feed draw k.
    #[inline]
    pub fn normal_at(&self, counter: u64, lane: u64) -> f64 {
        let u1 = self.uniform_at(counter, 2 * lane);
        let u2 = self.uniform_at(counter, 2 * lane + 1);
        // guard log(0)
        let u1 = u1.max(f64::MIN_POSITIVE);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Poisson draw by Knuth's product method; adequate for means up to ~1e3.
    pub fn poisson_at(&self, counter: u64, lane_base: u64, mean: f64) -> u64 {
        debug_assert!(mean >= 0.0);
        if mean <= 0.0 {
            return 0;
        }
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        let mut lane = lane_base;
        loop {
            p *= self.uniform_at(counter, lane);
            lane += 1;
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }
}
