//! Counter-based splittable random streams.
//!
//! Every stochastic routine in the crate draws from a [`RandomStream`].
//! A stream is a pure function of (key, counter), so child streams derived
//! with [`RandomStream::child`] are independent of the order in which
//! sibling streams are consumed. Parallel workers therefore reproduce the
//! exact draw sequence of a sequential run as long as they derive their
//! streams from the same ancestry of labels.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from the SplitMix64 generator; a strong 64-bit bit mixer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based random stream.
#[derive(Debug, Clone)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        RandomStream { key: mix64(seed ^ GOLDEN), counter: 0 }
    }

    /// Derives an independent child stream. Children with distinct labels
    /// never share draws with each other or with the parent.
    pub fn child(&self, label: u64) -> RandomStream {
        let key = mix64(self.key ^ mix64(label.wrapping_mul(GOLDEN) ^ 0xA5A5_A5A5_A5A5_A5A5));
        RandomStream { key, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in the open interval (0, 1); safe for inverse-transform
    /// sampling of distributions that diverge at the endpoints.
    pub fn uniform_open01(&mut self) -> f64 {
        loop {
            let u = self.uniform01();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Unbiased uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        let rem = u64::MAX % n;
        let limit = u64::MAX - rem;
        loop {
            let x = self.next_u64();
            // Reject the final partial block so every residue is equally likely.
            if x < limit || rem == n - 1 {
                return x % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
