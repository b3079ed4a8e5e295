//! Seeded pseudo-random number generator.
//!
//! xorshift64* with the seed passed through splitmix64, so nearby seeds give
//! uncorrelated streams and seed 0 is legal. The generator is fixed on
//! purpose: a given seed produces the identical scalar stream on every
//! platform, which makes weight initialization, dropout masks, shuffles and
//! synthetic data byte-reproducible.

/// Deterministic 64-bit generator (xorshift64*).
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse several seed components into one stream seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc = 0xd6e8_feb8_6659_fd93u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        // splitmix never yields 0 for state here; xorshift needs nonzero.
        let mut state = splitmix64(seed);
        if state == 0 {
            state = SPLITMIX_GAMMA;
        }
        Rng { state }
    }

    /// Resume from a raw state captured by [`Rng::state`].
    pub fn from_state(state: u64) -> Rng {
        Rng {
            state: if state == 0 { SPLITMIX_GAMMA } else { state },
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    ///
    /// Uses rejection sampling, so the draw is exactly uniform.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw via Box–Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}
