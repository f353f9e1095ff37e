//! Deterministic random number generation.
//!
//! Every random draw in the crate flows through [`RandomState`], a
//! xoshiro256++ generator seeded through SplitMix64. The generator, the
//! seeding scheme, and the normal transform (Box-Muller, cosine branch) are
//! fixed so that a given seed reproduces the same sequence on every run and
//! platform. Independent streams are obtained with [`RandomState::derive_child`];
//! states are never shared between concurrent tasks.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `x` and returns the mixed output.
fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(GOLDEN_GAMMA);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// State of the crate-wide deterministic generator (xoshiro256++).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomState {
    s: [u64; 4],
}

impl RandomState {
    /// Initializes the state from a 64-bit seed via SplitMix64 expansion.
    pub fn from_seed(seed: u64) -> Self {
        let mut x = seed;
        let mut s = [0u64; 4];
        for word in &mut s {
            *word = splitmix64(&mut x);
        }
        // all-zero is the one invalid xoshiro state
        if s == [0, 0, 0, 0] {
            s[0] = GOLDEN_GAMMA;
        }
        Self { s }
    }

    /// Derives an independent child stream.
    ///
    /// The four current state words and the stream index `k` are absorbed
    /// into a SplitMix64 chain whose output seeds the child. Distinct `k`
    /// values produce streams with no shared draw prefix; the parent state
    /// is left untouched.
    pub fn derive_child(&self, k: u64) -> Self {
        let mut acc = 0x243F_6A88_85A3_08D3u64; // first 64 bits of pi
        for &word in &self.s {
            let mut t = acc ^ word;
            acc = splitmix64(&mut t);
        }
        let mut x = acc ^ k.wrapping_mul(GOLDEN_GAMMA);
        let mut s = [0u64; 4];
        for word in &mut s {
            *word = splitmix64(&mut x);
        }
        if s == [0, 0, 0, 0] {
            s[0] = GOLDEN_GAMMA;
        }
        Self { s }
    }

    /// Next 64 uniformly random bits (xoshiro256++ update).
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via the Box-Muller cosine transform.
    ///
    /// Consumes exactly two uniforms; the sine partner is discarded so the
    /// state stays a plain four-word value.
    pub fn next_standard_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the logarithm is finite
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased uniform integer in `[0, bound)` by rejection.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below requires bound > 0");
        let zone = (u64::MAX / bound) * bound;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Stable identifier for reports and seed-lineage records; does not
    /// advance the state.
    pub fn fingerprint(&self) -> u64 {
        self.clone().next_u64()
    }
}
