//! Deterministic random number generation.
//!
//! All randomness in this crate flows through [`Rng`], so that splits,
//! descriptor samples, and weight initializations reproduce bit-for-bit from
//! a seed — including in an independent reimplementation. The algorithms are
//! therefore fixed and spelled out here rather than delegated to an external
//! generator crate whose stream could change between versions:
//!
//! - **State setup**: the four 64-bit state words are the first four outputs
//!   of SplitMix64 run on the seed (increment `0x9E3779B97F4A7C15`, the usual
//!   two multiply-xorshift finalization rounds).
//! - **`next_u64`**: xoshiro256++, output `rotl(s0 + s3, 23) + s0`.
//! - **`next_f64`**: the top 53 bits of `next_u64`, scaled by `2^-53` into
//!   `[0, 1)`.
//! - **`normal`**: Box–Muller, `sqrt(-2 ln u1) * cos(2 pi u2)` with
//!   `u1 = 1 - next_f64()` then `u2 = next_f64()`; the sine branch is
//!   discarded.
//! - **`shuffle`**: Fisher–Yates from the back; the index for position `i` is
//!   `next_u64() % (i + 1)`. The modulo bias is negligible at the slice
//!   lengths used here.
//! - **`sample_indices`**: a partial Fisher–Yates over `0..n` taking the
//!   first `k` slots, drawing `i + next_u64() % (n - i)` at step `i`.
//!
//! Stage-level seeds come from [`stage_seed`], which absorbs an ASCII label
//! into the root seed with FNV-1a (offset basis xor'ed with the root) and
//! finalizes with the SplitMix64 mixer.

/// xoshiro256++ generator, seeded via SplitMix64.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    mix64(*state)
}

/// SplitMix64 finalization rounds (without the counter increment).
fn mix64(v: u64) -> u64 {
    let mut z = v;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let [s0, s1, s2, s3] = self.s;
        let result = s0.wrapping_add(s3).rotate_left(23).wrapping_add(s0);
        let t = s1 << 17;
        let mut s = [s0, s1, s2, s3];
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        self.s = s;
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box–Muller (cosine branch only).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps the log finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform draw in `[0, n)` (modulo reduction; bias is negligible for
    /// the small ranges used here).
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly without replacement from `0..n`,
    /// in selection order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Derive a stage seed from the root seed and a fixed label such as
/// `"split"` or `"sae1"`.
pub fn stage_seed(root: u64, label: &str) -> u64 {
    let mut h = root ^ 0xCBF2_9CE4_8422_2325; // FNV-1a offset basis
    for &b in label.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(h)
}
