//! Deterministic seed derivation and counter-based noise.
//!
//! Every randomized component receives a [`SeedTree`] derived from the
//! top-level seed by label, so adding a component never shifts the
//! randomness of another. Noise that must be reproducible without state
//! (lazy Laplace draws per tree node) is produced by hashing, not by a
//! stream RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

/// One round of the splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Incremental stable hasher for composite keys.
#[derive(Clone, Copy, Debug)]
pub struct StableHasher(u64);

impl StableHasher {
    pub fn new(seed: u64) -> Self {
        StableHasher(mix64(seed ^ FNV_OFFSET))
    }

    #[inline]
    pub fn write_u64(&mut self, x: u64) -> &mut Self {
        self.0 = mix64(self.0 ^ x).wrapping_add(FNV_PRIME);
        self
    }

    #[inline]
    pub fn write_i64(&mut self, x: i64) -> &mut Self {
        self.write_u64(x as u64)
    }

    pub fn finish(&self) -> u64 {
        mix64(self.0)
    }
}

/// Map 64 random bits to a uniform in the open interval (0, 1).
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Laplace(0, scale) by inverse CDF from a uniform in (0, 1).
#[inline]
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let v = u - 0.5;
    if v < 0.0 {
        scale * (1.0 + 2.0 * v).ln()
    } else {
        -scale * (1.0 - 2.0 * v).ln()
    }
}

/// Standard normal by Box-Muller from two uniforms in (0, 1).
#[inline]
pub fn normal_from_uniforms(u1: f64, u2: f64) -> f64 {
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A node in the seed hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child seed for a named component.
    pub fn derive(&self, label: &str) -> SeedTree {
        SeedTree {
            seed: mix64(self.seed ^ mix64(fnv1a(label.as_bytes()))),
        }
    }

    /// Child seed for an indexed component.
    pub fn derive_index(&self, label: &str, index: u64) -> SeedTree {
        let base = self.derive(label);
        SeedTree {
            seed: mix64(base.seed ^ mix64(index.wrapping_add(1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}
