//! Seeded, splittable random streams.
//!
//! Every sampling routine in the crate takes an explicit `&mut Rng`. Streams are
//! derived from a master seed by [`SeedTree`], which mixes a parent key with a
//! child index through SplitMix64 finalisation; the resulting key seeds a
//! ChaCha8 generator (counter-based, stable output across platforms). Replicate
//! `i` of an experiment therefore draws from the same stream regardless of the
//! order in which replicates execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in a deterministic tree of seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: u64,
}

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: mix64(master_seed.wrapping_add(GOLDEN)),
        }
    }

    /// Child stream `index` of this node.
    pub fn child(&self, index: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN))),
        }
    }

    /// Child keyed by a label, for named sub-streams ("kernels", "rollouts", ...).
    pub fn named(&self, label: &str) -> Self {
        // FNV-1a over the label bytes, then the ordinary child split.
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01B3);
        }
        self.child(h)
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> Rng {
        Rng::seed_from_u64(self.key)
    }
}

/// Shorthand for `SeedTree::new(seed).rng()`.
pub fn rng_from_seed(seed: u64) -> Rng {
    SeedTree::new(seed).rng()
}

/// Draw an index from a nonnegative weight vector by inverse CDF.
///
/// Weights need not sum to one; the draw renormalises by their total so rows
/// read from text files with small rounding error still sample correctly.
pub fn sample_index<R: rand::Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "cannot sample from an all-zero weight vector");
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
