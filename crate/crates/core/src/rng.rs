//! Seeded random-number streams.
//!
//! A [`RngSeed`] names a ChaCha8 keystream: the 64-bit `master` value is
//! expanded into the 256-bit key by `SeedableRng::seed_from_u64`, and
//! `stream` selects one of the 2^64 independent streams under that key.
//! Nested streams (replication, EM iteration, gap) are obtained with
//! [`RngSeed::child`], which re-keys through SplitMix64.
//!
//! Gaussian draws use the ziggurat sampler of `rand_distr::StandardNormal`.
//! Output is bit-reproducible for a fixed seed on any platform with IEEE-754
//! doubles, within one build of the crate and its pinned dependencies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub master: u64,
    #[serde(default)]
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// Stream `index` under a key derived from this seed.
    pub fn child(&self, index: u64) -> RngSeed {
        let key = splitmix64(self.master ^ splitmix64(self.stream ^ 0x6A09_E667_F3BC_C909));
        RngSeed {
            master: key,
            stream: index,
        }
    }
}

impl From<u64> for RngSeed {
    fn from(master: u64) -> Self {
        RngSeed::new(master, 0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Fills `out` with independent N(0, variance) draws, in index order.
pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64, out: &mut [f64]) {
    let sd = variance.sqrt();
    for v in out.iter_mut() {
        *v = sd * standard_normal(rng);
    }
}
