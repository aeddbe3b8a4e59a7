//! Counter-based random streams.
//!
//! Every draw is addressed by `(substream, t, h, m)`: the generator for that
//! address is a ChaCha instance keyed from the master seed and the address, so
//! a draw never depends on how many other draws happened before it. Adding
//! instrumentation, reordering loops or skipping rounds cannot perturb the
//! algorithmic randomness, and counterfactual rollouts can replay a round's
//! dynamics exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Substream {
    /// Context arrival order.
    Contexts,
    /// Noisy expert labels.
    Labels,
    /// Per-round dynamics seeds ι_t.
    Dynamics,
    /// Learner-side randomisation (candidate sampling, IGW, exploration).
    Exploration,
    /// Raw Bernoulli rewards (only when sampling is enabled).
    Rewards,
    /// Instance generation (random classes, hidden paths).
    Instance,
}

impl Substream {
    fn tag(self) -> u64 {
        match self {
            Substream::Contexts => 0x636f_6e74,
            Substream::Labels => 0x6c61_6265,
            Substream::Dynamics => 0x6479_6e61,
            Substream::Exploration => 0x6578_706c,
            Substream::Rewards => 0x7265_7761,
            Substream::Instance => 0x696e_7374,
        }
    }
}

/// Master seed plus addressing of substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator for the address `(stream, key)`.
    pub fn generator(&self, stream: Substream, key: [u64; 3]) -> ChaCha8Rng {
        let mut h = splitmix(self.seed ^ splitmix(stream.tag()));
        for k in key {
            h = splitmix(h ^ splitmix(k.wrapping_add(0x5851_f42d_4c95_7f2d)));
        }
        let mut seed = [0u8; 32];
        let mut s = h;
        for chunk in seed.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// A single uniform draw in `[0, 1)` at the address.
    pub fn uniform(&self, stream: Substream, key: [u64; 3]) -> f64 {
        self.generator(stream, key).gen::<f64>()
    }

    /// A derived stream, e.g. one per experiment cell.
    pub fn child(&self, salt: u64) -> RngStream {
        RngStream::new(splitmix(self.seed ^ splitmix(salt ^ 0x63_6869_6c64)))
    }
}

/// Inverse-CDF draw from a probability vector with a supplied uniform.
///
/// Mass lost to rounding falls to the last index with positive probability.
pub fn sample_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &pk) in p.iter().enumerate() {
        if pk > 0.0 {
            last = k;
            acc += pk;
            if u < acc {
                return k;
            }
        }
    }
    last
}
