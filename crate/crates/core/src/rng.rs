//! Named, reproducible random substreams.
//!
//! Every random draw in the crate comes from an [`RngStream`]: a 64-bit seed
//! plus a stream id built from a [`Purpose`] tag and a replication index.
//! The stream id selects one of ChaCha's 2^64 independent streams, so two
//! replications (or two purposes within one replication) never share draws
//! and parallel execution order does not matter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Folds,
    DgpDraw,
    RejectionZeta,
    LearnerInit,
    TrainTestSplit,
    Oracle,
    User,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Folds => 1,
            Purpose::DgpDraw => 2,
            Purpose::RejectionZeta => 3,
            Purpose::LearnerInit => 4,
            Purpose::TrainTestSplit => 5,
            Purpose::Oracle => 6,
            Purpose::User => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    purpose: Purpose,
    index: u64,
    sub: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        Self {
            seed,
            purpose,
            index,
            sub: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Same seed and replication, different purpose.
    pub fn with_purpose(&self, purpose: Purpose) -> Self {
        Self {
            purpose,
            sub: 0,
            ..*self
        }
    }

    /// A child stream, e.g. one per (fold, threshold) learner fit.
    pub fn substream(&self, k: u64) -> Self {
        Self {
            sub: splitmix64(self.sub ^ splitmix64(k.wrapping_add(1))),
            ..*self
        }
    }

    pub fn stream_id(&self) -> u64 {
        let base = splitmix64(self.purpose.tag() << 56 ^ splitmix64(self.index));
        splitmix64(base ^ self.sub)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id());
        rng
    }
}
