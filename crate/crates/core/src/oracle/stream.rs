use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Part of the stream key, so draws for
/// one purpose never shift the draws of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    OracleNoise,
    LowLevelSample,
    Order,
    GreedyProbe,
    Data,
    Batching,
    Probe,
    StartPoint,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::OracleNoise => 1,
            Purpose::LowLevelSample => 2,
            Purpose::Order => 3,
            Purpose::GreedyProbe => 4,
            Purpose::Data => 5,
            Purpose::Batching => 6,
            Purpose::Probe => 7,
            Purpose::StartPoint => 8,
        }
    }
}

/// Counter-based stream key: `(seed, purpose, epoch, index)` maps to a fresh
/// ChaCha8 generator. Identical keys give bit-identical draws on every
/// platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub purpose: Purpose,
    pub epoch: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self {
            seed,
            purpose,
            epoch: 0,
            index: 0,
        }
    }

    pub fn at(self, epoch: u64, index: u64) -> Self {
        Self { epoch, index, ..self }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        Self { purpose, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        state = splitmix64(state ^ self.purpose.tag());
        state = splitmix64(state ^ self.epoch);
        state = splitmix64(state ^ self.index.rotate_left(32));
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
