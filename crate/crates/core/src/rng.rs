//! Counter-based random streams.
//!
//! Every stochastic draw in the crate comes from a ChaCha stream keyed by the
//! master seed and a [`Stream`] purpose tag, with the trajectory index as the
//! ChaCha stream id. A trajectory's randomness therefore depends only on
//! `(master_seed, trajectory_index)`, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random-number purposes within one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Emission,
    Detection,
    SpuriousA,
    SpuriousB,
    Occupancy,
    IntensityNoise,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Emission => 0x656d_6973_7369_6f6e,
            Stream::Detection => 0x6465_7465_6374_696f,
            Stream::SpuriousA => 0x7370_7572_696f_7541,
            Stream::SpuriousB => 0x7370_7572_696f_7542,
            Stream::Occupancy => 0x6f63_6375_7061_6e63,
            Stream::IntensityNoise => 0x6e6f_6973_6520_2020,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrajectorySeed {
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl TrajectorySeed {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        Self {
            master_seed,
            trajectory_index,
        }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed ^ stream.tag();
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.trajectory_index);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_unit<R: rand::Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
