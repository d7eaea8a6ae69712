//! Counter-based random streams.
//!
//! A [`StreamKey`] names an independent stream by `(seed, replication,
//! channel)`; each row of a sample draws from its own ChaCha stream inside
//! that key. Any replication or row can therefore be regenerated in
//! isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    replication: u64,
    channel: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            replication: 0,
            channel: 0,
        }
    }

    pub fn replication(self, replication: u64) -> Self {
        Self {
            replication,
            ..self
        }
    }

    pub fn channel(self, channel: u64) -> Self {
        Self { channel, ..self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The generator for one row of this stream.
    pub fn rng(&self, row: u64) -> ChaCha8Rng {
        let mut state = self.seed;
        let a = splitmix64(&mut state);
        state ^= self.replication.wrapping_mul(0xD1B5_4A32_D192_ED03);
        let b = splitmix64(&mut state);
        state ^= self.channel.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7);
        let c = splitmix64(&mut state);
        let d = splitmix64(&mut state);
        let mut bytes = [0u8; 32];
        for (chunk, word) in bytes.chunks_exact_mut(8).zip([a, b, c, d]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(row);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
