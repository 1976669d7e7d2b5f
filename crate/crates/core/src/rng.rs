//! Named, independent random substreams derived from a single run seed.
//!
//! Each consumer (sampler, fusion, simulator, tracking) draws from its own
//! ChaCha stream, further keyed by an index (time step, hypothesis, ...), so
//! adding draws in one consumer never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Sampler,
    Fusion,
    Sim,
    Tracking,
    /// Scene and action generation, kept apart from per-frame sensor noise.
    Scenario,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Sampler => 1,
            Stream::Fusion => 2,
            Stream::Sim => 3,
            Stream::Tracking => 4,
            Stream::Scenario => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix several integers into one well-distributed 64-bit key.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x2545_F491_4F6C_DD1D, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// RNG for `stream` at `index` under the run seed.
pub fn substream(seed: u64, stream: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, index]));
    rng.set_stream(stream.id());
    rng
}

/// A child RNG keyed by `parts`, used to fan out deterministic per-item
/// streams (per label, per candidate) from a parent draw.
pub fn child(base: u64, parts: &[u64]) -> Rng {
    let mut key = vec![base];
    key.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(mix(&key))
}
