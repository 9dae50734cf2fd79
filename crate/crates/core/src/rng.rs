//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by the
//! master seed and selected by a stream id, so a sample can be regenerated
//! in isolation regardless of how many other samples ran before it or on
//! which thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// What a stream is used for within one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Graphs = 0,
    InitialState = 1,
    Circuit = 2,
    Solver = 3,
}

/// Stream `index` of the family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream for a given sample and purpose.
pub fn sample_stream(seed: u64, sample: u64, purpose: Purpose) -> Stream {
    stream(seed, (sample << 8) | purpose as u64)
}
