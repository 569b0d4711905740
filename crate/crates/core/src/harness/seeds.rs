//! Per-purpose random streams derived from the scenario seed, so adding a
//! consumer to one stream never shifts the draws of another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Topology = 1,
    Workload = 2,
    Faults = 3,
    Mobility = 4,
    Roaming = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn sub_seed(seed: u64, stream: Stream) -> u64 {
    stream_rng(seed, stream).next_u64()
}
