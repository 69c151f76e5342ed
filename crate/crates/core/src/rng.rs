//! Deterministic random substreams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream, keyed by the
//! master seed and addressed by `(index, purpose)`. Streams with different
//! addresses never share output, so the Brownian increments of a path are
//! unaffected by how many Markov jumps it draws, and results do not depend
//! on which worker thread handles which path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a substream is used for. Part of the stream address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Brownian = 0,
    Markov = 1,
    Probe = 2,
    Falsify = 3,
}

const PURPOSES: u64 = 4;

/// Returns the substream for `(master_seed, index, purpose)`.
pub fn substream(master_seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(
        index
            .checked_mul(PURPOSES)
            .and_then(|v| v.checked_add(purpose as u64))
            .expect("substream index overflow"),
    );
    rng
}

/// The pair of independent streams driving one simulated path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub brownian: StreamRng,
    pub markov: StreamRng,
}

impl PathStreams {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            brownian: substream(master_seed, path_index, Purpose::Brownian),
            markov: substream(master_seed, path_index, Purpose::Markov),
        }
    }
}
