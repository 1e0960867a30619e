//! Deterministic random streams.
//!
//! Every run has one 64-bit master seed. Trial `i` draws from
//! `ChaCha20Rng::seed_from_u64(master)` with its stream id set to `i`, so the
//! random numbers a trial sees depend only on `(master, i)` and never on which
//! worker thread evaluates it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type TrialRng = ChaCha20Rng;

/// Stream ids at or above this offset are reserved for whole-run draws that
/// are not tied to a single trial (e.g. mixture sampling in a sequential run).
pub const AUXILIARY_STREAM_BASE: u64 = 1 << 63;

pub fn substream(master_seed: u64, stream: u64) -> TrialRng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn auxiliary(master_seed: u64, index: u64) -> TrialRng {
    substream(master_seed, AUXILIARY_STREAM_BASE + index)
}
