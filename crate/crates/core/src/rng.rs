//! Counter-based rng streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, lane, path, purpose)`, so adding paths never reshuffles the earlier
//! ones and two simulators can share a stream on purpose.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for inside one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Individual (per-particle) events and Gillespie clocks.
    Individual = 0,
    /// Coordinated event times and sampled matrices.
    Coordinated = 1,
    /// Per-particle outcome rolls at coordinated events.
    Outcomes = 2,
    /// Merger events of the coalescent.
    Mergers = 3,
    /// Dual process clocks.
    Dual = 4,
    /// Anything else (samplers in tests, initial conditions).
    Misc = 5,
}

/// Independent sample families within one run, e.g. the `n` and `m` systems of
/// a restriction test.
pub type Lane = u16;

pub fn stream(seed: u64, lane: Lane, path: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assert!(path < 1 << 44, "path index too large");
    rng.set_stream((u64::from(lane) << 48) | (path << 4) | purpose as u64);
    rng
}
