//! Reproducible random streams.
//!
//! Every consumer derives an independent [`ChaCha8Rng`] substream from a
//! `(seed, stream)` pair: the key is expanded from `seed` with
//! `SeedableRng::seed_from_u64` and the 64-bit ChaCha stream id is set to
//! `stream`. ChaCha is counter based, so the draws of one substream depend
//! only on that pair and are identical across platforms, thread counts and
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids for distinct purposes that share one user seed.
pub(crate) mod streams {
    pub const BOOTSTRAP: u64 = 0;
    pub const PANEL_COUNTRY: u64 = 1 << 32;
    pub const PANEL_INSTRUMENT: u64 = 2 << 32;
    pub const PANEL_EFFECTS: u64 = 3 << 32;
    pub const EVENTS_PAIR: u64 = 4 << 32;
}
