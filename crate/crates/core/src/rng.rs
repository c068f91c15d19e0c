//! Seeded, stream-splittable random number generation.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator keyed
//! by the experiment seed and a 64-bit stream id. ChaCha is counter based, so
//! `(seed, stream)` fully determines the sequence: ensemble members can run in
//! any order or on any thread and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws, so adding
/// jumps to a model does not perturb its Brownian increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Subordinator = 1,
    InitialState = 2,
    StateNoise = 3,
    ObservationNoise = 4,
    StateJumps = 5,
    ObservationJumps = 6,
}

const PURPOSE_SLOTS: u64 = 16;

/// Generator for ensemble member `index` and the given purpose.
pub fn stream(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(PURPOSE_SLOTS).wrapping_add(purpose as u64));
    rng
}

/// Uniform draw in the open interval (0, 1).
pub(crate) fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
