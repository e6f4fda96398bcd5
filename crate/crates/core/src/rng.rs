//! Seeded, platform-independent random streams.
//!
//! Every generator is a ChaCha8 block cipher in counter mode keyed by the
//! user seed. Independent quantities (the x, y and z perturbations, the
//! subsampling permutation) draw from distinct stream ids so that changing one
//! axis never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_PERTURB_X: u64 = 1;
pub const STREAM_PERTURB_Y: u64 = 2;
pub const STREAM_PERTURB_Z: u64 = 3;
pub const STREAM_SUBSAMPLE: u64 = 16;
pub const STREAM_TEST: u64 = 64;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
