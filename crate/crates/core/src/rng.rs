//! Reproducible random streams.
//!
//! Every random task (a simulated replication, a bootstrap replicate, a fold
//! split) gets its own ChaCha8 generator keyed by the master seed plus a path
//! of integer labels. ChaCha is a counter-based cipher, so a stream depends
//! only on its key: replication `r` draws the same numbers no matter which
//! worker runs it or in what order.
//!
//! Path conventions used by this crate (first element is a tag):
//!
//! | path                                   | stream                          |
//! |----------------------------------------|---------------------------------|
//! | `[DATA, scenario, rep, attempt]`       | simulated dataset               |
//! | `[BOOTSTRAP, replicate, attempt]`      | one bootstrap resample          |
//! | `[FOLDS, replicate]`                   | cross-fitting fold assignment   |
//! | `[ORACLE, scenario]`                   | truth-oracle covariate draws    |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const DATA: u64 = 1;
pub const BOOTSTRAP: u64 = 2;
pub const FOLDS: u64 = 3;
pub const ORACLE: u64 = 4;
pub const REPLICATION: u64 = 5;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a label path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &label in path {
        h = splitmix(h ^ splitmix(label.wrapping_mul(GOLDEN) ^ 0xD1B5_4A32_D192_ED03));
    }
    h
}

/// Opens the stream for `seed` and `path`.
pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    let mut h = derive(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        h = splitmix(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
