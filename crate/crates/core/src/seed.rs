//! Deterministic seed splitting.
//!
//! Every source of randomness is derived from one master seed through a named
//! stream and an index, so adding a new consumer never perturbs the draws of
//! an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream used to generate instance sets.
pub const STREAM_INSTANCES: &str = "instances";
/// Stream for per-instance initial conditions that must not vary with the run seed.
pub const STREAM_INSTANCE_INIT: &str = "instance-init";
/// Stream for environment stochasticity during episodes.
pub const STREAM_ENVIRONMENT: &str = "environment";
/// Stream for policy-internal randomness.
pub const STREAM_POLICY: &str = "policy";

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from `master` for the named `stream` and `index`.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let h = splitmix64(master ^ fnv1a(stream));
    splitmix64(h ^ splitmix64(index))
}

pub fn rng_for(master: u64, stream: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
