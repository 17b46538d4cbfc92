use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Independent generator for replication `replication` of a run seeded
/// with `seed`. Streams never overlap, so results do not depend on how
/// replications are scheduled.
pub fn stream(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Exponential variate with the given rate.
#[inline]
pub(crate) fn exp<R: rand::Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}
