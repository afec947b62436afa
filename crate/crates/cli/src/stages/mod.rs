pub mod bubble;
pub mod burago;
pub mod cusp;
pub mod custom;
pub mod flat;
pub mod schrod;

use conflab::metric::edge_seed;
use conflab::{Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `k` of a run seed.
pub(crate) fn stream(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(edge_seed(seed, k))
}

/// `count` distinct node indices in increasing order.
pub(crate) fn random_nodes(total: usize, count: usize, seed: u64, k: usize) -> Result<Vec<usize>> {
    if count > total {
        return Err(Error::Input(format!("asked for {count} distinct nodes out of {total}")));
    }
    let mut v = sample(&mut stream(seed, k), total, count).into_vec();
    v.sort_unstable();
    Ok(v)
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi / lo - 1.0
}
