//! Seeded instances for the benchmarks.

use market_core::{DisutilityFamily, MarketInstance, UtilityFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coeffs(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.2..3.0)).collect()
}

fn budgets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.5..2.0)).collect()
}

/// `n` agents with CES utilities of elasticity `rho` over `m` goods.
pub fn ces_utilities(seed: u64, n: usize, m: usize, rho: f64) -> (Vec<UtilityFamily>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us = (0..n).map(|_| UtilityFamily::ces(coeffs(&mut rng, m), rho)).collect();
    (us, budgets(&mut rng, n))
}

pub fn fisher_ces(seed: u64, n: usize, m: usize, rho: f64) -> MarketInstance {
    let (us, b) = ces_utilities(seed, n, m, rho);
    MarketInstance::fisher_goods(us, b).expect("valid instance")
}

pub fn lindahl_ces(seed: u64, n: usize, m: usize, rho: f64) -> MarketInstance {
    let (us, b) = ces_utilities(seed, n, m, rho);
    MarketInstance::lindahl_goods(us, b).expect("valid instance")
}

pub fn linear_chores(seed: u64, n: usize, m: usize) -> MarketInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = (0..n).map(|_| DisutilityFamily::linear(coeffs(&mut rng, m))).collect();
    MarketInstance::fisher_chores(ds, budgets(&mut rng, n)).expect("valid instance")
}
