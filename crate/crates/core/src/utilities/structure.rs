//! Structural predicates: sampling falsifiers for gross substitutes and
//! total complements, and the path-sum elasticity indices of trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ces, UtilityFamily};
use crate::error::{Error, Result};

/// Default sample count of the falsifiers.
pub const DEFAULT_SAMPLES: usize = 1000;

const LOG_PRICE_RANGE: (f64, f64) = (-2.0 * std::f64::consts::LN_10, 2.0 * std::f64::consts::LN_10);
const REL_TOL: f64 = 1e-9;

/// A pair of price vectors whose demands violate the tested property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureWitness {
    pub p: Vec<f64>,
    pub p_prime: Vec<f64>,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub good: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub property: String,
    pub passed: bool,
    pub samples: usize,
    pub witness: Option<StructureWitness>,
}

fn log_uniform_prices(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(LOG_PRICE_RANGE.0..LOG_PRICE_RANGE.1).exp()).collect()
}

/// Raising some prices never lowers demand for the goods whose price stayed
/// put. Each sample raises a random nonempty proper subset of prices.
pub fn check_gross_substitutes(u: &UtilityFamily, budget: f64, samples: usize, seed: u64) -> Result<StructureReport> {
    let m = u.min_goods();
    u.validate(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let p = log_uniform_prices(&mut rng, m);
        let mut pp = p.clone();
        let mut raised = vec![false; m];
        for r in raised.iter_mut() {
            *r = rng.gen_bool(0.5);
        }
        if m > 1 {
            let k = rng.gen_range(0..m);
            raised[k] = true;
            let fixed = (k + 1 + rng.gen_range(0..m - 1)) % m;
            raised[fixed] = false;
        }
        for j in 0..m {
            if raised[j] {
                pp[j] *= rng.gen_range(0.0..LOG_PRICE_RANGE.1).exp();
            }
        }
        let x = u.marshallian_demand(&p, budget)?;
        let xp = u.marshallian_demand(&pp, budget)?;
        for j in (0..m).filter(|&j| !raised[j]) {
            if x[j] > xp[j] + REL_TOL * x[j].abs().max(1e-300) {
                return Ok(report("gross_substitutes", false, samples, Some((p, pp, x, xp, j))));
            }
        }
    }
    Ok(report("gross_substitutes", true, samples, None))
}

/// The good with the largest proportional demand decrease (when it does
/// decrease) must not have a lower price afterwards. Demand must stay
/// strictly positive.
pub fn check_total_complements(u: &UtilityFamily, budget: f64, samples: usize, seed: u64) -> Result<StructureReport> {
    let m = u.min_goods();
    u.validate(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let p = log_uniform_prices(&mut rng, m);
        let pp = log_uniform_prices(&mut rng, m);
        let x = u.marshallian_demand(&p, budget)?;
        let xp = u.marshallian_demand(&pp, budget)?;
        if let Some(j) = (0..m).find(|&j| !(x[j] > 0.0) || !(xp[j] > 0.0)) {
            return Ok(report("total_complements", false, samples, Some((p, pp, x, xp, j))));
        }
        let ratios: Vec<f64> = (0..m).map(|j| x[j] / xp[j]).collect();
        let top = ratios.iter().cloned().fold(1.0, f64::max);
        for j in 0..m {
            if ratios[j] >= top * (1.0 - REL_TOL) && p[j] > pp[j] * (1.0 + REL_TOL) {
                return Ok(report("total_complements", false, samples, Some((p, pp, x, xp, j))));
            }
        }
    }
    Ok(report("total_complements", true, samples, None))
}

/// `(p, p_prime, x, x_prime, good)`
type WitnessParts = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, usize);

fn report(property: &str, passed: bool, samples: usize, w: Option<WitnessParts>) -> StructureReport {
    StructureReport {
        property: property.into(),
        passed,
        samples,
        witness: w.map(|(p, p_prime, x, x_prime, good)| StructureWitness { p, p_prime, x, x_prime, good }),
    }
}

fn tree_or_flat(u: &UtilityFamily) -> Result<Option<super::NestNode>> {
    match u {
        UtilityFamily::CobbDouglas { .. } => Ok(None),
        UtilityFamily::LogLinear { .. } | UtilityFamily::MinAffine { .. } => {
            Err(Error::Incompatible(format!("{} utilities have no elasticity index", u.kind_name())))
        }
        _ => Ok(u.as_tree()),
    }
}

/// Minimum over root-to-leaf paths of `sum min(rho / (rho - 1), 0)`.
/// Additive nodes contribute `-inf`; Cobb-Douglas contributes 0.
pub fn substitutes_index(u: &UtilityFamily) -> Result<f64> {
    Ok(tree_or_flat(u)?.map_or(0.0, |t| t.min_path_sum(&|rho| ces::conjugate(rho).min(0.0))))
}

/// Minimum over root-to-leaf paths of `sum min(rho, 0)`.
pub fn complements_index(u: &UtilityFamily) -> Result<f64> {
    Ok(tree_or_flat(u)?.map_or(0.0, |t| t.min_path_sum(&|rho| rho.min(0.0))))
}
