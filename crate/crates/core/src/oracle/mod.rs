//! Reference solvers for building test fixtures: Eisenberg-Gale and
//! Lindahl NSW maximizers, grid-search demand and the Lambert W function.
//! Every published value carries its method and a precision estimate.

mod eg;
mod grid;
mod nsw;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utilities::{DisutilityFamily, UtilityFamily};

pub use eg::{oracle_eg, EgSolution};
pub use grid::{simplex_search, GridResult};
pub use nsw::{first_order_prices, oracle_nsw_lindahl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub point: Vec<f64>,
    /// Estimated error of `value`, measured by the method itself.
    pub precision: f64,
    pub method: String,
}

/// Principal branch of the Lambert W function.
pub fn lambert_w(z: f64) -> Result<f64> {
    let branch = -1.0 / std::f64::consts::E;
    if z.is_nan() || z < branch - 1e-15 {
        return Err(Error::Domain(format!("lambert_w is real only for z >= -1/e, got {z}")));
    }
    if z <= branch {
        return Ok(-1.0);
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let mut w = if z < 1.0 {
        let q = (2.0 * (std::f64::consts::E * z + 1.0)).sqrt();
        -1.0 + q - q * q / 3.0
    } else {
        let l = z.ln();
        l - l.max(1.0).ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        // Halley's step
        let d = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let next = w - f / d;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 1e-16 * (1.0 + w.abs());
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

/// A preference to optimize over a budget or earning hyperplane.
#[derive(Debug, Clone, Copy)]
pub enum Preference<'a> {
    Utility(&'a UtilityFamily),
    Disutility(&'a DisutilityFamily),
}

impl<'a> From<&'a UtilityFamily> for Preference<'a> {
    fn from(u: &'a UtilityFamily) -> Self {
        Preference::Utility(u)
    }
}

impl<'a> From<&'a DisutilityFamily> for Preference<'a> {
    fn from(d: &'a DisutilityFamily) -> Self {
        Preference::Disutility(d)
    }
}

type Objective<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

/// Brute-force demand: the best bundle on `<p, x> = B` found by a zooming
/// grid with `grid` initial divisions of the spending simplex. Utilities
/// are maximized (all prices must be positive); disutilities are minimized
/// over the chores with positive price.
pub fn oracle_demand<'a>(pref: impl Into<Preference<'a>>, p: &[f64], budget: f64, grid: usize) -> Result<OracleResult> {
    let pref = pref.into();
    let m = p.len();
    if m > 4 {
        return Err(Error::InvalidInstance(format!("grid demand supports up to 4 items, got {m}")));
    }
    if !(budget > 0.0) {
        return Err(Error::Domain("budget must be positive".into()));
    }
    let paid: Vec<usize> = (0..m).filter(|&j| p[j] > 0.0).collect();
    let bundle = |y: &[f64]| {
        let mut x = vec![0.0; m];
        for (k, &j) in paid.iter().enumerate() {
            x[j] = budget * y[k] / p[j];
        }
        x
    };
    let (sign, f): (f64, Objective) = match pref {
        Preference::Utility(u) => {
            u.validate(m)?;
            if paid.len() != m {
                return Err(Error::Domain("goods prices must be positive".into()));
            }
            (1.0, Box::new(move |y: &[f64]| u.eval(&bundle(y)).unwrap_or(f64::NEG_INFINITY)))
        }
        Preference::Disutility(d) => {
            d.validate(m)?;
            if paid.is_empty() {
                return Err(Error::Domain("no chore has a positive price".into()));
            }
            (-1.0, Box::new(move |y: &[f64]| -d.eval(&bundle(y)).unwrap_or(f64::INFINITY)))
        }
    };
    let r = simplex_search(paid.len(), 1.0, &*f, grid.max(1), 1e-12);
    Ok(OracleResult {
        value: sign * r.value,
        point: bundle(&r.point),
        precision: r.precision,
        method: "grid-zoom".into(),
    })
}
