//! Single-node CES arithmetic shared by the flat and nested families.
//!
//! A node aggregates child values `v` with weights `a` and elasticity `rho`.
//! `rho == 1` is the additive node and `rho == -inf` the Leontief node
//! (`min v_c / a_c`). Children with a zero weight are ignored everywhere.

use crate::error::{Error, Result};

pub(crate) const RHO_MIN: f64 = -1e9;
pub(crate) const RHO_EPS: f64 = 1e-9;

/// Rejects elasticities that must be expressed with a dedicated kind.
pub(crate) fn check_rho(rho: f64, allow_leontief: bool) -> Result<()> {
    if rho == f64::NEG_INFINITY {
        if allow_leontief {
            return Ok(());
        }
        return Err(Error::InvalidFamily("rho = -inf is not a CES parameter; use the leontief kind".into()));
    }
    if !rho.is_finite() || rho > 1.0 {
        return Err(Error::InvalidFamily(format!("rho must lie in (-inf, 1], got {rho}")));
    }
    if rho.abs() < RHO_EPS {
        return Err(Error::InvalidFamily("rho too close to 0; use the cobb_douglas kind".into()));
    }
    if rho < RHO_MIN {
        return Err(Error::InvalidFamily(format!("rho = {rho} is below {RHO_MIN}; use the leontief kind")));
    }
    Ok(())
}

pub(crate) fn check_coefficients(a: &[f64], what: &str) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidFamily(format!("{what}: no coefficients")));
    }
    if a.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidFamily(format!("{what}: coefficients must be finite and nonnegative")));
    }
    if !a.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidFamily(format!("{what}: at least one coefficient must be positive")));
    }
    Ok(())
}

/// `rho / (rho - 1)`, with the limits mapped between the additive and
/// Leontief nodes.
pub(crate) fn conjugate(rho: f64) -> f64 {
    if rho == 1.0 {
        f64::NEG_INFINITY
    } else if rho == f64::NEG_INFINITY {
        1.0
    } else {
        rho / (rho - 1.0)
    }
}

/// Parameters of the node that computes the unit cost of `(rho, a)`.
pub(crate) fn dual_node(rho: f64, a: &[f64]) -> (f64, Vec<f64>) {
    let hat = conjugate(rho);
    if rho == 1.0 || rho == f64::NEG_INFINITY {
        (hat, a.to_vec())
    } else {
        let e = 1.0 - hat;
        (hat, a.iter().map(|&w| if w > 0.0 { w.powf(e) } else { 0.0 }).collect())
    }
}

pub(crate) fn aggregate(rho: f64, a: &[f64], v: &[f64]) -> f64 {
    if rho == 1.0 {
        return a.iter().zip(v).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x).sum();
    }
    if rho == f64::NEG_INFINITY {
        return a.iter().zip(v).filter(|(w, _)| **w > 0.0).map(|(w, x)| x / w).fold(f64::INFINITY, f64::min);
    }
    let s: f64 = a.iter().zip(v).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x.powf(rho)).sum();
    s.powf(1.0 / rho)
}

/// Cost of one unit of the aggregate when child units cost `c`.
pub(crate) fn unit_cost(rho: f64, a: &[f64], c: &[f64]) -> f64 {
    if rho == 1.0 {
        return a.iter().zip(c).filter(|(w, _)| **w > 0.0).map(|(w, p)| p / w).fold(f64::INFINITY, f64::min);
    }
    if rho == f64::NEG_INFINITY {
        return a.iter().zip(c).filter(|(w, _)| **w > 0.0).map(|(w, p)| w * p).sum();
    }
    let sigma = 1.0 / (1.0 - rho);
    let e = 1.0 - sigma;
    let s: f64 = a.iter().zip(c).filter(|(w, _)| **w > 0.0).map(|(w, p)| w.powf(sigma) * p.powf(e)).sum();
    s.powf(1.0 / e)
}

/// Budget shares of a cost-minimising buyer of the aggregate.
/// Ties of the additive node are split equally.
pub(crate) fn cost_shares(rho: f64, a: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    let mut s = vec![0.0; n];
    for (w, p) in a.iter().zip(c) {
        if *w > 0.0 && *p <= 0.0 && rho > 0.0 {
            return Err(Error::Unbounded("zero price on a valued good".into()));
        }
    }
    if rho == 1.0 {
        let best = unit_cost(1.0, a, c);
        let tol = 1e-12 * best.abs();
        let ties: Vec<usize> = (0..n).filter(|&k| a[k] > 0.0 && (c[k] / a[k] - best).abs() <= tol).collect();
        let share = 1.0 / ties.len() as f64;
        for k in ties {
            s[k] = share;
        }
        return Ok(s);
    }
    if rho == f64::NEG_INFINITY {
        for k in 0..n {
            if a[k] > 0.0 {
                s[k] = a[k] * c[k];
            }
        }
    } else {
        let sigma = 1.0 / (1.0 - rho);
        let e = 1.0 - sigma;
        for k in 0..n {
            if a[k] > 0.0 {
                if c[k] <= 0.0 {
                    return Err(Error::Unbounded("zero price on a complementary good".into()));
                }
                s[k] = a[k].powf(sigma) * c[k].powf(e);
            }
        }
    }
    let total: f64 = s.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Unbounded("aggregate has zero cost".into()));
    }
    s.iter_mut().for_each(|v| *v /= total);
    Ok(s)
}

/// `v_c * du/dv_c / u`; sums to one by Euler's identity.
pub(crate) fn value_shares(rho: f64, a: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if rho == f64::NEG_INFINITY {
        return Err(Error::Domain("Leontief node is not differentiable".into()));
    }
    let mut s: Vec<f64> = a.iter().zip(v).map(|(w, x)| if *w > 0.0 { w * x.powf(rho) } else { 0.0 }).collect();
    let total: f64 = s.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Domain("value shares undefined at this point".into()));
    }
    s.iter_mut().for_each(|x| *x /= total);
    Ok(s)
}

/// Partial derivatives of the aggregate `u` with respect to child values.
pub(crate) fn partials(rho: f64, a: &[f64], v: &[f64], u: f64) -> Result<Vec<f64>> {
    if rho == f64::NEG_INFINITY {
        return Err(Error::Domain("Leontief node is not differentiable".into()));
    }
    if rho == 1.0 {
        return Ok(a.iter().map(|&w| w.max(0.0)).collect());
    }
    let mut g = vec![0.0; a.len()];
    for k in 0..a.len() {
        if a[k] > 0.0 {
            if v[k] <= 0.0 {
                return Err(Error::Domain("gradient is singular on the boundary".into()));
            }
            g[k] = a[k] * v[k].powf(rho - 1.0) * u.powf(1.0 - rho);
        }
    }
    Ok(g)
}
