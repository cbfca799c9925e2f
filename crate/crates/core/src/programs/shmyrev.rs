//! The spending-variable program for Lindahl markets with CES-type
//! utilities:
//!
//! `Phi(b) = sum_j x_j log x_j - sum_{CES i} (1/rho_i) sum_j b_ij log(b_ij / a_ij)
//!           - sum_{Leontief i} sum_j b_ij log a_ij`
//!
//! with `x_j = sum_i b_ij`. This is the textbook form with the
//! `b_ij log x_j` terms of all agents collected into `x_j log x_j`.
//! Cobb-Douglas rows are pinned to `B_i a_ij / sum a_i`.

use crate::error::{check_dim, Error, Result};
use crate::market::{MarketInstance, MarketKind};
use crate::utilities::UtilityFamily;
use crate::Matrix;

/// Curvature of the program in the free spendings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShmyrevCurvature {
    /// All elasticities in `[0, 1]`: maximise.
    Concave,
    /// All elasticities in `[-inf, 0]`: minimise.
    Convex,
    /// Mixed signs: the objective is available, no solver claims.
    Indefinite,
}

/// Elasticity of a CES-type family, or an error for the others.
pub fn shmyrev_rho(u: &UtilityFamily) -> Result<f64> {
    u.ces_rho().ok_or_else(|| Error::Incompatible(format!("{} utilities have no spending program", u.kind_name())))
}

pub(crate) fn rhos(inst: &MarketInstance) -> Result<Vec<f64>> {
    inst.utilities()?.iter().map(shmyrev_rho).collect()
}

impl ShmyrevCurvature {
    pub fn of(inst: &MarketInstance) -> Result<Self> {
        let r = rhos(inst)?;
        Ok(if r.iter().all(|&v| v >= 0.0) {
            ShmyrevCurvature::Concave
        } else if r.iter().all(|&v| v <= 0.0) {
            ShmyrevCurvature::Convex
        } else {
            ShmyrevCurvature::Indefinite
        })
    }
}

/// Rows that are free variables (every agent except Cobb-Douglas ones).
pub fn free_rows(inst: &MarketInstance) -> Result<Vec<bool>> {
    Ok(rhos(inst)?.iter().map(|&r| r != 0.0).collect())
}

/// Overwrites Cobb-Douglas rows with their pinned spendings.
pub fn pin_cobb_douglas(inst: &MarketInstance, b: &mut Matrix) -> Result<()> {
    for ((u, row), &budget) in inst.utilities()?.iter().zip(b.iter_mut()).zip(inst.budgets()) {
        if let UtilityFamily::CobbDouglas { a, .. } = u {
            let total: f64 = a.iter().sum();
            for (v, w) in row.iter_mut().zip(a) {
                *v = budget * w / total;
            }
        }
    }
    Ok(())
}

fn prepare(inst: &MarketInstance, b: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_dim(inst.n(), b.len())?;
    for row in b {
        check_dim(inst.m(), row.len())?;
        if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("spending must be finite and nonnegative".into()));
        }
    }
    let mut b = b.clone();
    pin_cobb_douglas(inst, &mut b)?;
    let mut x = vec![0.0; inst.m()];
    for row in &b {
        for (t, v) in x.iter_mut().zip(row) {
            *t += v;
        }
    }
    Ok((b, x))
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

fn weights(u: &UtilityFamily) -> &[f64] {
    u.coefficients().expect("flat CES-type family")
}

pub fn shmyrev_ces_objective(inst: &MarketInstance, b: &Matrix) -> Result<f64> {
    let r = rhos(inst)?;
    let (b, x) = prepare(inst, b)?;
    let mut phi: f64 = x.iter().map(|&v| xlogx(v)).sum();
    for ((u, row), &rho) in inst.utilities()?.iter().zip(&b).zip(&r) {
        let a = weights(u);
        if rho == 0.0 {
            continue;
        }
        for (&bij, &aij) in row.iter().zip(a) {
            if bij == 0.0 {
                continue;
            }
            if aij <= 0.0 {
                return Err(Error::Domain("spending on a good outside the agent's support".into()));
            }
            if rho == f64::NEG_INFINITY {
                phi -= bij * aij.ln();
            } else {
                phi -= (bij * (bij / aij).ln()) / rho;
            }
        }
    }
    Ok(phi)
}

/// Partial derivatives with respect to every free spending; pinned rows and
/// entries outside an agent's support are zero.
pub fn shmyrev_ces_gradient(inst: &MarketInstance, b: &Matrix) -> Result<Matrix> {
    let r = rhos(inst)?;
    let (b, x) = prepare(inst, b)?;
    let mut g = vec![vec![0.0; inst.m()]; inst.n()];
    for (i, (u, row)) in inst.utilities()?.iter().zip(&b).enumerate() {
        let rho = r[i];
        if rho == 0.0 {
            continue;
        }
        let a = weights(u);
        for j in 0..inst.m() {
            if a[j] <= 0.0 {
                continue;
            }
            if row[j] <= 0.0 {
                return Err(Error::Domain(format!("zero spending by agent {i} on supported good {j}")));
            }
            let common = x[j].ln() + 1.0;
            g[i][j] =
                if rho == f64::NEG_INFINITY { common - a[j].ln() } else { common - ((row[j] / a[j]).ln() + 1.0) / rho };
        }
    }
    Ok(g)
}
