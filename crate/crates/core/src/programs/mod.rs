//! Objectives of the convex programs on the goods side and welfare
//! metrics. Objectives reject infeasible input rather than projecting it.

mod shmyrev;

pub use shmyrev::{
    free_rows, pin_cobb_douglas, shmyrev_ces_gradient, shmyrev_ces_objective, shmyrev_rho, ShmyrevCurvature,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::market::{MarketInstance, MarketKind};
use crate::Matrix;

const FEAS_TOL: f64 = 1e-9;

/// Budget-weighted Nash social welfare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NswValue {
    /// `sum_i B_i log u_i`
    pub log_nsw: f64,
    /// `exp(log_nsw / sum_i B_i)`
    pub geometric_mean: f64,
}

/// An allocation in either market form.
#[derive(Debug, Clone, Copy)]
pub enum Allocation<'a> {
    /// One bundle per agent (Fisher).
    Private(&'a Matrix),
    /// One bundle shared by all agents (Lindahl).
    Public(&'a [f64]),
}

impl<'a> From<&'a Matrix> for Allocation<'a> {
    fn from(x: &'a Matrix) -> Self {
        Allocation::Private(x)
    }
}

impl<'a> From<&'a [f64]> for Allocation<'a> {
    fn from(x: &'a [f64]) -> Self {
        Allocation::Public(x)
    }
}

impl<'a> From<&'a Vec<f64>> for Allocation<'a> {
    fn from(x: &'a Vec<f64>) -> Self {
        Allocation::Public(x)
    }
}

fn log_or_neg_inf(u: f64) -> f64 {
    if u > 0.0 {
        u.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn check_nonneg(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("allocation must be finite and nonnegative".into()));
    }
    Ok(())
}

fn check_private(inst: &MarketInstance, x: &Matrix) -> Result<()> {
    check_dim(inst.n(), x.len())?;
    let mut col = vec![0.0; inst.m()];
    for row in x {
        check_dim(inst.m(), row.len())?;
        check_nonneg(row)?;
        for (c, v) in col.iter_mut().zip(row) {
            *c += v;
        }
    }
    if let Some(j) = col.iter().position(|c| *c > 1.0 + FEAS_TOL) {
        return Err(Error::Domain(format!("good {j} is over-allocated ({})", col[j])));
    }
    Ok(())
}

fn check_public(inst: &MarketInstance, x: &[f64]) -> Result<()> {
    check_dim(inst.m(), x.len())?;
    check_nonneg(x)?;
    let total = inst.total_budget();
    let s: f64 = x.iter().sum();
    if s > total * (1.0 + FEAS_TOL) {
        return Err(Error::Domain(format!("allocation total {s} exceeds the budget total {total}")));
    }
    Ok(())
}

/// Eisenberg-Gale objective `sum_i B_i log u_i(x_i)`; `-inf` when some
/// agent gets nothing.
pub fn eg_objective(inst: &MarketInstance, x: &Matrix) -> Result<f64> {
    inst.expect_kind(MarketKind::FisherGoods)?;
    check_private(inst, x)?;
    let mut total = 0.0;
    for ((u, xi), b) in inst.utilities()?.iter().zip(x).zip(inst.budgets()) {
        total += b * log_or_neg_inf(u.eval(xi)?);
    }
    Ok(total)
}

/// Lindahl NSW objective `sum_i B_i log u_i(x)` subject to
/// `sum_j x_j <= sum_i B_i`.
pub fn lindahl_nsw_objective(inst: &MarketInstance, x: &[f64]) -> Result<f64> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_public(inst, x)?;
    let mut total = 0.0;
    for (u, b) in inst.utilities()?.iter().zip(inst.budgets()) {
        total += b * log_or_neg_inf(u.eval(x)?);
    }
    Ok(total)
}

pub fn nsw<'a>(inst: &MarketInstance, alloc: impl Into<Allocation<'a>>) -> Result<NswValue> {
    let log_nsw = match alloc.into() {
        Allocation::Private(x) => {
            check_private(inst, x)?;
            let us = inst.utilities()?;
            let mut s = 0.0;
            for ((u, xi), b) in us.iter().zip(x).zip(inst.budgets()) {
                s += b * log_or_neg_inf(u.eval(xi)?);
            }
            s
        }
        Allocation::Public(x) => {
            check_public(inst, x)?;
            let us = inst.utilities()?;
            let mut s = 0.0;
            for (u, b) in us.iter().zip(inst.budgets()) {
                s += b * log_or_neg_inf(u.eval(x)?);
            }
            s
        }
    };
    Ok(NswValue { log_nsw, geometric_mean: (log_nsw / inst.total_budget()).exp() })
}

/// Ratio of budget-weighted geometric means, computed in log space.
pub fn nsw_ratio<'a, 'b>(
    inst: &MarketInstance,
    eq_alloc: impl Into<Allocation<'a>>,
    opt_alloc: impl Into<Allocation<'b>>,
) -> Result<f64> {
    let opt = nsw(inst, opt_alloc)?;
    if !opt.log_nsw.is_finite() {
        return Err(Error::Domain("reference allocation leaves some agent with zero utility".into()));
    }
    let eq = nsw(inst, eq_alloc)?;
    Ok(((eq.log_nsw - opt.log_nsw) / inst.total_budget()).exp())
}
