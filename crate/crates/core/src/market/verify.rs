//! Residual-based certification of every equilibrium definition.

use serde::{Deserialize, Serialize};

use super::{Equilibrium, MarketInstance, MarketKind};
use crate::error::Result;
use crate::Matrix;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Max-norm residuals of an equilibrium candidate. `certified` holds iff
/// every gap is at most `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub affordability_gap: f64,
    pub optimality_gap: f64,
    pub clearing_gap: f64,
    pub certified: bool,
    pub tolerance: f64,
}

impl ResidualReport {
    pub fn new(affordability_gap: f64, optimality_gap: f64, clearing_gap: f64, tolerance: f64) -> Self {
        let certified = [affordability_gap, optimality_gap, clearing_gap].iter().all(|g| *g <= tolerance);
        ResidualReport { affordability_gap, optimality_gap, clearing_gap, certified, tolerance }
    }

    pub fn max_gap(&self) -> f64 {
        self.affordability_gap.max(self.optimality_gap).max(self.clearing_gap)
    }
}

/// `(best - achieved) / max(|best|, 1e-12)`, clamped at zero; an unbounded
/// best value counts as a full shortfall.
fn relative_shortfall(best: f64, achieved: f64) -> f64 {
    if best.is_infinite() && best > 0.0 {
        return 1.0;
    }
    if achieved.is_nan() || best.is_nan() {
        return f64::INFINITY;
    }
    ((best - achieved) / best.abs().max(1e-12)).max(0.0)
}

/// Clips negative entries, returning the clipped vector and the largest
/// clipped magnitude.
fn clip(x: &[f64]) -> (Vec<f64>, f64) {
    let neg = x.iter().fold(0.0f64, |a, v| a.max(-v));
    (x.iter().map(|v| v.max(0.0)).collect(), neg)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column_sums(rows: &Matrix, m: usize) -> Vec<f64> {
    let mut s = vec![0.0; m];
    for r in rows {
        for (t, v) in s.iter_mut().zip(r) {
            *t += v;
        }
    }
    s
}

/// Dispatches on the market kind.
pub fn verify(inst: &MarketInstance, eq: &Equilibrium, tol: f64) -> Result<ResidualReport> {
    match inst.kind() {
        MarketKind::FisherGoods => verify_fisher(inst, eq, tol),
        MarketKind::LindahlGoods => verify_lindahl(inst, eq, tol),
        MarketKind::FisherChores => verify_fisher_chores(inst, eq, tol),
        MarketKind::LindahlChores => verify_lindahl_chores(inst, eq, tol),
    }
}

/// Affordability, utility maximisation against the indirect utility, and
/// clearing of every priced good (no over-allocation of free goods).
pub fn verify_fisher(inst: &MarketInstance, eq: &Equilibrium, tol: f64) -> Result<ResidualReport> {
    inst.expect_kind(MarketKind::FisherGoods)?;
    eq.check_shape(inst)?;
    let Equilibrium::Fisher { allocations, prices } = eq else { unreachable!() };
    let us = inst.utilities()?;
    let (p, neg_p) = clip(prices);
    let mut afford = 0.0f64;
    let mut opt = 0.0f64;
    let mut clear = neg_p;
    for ((u, x), &b) in us.iter().zip(allocations).zip(inst.budgets()) {
        let (x, neg) = clip(x);
        clear = clear.max(neg);
        afford = afford.max(dot(&p, &x) - b);
        let v = u.indirect_utility(&p, b)?;
        opt = opt.max(relative_shortfall(v, u.eval(&x)?));
    }
    for (s, pj) in column_sums(allocations, inst.m()).iter().zip(&p) {
        let gap = if *pj > tol { (s - 1.0).abs() } else { (s - 1.0).max(0.0) };
        clear = clear.max(gap);
    }
    Ok(ResidualReport::new(afford.max(0.0), opt, clear, tol))
}

/// Affordability under personalized prices, utility maximisation, and the
/// profit condition: price sums at most one, exactly one on funded goods.
pub fn verify_lindahl(inst: &MarketInstance, eq: &Equilibrium, tol: f64) -> Result<ResidualReport> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    eq.check_shape(inst)?;
    let Equilibrium::Lindahl { allocation, prices } = eq else { unreachable!() };
    let us = inst.utilities()?;
    let (x, neg_x) = clip(allocation);
    let mut afford = 0.0f64;
    let mut opt = 0.0f64;
    let mut clear = neg_x;
    for ((u, pi), &b) in us.iter().zip(prices).zip(inst.budgets()) {
        let (pi, neg) = clip(pi);
        clear = clear.max(neg);
        afford = afford.max(dot(&pi, &x) - b);
        let v = u.indirect_utility(&pi, b)?;
        opt = opt.max(relative_shortfall(v, u.eval(&x)?));
    }
    for (s, xj) in column_sums(prices, inst.m()).iter().zip(&x) {
        let gap = if *xj > tol { (s - 1.0).abs() } else { (s - 1.0).max(0.0) };
        clear = clear.max(gap);
    }
    Ok(ResidualReport::new(afford.max(0.0), opt, clear, tol))
}

/// Exact earning, disutility minimisation against the indirect
/// disutility, and clearing. Over-allocated zero-price chores are trimmed
/// back to unit supply first.
pub fn verify_fisher_chores(inst: &MarketInstance, eq: &Equilibrium, tol: f64) -> Result<ResidualReport> {
    inst.expect_kind(MarketKind::FisherChores)?;
    eq.check_shape(inst)?;
    let Equilibrium::Fisher { allocations, prices } = eq else { unreachable!() };
    let (p, neg_p) = clip(prices);
    let rows: Matrix = allocations.iter().map(|r| clip(r).0).collect();
    let neg_x = allocations.iter().map(|r| clip(r).1).fold(0.0, f64::max);
    let rows = trim_free_columns(&rows, &p, tol);
    let (afford, opt) = chores_agent_gaps(inst, rows.iter().map(|r| r.as_slice()), &p)?;
    let mut clear = neg_p.max(neg_x);
    for s in column_sums(&rows, inst.m()) {
        clear = clear.max((s - 1.0).abs());
    }
    Ok(ResidualReport::new(afford, opt, clear, tol))
}

/// Exact earning under personalized prices, disutility minimisation, and
/// price feasibility (personalized prices sum to one). Chores with no
/// allocation may carry surplus prices, mirroring the trimming on the
/// Fisher side.
pub fn verify_lindahl_chores(inst: &MarketInstance, eq: &Equilibrium, tol: f64) -> Result<ResidualReport> {
    inst.expect_kind(MarketKind::LindahlChores)?;
    eq.check_shape(inst)?;
    let Equilibrium::Lindahl { allocation, prices } = eq else { unreachable!() };
    let (x, neg_x) = clip(allocation);
    let ds = inst.disutilities()?;
    let mut afford = 0.0f64;
    let mut opt = 0.0f64;
    let mut clear = neg_x;
    for ((d, pi), &b) in ds.iter().zip(prices).zip(inst.budgets()) {
        let (pi, neg) = clip(pi);
        clear = clear.max(neg);
        afford = afford.max((dot(&pi, &x) - b).abs());
        let h = d.indirect_disutility(&pi, b)?;
        opt = opt.max(chores_shortfall(h, d.eval(&x)?));
    }
    for (s, xj) in column_sums(prices, inst.m()).iter().zip(&x) {
        let gap = if *xj > tol { (s - 1.0).abs() } else { (1.0 - s).max(0.0) };
        clear = clear.max(gap);
    }
    Ok(ResidualReport::new(afford, opt, clear, tol))
}

fn chores_shortfall(h: f64, achieved: f64) -> f64 {
    if h.is_infinite() {
        return if achieved.is_infinite() { 0.0 } else { f64::INFINITY };
    }
    ((achieved - h) / h.abs().max(1e-12)).max(0.0)
}

fn chores_agent_gaps<'a>(
    inst: &MarketInstance,
    rows: impl Iterator<Item = &'a [f64]>,
    p: &[f64],
) -> Result<(f64, f64)> {
    let mut afford = 0.0f64;
    let mut opt = 0.0f64;
    for ((d, x), &b) in inst.disutilities()?.iter().zip(rows).zip(inst.budgets()) {
        afford = afford.max((dot(p, x) - b).abs());
        let h = d.indirect_disutility(p, b)?;
        opt = opt.max(chores_shortfall(h, d.eval(x)?));
    }
    Ok((afford, opt))
}

/// Scales down columns of zero-price chores whose total exceeds one.
pub(crate) fn trim_free_columns(rows: &Matrix, p: &[f64], tol: f64) -> Matrix {
    let sums = column_sums(rows, p.len());
    rows.iter()
        .map(|r| {
            r.iter().enumerate().map(|(j, v)| if p[j] <= tol && sums[j] > 1.0 { v / sums[j] } else { *v }).collect()
        })
        .collect()
}
