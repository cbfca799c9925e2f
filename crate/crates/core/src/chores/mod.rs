//! Chores: indirect disutility, Roy's identity, the pole-free Fisher and
//! Lindahl chores programs, a KKT seeker and KKT residuals.

mod polish;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::market::{MarketInstance, MarketKind};
use crate::utilities::DisutilityFamily;
use crate::Matrix;

pub use solver::{solve_fisher_chores, solve_lindahl_chores, ChoresConfig, ChoresSolution, LindahlChoresSolution};

/// `h(p, B)`: least disutility needed to earn `B` at chore prices `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndirectDisutility {
    pub disutility: DisutilityFamily,
    pub budget: f64,
}

impl IndirectDisutility {
    pub fn new(disutility: DisutilityFamily, budget: f64) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::Domain(format!("budget must be positive, got {budget}")));
        }
        Ok(IndirectDisutility { disutility, budget })
    }

    /// `h(max(p, 0), B)`, extended real.
    pub fn value(&self, p: &[f64]) -> Result<f64> {
        self.disutility.indirect_disutility(p, self.budget)
    }

    /// `1 / h`, the dual disutility evaluated at `p`.
    pub fn reciprocal(&self, p: &[f64]) -> Result<f64> {
        Ok(self.disutility.dual_norm(p)? / self.budget)
    }

    /// A subgradient of `1 / h(., B)` at `p`.
    pub fn reciprocal_subgradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self.disutility.dual_norm_subgradient(p)?.iter().map(|g| g / self.budget).collect())
    }

    pub fn demand(&self, p: &[f64]) -> Result<Vec<f64>> {
        roy_chores(&self.disutility, p, self.budget)
    }
}

/// Indirect disutility `h(p, B) = B / d*(p)` with `d*` the dual norm; `+inf`
/// when nothing pays.
pub fn indirect_disutility(d: &DisutilityFamily, p: &[f64], budget: f64) -> Result<f64> {
    d.indirect_disutility(p, budget)
}

/// Roy's identity for chores: `x = B h(p, B) g` for a subgradient `g` of
/// `1 / h`. Linear ties are split equally.
pub fn roy_chores(d: &DisutilityFamily, p: &[f64], budget: f64) -> Result<Vec<f64>> {
    d.roy_demand(p, budget)
}

fn check_simplex(v: &[f64], total: f64, what: &str) -> Result<()> {
    let s: f64 = v.iter().sum();
    if v.iter().any(|x| !(*x >= -1e-12)) || (s - total).abs() > 1e-9 * total {
        return Err(Error::Domain(format!(
            "{what} must be nonnegative and sum to the total budget {total}, got sum {s}"
        )));
    }
    Ok(())
}

/// `sum_i B_i log(1 / h_i(p, B_i))` on the simplex `sum p = sum B`.
pub fn fisher_chores_objective(inst: &MarketInstance, p: &[f64]) -> Result<f64> {
    inst.expect_kind(MarketKind::FisherChores)?;
    check_dim(inst.m(), p.len())?;
    check_simplex(p, inst.total_budget(), "prices")?;
    let mut total = 0.0;
    for (d, &b) in inst.disutilities()?.iter().zip(inst.budgets()) {
        total += b * (d.dual_norm(p)? / b).ln();
    }
    Ok(total)
}

/// `sum_i B_i log d_i(x)` on the simplex `sum x = sum B`.
pub fn lindahl_chores_objective(inst: &MarketInstance, x: &[f64]) -> Result<f64> {
    inst.expect_kind(MarketKind::LindahlChores)?;
    check_dim(inst.m(), x.len())?;
    check_simplex(x, inst.total_budget(), "allocation")?;
    let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let mut total = 0.0;
    for (d, &b) in inst.disutilities()?.iter().zip(inst.budgets()) {
        total += b * d.eval(&x)?.ln();
    }
    Ok(total)
}

/// A candidate KKT point of the Fisher chores program, with its multipliers
/// and subgradients. Allocations are `x_i = lambda_i g_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktPoint {
    pub prices: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mu: f64,
    pub subgradients: Matrix,
}

impl KktPoint {
    /// Multipliers that any equilibrium satisfies: `beta_i = 1 / h_i`,
    /// `lambda_i = B_i h_i`, `mu = -1`, `alpha = 0`, `g_i = x_i / lambda_i`,
    /// and `gamma_j = sum_i x_ij - 1` on zero-price chores.
    pub fn from_allocations(inst: &MarketInstance, p: &[f64], allocations: &Matrix) -> Result<Self> {
        inst.expect_kind(MarketKind::FisherChores)?;
        check_dim(inst.m(), p.len())?;
        check_dim(inst.n(), allocations.len())?;
        let mut beta = Vec::with_capacity(inst.n());
        let mut lambda = Vec::with_capacity(inst.n());
        let mut subgradients = Vec::with_capacity(inst.n());
        for ((d, &b), x) in inst.disutilities()?.iter().zip(inst.budgets()).zip(allocations) {
            check_dim(inst.m(), x.len())?;
            let h = d.indirect_disutility(p, b)?;
            beta.push(1.0 / h);
            let l = b * h;
            lambda.push(l);
            subgradients.push(x.iter().map(|v| v / l).collect());
        }
        let mut gamma = vec![0.0; inst.m()];
        for (j, g) in gamma.iter_mut().enumerate() {
            if p[j] <= 0.0 {
                *g = allocations.iter().map(|r| r[j]).sum::<f64>() - 1.0;
            }
        }
        Ok(KktPoint { prices: p.to_vec(), beta, lambda, gamma, alpha: vec![0.0; inst.n()], mu: -1.0, subgradients })
    }

    /// Roy allocations at `p` with the tie rule of [`roy_chores`].
    pub fn at_prices(inst: &MarketInstance, p: &[f64]) -> Result<Self> {
        let allocations = roy_allocations(inst, p)?;
        Self::from_allocations(inst, p, &allocations)
    }

    /// `x_i = lambda_i g_i`, before any trimming.
    pub fn allocations(&self) -> Matrix {
        self.subgradients.iter().zip(&self.lambda).map(|(g, l)| g.iter().map(|v| v * l).collect()).collect()
    }
}

pub(crate) fn roy_allocations(inst: &MarketInstance, p: &[f64]) -> Result<Matrix> {
    inst.disutilities()?.iter().zip(inst.budgets()).map(|(d, &b)| roy_chores(d, p, b)).collect()
}

/// Violations of the six KKT conditions, plus a check that each `g_i` is a
/// subgradient of `1 / h_i` (equivalently that `lambda_i g_i` is an optimal
/// earning-constrained bundle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// (1) and (2): signs, the simplex constraint and `beta_i >= 1 / h_i`.
    pub primal: f64,
    /// (3): multiplier signs.
    pub dual: f64,
    /// (4)
    pub complementarity: f64,
    /// (5): `sum_i lambda_i g_ij - gamma_j + mu = 0`.
    pub stationarity_prices: f64,
    /// (6): `B_i / beta_i - lambda_i - alpha_i = 0`.
    pub stationarity_beta: f64,
    pub subgradient: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        [
            self.primal,
            self.dual,
            self.complementarity,
            self.stationarity_prices,
            self.stationarity_beta,
            self.subgradient,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn fisher_chores_kkt_residual(inst: &MarketInstance, point: &KktPoint) -> Result<KktResidual> {
    inst.expect_kind(MarketKind::FisherChores)?;
    let (n, m) = (inst.n(), inst.m());
    check_dim(m, point.prices.len())?;
    for v in [&point.beta, &point.lambda, &point.alpha] {
        check_dim(n, v.len())?;
    }
    check_dim(m, point.gamma.len())?;
    check_dim(n, point.subgradients.len())?;
    let p = &point.prices;
    let total = inst.total_budget();

    let mut primal = p.iter().fold(0.0f64, |a, v| a.max(-v));
    primal = primal.max((p.iter().sum::<f64>() - total).abs() / total);
    let mut dual = point.gamma.iter().chain(&point.lambda).chain(&point.alpha).fold(0.0f64, |a, v| a.max(-v));
    let mut comp = point.gamma.iter().zip(p).fold(0.0f64, |a, (g, q)| a.max((g * q).abs()));
    let mut stat_beta = 0.0f64;
    let mut subgradient = 0.0f64;
    let mut demand = vec![0.0; m];
    for i in 0..n {
        let d = &inst.disutilities()?[i];
        let b = inst.budgets()[i];
        let g = &point.subgradients[i];
        check_dim(m, g.len())?;
        let beta = point.beta[i];
        let recip = d.dual_norm(p)? / b;
        if !(beta > 0.0) {
            primal = f64::INFINITY;
        }
        primal = primal.max((recip - beta).max(0.0));
        comp = comp.max((point.lambda[i] * (recip - beta)).abs()).max((point.alpha[i] * beta).abs());
        stat_beta = stat_beta.max((b / beta - point.lambda[i] - point.alpha[i]).abs() / b);
        dual = dual.max(g.iter().fold(0.0f64, |a, v| a.max(-v)));

        let x: Vec<f64> = g.iter().map(|v| (v * point.lambda[i]).max(0.0)).collect();
        for (t, v) in demand.iter_mut().zip(&x) {
            *t += v;
        }
        let earned: f64 = x.iter().zip(p).map(|(a, q)| a * q.max(0.0)).sum();
        let h = 1.0 / recip;
        let excess = if h.is_finite() { (d.eval(&x)? - h).abs() / h.max(1e-300) } else { f64::INFINITY };
        subgradient = subgradient.max((earned - b).abs() / b).max(excess);
    }
    let stat = demand.iter().zip(&point.gamma).fold(0.0f64, |a, (x, g)| a.max((x - g + point.mu).abs()));
    Ok(KktResidual {
        primal,
        dual,
        complementarity: comp,
        stationarity_prices: stat,
        stationarity_beta: stat_beta,
        subgradient,
    })
}
