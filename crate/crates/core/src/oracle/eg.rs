use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::OracleResult;
use crate::error::{Error, Result};
use crate::forest::{forest_equilibrium, Side};
use crate::market::{verify_fisher, Equilibrium, MarketInstance, MarketKind, ResidualReport};
use crate::programs::eg_objective;
use crate::utilities::UtilityFamily;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgSolution {
    pub equilibrium: Equilibrium,
    pub report: ResidualReport,
    /// EG value, prices as the point, and the verifier's largest gap as the
    /// precision.
    pub result: OracleResult,
}

fn is_linear(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Linear { .. } => true,
        UtilityFamily::Ces { rho, .. } => *rho == 1.0,
        _ => false,
    }
}

fn has_smooth_demand(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Leontief { .. } | UtilityFamily::CobbDouglas { .. } => true,
        UtilityFamily::Ces { rho, .. } => *rho < 1.0,
        UtilityFamily::Nested { root, .. } => !root.any_node(&|r| r == 1.0),
        _ => false,
    }
}

/// Fisher equilibrium through the Eisenberg-Gale program. Linear markets:
/// projected gradient on the allocation, then the exact forest solution.
/// Other homogeneous markets: projected Newton on the dual price program
/// `sum_j p_j + sum_i B_i log v_i(p, B_i)`. The result must pass
/// `verify_fisher` within `precision`.
pub fn oracle_eg(inst: &MarketInstance, precision: f64) -> Result<EgSolution> {
    inst.expect_kind(MarketKind::FisherGoods)?;
    if inst.n() * inst.m() > 64 {
        return Err(Error::InvalidInstance("the EG oracle handles n*m <= 64".into()));
    }
    let us = inst.utilities()?;
    if let Some(u) = us.iter().find(|u| !u.is_homogeneous()) {
        return Err(Error::Incompatible(format!("{} utilities are not homogeneous", u.kind_name())));
    }
    let (equilibrium, method) = if us.iter().all(is_linear) {
        (linear_eg(inst)?, "eg-projected-gradient+forest")
    } else if us.iter().all(has_smooth_demand) {
        (price_newton(inst)?, "eg-dual-price-newton")
    } else {
        return Err(Error::Incompatible("the EG oracle needs all-linear or all-smooth-demand utilities".into()));
    };
    let report = verify_fisher(inst, &equilibrium, precision)?;
    if !report.certified {
        return Err(Error::NotConverged { iterations: 0, residual: report.max_gap() });
    }
    let Equilibrium::Fisher { allocations, prices } = &equilibrium else { unreachable!() };
    let value = eg_objective(inst, allocations)?;
    let result = OracleResult { value, point: prices.clone(), precision: report.max_gap(), method: method.into() };
    Ok(EgSolution { equilibrium, report, result })
}

fn linear_coefficients(us: &[UtilityFamily]) -> Matrix {
    us.iter().map(|u| u.coefficients().expect("linear family").iter().map(|a| a * u.scale()).collect()).collect()
}

fn project_unit(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut acc, mut theta) = (0.0, 0.0);
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

fn linear_eg(inst: &MarketInstance) -> Result<Equilibrium> {
    let (n, m) = (inst.n(), inst.m());
    let a = linear_coefficients(inst.utilities()?);
    let b = inst.budgets();
    let phi = |x: &Matrix| -> f64 { (0..n).map(|i| b[i] * (0..m).map(|j| a[i][j] * x[i][j]).sum::<f64>().ln()).sum() };
    let mut x = vec![vec![1.0 / n as f64; m]; n];
    let mut f = phi(&x);
    let mut eta = 1.0;
    for _ in 0..20_000 {
        let u: Vec<f64> = (0..n).map(|i| (0..m).map(|j| a[i][j] * x[i][j]).sum()).collect();
        let g: Matrix = (0..n).map(|i| (0..m).map(|j| b[i] * a[i][j] / u[i]).collect()).collect();
        let mut accepted = false;
        while eta > 1e-16 {
            let mut next = x.clone();
            for j in 0..m {
                let mut col: Vec<f64> = (0..n).map(|i| x[i][j] + eta * g[i][j]).collect();
                project_unit(&mut col);
                for i in 0..n {
                    next[i][j] = col[i];
                }
            }
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                for j in 0..m {
                    let d = next[i][j] - x[i][j];
                    lin += g[i][j] * d;
                    sq += d * d;
                }
            }
            let fn_ = phi(&next);
            if fn_ >= f + lin - sq / (2.0 * eta) - 1e-15 * f.abs() {
                x = next;
                f = fn_;
                eta *= 1.5;
                accepted = sq.sqrt() / eta > 1e-13;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let c = a.clone();
    let mut edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| a[i][j] > 0.0)
        .map(|(i, j)| (i, j, x[i][j]))
        .collect();
    edges.sort_by(|p, q| q.2.total_cmp(&p.2));
    for theta in [0.3, 0.1, 3e-2, 1e-2, 1e-3, 1e-4, 1e-6] {
        let chosen: Vec<(usize, usize)> = edges.iter().filter(|e| e.2 >= theta).map(|e| (e.0, e.1)).collect();
        if let Some((prices, allocations)) = forest_equilibrium(&c, b, &chosen, Side::Goods) {
            return Ok(Equilibrium::Fisher { allocations, prices });
        }
    }
    Err(Error::NotConverged { iterations: 20_000, residual: f64::NAN })
}

/// `f(p) = sum_j p_j + sum_i B_i log v_i(p, B_i)`, convex in `p`, with
/// gradient `1 - sum_i x_i(p)`.
fn dual_value(inst: &MarketInstance, p: &[f64]) -> f64 {
    let mut f: f64 = p.iter().sum();
    for (u, &b) in inst.utilities().expect("goods").iter().zip(inst.budgets()) {
        match u.indirect_utility(p, b) {
            Ok(v) if v > 0.0 && v.is_finite() => f += b * v.ln(),
            _ => return f64::INFINITY,
        }
    }
    f
}

fn dual_gradient(inst: &MarketInstance, p: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![1.0; p.len()];
    for (u, &b) in inst.utilities()?.iter().zip(inst.budgets()) {
        for (t, x) in g.iter_mut().zip(u.marshallian_demand(p, b)?) {
            *t -= x;
        }
    }
    Ok(g)
}

fn price_newton(inst: &MarketInstance) -> Result<Equilibrium> {
    let m = inst.m();
    let total = inst.total_budget();
    let mut p = vec![total / m as f64; m];
    let mut f = dual_value(inst, &p);
    for _ in 0..500 {
        let g = dual_gradient(inst, &p)?;
        let free: Vec<usize> = (0..m).filter(|&j| p[j] > 0.0 || g[j] < 0.0).collect();
        let kkt = (0..m).fold(0.0f64, |acc, j| acc.max(if free.contains(&j) { g[j].abs() } else { (-g[j]).max(0.0) }));
        if kkt < 1e-14 {
            break;
        }
        let k = free.len();
        let mut hess = DMatrix::zeros(k, k);
        for (c, &l) in free.iter().enumerate() {
            let h = 1e-6 * p[l].max(1e-6 * total);
            let mut up = p.clone();
            up[l] += h;
            let gu = dual_gradient(inst, &up)?;
            let (gd, span) = if p[l] > h {
                let mut dn = p.clone();
                dn[l] -= h;
                (dual_gradient(inst, &dn)?, 2.0 * h)
            } else {
                (g.clone(), h)
            };
            for (r, &j) in free.iter().enumerate() {
                hess[(r, c)] = (gu[j] - gd[j]) / span;
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let rhs = -DVector::from_iterator(k, free.iter().map(|&j| g[j]));
        let mut shift = 0.0;
        let dir = loop {
            let reg = &hess + DMatrix::identity(k, k) * shift;
            if let Some(ch) = reg.cholesky() {
                break ch.solve(&rhs);
            }
            shift = if shift == 0.0 { 1e-12 * hess.norm().max(1e-300) } else { shift * 10.0 };
            if shift > 1e12 {
                break rhs.clone();
            }
        };
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-12 {
            let mut trial = p.clone();
            for (r, &j) in free.iter().enumerate() {
                trial[j] = (p[j] + alpha * dir[r]).max(0.0);
            }
            let ft = dual_value(inst, &trial);
            let decrease: f64 = (0..m).map(|j| g[j] * (trial[j] - p[j])).sum();
            if ft <= f + 1e-4 * decrease.min(0.0) + 1e-15 * f.abs() {
                moved = trial != p;
                p = trial;
                f = ft;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let allocations: Matrix = inst
        .utilities()?
        .iter()
        .zip(inst.budgets())
        .map(|(u, &b)| u.marshallian_demand(&p, b))
        .collect::<Result<_>>()?;
    Ok(Equilibrium::Fisher { allocations, prices: p })
}
