use serde::{Deserialize, Serialize};

use super::polish::{linear_polish, newton_polish};
use super::{fisher_chores_kkt_residual, roy_allocations, KktPoint, KktResidual};
use crate::error::{Error, Result};
use crate::market::{
    dualize, dualize_equilibrium, trim_free_columns, verify_fisher_chores, verify_lindahl_chores, Equilibrium,
    MarketInstance, MarketKind, ResidualReport,
};
use crate::utilities::DisutilityFamily;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoresConfig {
    /// Projected-gradient iterations per smoothing stage.
    pub max_iters: usize,
    /// KKT residual at which the solver stops.
    pub kkt_tol: f64,
    /// Tolerance handed to the equilibrium verifier.
    pub verify_tol: f64,
    /// Exponents `q` of the `l_q` smoothing applied to linear disutilities.
    pub smoothing: Vec<f64>,
}

impl Default for ChoresConfig {
    fn default() -> Self {
        ChoresConfig {
            max_iters: 3000,
            kkt_tol: 1e-8,
            verify_tol: 1e-6,
            smoothing: vec![4.0, 16.0, 64.0, 256.0, 1024.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoresSolution {
    pub point: KktPoint,
    pub kkt: KktResidual,
    /// Prices and allocations with zero-price over-allocation trimmed.
    pub equilibrium: Equilibrium,
    pub report: ResidualReport,
    pub iterations: usize,
    /// KKT residual within `kkt_tol` and verifier certification.
    pub certified: bool,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindahlChoresSolution {
    pub equilibrium: Equilibrium,
    pub report: ResidualReport,
    /// The Fisher chores solve on the dual market.
    pub dual: ChoresSolution,
    pub certified: bool,
}

pub(crate) fn is_linear(d: &DisutilityFamily) -> bool {
    match d {
        DisutilityFamily::Linear { .. } => true,
        DisutilityFamily::CesConvex { rho, .. } => *rho == 1.0,
        DisutilityFamily::MaxRatio { .. } => false,
    }
}

/// Linear disutilities replaced by the `ces_convex` family whose dual norm is
/// the `l_q` norm of `p_j / d_j`.
fn smoothed(d: &DisutilityFamily, q: f64) -> DisutilityFamily {
    if !is_linear(d) || !q.is_finite() {
        return d.clone();
    }
    let rho = q / (q - 1.0);
    DisutilityFamily::CesConvex { d: d.coefficients().iter().map(|v| v.powf(rho)).collect(), rho, scale: d.scale() }
}

/// Euclidean projection onto `{p >= 0, sum p = total}`.
pub(crate) fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - total) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn objective(fams: &[DisutilityFamily], budgets: &[f64], p: &[f64]) -> f64 {
    fams.iter().zip(budgets).map(|(d, b)| b * d.dual_norm_unchecked(p).ln()).sum()
}

fn gradient(fams: &[DisutilityFamily], budgets: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; p.len()];
    for (d, b) in fams.iter().zip(budgets) {
        let n = d.dual_norm_unchecked(p);
        for (t, v) in g.iter_mut().zip(d.dual_norm_subgradient(p)?) {
            *t += b * v / n;
        }
    }
    Ok(g)
}

/// Projected gradient with Armijo backtracking on `sum_i B_i log d*_i(p)`.
fn projected_gradient(
    fams: &[DisutilityFamily],
    budgets: &[f64],
    mut p: Vec<f64>,
    max_iters: usize,
) -> Result<(Vec<f64>, usize)> {
    let total: f64 = budgets.iter().sum();
    let mut eta = total;
    let mut f = objective(fams, budgets, &p);
    for it in 0..max_iters {
        let g = gradient(fams, budgets, &p)?;
        loop {
            let next = project_simplex(&p.iter().zip(&g).map(|(a, b)| a - eta * b).collect::<Vec<_>>(), total);
            let step: Vec<f64> = next.iter().zip(&p).map(|(a, b)| a - b).collect();
            let lin: f64 = step.iter().zip(&g).map(|(a, b)| a * b).sum();
            let sq: f64 = step.iter().map(|a| a * a).sum();
            let fn_ = objective(fams, budgets, &next);
            if fn_ <= f + lin + sq / (2.0 * eta) + 1e-15 * f.abs() {
                let moved = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                p = next;
                f = fn_;
                if moved / eta < 1e-13 {
                    return Ok((p, it + 1));
                }
                eta = (eta * 1.5).min(1e3 * total);
                break;
            }
            eta *= 0.5;
            if eta < 1e-18 * total {
                return Ok((p, it + 1));
            }
        }
    }
    Ok((p, max_iters))
}

/// Chores some agent does at no cost go to the first such agent at price
/// zero and leave the problem.
struct Reduction {
    reduced: MarketInstance,
    kept: Vec<usize>,
    free: Vec<(usize, usize)>,
}

fn reduce(inst: &MarketInstance) -> Result<Reduction> {
    let ds = inst.disutilities()?;
    let mut kept = Vec::new();
    let mut free = Vec::new();
    for j in 0..inst.m() {
        match ds.iter().position(|d| d.coefficients()[j] == 0.0) {
            Some(i) => free.push((j, i)),
            None => kept.push(j),
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidInstance(
            "every chore is free for some agent, so no agent can earn its budget".into(),
        ));
    }
    let reduced =
        MarketInstance::fisher_chores(ds.iter().map(|d| d.restrict(&kept)).collect(), inst.budgets().to_vec())?;
    Ok(Reduction { reduced, kept, free })
}

impl Reduction {
    fn expand(&self, n: usize, m: usize, p: &[f64], x: &Matrix) -> (Vec<f64>, Matrix) {
        let mut pf = vec![0.0; m];
        let mut xf = vec![vec![0.0; m]; n];
        for (k, &j) in self.kept.iter().enumerate() {
            pf[j] = p[k];
            for i in 0..n {
                xf[i][j] = x[i][k];
            }
        }
        for &(j, i) in &self.free {
            xf[i][j] = 1.0;
        }
        (pf, xf)
    }
}

struct Candidate {
    prices: Vec<f64>,
    allocations: Matrix,
    point: KktPoint,
    kkt: KktResidual,
    method: &'static str,
}

/// Seeks a KKT point of the Fisher chores program: projected gradient on a
/// smoothed objective, then an exact polish on the active structure.
/// Allocations come from Roy's identity and zero-price over-allocation is
/// trimmed. An exhausted budget returns the best point, uncertified.
pub fn solve_fisher_chores(inst: &MarketInstance, config: &ChoresConfig) -> Result<ChoresSolution> {
    inst.expect_kind(MarketKind::FisherChores)?;
    let (n, m) = (inst.n(), inst.m());
    let red = reduce(inst)?;
    let ds = red.reduced.disutilities()?;
    let budgets = inst.budgets();
    let mr = red.kept.len();
    let total = inst.total_budget();
    let linear_count = ds.iter().filter(|d| is_linear(d)).count();
    let stages: Vec<f64> = if linear_count > 0 { config.smoothing.clone() } else { vec![f64::INFINITY] };

    let mut p = vec![total / mr as f64; mr];
    let mut iterations = 0;
    let mut best: Option<Candidate> = None;
    let consider = |best: &mut Option<Candidate>, pr: &[f64], xr: &Matrix, method: &'static str| -> Result<()> {
        let (pf, xf) = red.expand(n, m, pr, xr);
        let point = KktPoint::from_allocations(inst, &pf, &xf)?;
        let kkt = fisher_chores_kkt_residual(inst, &point)?;
        if best.as_ref().is_none_or(|b| kkt.max() < b.kkt.max()) {
            *best = Some(Candidate { prices: pf, allocations: xf, point, kkt, method });
        }
        Ok(())
    };

    for &q in &stages {
        let fams: Vec<DisutilityFamily> = ds.iter().map(|d| smoothed(d, q)).collect();
        let (next, it) = projected_gradient(&fams, budgets, p, config.max_iters)?;
        p = next;
        iterations += it;
        if linear_count == ds.len() {
            let weights: Matrix = fams.iter().zip(budgets).map(|(d, &b)| d.roy_demand(&p, b)).collect::<Result<_>>()?;
            if let Some((pp, xx)) = linear_polish(&red.reduced, &weights) {
                consider(&mut best, &pp, &xx, "projected-gradient+flow-polish")?;
            }
        } else if linear_count == 0 {
            if let Some(pp) = newton_polish(&red.reduced, &p) {
                consider(&mut best, &pp, &roy_allocations(&red.reduced, &pp)?, "projected-gradient+newton-polish")?;
            }
        }
        consider(&mut best, &p, &roy_allocations(&red.reduced, &p)?, "projected-gradient")?;
        if best.as_ref().is_some_and(|b| b.kkt.max() <= config.kkt_tol) {
            break;
        }
    }

    let best = best.expect("at least one stage runs");
    let trimmed = trim_free_columns(&best.allocations, &best.prices, 0.0);
    let equilibrium = Equilibrium::Fisher { allocations: trimmed, prices: best.prices.clone() };
    let report = verify_fisher_chores(inst, &equilibrium, config.verify_tol)?;
    Ok(ChoresSolution {
        certified: best.kkt.max() <= config.kkt_tol && report.certified,
        point: best.point,
        kkt: best.kkt,
        equilibrium,
        report,
        iterations,
        method: best.method.to_string(),
    })
}

/// Lindahl chores through the dual Fisher chores market: the dual prices
/// are the public allocation and the dual allocations the personalized
/// prices.
pub fn solve_lindahl_chores(inst: &MarketInstance, config: &ChoresConfig) -> Result<LindahlChoresSolution> {
    inst.expect_kind(MarketKind::LindahlChores)?;
    let dual_inst = dualize(inst)?;
    let dual = solve_fisher_chores(&dual_inst, config)?;
    let equilibrium = dualize_equilibrium(&dual_inst, &dual.equilibrium)?;
    let report = verify_lindahl_chores(inst, &equilibrium, config.verify_tol)?;
    Ok(LindahlChoresSolution { certified: dual.certified && report.certified, equilibrium, report, dual })
}
