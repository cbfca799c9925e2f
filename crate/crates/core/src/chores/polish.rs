//! Exact refinement of an approximate chores equilibrium.

use nalgebra::{DMatrix, DVector};

use super::roy_allocations;
use crate::forest::{forest_equilibrium, Side};
use crate::market::MarketInstance;
use crate::Matrix;

/// Linear disutilities: guess the equilibrium forest from smoothed demand
/// weights, fix prices along it (`p_j = c_ij theta_i` on every edge, each
/// component earning its agents' budgets), route earnings through the
/// forest and keep the result if every flow is nonnegative and every edge
/// is minimum pain per buck.
pub(crate) fn linear_polish(inst: &MarketInstance, weights: &Matrix) -> Option<(Vec<f64>, Matrix)> {
    let ds = inst.disutilities().ok()?;
    let (n, m) = (inst.n(), inst.m());
    let c: Matrix = ds.iter().map(|d| d.coefficients().iter().map(|v| v * d.scale()).collect()).collect();
    let col: Vec<f64> = (0..m).map(|j| weights.iter().map(|r| r[j]).sum()).collect();
    let mut edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, weights[i][j] / col[j].max(1e-300)))
        .collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2));
    for theta in [0.3, 0.1, 3e-2, 1e-2, 1e-3, 1e-4, 1e-6] {
        let chosen: Vec<(usize, usize)> = edges.iter().filter(|e| e.2 >= theta).map(|e| (e.0, e.1)).collect();
        if let Some(sol) = forest_equilibrium(&c, inst.budgets(), &chosen, Side::Chores) {
            return Some(sol);
        }
    }
    None
}

fn column_demand(inst: &MarketInstance, p: &[f64]) -> Option<Vec<f64>> {
    let x = roy_allocations(inst, p).ok()?;
    Some((0..p.len()).map(|j| x.iter().map(|r| r[j]).sum()).collect())
}

/// Smooth disutilities: Newton on `sum_i x_ij(p) = 1` over the priced
/// chores, adding chores whose demand falls short at price zero and
/// dropping chores whose price leaves the orthant.
pub(crate) fn newton_polish(inst: &MarketInstance, p0: &[f64]) -> Option<Vec<f64>> {
    let m = p0.len();
    let total = inst.total_budget();
    let mut support: Vec<bool> = p0.iter().map(|&v| v > 1e-9 * total).collect();
    let mut p = p0.to_vec();
    for _ in 0..2 * m + 2 {
        for j in 0..m {
            if support[j] && !(p[j] > 0.0) {
                p[j] = 1e-3 * total / m as f64;
            }
            if !support[j] {
                p[j] = 0.0;
            }
        }
        p = newton_on(inst, &p, &support)?;
        let x = column_demand(inst, &p)?;
        let short = (0..m).filter(|&j| !support[j] && x[j] < 1.0 - 1e-12).max_by(|&a, &b| x[b].total_cmp(&x[a]));
        match short {
            Some(j) => support[j] = true,
            None => return Some(p),
        }
    }
    None
}

fn newton_on(inst: &MarketInstance, p0: &[f64], support: &[bool]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..p0.len()).filter(|&j| support[j]).collect();
    let k = idx.len();
    let residual = |p: &[f64]| -> Option<Vec<f64>> {
        let x = column_demand(inst, p)?;
        Some(idx.iter().map(|&j| x[j] - 1.0).collect())
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut p = p0.to_vec();
    let mut r = residual(&p)?;
    for _ in 0..100 {
        if norm(&r) < 1e-14 {
            return Some(p);
        }
        let mut jac = DMatrix::zeros(k, k);
        for (col, &l) in idx.iter().enumerate() {
            let h = 1e-7 * p[l];
            let mut up = p.clone();
            up[l] += h;
            let mut dn = p.clone();
            dn[l] -= h;
            let (ru, rd) = (residual(&up)?, residual(&dn)?);
            for row in 0..k {
                jac[(row, col)] = (ru[row] - rd[row]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&-DVector::from_vec(r.clone()))?;
        let mut alpha = 1.0;
        loop {
            let mut trial = p.clone();
            for (t, &l) in idx.iter().enumerate() {
                trial[l] = p[l] + alpha * step[t];
            }
            if idx.iter().all(|&l| trial[l] > 0.0) {
                if let Some(rt) = residual(&trial) {
                    if norm(&rt) < norm(&r) || alpha < 1e-3 && norm(&rt) <= norm(&r) * 1.0001 {
                        p = trial;
                        r = rt;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-8 {
                return if norm(&r) < 1e-11 { Some(p) } else { None };
            }
        }
    }
    if norm(&r) < 1e-11 {
        Some(p)
    } else {
        None
    }
}
