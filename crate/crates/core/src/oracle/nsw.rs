use nalgebra::{DMatrix, DVector};

use super::{simplex_search, OracleResult};
use crate::error::{check_dim, Error, Result};
use crate::market::{MarketInstance, MarketKind};
use crate::utilities::UtilityFamily;
use crate::Matrix;

const GRID_MAX_GOODS: usize = 6;

fn is_smooth(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Leontief { .. } | UtilityFamily::MinAffine { .. } => false,
        UtilityFamily::Ces { rho, .. } => *rho > f64::NEG_INFINITY,
        UtilityFamily::Nested { root, .. } => !root.any_node(&|r| r == f64::NEG_INFINITY),
        _ => true,
    }
}

fn phi(inst: &MarketInstance, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (u, b) in inst.utilities().expect("goods").iter().zip(inst.budgets()) {
        match u.eval(x) {
            Ok(v) if v > 0.0 => s += b * v.ln(),
            _ => return f64::NEG_INFINITY,
        }
    }
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

fn phi_gradient(inst: &MarketInstance, x: &[f64]) -> Option<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    for (u, b) in inst.utilities().ok()?.iter().zip(inst.budgets()) {
        let v = u.eval(x).ok()?;
        for (t, d) in g.iter_mut().zip(u.gradient(x).ok()?) {
            *t += b * d / v;
        }
    }
    g.iter().all(|v| v.is_finite()).then_some(g)
}

/// Frank-Wolfe gap `T max_j g_j - <g, x>`: an upper bound on the
/// suboptimality of a concave objective on the simplex.
fn fw_gap(g: &[f64], x: &[f64], total: f64) -> f64 {
    let best = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (total * best - g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).max(0.0)
}

fn project(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut acc, mut theta) = (0.0, 0.0);
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - total) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn projected_ascent(inst: &MarketInstance, total: f64) -> Option<Vec<f64>> {
    let m = inst.m();
    let mut x = vec![total / m as f64; m];
    let mut f = phi(inst, &x);
    if !f.is_finite() {
        return None;
    }
    let mut eta = total;
    for _ in 0..20_000 {
        let g = phi_gradient(inst, &x)?;
        let mut accepted = false;
        while eta > 1e-18 * total {
            let next = project(&x.iter().zip(&g).map(|(a, b)| a + eta * b).collect::<Vec<_>>(), total);
            let d: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lin: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            let sq: f64 = d.iter().map(|a| a * a).sum();
            let fn_ = phi(inst, &next);
            if fn_ >= f + lin - sq / (2.0 * eta) - 1e-15 * f.abs() {
                x = next;
                f = fn_;
                eta *= 1.5;
                accepted = sq.sqrt() / eta > 1e-15;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(x)
}

/// Newton on `grad_j phi = mu` over the support with `sum x = total`,
/// growing the support while some unfunded good has `grad_j phi > mu`.
fn face_newton(inst: &MarketInstance, x0: &[f64], total: f64) -> Option<Vec<f64>> {
    let m = x0.len();
    let mut support: Vec<bool> = x0.iter().map(|&v| v > 1e-10 * total).collect();
    let mut x = x0.to_vec();
    for _ in 0..2 * m + 2 {
        let idx: Vec<usize> = (0..m).filter(|&j| support[j]).collect();
        for j in 0..m {
            if !support[j] {
                x[j] = 0.0;
            } else if !(x[j] > 0.0) {
                x[j] = 1e-3 * total / m as f64;
            }
        }
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v *= total / s);
        x = newton_on(inst, &x, &idx, total)?;
        let g = phi_gradient(inst, &x)?;
        let mu = idx.iter().map(|&j| g[j]).sum::<f64>() / idx.len() as f64;
        let worst = (0..m).filter(|&j| !support[j] && g[j] > mu * (1.0 + 1e-12)).max_by(|&a, &b| g[a].total_cmp(&g[b]));
        match worst {
            Some(j) => support[j] = true,
            None => return Some(x),
        }
    }
    None
}

fn newton_on(inst: &MarketInstance, x0: &[f64], idx: &[usize], total: f64) -> Option<Vec<f64>> {
    let k = idx.len();
    let eqs = |x: &[f64], mu: f64| -> Option<Vec<f64>> {
        let g = phi_gradient(inst, x)?;
        let mut r: Vec<f64> = idx.iter().map(|&j| g[j] - mu).collect();
        r.push(idx.iter().map(|&j| x[j]).sum::<f64>() - total);
        Some(r)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x = x0.to_vec();
    let g0 = phi_gradient(inst, &x)?;
    let mut mu = idx.iter().map(|&j| g0[j] * x[j]).sum::<f64>() / total;
    let mut r = eqs(&x, mu)?;
    for _ in 0..100 {
        if norm(&r) < 1e-14 * (1.0 + mu.abs()) {
            break;
        }
        let mut jac = DMatrix::zeros(k + 1, k + 1);
        for (c, &l) in idx.iter().enumerate() {
            let h = 1e-7 * x[l];
            let mut up = x.clone();
            up[l] += h;
            let mut dn = x.clone();
            dn[l] -= h;
            let (ru, rd) = (eqs(&up, mu)?, eqs(&dn, mu)?);
            for row in 0..k {
                jac[(row, c)] = (ru[row] - rd[row]) / (2.0 * h);
            }
            jac[(k, c)] = 1.0;
        }
        for row in 0..k {
            jac[(row, k)] = -1.0;
        }
        let step = jac.lu().solve(&-DVector::from_vec(r.clone()))?;
        let mut alpha = 1.0;
        loop {
            let mut trial = x.clone();
            for (t, &l) in idx.iter().enumerate() {
                trial[l] = x[l] + alpha * step[t];
            }
            let tmu = mu + alpha * step[k];
            if idx.iter().all(|&l| trial[l] > 0.0) {
                if let Some(rt) = eqs(&trial, tmu) {
                    if norm(&rt) < norm(&r) {
                        x = trial;
                        mu = tmu;
                        r = rt;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return (norm(&r) < 1e-10 * (1.0 + mu.abs())).then_some(x);
            }
        }
    }
    Some(x)
}

/// Maximizer of `sum_i B_i log u_i(x)` over `sum x = sum B`. Smooth
/// instances: projected gradient ascent polished by Newton on the optimal
/// face, with the Frank-Wolfe gap as the precision. Nonsmooth instances,
/// and smooth ones that miss `precision`, fall back to a zooming grid when
/// there are at most six goods.
pub fn oracle_nsw_lindahl(inst: &MarketInstance, precision: f64) -> Result<OracleResult> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    let total = inst.total_budget();
    let m = inst.m();
    let us = inst.utilities()?;
    if us.iter().all(is_smooth) {
        if let Some(x) = projected_ascent(inst, total) {
            let x = face_newton(inst, &x, total).unwrap_or(x);
            if let Some(g) = phi_gradient(inst, &x) {
                let gap = fw_gap(&g, &x, total);
                if gap <= precision {
                    let method = "nsw-projected-gradient+face-newton".into();
                    return Ok(OracleResult { value: phi(inst, &x), point: x, precision: gap, method });
                }
            }
        }
    }
    if m > GRID_MAX_GOODS {
        return Err(Error::Incompatible(format!("grid refinement supports at most {GRID_MAX_GOODS} goods, got {m}")));
    }
    let resolution = match m {
        1 | 2 => 2000,
        3 => 200,
        4 => 60,
        _ => 24,
    };
    let r = simplex_search(m, total, &|x: &[f64]| phi(inst, x), resolution, 1e-13);
    if !r.value.is_finite() {
        return Err(Error::NotConverged { iterations: r.evaluations, residual: f64::INFINITY });
    }
    Ok(OracleResult { value: r.value, point: r.point, precision: r.precision, method: "nsw-grid-zoom".into() })
}

/// Personalized prices from first-order conditions:
/// `p_ij = B_i d_j u_i(x) / <grad u_i(x), x>`.
pub fn first_order_prices(inst: &MarketInstance, x: &[f64]) -> Result<Matrix> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_dim(inst.m(), x.len())?;
    inst.utilities()?
        .iter()
        .zip(inst.budgets())
        .map(|(u, &b)| {
            let g = u.gradient(x)?;
            let s: f64 = g.iter().zip(x).map(|(a, c)| a * c).sum();
            if !(s > 0.0) {
                return Err(Error::Domain("utility gradient vanishes along the allocation".into()));
            }
            Ok(g.iter().map(|v| b * v / s).collect())
        })
        .collect()
}
