//! Seeded instance generators and small solvers shared by the test targets.
#![allow(dead_code)]

use market_core::utilities::{AffinePiece, NestChild, NestNode, NestTarget};
use market_core::{DisutilityFamily, Equilibrium, MarketInstance, UtilityFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Matrix = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn coeffs(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.2..3.0)).collect()
}

pub fn budgets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.5..2.0)).collect()
}

/// Point on the simplex scaled to `total`, bounded away from the faces.
pub fn interior_point(rng: &mut ChaCha8Rng, m: usize, total: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| total * v / s).collect()
}

/// Two-level tree: the first `k` goods under an inner node, the rest at
/// the root.
pub fn nested_tree(rng: &mut ChaCha8Rng, m: usize, root_rho: f64, inner_rho: f64) -> UtilityFamily {
    assert!(m >= 2);
    let k = if m == 2 { 2 } else { rng.gen_range(2..m) };
    let leaf =
        |j: usize, rng: &mut ChaCha8Rng| NestChild { a: rng.gen_range(0.3..3.0), target: NestTarget::Good { good: j } };
    let inner: Vec<NestChild> = (0..k).map(|j| leaf(j, rng)).collect();
    let mut top = vec![NestChild {
        a: rng.gen_range(0.5..3.0),
        target: NestTarget::Node { node: NestNode::new(inner_rho, inner) },
    }];
    top.extend((k..m).map(|j| leaf(j, rng)));
    UtilityFamily::nested(NestNode::new(root_rho, top))
}

/// The three-good tree from the nested-CES example.
pub fn example_tree() -> UtilityFamily {
    let inner = NestNode::new(
        0.2,
        vec![
            NestChild { a: 3.0, target: NestTarget::Good { good: 0 } },
            NestChild { a: 1.0, target: NestTarget::Good { good: 1 } },
        ],
    );
    UtilityFamily::nested(NestNode::new(
        0.7,
        vec![
            NestChild { a: 6.0, target: NestTarget::Node { node: inner } },
            NestChild { a: 8.0, target: NestTarget::Good { good: 2 } },
        ],
    ))
}

/// The two-equilibrium Lindahl instance with a concave piecewise-affine
/// second agent.
pub fn etoe(eps: f64) -> MarketInstance {
    let e = std::f64::consts::E;
    let pieces = vec![
        AffinePiece { c: vec![1.0 / e, 1.0 / (e - 1.0)], d: 0.0 },
        AffinePiece { c: vec![eps, eps * e / (e - 1.0)], d: 1.0 - eps * e },
        AffinePiece { c: vec![0.0, eps / (e - 1.0)], d: 1.0 },
        AffinePiece { c: vec![eps, eps / (e - 1.0)], d: 1.0 - eps },
    ];
    MarketInstance::lindahl_goods(
        vec![UtilityFamily::linear(vec![1.0, 0.0]), UtilityFamily::MinAffine { pieces }],
        vec![1.0, e - 1.0],
    )
    .unwrap()
}

#[derive(Clone, Copy, Debug)]
pub enum Family {
    Linear,
    Leontief,
    Ces(f64),
    Nested,
}

pub fn utility(rng: &mut ChaCha8Rng, family: Family, m: usize) -> UtilityFamily {
    match family {
        Family::Linear => UtilityFamily::linear(coeffs(rng, m)),
        Family::Leontief => UtilityFamily::leontief(coeffs(rng, m)),
        Family::Ces(rho) => UtilityFamily::ces(coeffs(rng, m), rho),
        Family::Nested => {
            let rhos = [-2.0, -1.0, -0.5, 0.3, 0.5, 0.7];
            let (r0, r1) = (rhos[rng.gen_range(0..rhos.len())], rhos[rng.gen_range(0..rhos.len())]);
            nested_tree(rng, m, r0, r1)
        }
    }
}

pub fn fisher(rng: &mut ChaCha8Rng, family: Family, n: usize, m: usize) -> MarketInstance {
    let us = (0..n).map(|_| utility(rng, family, m)).collect();
    MarketInstance::fisher_goods(us, budgets(rng, n)).unwrap()
}

pub fn lindahl(rng: &mut ChaCha8Rng, family: Family, n: usize, m: usize) -> MarketInstance {
    let us = (0..n).map(|_| utility(rng, family, m)).collect();
    MarketInstance::lindahl_goods(us, budgets(rng, n)).unwrap()
}

pub fn chores(rng: &mut ChaCha8Rng, max_ratio: bool, n: usize, m: usize) -> MarketInstance {
    let ds = (0..n)
        .map(|_| {
            let d = coeffs(rng, m);
            if max_ratio {
                DisutilityFamily::max_ratio(d)
            } else {
                DisutilityFamily::linear(d)
            }
        })
        .collect();
    MarketInstance::fisher_chores(ds, budgets(rng, n)).unwrap()
}

/// Lindahl equilibrium of a concave, not necessarily homogeneous, market
/// by the fixed-point iteration `x_j <- sum_i B_i s_ij(x)` on expenditure
/// shares, with first-order prices `p_ij = B_i s_ij(x) / x_j`.
pub fn lindahl_fixed_point(inst: &MarketInstance, iters: usize) -> Equilibrium {
    let m = inst.m();
    let total = inst.total_budget();
    let us = inst.utilities().unwrap();
    let mut x = vec![total / m as f64; m];
    let shares = |x: &[f64]| -> Matrix { us.iter().map(|u| u.spending_shares(x).unwrap()).collect() };
    for _ in 0..iters {
        let s = shares(&x);
        let next: Vec<f64> = (0..m).map(|j| s.iter().zip(inst.budgets()).map(|(r, b)| b * r[j]).sum()).collect();
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if moved < 1e-15 {
            break;
        }
    }
    for v in x.iter_mut().filter(|v| **v <= 1e-9 * total) {
        *v = 0.0;
    }
    let s = shares(&x);
    let prices = s
        .iter()
        .zip(inst.budgets())
        .zip(us)
        .map(|((r, b), u)| {
            (0..m).map(|j| if x[j] > 1e-9 * total { b * r[j] / x[j] } else { supporting_price(u, &x, *b, j) }).collect()
        })
        .collect();
    Equilibrium::Lindahl { allocation: x, prices }
}

fn supporting_price(u: &UtilityFamily, x: &[f64], budget: f64, j: usize) -> f64 {
    let g = u.gradient(x).unwrap();
    let tot: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
    budget * g[j] / tot
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs_diff_m(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b).map(|(x, y)| max_abs_diff(x, y)).fold(0.0, f64::max)
}

/// Equilibrium spending `b_ij = p_ij x_j` of a Lindahl equilibrium, or
/// `p_j x_ij` of a Fisher one.
pub fn spending(eq: &Equilibrium) -> Matrix {
    match eq {
        Equilibrium::Lindahl { allocation, prices } => {
            prices.iter().map(|row| row.iter().zip(allocation).map(|(p, x)| p * x).collect()).collect()
        }
        Equilibrium::Fisher { allocations, prices } => {
            allocations.iter().map(|row| row.iter().zip(prices).map(|(x, p)| p * x).collect()).collect()
        }
    }
}
