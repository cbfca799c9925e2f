//! Property suites. Each suite runs a deterministic proptest runner so the
//! `properties` target and the acceptance harness share one definition.

use market_core::chores::{
    fisher_chores_objective, indirect_disutility, solve_fisher_chores, solve_lindahl_chores, ChoresConfig,
    IndirectDisutility,
};
use market_core::dynamics::{
    prd_ces_mirror_step, prd_fisher_gs_step, prd_fisher_tc_step, prd_lindahl_gs_step, prd_lindahl_tc_step,
};
use market_core::market::io::{instance_to_json, parse_instance};
use market_core::oracle::{first_order_prices, oracle_demand, oracle_eg, oracle_nsw_lindahl, simplex_search};
use market_core::programs::shmyrev_ces_objective;
use market_core::utilities::{dual_utility, indirect_utility, marshallian_demand};
use market_core::{
    dualize, dualize_equilibrium, run, verify, DisutilityFamily, DynamicKind, DynamicsConfig, Equilibrium, Init,
    MarketInstance, Matrix, UtilityFamily,
};
use proptest::prelude::*;
use proptest::sample::select;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

use crate::common::{self, Family};

pub type Suite = fn(u32) -> Result<(), String>;
type StepFn = fn(&MarketInstance, &Matrix) -> market_core::Result<Matrix>;

pub const SUITES: &[(&str, Suite)] = &[
    ("utility_homogeneity", utility_homogeneity),
    ("utility_gradient", utility_gradient),
    ("demand_budget_identity", demand_budget_identity),
    ("direct_indirect_duality", direct_indirect_duality),
    ("dual_involution", dual_involution),
    ("dual_preserves_homogeneity", dual_preserves_homogeneity),
    ("roy_identity", roy_identity),
    ("market_duality_round_trip", market_duality_round_trip),
    ("lindahl_clearing_identity", lindahl_clearing_identity),
    ("chores_pareto", chores_pareto),
    ("eg_optimum_certified", eg_optimum_certified),
    ("shmyrev_curvature", shmyrev_curvature),
    ("prd_budget_conservation", prd_budget_conservation),
    ("prd_lyapunov", prd_lyapunov),
    ("prd_trajectory_duality", prd_trajectory_duality),
    ("mirror_consistency", mirror_consistency),
    ("step_permutation_equivariance", step_permutation_equivariance),
    ("chores_h_homogeneity", chores_h_homogeneity),
    ("chores_dual_norm_identity", chores_dual_norm_identity),
    ("chores_direct_indirect_duality", chores_direct_indirect_duality),
    ("chores_roy_round_trip", chores_roy_round_trip),
    ("chores_no_poles", chores_no_poles),
    ("chores_kkt_implies_equilibrium", chores_kkt_implies_equilibrium),
    ("grid_oracle_convergence", grid_oracle_convergence),
    ("instance_json_round_trip", instance_json_round_trip),
    ("seeded_runs_deterministic", seeded_runs_deterministic),
];

#[allow(dead_code)]
pub fn run_all(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    SUITES.iter().map(|&(name, suite)| (name, suite(cases))).collect()
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail<E: std::fmt::Display>(e: E) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn coeffs(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..3.0, m)
}

fn point(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..5.0, m)
}

const RHOS: [f64; 7] = [-3.0, -1.0, -0.5, 0.25, 0.5, 0.9, 1.0];

/// Homogeneous families, `smooth` excluding Leontief.
fn utility(m: usize, smooth: bool) -> BoxedStrategy<UtilityFamily> {
    let mut options: Vec<BoxedStrategy<UtilityFamily>> = vec![
        coeffs(m).prop_map(UtilityFamily::linear).boxed(),
        (coeffs(m), select(RHOS.to_vec())).prop_map(|(a, r)| UtilityFamily::ces(a, r)).boxed(),
        coeffs(m).prop_map(UtilityFamily::cobb_douglas).boxed(),
        any::<u64>().prop_map(move |s| common::utility(&mut common::rng(s), Family::Nested, m)).boxed(),
    ];
    if !smooth {
        options.push(coeffs(m).prop_map(UtilityFamily::leontief).boxed());
    }
    proptest::strategy::Union::new(options).boxed()
}

fn with_goods<T: std::fmt::Debug + Clone + 'static, S: Strategy<Value = T> + 'static>(
    f: impl Fn(usize) -> S + 'static,
) -> impl Strategy<Value = (usize, T)> {
    (2usize..=4).prop_flat_map(move |m| (Just(m), f(m)))
}

pub fn utility_homogeneity(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, false), point(m), 0.01f64..10.0));
    check(cases, s, |(_, (u, x, c))| {
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (a, b) = (u.eval(&cx).map_err(fail)?, c * u.eval(&x).map_err(fail)?);
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} vs {b}");
        Ok(())
    })
}

pub fn utility_gradient(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, true), point(m)));
    check(cases, s, |(m, (u, x))| {
        let g = u.gradient(&x).map_err(fail)?;
        for j in 0..m {
            let h = 1e-6 * x[j].max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (u.eval(&xp).map_err(fail)? - u.eval(&xm).map_err(fail)?) / (2.0 * h);
            prop_assert!(rel_close(g[j], fd, 1e-5), "{} d{j}: {} vs {fd}", u.kind_name(), g[j]);
        }
        Ok(())
    })
}

pub fn demand_budget_identity(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, false), point(m), 0.1f64..10.0));
    check(cases, s, |(_, (u, p, budget))| {
        let x = marshallian_demand(&u, &p, budget).map_err(fail)?;
        let spent: f64 = x.iter().zip(&p).map(|(a, b)| a * b).sum();
        prop_assert!((spent - budget).abs() <= 1e-10 * budget, "spent {spent} of {budget}");
        Ok(())
    })
}

pub fn direct_indirect_duality(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, true), point(m), 0.1f64..10.0, any::<u64>()));
    check(cases, s, |(m, (u, x, budget, seed))| {
        let ux = u.eval(&x).map_err(fail)?;
        let g = u.gradient(&x).map_err(fail)?;
        let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        let q: Vec<f64> = g.iter().map(|v| budget * v / gx).collect();
        if q.iter().all(|&v| v > 0.0) {
            let v = indirect_utility(&u, &q, budget).map_err(fail)?;
            prop_assert!(rel_close(v, ux, 1e-6), "v(q) = {v}, u(x) = {ux}");
        }
        let mut rng = common::rng(seed);
        for _ in 0..20 {
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
            let wx: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
            let p: Vec<f64> = w.iter().map(|v| budget * v / wx).collect();
            let v = indirect_utility(&u, &p, budget).map_err(fail)?;
            prop_assert!(v >= ux - 1e-9 * ux.max(1.0), "v(p) = {v} below u(x) = {ux}");
        }
        Ok(())
    })
}

fn same_shape(u: &UtilityFamily, w: &UtilityFamily) -> bool {
    u.unscaled() == w.unscaled()
        || match (u, w) {
            (UtilityFamily::Ces { rho, a, .. }, UtilityFamily::Linear { a: b, .. }) if *rho == 1.0 => {
                a.iter().zip(b).all(|(x, y)| rel_close(*x, *y, 1e-12))
            }
            (UtilityFamily::Ces { a, rho, .. }, UtilityFamily::Ces { a: b, rho: r, .. }) => {
                rel_close(*rho, *r, 1e-12) && a.iter().zip(b).all(|(x, y)| rel_close(*x, *y, 1e-9))
            }
            _ => false,
        }
}

pub fn dual_involution(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, false), 0.1f64..10.0, prop::collection::vec(point(m), 5)));
    check(cases, s, |(_, (u, budget, prices))| {
        let dd = dual_utility(&dual_utility(&u, budget).map_err(fail)?, budget).map_err(fail)?;
        if !matches!(u, UtilityFamily::Nested { .. }) {
            prop_assert!(same_shape(&u, &dd), "{u:?} vs {dd:?}");
        }
        for p in &prices {
            let (a, b) =
                (marshallian_demand(&u, p, budget).map_err(fail)?, marshallian_demand(&dd, p, budget).map_err(fail)?);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(rel_close(*x, *y, 1e-8), "{a:?} vs {b:?}");
            }
        }
        Ok(())
    })
}

pub fn dual_preserves_homogeneity(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, false), 0.1f64..10.0, point(m), 0.01f64..10.0));
    check(cases, s, |(_, (u, budget, x, c))| {
        let d = dual_utility(&u, budget).map_err(fail)?;
        prop_assert!(d.is_homogeneous());
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (a, b) = (d.eval(&cx).map_err(fail)?, c * d.eval(&x).map_err(fail)?);
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} vs {b}");
        Ok(())
    })
}

pub fn roy_identity(cases: u32) -> Result<(), String> {
    let flat = |m: usize| {
        prop_oneof![
            coeffs(m).prop_map(UtilityFamily::linear),
            (coeffs(m), select(RHOS.to_vec())).prop_map(|(a, r)| UtilityFamily::ces(a, r)),
        ]
    };
    let s = with_goods(move |m| (flat(m), point(m), 0.1f64..10.0));
    check(cases, s, |(m, (u, p, budget))| {
        let x = marshallian_demand(&u, &p, budget).map_err(fail)?;
        let v = |p: &[f64], b: f64| indirect_utility(&u, p, b);
        let hb = 1e-6 * budget;
        let dvdb = (v(&p, budget + hb).map_err(fail)? - v(&p, budget - hb).map_err(fail)?) / (2.0 * hb);
        for j in 0..m {
            let h = 1e-6 * p[j];
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[j] += h;
            pm[j] -= h;
            let dvdp = (v(&pp, budget).map_err(fail)? - v(&pm, budget).map_err(fail)?) / (2.0 * h);
            let roy = -dvdp / dvdb;
            prop_assert!(rel_close(roy, x[j], 1e-5), "good {j}: Roy {roy}, demand {}", x[j]);
        }
        Ok(())
    })
}

fn small_fisher() -> impl Strategy<Value = MarketInstance> {
    let families = vec![Family::Linear, Family::Leontief, Family::Ces(-1.0), Family::Ces(0.5), Family::Nested];
    (select(families), 2usize..=4, 2usize..=4, any::<u64>())
        .prop_map(|(f, n, m, seed)| common::fisher(&mut common::rng(seed), f, n, m))
}

pub fn market_duality_round_trip(cases: u32) -> Result<(), String> {
    check(cases.min(32), small_fisher(), |inst| {
        let sol = oracle_eg(&inst, 1e-9).map_err(fail)?;
        prop_assert!(sol.report.certified);
        let dual = dualize(&inst).map_err(fail)?;
        let mapped = dualize_equilibrium(&inst, &sol.equilibrium).map_err(fail)?;
        let r = verify(&dual, &mapped, sol.report.tolerance).map_err(fail)?;
        prop_assert!(r.certified, "dual gap {:e}", r.max_gap());
        Ok(())
    })
}

fn small_lindahl(smooth: bool) -> impl Strategy<Value = MarketInstance> {
    let mut families = vec![Family::Linear, Family::Ces(-1.0), Family::Ces(0.5), Family::Nested];
    if !smooth {
        families.push(Family::Leontief);
    }
    (select(families), 2usize..=4, 2usize..=4, any::<u64>())
        .prop_map(|(f, n, m, seed)| common::lindahl(&mut common::rng(seed), f, n, m))
}

pub fn lindahl_clearing_identity(cases: u32) -> Result<(), String> {
    check(cases.min(32), small_lindahl(true), |inst| {
        let x = oracle_nsw_lindahl(&inst, 1e-11).map_err(fail)?.point;
        let prices = first_order_prices(&inst, &x).map_err(fail)?;
        let eq = Equilibrium::Lindahl { allocation: x.clone(), prices };
        let r = verify(&inst, &eq, 1e-5).map_err(fail)?;
        prop_assert!(r.certified, "NSW maximizer gap {:e}", r.max_gap());
        let tol = (inst.n() * inst.m()) as f64 * 1e-8;
        prop_assert!((x.iter().sum::<f64>() - inst.total_budget()).abs() <= tol);
        Ok(())
    })
}

pub fn chores_pareto(cases: u32) -> Result<(), String> {
    let s = (any::<bool>(), 2usize..=3, 2usize..=3, any::<u64>());
    check(cases.min(16), s, |(max_ratio, n, m, seed)| {
        let fisher = common::chores(&mut common::rng(seed), max_ratio, n, m);
        let inst = fisher.with_kind(market_core::MarketKind::LindahlChores).map_err(fail)?;
        let sol = solve_lindahl_chores(&inst, &ChoresConfig::default()).map_err(fail)?;
        prop_assert!(sol.certified);
        let Equilibrium::Lindahl { allocation: x, .. } = &sol.equilibrium else { unreachable!() };
        let ds = inst.disutilities().map_err(fail)?;
        let at_x: Vec<f64> = ds.iter().map(|d| d.eval(x)).collect::<Result<_, _>>().map_err(fail)?;
        let total = inst.total_budget();
        let steps = 32usize;
        let mut y = vec![0.0; m];
        let mut k = vec![0usize; m - 1];
        loop {
            let used: usize = k.iter().sum();
            if used <= steps {
                for j in 0..m - 1 {
                    y[j] = total * k[j] as f64 / steps as f64;
                }
                y[m - 1] = total * (steps - used) as f64 / steps as f64;
                let dominates = ds.iter().zip(&at_x).all(|(d, &dx)| d.eval(&y).map(|v| v < dx - 1e-9).unwrap_or(false));
                prop_assert!(!dominates, "{y:?} dominates {x:?}");
            }
            let mut j = 0;
            loop {
                if j == m - 1 {
                    return Ok(());
                }
                k[j] += 1;
                if k[j] <= steps {
                    break;
                }
                k[j] = 0;
                j += 1;
            }
        }
    })
}

pub fn eg_optimum_certified(cases: u32) -> Result<(), String> {
    check(cases.min(32), small_fisher(), |inst| {
        let sol = oracle_eg(&inst, 1e-9).map_err(fail)?;
        let r = verify(&inst, &sol.equilibrium, 1e-5).map_err(fail)?;
        prop_assert!(r.certified, "gap {:e}", r.max_gap());
        Ok(())
    })
}

/// Spending strictly inside the budget simplices.
fn interior_spending(inst: &MarketInstance, seed: u64) -> Matrix {
    let mut rng = common::rng(seed);
    inst.budgets().iter().map(|&b| common::interior_point(&mut rng, inst.m(), b)).collect()
}

pub fn shmyrev_curvature(cases: u32) -> Result<(), String> {
    let s = (
        prop_oneof![Just(-1.0), Just(-0.5), Just(-3.0), Just(0.3), Just(0.5), Just(1.0)],
        2usize..=3,
        2usize..=4,
        any::<u64>(),
    );
    check(cases, s, |(rho, n, m, seed)| {
        let mut rng = common::rng(seed);
        let inst = common::lindahl(&mut rng, Family::Ces(rho), n, m);
        let b = interior_spending(&inst, seed ^ 1);
        let dir: Matrix = b
            .iter()
            .map(|row| {
                let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mean = d.iter().sum::<f64>() / m as f64;
                let lim = row.iter().fold(f64::INFINITY, |a, v| a.min(*v));
                d.iter().map(|v| 0.2 * lim * (v - mean)).collect()
            })
            .collect();
        let shift = |t: f64| -> Matrix {
            b.iter().zip(&dir).map(|(r, d)| r.iter().zip(d).map(|(x, y)| x + t * y).collect()).collect()
        };
        let f = |m: &Matrix| shmyrev_ces_objective(&inst, m);
        let second = f(&shift(1.0)).map_err(fail)? + f(&shift(-1.0)).map_err(fail)? - 2.0 * f(&b).map_err(fail)?;
        let slack = 1e-10;
        if rho <= 0.0 {
            prop_assert!(second >= -slack, "rho {rho}: second difference {second}");
        } else {
            prop_assert!(second <= slack, "rho {rho}: second difference {second}");
        }
        Ok(())
    })
}

pub fn prd_budget_conservation(cases: u32) -> Result<(), String> {
    let s = (0usize..5, 2usize..=4, 2usize..=4, any::<u64>());
    check(cases, s, |(rule, n, m, seed)| {
        let mut rng = common::rng(seed);
        let (inst, step): (MarketInstance, StepFn) = match rule {
            0 => (common::fisher(&mut rng, Family::Ces(0.5), n, m), prd_fisher_gs_step),
            1 => (common::lindahl(&mut rng, Family::Ces(-1.0), n, m), prd_lindahl_tc_step),
            2 => (common::lindahl(&mut rng, Family::Linear, n, m), prd_lindahl_gs_step),
            3 => (common::fisher(&mut rng, Family::Ces(-2.0), n, m), prd_fisher_tc_step),
            _ => (common::lindahl(&mut rng, Family::Ces(-0.5), n, m), prd_ces_mirror_step),
        };
        let mut b = interior_spending(&inst, seed);
        for _ in 0..20 {
            b = step(&inst, &b).map_err(fail)?;
            for (row, budget) in b.iter().zip(inst.budgets()) {
                let s: f64 = row.iter().sum();
                prop_assert!((s - budget).abs() <= 1e-12 * budget, "rule {rule}: {s} vs {budget}");
            }
        }
        Ok(())
    })
}

pub fn prd_lyapunov(cases: u32) -> Result<(), String> {
    let s = (any::<bool>(), 2usize..=3, 2usize..=3, any::<u64>());
    check(cases.min(32), s, |(tc, n, m, seed)| {
        let mut rng = common::rng(seed);
        let (family, kind) = if tc {
            (Family::Ces(-1.0), DynamicKind::PrdLindahlTc)
        } else {
            (Family::Ces(0.5), DynamicKind::PrdLindahlGs)
        };
        let inst = common::lindahl(&mut rng, family, n, m);
        let x = oracle_nsw_lindahl(&inst, 1e-11).map_err(fail)?.point;
        let prices = first_order_prices(&inst, &x).map_err(fail)?;
        let star = common::spending(&Equilibrium::Lindahl { allocation: x, prices });
        let config = DynamicsConfig {
            max_iters: 300,
            stop_residual: 0.0,
            stop_movement: 0.0,
            reference: market_core::dynamics::KlReference::Spending { b: star, label: "oracle".into() },
            ..Default::default()
        };
        let trace = run(&inst, kind, &Init::Random, &DynamicsConfig { seed, ..config }).map_err(fail)?;
        for w in trace.records.windows(2) {
            let (a, b) = (w[0].kl.unwrap(), w[1].kl.unwrap());
            prop_assert!(b <= a + 1e-12, "{kind}: KL {a} -> {b} at {}", w[1].iter);
        }
        Ok(())
    })
}

pub fn prd_trajectory_duality(cases: u32) -> Result<(), String> {
    let families = vec![Family::Ces(-1.0), Family::Ces(-2.0), Family::Ces(-0.3), Family::Leontief];
    let s = (select(families), 2usize..=4, 2usize..=4, any::<u64>());
    check(cases, s, |(family, n, m, seed)| {
        let inst = common::lindahl(&mut common::rng(seed), family, n, m);
        let dual = dualize(&inst).map_err(fail)?;
        let mut bl = interior_spending(&inst, seed);
        let mut bf = bl.clone();
        for t in 0..100 {
            bl = prd_lindahl_tc_step(&inst, &bl).map_err(fail)?;
            bf = prd_fisher_gs_step(&dual, &bf).map_err(fail)?;
            let d = common::max_abs_diff_m(&bl, &bf);
            prop_assert!(d <= 1e-10, "iterate {t}: {d:e}");
        }
        Ok(())
    })
}

pub fn mirror_consistency(cases: u32) -> Result<(), String> {
    let s = (2usize..=4, 2usize..=4, any::<u64>());
    check(cases, s, |(n, m, seed)| {
        let mut rng = common::rng(seed);
        let inst = common::lindahl(&mut rng, Family::Linear, n, m);
        let b = interior_spending(&inst, seed);
        let d = common::max_abs_diff_m(
            &prd_ces_mirror_step(&inst, &b).map_err(fail)?,
            &prd_lindahl_gs_step(&inst, &b).map_err(fail)?,
        );
        prop_assert!(d <= 1e-13, "linear mirror vs GS: {d:e}");

        let leo = common::lindahl(&mut rng, Family::Leontief, n, m);
        let b = interior_spending(&leo, seed);
        let x: Vec<f64> = (0..m).map(|j| b.iter().map(|r| r[j]).sum()).collect();
        let next = prd_ces_mirror_step(&leo, &b).map_err(fail)?;
        for ((u, row), (out, budget)) in leo.utilities().unwrap().iter().zip(&b).zip(next.iter().zip(leo.budgets())) {
            let a = u.coefficients().unwrap();
            let w: Vec<f64> = (0..m).map(|j| a[j] * row[j] / x[j]).collect();
            let s: f64 = w.iter().sum();
            for j in 0..m {
                prop_assert!(rel_close(out[j], budget * w[j] / s, 1e-13));
            }
        }
        Ok(())
    })
}

fn shuffled(rng: &mut impl Rng, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

pub fn step_permutation_equivariance(cases: u32) -> Result<(), String> {
    let s = (0usize..5, 2usize..=4, 2usize..=4, any::<u64>());
    check(cases, s, |(rule, n, m, seed)| {
        let mut rng = common::rng(seed);
        let (inst, step): (MarketInstance, StepFn) = match rule {
            0 => (common::fisher(&mut rng, Family::Linear, n, m), prd_fisher_gs_step),
            1 => (common::lindahl(&mut rng, Family::Ces(-1.0), n, m), prd_lindahl_tc_step),
            2 => (common::lindahl(&mut rng, Family::Ces(0.5), n, m), prd_lindahl_gs_step),
            3 => (common::fisher(&mut rng, Family::Leontief, n, m), prd_fisher_tc_step),
            _ => (common::lindahl(&mut rng, Family::Ces(-2.0), n, m), prd_ces_mirror_step),
        };
        let (pa, pg) = (shuffled(&mut rng, n), shuffled(&mut rng, m));
        let permute = |b: &Matrix| -> Matrix { pa.iter().map(|&i| pg.iter().map(|&j| b[i][j]).collect()).collect() };
        let b = interior_spending(&inst, seed);
        let lhs = step(&inst.permuted(&pa, &pg).map_err(fail)?, &permute(&b)).map_err(fail)?;
        let rhs = permute(&step(&inst, &b).map_err(fail)?);
        let d = common::max_abs_diff_m(&lhs, &rhs);
        prop_assert!(d <= 1e-12, "rule {rule}: {d:e}");
        Ok(())
    })
}

fn disutility(m: usize) -> impl Strategy<Value = DisutilityFamily> {
    prop_oneof![
        coeffs(m).prop_map(DisutilityFamily::linear),
        coeffs(m).prop_map(DisutilityFamily::max_ratio),
        (coeffs(m), 1.2f64..5.0).prop_map(|(d, r)| DisutilityFamily::ces_convex(d, r)),
    ]
}

pub fn chores_h_homogeneity(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (disutility(m), point(m), 0.1f64..10.0, 0.01f64..10.0));
    check(cases, s, |(_, (d, p, budget, c))| {
        let cp: Vec<f64> = p.iter().map(|v| c * v).collect();
        let (a, b) = (
            indirect_disutility(&d, &cp, budget).map_err(fail)?,
            indirect_disutility(&d, &p, budget).map_err(fail)? / c,
        );
        prop_assert!(rel_close(a, b, 1e-10), "{a} vs {b}");
        Ok(())
    })
}

pub fn chores_dual_norm_identity(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (disutility(m), point(m), 0.1f64..10.0));
    check(cases, s, |(_, (d, p, budget))| {
        let prod = d.dual_norm(&p).map_err(fail)? * indirect_disutility(&d, &p, budget).map_err(fail)?;
        prop_assert!((prod - budget).abs() <= 1e-10 * budget, "{prod} vs {budget}");
        Ok(())
    })
}

pub fn chores_direct_indirect_duality(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (disutility(m), point(m), 0.1f64..10.0, any::<u64>()));
    check(cases, s, |(m, (d, x, budget, seed))| {
        let dx = d.eval(&x).map_err(fail)?;
        let g = d.subgradient(&x).map_err(fail)?;
        let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        let q: Vec<f64> = g.iter().map(|v| budget * v / gx).collect();
        let h = indirect_disutility(&d, &q, budget).map_err(fail)?;
        prop_assert!(rel_close(h, dx, 1e-8), "h(q) = {h}, d(x) = {dx}");
        let mut rng = common::rng(seed);
        for _ in 0..20 {
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
            let wx: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
            let p: Vec<f64> = w.iter().map(|v| budget * v / wx).collect();
            let h = indirect_disutility(&d, &p, budget).map_err(fail)?;
            prop_assert!(h <= dx + 1e-8 * dx.max(1.0), "h(p) = {h} above d(x) = {dx}");
        }
        Ok(())
    })
}

pub fn chores_roy_round_trip(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (disutility(m), point(m), 0.1f64..10.0, prop::collection::vec(point(m), 10)));
    check(cases, s, |(_, (d, p, budget, probes))| {
        let ih = IndirectDisutility::new(d.clone(), budget).map_err(fail)?;
        let x = ih.demand(&p).map_err(fail)?;
        let h = ih.value(&p).map_err(fail)?;
        let g: Vec<f64> = x.iter().map(|v| v / (budget * h)).collect();
        let back: Vec<f64> = g.iter().map(|v| budget * h * v).collect();
        prop_assert!(common::max_abs_diff(&back, &x) <= 1e-12 * h.max(1.0));
        let r = ih.reciprocal(&p).map_err(fail)?;
        for q in &probes {
            let rq = ih.reciprocal(q).map_err(fail)?;
            let lin: f64 = r + g.iter().zip(q).zip(&p).map(|((gj, qj), pj)| gj * (qj - pj)).sum::<f64>();
            prop_assert!(rq >= lin - 1e-10 * rq.max(1.0), "subgradient inequality fails: {rq} < {lin}");
        }
        Ok(())
    })
}

pub fn chores_no_poles(cases: u32) -> Result<(), String> {
    let s = (any::<bool>(), 2usize..=4, 2usize..=4, any::<u64>());
    check(cases, s, |(max_ratio, n, m, seed)| {
        let mut rng = common::rng(seed);
        let inst = common::chores(&mut rng, max_ratio, n, m);
        let total = inst.total_budget();
        for k in 0..500 {
            let mut p: Vec<f64> = (0..m).map(|_| -rng.gen::<f64>().ln()).collect();
            if k % 5 == 0 {
                p[rng.gen_range(0..m)] = 0.0;
            }
            let s: f64 = p.iter().sum();
            if s == 0.0 {
                continue;
            }
            p.iter_mut().for_each(|v| *v *= total / s);
            let f = fisher_chores_objective(&inst, &p).map_err(fail)?;
            prop_assert!(f.is_finite(), "objective {f} at {p:?}");
        }
        Ok(())
    })
}

pub fn chores_kkt_implies_equilibrium(cases: u32) -> Result<(), String> {
    let s = (any::<bool>(), 2usize..=4, 2usize..=4, any::<u64>());
    check(cases.min(32), s, |(max_ratio, n, m, seed)| {
        let inst = common::chores(&mut common::rng(seed), max_ratio, n, m);
        let sol = solve_fisher_chores(&inst, &ChoresConfig::default()).map_err(fail)?;
        if sol.kkt.max() <= 1e-8 {
            let r = verify(&inst, &sol.equilibrium, 1e-6).map_err(fail)?;
            prop_assert!(r.certified, "KKT {:e} but gap {:e}", sol.kkt.max(), r.max_gap());
        }
        Ok(())
    })
}

pub fn grid_oracle_convergence(cases: u32) -> Result<(), String> {
    let s = with_goods(|m| (utility(m, false), point(m), 0.5f64..3.0));
    check(cases.min(32), s, |(m, (u, p, budget))| {
        let f = |x: &[f64]| {
            let bundle: Vec<f64> = x.iter().zip(&p).map(|(s, pj)| s / pj).collect();
            u.eval(&bundle).unwrap_or(f64::NEG_INFINITY)
        };
        let grid = if m == 2 { 64 } else { 16 };
        let coarse = simplex_search(m, budget, &f, grid, 1e-12);
        let fine = simplex_search(m, budget, &f, 2 * grid, 1e-12);
        let tol = coarse.precision.max(fine.precision);
        prop_assert!(
            (coarse.value - fine.value).abs() <= tol + 1e-12 * fine.value.abs(),
            "{} vs {} (precision {tol:e})",
            coarse.value,
            fine.value
        );
        let demand = oracle_demand(&u, &p, budget, grid).map_err(fail)?;
        prop_assert!(demand.precision.is_finite());
        Ok(())
    })
}

pub fn instance_json_round_trip(cases: u32) -> Result<(), String> {
    let s = (0usize..4, 2usize..=4, 2usize..=4, any::<u64>());
    check(cases, s, |(kind, n, m, seed)| {
        let mut rng = common::rng(seed);
        let inst = match kind {
            0 => common::fisher(&mut rng, Family::Nested, n, m),
            1 => common::lindahl(&mut rng, Family::Ces(-0.7), n, m),
            2 => common::chores(&mut rng, true, n, m),
            _ => common::chores(&mut rng, false, n, m).with_kind(market_core::MarketKind::LindahlChores).unwrap(),
        };
        let back = parse_instance(&instance_to_json(&inst)).map_err(fail)?;
        prop_assert_eq!(back, inst);
        Ok(())
    })
}

pub fn seeded_runs_deterministic(cases: u32) -> Result<(), String> {
    let s = (2usize..=4, 2usize..=4, any::<u64>());
    check(cases.min(32), s, |(n, m, seed)| {
        let inst = common::fisher(&mut common::rng(seed), Family::Linear, n, m);
        let config = DynamicsConfig { max_iters: 50, seed, ..Default::default() };
        let a = run(&inst, DynamicKind::PrdFisherGs, &Init::Random, &config).map_err(fail)?;
        let b = run(&inst, DynamicKind::PrdFisherGs, &Init::Random, &config).map_err(fail)?;
        prop_assert_eq!(a.to_csv(true), b.to_csv(true));
        Ok(())
    })
}
