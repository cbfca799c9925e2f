//! Proportional response, mirror descent and tatonnement dynamics with
//! trace recording.

mod steps;
mod trace;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::market::{dualize, verify, Equilibrium, MarketInstance, MarketKind};
use crate::programs::{shmyrev_ces_objective, shmyrev_rho};
use crate::Matrix;

pub use steps::{
    fisher_excess_demand, fisher_gamma_bound, is_gs_family, is_tat_fisher_family, is_tat_lindahl_family, is_tc_family,
    lindahl_gamma_bound, lindahl_overpayment, prd_ces_mirror_step, prd_fisher_gs_step, prd_fisher_tc_step,
    prd_lindahl_gs_step, prd_lindahl_tc_step, tatonnement_fisher_step, tatonnement_lindahl_step,
};
pub use trace::{DynamicsTrace, TraceRecord};

use steps::{column_sums, require};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DynamicKind {
    PrdFisherGs,
    PrdLindahlTc,
    PrdLindahlGs,
    PrdFisherTc,
    PrdCesMirror,
    TatFisher,
    TatLindahl,
}

impl DynamicKind {
    pub const ALL: [DynamicKind; 7] = [
        DynamicKind::PrdFisherGs,
        DynamicKind::PrdLindahlTc,
        DynamicKind::PrdLindahlGs,
        DynamicKind::PrdFisherTc,
        DynamicKind::PrdCesMirror,
        DynamicKind::TatFisher,
        DynamicKind::TatLindahl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DynamicKind::PrdFisherGs => "prd-fisher-gs",
            DynamicKind::PrdLindahlTc => "prd-lindahl-tc",
            DynamicKind::PrdLindahlGs => "prd-lindahl-gs",
            DynamicKind::PrdFisherTc => "prd-fisher-tc",
            DynamicKind::PrdCesMirror => "prd-ces",
            DynamicKind::TatFisher => "tat-fisher",
            DynamicKind::TatLindahl => "tat-lindahl",
        }
    }

    pub fn market(self) -> MarketKind {
        match self {
            DynamicKind::PrdFisherGs | DynamicKind::PrdFisherTc | DynamicKind::TatFisher => MarketKind::FisherGoods,
            _ => MarketKind::LindahlGoods,
        }
    }

    fn is_tatonnement(self) -> bool {
        matches!(self, DynamicKind::TatFisher | DynamicKind::TatLindahl)
    }

    /// Checks that the instance is a market this rule applies to.
    pub fn check(self, inst: &MarketInstance) -> Result<()> {
        let market = self.market();
        match self {
            DynamicKind::PrdFisherGs | DynamicKind::PrdLindahlGs => {
                require(inst, market, is_gs_family, "gross substitutes")
            }
            DynamicKind::PrdFisherTc | DynamicKind::PrdLindahlTc => {
                require(inst, market, is_tc_family, "total complements")
            }
            DynamicKind::PrdCesMirror => {
                require(inst, market, |u| u.ces_rho().is_some(), "CES-type")?;
                let r: Vec<f64> = inst.utilities()?.iter().map(shmyrev_rho).collect::<Result<_>>()?;
                if r.iter().any(|&v| v > 0.0) && r.iter().any(|&v| v < 0.0) {
                    return Err(Error::Incompatible("mirror updates need all elasticities on one side of zero".into()));
                }
                Ok(())
            }
            DynamicKind::TatFisher => require(inst, market, is_tat_fisher_family, "a CES tree without additive nodes"),
            DynamicKind::TatLindahl => {
                require(inst, market, is_tat_lindahl_family, "a CES tree without Leontief nodes")
            }
        }
    }
}

impl fmt::Display for DynamicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DynamicKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown dynamic `{s}`")))
    }
}

/// Step sizes for tatonnement.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum GammaRule {
    /// The bound from the substitutes (Fisher) or complements (Lindahl) index.
    #[default]
    Default,
    Uniform(f64),
    PerGood(Vec<f64>),
}

/// Starting point of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Init {
    /// `b_ij = B_i / |support(i)|` on each agent's support.
    #[default]
    Default,
    /// Random positive spending on each support, drawn from the config seed.
    Random,
    Spending(Matrix),
    /// Prices, for Fisher tatonnement.
    Prices(Vec<f64>),
    /// Public allocation, for Lindahl tatonnement.
    Allocation(Vec<f64>),
}

/// Point the trace measures KL divergence against.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum KlReference {
    #[default]
    None,
    /// Equilibrium spending from elsewhere (an oracle, say).
    Spending { b: Matrix, label: String },
    /// Final iterate of a longer run of the same rule.
    PreRun { iters: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    /// Zero records only the starting point.
    pub max_iters: usize,
    pub stop_residual: f64,
    pub stop_movement: f64,
    pub record_every: usize,
    pub seed: u64,
    pub gamma: GammaRule,
    /// Run with a step size below the bound, recording a warning.
    pub allow_small_gamma: bool,
    pub reference: KlReference,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            max_iters: 10_000,
            stop_residual: 1e-8,
            stop_movement: 1e-8,
            record_every: 1,
            seed: 0,
            gamma: GammaRule::Default,
            allow_small_gamma: false,
            reference: KlReference::None,
        }
    }
}

impl DynamicsConfig {
    pub fn with_iters(max_iters: usize) -> Self {
        DynamicsConfig { max_iters, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.record_every == 0 {
            return Err(Error::Domain("record_every must be positive".into()));
        }
        if !(self.stop_residual >= 0.0) || !(self.stop_movement >= 0.0) {
            return Err(Error::Domain("stopping thresholds must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Uniform spending over each agent's support.
pub fn default_spending(inst: &MarketInstance) -> Result<Matrix> {
    let m = inst.m();
    inst.utilities()?
        .iter()
        .zip(inst.budgets())
        .map(|(u, &budget)| {
            let s = u.support(m);
            let k = s.iter().filter(|v| **v).count().max(1) as f64;
            Ok(s.iter().map(|&on| if on { budget / k } else { 0.0 }).collect())
        })
        .collect()
}

fn random_spending(inst: &MarketInstance, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = inst.m();
    inst.utilities()?
        .iter()
        .zip(inst.budgets())
        .map(|(u, &budget)| {
            let w: Vec<f64> =
                u.support(m).into_iter().map(|on| if on { rng.gen_range(0.1..1.0) } else { 0.0 }).collect();
            let t: f64 = w.iter().sum();
            Ok(w.into_iter().map(|v| budget * v / t).collect())
        })
        .collect()
}

fn check_spending_shape(inst: &MarketInstance, b: &Matrix) -> Result<()> {
    check_dim(inst.n(), b.len())?;
    for row in b {
        check_dim(inst.m(), row.len())?;
    }
    Ok(())
}

fn positive(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("initial {what} must be strictly positive")));
    }
    Ok(())
}

/// Generalized KL divergence `sum r log(r / s) - r + s`, term by term.
pub fn kl_divergence(reference: &[f64], current: &[f64]) -> f64 {
    reference
        .iter()
        .zip(current)
        .map(|(&r, &s)| {
            let t = if r > 0.0 { r * (r / s).ln() - r + s } else { s };
            t.max(0.0)
        })
        .sum()
}

fn kl_matrix(reference: &Matrix, current: &Matrix) -> f64 {
    reference.iter().zip(current).map(|(r, s)| kl_divergence(r, s)).sum()
}

/// Internal state: PRD iterates on spending, tatonnement on a vector.
enum State {
    Spending(Matrix),
    Vector(Vec<f64>),
}

struct Evaluated {
    b: Matrix,
    vector: Vec<f64>,
    equilibrium: Equilibrium,
    excess: Option<Vec<f64>>,
}

struct Runner<'a> {
    inst: &'a MarketInstance,
    kind: DynamicKind,
    gamma: Vec<f64>,
    /// Instance on which the Shmyrev potential of the spending is evaluated.
    potential_inst: Option<MarketInstance>,
}

impl Runner<'_> {
    fn evaluate(&self, state: &State) -> Result<Evaluated> {
        let inst = self.inst;
        let m = inst.m();
        match (self.kind, state) {
            (DynamicKind::TatFisher, State::Vector(p)) => {
                let allocations: Matrix = inst
                    .utilities()?
                    .iter()
                    .zip(inst.budgets())
                    .map(|(u, &budget)| u.marshallian_demand(p, budget))
                    .collect::<Result<_>>()?;
                let b = allocations.iter().map(|row| row.iter().zip(p).map(|(x, pj)| x * pj).collect()).collect();
                let z = fisher_excess_demand(inst, p)?;
                Ok(Evaluated {
                    b,
                    vector: p.clone(),
                    equilibrium: Equilibrium::Fisher { allocations, prices: p.clone() },
                    excess: Some(z),
                })
            }
            (DynamicKind::TatLindahl, State::Vector(x)) => {
                let (b, o) = lindahl_overpayment(inst, x)?;
                let prices = lindahl_prices(&b, x);
                Ok(Evaluated {
                    b,
                    vector: x.clone(),
                    equilibrium: Equilibrium::Lindahl { allocation: x.clone(), prices },
                    excess: Some(o),
                })
            }
            (kind, State::Spending(b)) => {
                let s = column_sums(b, m);
                if kind.market().is_fisher() {
                    let allocations = b
                        .iter()
                        .map(|row| row.iter().zip(&s).map(|(v, p)| if *p > 0.0 { v / p } else { 0.0 }).collect())
                        .collect();
                    let excess =
                        if kind == DynamicKind::PrdFisherTc { Some(fisher_excess_demand(inst, &s)?) } else { None };
                    Ok(Evaluated {
                        b: b.clone(),
                        vector: s.clone(),
                        equilibrium: Equilibrium::Fisher { allocations, prices: s },
                        excess,
                    })
                } else {
                    let prices = lindahl_prices(b, &s);
                    Ok(Evaluated {
                        b: b.clone(),
                        vector: s.clone(),
                        equilibrium: Equilibrium::Lindahl { allocation: s, prices },
                        excess: None,
                    })
                }
            }
            _ => unreachable!("state matches rule"),
        }
    }

    fn step(&self, state: &State) -> Result<State> {
        let inst = self.inst;
        Ok(match (self.kind, state) {
            (DynamicKind::PrdFisherGs, State::Spending(b)) => State::Spending(prd_fisher_gs_step(inst, b)?),
            (DynamicKind::PrdLindahlTc, State::Spending(b)) => State::Spending(prd_lindahl_tc_step(inst, b)?),
            (DynamicKind::PrdLindahlGs, State::Spending(b)) => State::Spending(prd_lindahl_gs_step(inst, b)?),
            (DynamicKind::PrdFisherTc, State::Spending(b)) => State::Spending(prd_fisher_tc_step(inst, b)?),
            (DynamicKind::PrdCesMirror, State::Spending(b)) => State::Spending(prd_ces_mirror_step(inst, b)?),
            (DynamicKind::TatFisher, State::Vector(p)) => {
                State::Vector(tatonnement_fisher_step(inst, p, &self.gamma)?.0)
            }
            (DynamicKind::TatLindahl, State::Vector(x)) => {
                State::Vector(tatonnement_lindahl_step(inst, x, &self.gamma)?.0)
            }
            _ => unreachable!("state matches rule"),
        })
    }

    fn kl(&self, reference: &Matrix, ev: &Evaluated) -> f64 {
        match self.kind {
            DynamicKind::PrdLindahlGs | DynamicKind::TatLindahl | DynamicKind::TatFisher => {
                kl_divergence(&column_sums(reference, self.inst.m()), &ev.vector)
            }
            _ => kl_matrix(reference, &ev.b),
        }
    }

    fn record(&self, iter: usize, ev: &Evaluated, reference: Option<&Matrix>) -> Result<TraceRecord> {
        let report = verify(self.inst, &ev.equilibrium, crate::market::DEFAULT_TOLERANCE)?;
        let potential =
            self.potential_inst.as_ref().and_then(|p| shmyrev_ces_objective(p, &ev.b).ok()).filter(|v| v.is_finite());
        Ok(TraceRecord {
            iter,
            b: ev.b.clone(),
            vector: ev.vector.clone(),
            potential,
            kl: reference.map(|r| self.kl(r, ev)),
            residual: report.max_gap(),
            excess: ev.excess.clone(),
        })
    }
}

fn lindahl_prices(b: &Matrix, x: &[f64]) -> Matrix {
    b.iter().map(|row| row.iter().zip(x).map(|(v, xj)| if *xj > 0.0 { v / xj } else { 0.0 }).collect()).collect()
}

fn movement(a: &State, b: &State) -> f64 {
    let diff = |u: &[f64], v: &[f64]| u.iter().zip(v).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    match (a, b) {
        (State::Spending(u), State::Spending(v)) => u.iter().zip(v).fold(0.0f64, |m, (x, y)| m.max(diff(x, y))),
        (State::Vector(u), State::Vector(v)) => diff(u, v),
        _ => f64::INFINITY,
    }
}

fn initial_state(inst: &MarketInstance, kind: DynamicKind, init: &Init, seed: u64) -> Result<State> {
    let m = inst.m();
    let spending = match init {
        Init::Default => default_spending(inst)?,
        Init::Random => random_spending(inst, seed)?,
        Init::Spending(b) => {
            check_spending_shape(inst, b)?;
            if b.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain("initial spending must be nonnegative".into()));
            }
            b.clone()
        }
        Init::Prices(p) if kind == DynamicKind::TatFisher => {
            check_dim(m, p.len())?;
            positive(p, "prices")?;
            return Ok(State::Vector(p.clone()));
        }
        Init::Allocation(x) if kind == DynamicKind::TatLindahl => {
            check_dim(m, x.len())?;
            positive(x, "allocation")?;
            return Ok(State::Vector(x.clone()));
        }
        Init::Prices(_) | Init::Allocation(_) => {
            return Err(Error::InvalidInstance(format!("{kind} does not start from a price or allocation vector")))
        }
    };
    if kind.is_tatonnement() {
        let v = column_sums(&spending, m);
        positive(&v, if kind == DynamicKind::TatFisher { "prices" } else { "allocation" })?;
        Ok(State::Vector(v))
    } else {
        Ok(State::Spending(spending))
    }
}

fn resolve_gamma(
    inst: &MarketInstance,
    kind: DynamicKind,
    config: &DynamicsConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<f64>> {
    if !kind.is_tatonnement() {
        return Ok(Vec::new());
    }
    let bound = if kind == DynamicKind::TatFisher { fisher_gamma_bound(inst)? } else { lindahl_gamma_bound(inst)? };
    let gamma = match &config.gamma {
        GammaRule::Default => vec![bound; inst.m()],
        GammaRule::Uniform(g) => vec![*g; inst.m()],
        GammaRule::PerGood(g) => {
            check_dim(inst.m(), g.len())?;
            g.clone()
        }
    };
    if gamma.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::Domain("step sizes must be positive and finite".into()));
    }
    if let Some(g) = gamma.iter().find(|g| **g < bound) {
        let msg = format!("step size {g} is below the convergence bound {bound}");
        if !config.allow_small_gamma {
            return Err(Error::Domain(msg));
        }
        warnings.push(msg);
    }
    Ok(gamma)
}

/// Iterates `kind` from `init` until both the verifier residual and the
/// iterate movement fall below their thresholds, or `max_iters` steps.
pub fn run(inst: &MarketInstance, kind: DynamicKind, init: &Init, config: &DynamicsConfig) -> Result<DynamicsTrace> {
    config.validate()?;
    kind.check(inst)?;
    let mut warnings = Vec::new();
    let gamma = resolve_gamma(inst, kind, config, &mut warnings)?;
    let potential_inst = if kind.market().is_fisher() { dualize(inst).ok() } else { Some(inst.clone()) };
    let runner = Runner { inst, kind, gamma, potential_inst };

    let (reference, reference_label) = match &config.reference {
        KlReference::None => (None, None),
        KlReference::Spending { b, label } => {
            check_spending_shape(inst, b)?;
            (Some(b.clone()), Some(label.clone()))
        }
        KlReference::PreRun { iters } => {
            let pre = DynamicsConfig {
                max_iters: *iters,
                reference: KlReference::None,
                stop_residual: 0.0,
                stop_movement: 0.0,
                record_every: iters.max(&1).to_owned(),
                ..config.clone()
            };
            let t = run(inst, kind, init, &pre)?;
            (Some(t.final_record().b.clone()), Some(format!("pre-run of {iters} iterations")))
        }
    };

    let mut state = initial_state(inst, kind, init, config.seed)?;
    let mut ev = runner.evaluate(&state)?;
    let mut records = vec![runner.record(0, &ev, reference.as_ref())?];
    let mut converged = false;
    let mut iter = 0;
    while iter < config.max_iters {
        let next = runner.step(&state)?;
        let moved = movement(&state, &next);
        state = next;
        iter += 1;
        ev = runner.evaluate(&state)?;
        let rec = runner.record(iter, &ev, reference.as_ref())?;
        converged = rec.residual <= config.stop_residual && moved <= config.stop_movement;
        let last = converged || iter == config.max_iters;
        if iter % config.record_every == 0 || last {
            records.push(rec);
        }
        if converged {
            break;
        }
    }
    Ok(DynamicsTrace {
        rule: kind,
        records,
        iterations: iter,
        converged,
        gamma: if runner.gamma.is_empty() { None } else { Some(runner.gamma.clone()) },
        reference_label,
        warnings,
        equilibrium: ev.equilibrium,
    })
}

/// Fisher price tatonnement from uniform spending prices.
pub fn tatonnement_fisher(inst: &MarketInstance, config: &DynamicsConfig) -> Result<DynamicsTrace> {
    run(inst, DynamicKind::TatFisher, &Init::Default, config)
}

/// Lindahl allocation tatonnement from the uniform-spending allocation.
pub fn tatonnement_lindahl(inst: &MarketInstance, config: &DynamicsConfig) -> Result<DynamicsTrace> {
    run(inst, DynamicKind::TatLindahl, &Init::Default, config)
}
