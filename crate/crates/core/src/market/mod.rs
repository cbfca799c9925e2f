//! Market instances, equilibrium containers, residual verification and the
//! Fisher/Lindahl duality maps.

mod dual;
pub mod io;
mod verify;

pub use dual::{dualize, dualize_equilibrium};
pub(crate) use verify::trim_free_columns;
pub use verify::{
    verify, verify_fisher, verify_fisher_chores, verify_lindahl, verify_lindahl_chores, ResidualReport,
    DEFAULT_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::utilities::{DisutilityFamily, UtilityFamily};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketKind {
    FisherGoods,
    LindahlGoods,
    FisherChores,
    LindahlChores,
}

impl MarketKind {
    pub fn is_fisher(self) -> bool {
        matches!(self, MarketKind::FisherGoods | MarketKind::FisherChores)
    }

    pub fn is_chores(self) -> bool {
        matches!(self, MarketKind::FisherChores | MarketKind::LindahlChores)
    }

    /// The kind on the other side of the duality.
    pub fn dual(self) -> MarketKind {
        match self {
            MarketKind::FisherGoods => MarketKind::LindahlGoods,
            MarketKind::LindahlGoods => MarketKind::FisherGoods,
            MarketKind::FisherChores => MarketKind::LindahlChores,
            MarketKind::LindahlChores => MarketKind::FisherChores,
        }
    }
}

/// Per-agent preferences: utilities for goods, disutilities for chores.
#[derive(Debug, Clone, PartialEq)]
pub enum Agents {
    Goods(Vec<UtilityFamily>),
    Chores(Vec<DisutilityFamily>),
}

impl Agents {
    pub fn len(&self) -> usize {
        match self {
            Agents::Goods(v) => v.len(),
            Agents::Chores(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated market: `n` agents with budgets (earning requirements for
/// chores) over `m` items.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    kind: MarketKind,
    m: usize,
    budgets: Vec<f64>,
    agents: Agents,
}

impl MarketInstance {
    pub fn new(kind: MarketKind, m: usize, budgets: Vec<f64>, agents: Agents) -> Result<Self> {
        let inst = MarketInstance { kind, m, budgets, agents };
        inst.validate()?;
        Ok(inst)
    }

    pub fn fisher_goods(utilities: Vec<UtilityFamily>, budgets: Vec<f64>) -> Result<Self> {
        let m = utilities.first().map_or(0, |u| u.min_goods());
        Self::new(MarketKind::FisherGoods, m, budgets, Agents::Goods(utilities))
    }

    pub fn lindahl_goods(utilities: Vec<UtilityFamily>, budgets: Vec<f64>) -> Result<Self> {
        let m = utilities.first().map_or(0, |u| u.min_goods());
        Self::new(MarketKind::LindahlGoods, m, budgets, Agents::Goods(utilities))
    }

    pub fn fisher_chores(disutilities: Vec<DisutilityFamily>, budgets: Vec<f64>) -> Result<Self> {
        let m = disutilities.first().map_or(0, |d| d.coefficients().len());
        Self::new(MarketKind::FisherChores, m, budgets, Agents::Chores(disutilities))
    }

    pub fn lindahl_chores(disutilities: Vec<DisutilityFamily>, budgets: Vec<f64>) -> Result<Self> {
        let m = disutilities.first().map_or(0, |d| d.coefficients().len());
        Self::new(MarketKind::LindahlChores, m, budgets, Agents::Chores(disutilities))
    }

    fn validate(&self) -> Result<()> {
        let n = self.agents.len();
        if n == 0 {
            return Err(Error::InvalidInstance("at least one agent is required".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidInstance("at least one item is required".into()));
        }
        check_dim(n, self.budgets.len())?;
        if let Some(b) = self.budgets.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInstance(format!("budget {b} is not positive")));
        }
        match (&self.agents, self.kind.is_chores()) {
            (Agents::Goods(us), false) => {
                let mut valued = vec![false; self.m];
                for (i, u) in us.iter().enumerate() {
                    u.validate(self.m).map_err(|e| Error::InvalidInstance(format!("agent {i}: {e}")))?;
                    for (v, s) in valued.iter_mut().zip(u.support(self.m)) {
                        *v |= s;
                    }
                }
                if let Some(j) = valued.iter().position(|v| !v) {
                    return Err(Error::InvalidInstance(format!("good {j} is valued by no agent")));
                }
            }
            (Agents::Chores(ds), true) => {
                for (i, d) in ds.iter().enumerate() {
                    d.validate(self.m).map_err(|e| Error::InvalidInstance(format!("agent {i}: {e}")))?;
                }
            }
            _ => {
                return Err(Error::InvalidInstance(
                    "goods markets take utilities and chores markets take disutilities".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> MarketKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn total_budget(&self) -> f64 {
        self.budgets.iter().sum()
    }

    pub fn agents(&self) -> &Agents {
        &self.agents
    }

    pub fn utilities(&self) -> Result<&[UtilityFamily]> {
        match &self.agents {
            Agents::Goods(v) => Ok(v),
            Agents::Chores(_) => Err(Error::Incompatible("chores instance has no utilities".into())),
        }
    }

    pub fn disutilities(&self) -> Result<&[DisutilityFamily]> {
        match &self.agents {
            Agents::Chores(v) => Ok(v),
            Agents::Goods(_) => Err(Error::Incompatible("goods instance has no disutilities".into())),
        }
    }

    pub(crate) fn expect_kind(&self, kind: MarketKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Incompatible(format!("expected a {kind:?} market, got {:?}", self.kind)))
        }
    }

    /// Same market with a different kind on the same side (goods or chores).
    pub fn with_kind(&self, kind: MarketKind) -> Result<Self> {
        Self::new(kind, self.m, self.budgets.clone(), self.agents.clone())
    }

    /// Relabels agents and items: new agent `k` is old agent `agents[k]`,
    /// new item `l` is old item `items[l]`. Only flat families are supported.
    pub fn permuted(&self, agents: &[usize], items: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| items.iter().map(|&j| v[j]).collect::<Vec<_>>();
        let budgets = agents.iter().map(|&i| self.budgets[i]).collect();
        let new_agents = match &self.agents {
            Agents::Goods(us) => {
                Agents::Goods(agents.iter().map(|&i| permute_utility(&us[i], items, &pick)).collect::<Result<_>>()?)
            }
            Agents::Chores(ds) => Agents::Chores(agents.iter().map(|&i| ds[i].restrict(items)).collect()),
        };
        Self::new(self.kind, items.len(), budgets, new_agents)
    }
}

fn permute_utility(u: &UtilityFamily, items: &[usize], pick: &dyn Fn(&[f64]) -> Vec<f64>) -> Result<UtilityFamily> {
    let mut out = u.clone();
    match &mut out {
        UtilityFamily::Linear { a, .. }
        | UtilityFamily::Leontief { a, .. }
        | UtilityFamily::Ces { a, .. }
        | UtilityFamily::CobbDouglas { a, .. }
        | UtilityFamily::LogLinear { a, .. } => *a = pick(a),
        UtilityFamily::MinAffine { pieces } => {
            for piece in pieces {
                piece.c = pick(&piece.c);
            }
        }
        UtilityFamily::Nested { root, .. } => {
            let mut inverse = vec![usize::MAX; items.len().max(root_span(root))];
            for (new, &old) in items.iter().enumerate() {
                if old < inverse.len() {
                    inverse[old] = new;
                }
            }
            relabel(root, &inverse)?;
        }
    }
    Ok(out)
}

fn root_span(root: &crate::utilities::NestNode) -> usize {
    UtilityFamily::nested(root.clone()).min_goods()
}

fn relabel(node: &mut crate::utilities::NestNode, inverse: &[usize]) -> Result<()> {
    use crate::utilities::NestTarget;
    for c in &mut node.children {
        match &mut c.target {
            NestTarget::Good { good } => {
                let new = inverse[*good];
                if new == usize::MAX {
                    return Err(Error::InvalidInstance("permutation drops a leaf good".into()));
                }
                *good = new;
            }
            NestTarget::Node { node } => relabel(node, inverse)?,
        }
    }
    Ok(())
}

/// An equilibrium candidate. Fisher markets carry one allocation row per
/// agent and a single price vector; Lindahl markets carry one allocation
/// and a personalized price row per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Equilibrium {
    Fisher { allocations: Matrix, prices: Vec<f64> },
    Lindahl { allocation: Vec<f64>, prices: Matrix },
}

impl Equilibrium {
    pub fn is_fisher(&self) -> bool {
        matches!(self, Equilibrium::Fisher { .. })
    }

    pub(crate) fn check_shape(&self, inst: &MarketInstance) -> Result<()> {
        let (n, m) = (inst.n(), inst.m());
        if self.is_fisher() != inst.kind().is_fisher() {
            return Err(Error::Incompatible(format!("equilibrium form does not match a {:?} market", inst.kind())));
        }
        let (rows, vec) = match self {
            Equilibrium::Fisher { allocations, prices } => (allocations, prices),
            Equilibrium::Lindahl { allocation, prices } => (prices, allocation),
        };
        check_dim(n, rows.len())?;
        for r in rows {
            check_dim(m, r.len())?;
        }
        check_dim(m, vec.len())
    }
}
