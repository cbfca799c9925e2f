use super::{Agents, Equilibrium, MarketInstance};
use crate::error::Result;
use crate::utilities::{dual_disutility, dual_utility};

/// The dual market: every agent's preference replaced by its dual at the
/// agent's budget, Fisher and Lindahl swapped.
pub fn dualize(inst: &MarketInstance) -> Result<MarketInstance> {
    let budgets = inst.budgets().to_vec();
    let agents = match inst.agents() {
        Agents::Goods(us) => {
            Agents::Goods(us.iter().zip(&budgets).map(|(u, &b)| dual_utility(u, b)).collect::<Result<_>>()?)
        }
        Agents::Chores(ds) => {
            Agents::Chores(ds.iter().zip(&budgets).map(|(d, &b)| dual_disutility(d, b)).collect::<Result<_>>()?)
        }
    };
    MarketInstance::new(inst.kind().dual(), inst.m(), budgets, agents)
}

/// Swaps the roles of allocations and prices. `inst` is the market `eq`
/// belongs to.
pub fn dualize_equilibrium(inst: &MarketInstance, eq: &Equilibrium) -> Result<Equilibrium> {
    eq.check_shape(inst)?;
    Ok(match eq {
        Equilibrium::Fisher { allocations, prices } => {
            Equilibrium::Lindahl { allocation: prices.clone(), prices: allocations.clone() }
        }
        Equilibrium::Lindahl { allocation, prices } => {
            Equilibrium::Fisher { allocations: prices.clone(), prices: allocation.clone() }
        }
    })
}
