//! Single steps of the proportional response and tatonnement dynamics.

use crate::error::{check_dim, Error, Result};
use crate::market::{MarketInstance, MarketKind};
use crate::programs::shmyrev_rho;
use crate::utilities::{complements_index, substitutes_index, UtilityFamily};
use crate::Matrix;

pub(crate) fn column_sums(b: &Matrix, m: usize) -> Vec<f64> {
    let mut s = vec![0.0; m];
    for row in b {
        for (t, v) in s.iter_mut().zip(row) {
            *t += v;
        }
    }
    s
}

fn check_spending(inst: &MarketInstance, b: &Matrix) -> Result<()> {
    check_dim(inst.n(), b.len())?;
    for row in b {
        check_dim(inst.m(), row.len())?;
        if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("spending must be finite and nonnegative".into()));
        }
    }
    Ok(())
}

fn positive_columns(b: &Matrix, m: usize, what: &str) -> Result<Vec<f64>> {
    let s = column_sums(b, m);
    if let Some(j) = s.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("{what} {j} has zero total spending")));
    }
    Ok(s)
}

/// `B * s / sum s`, rejecting degenerate share vectors.
fn rescale(shares: Vec<f64>, budget: f64) -> Result<Vec<f64>> {
    let total: f64 = shares.iter().sum();
    if !(total > 0.0) || !total.is_finite() || shares.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("degenerate spending shares".into()));
    }
    Ok(shares.into_iter().map(|v| budget * v / total).collect())
}

/// Whether a family has gross-substitutes demand among the supported kinds.
pub fn is_gs_family(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Linear { .. } | UtilityFamily::CobbDouglas { .. } | UtilityFamily::LogLinear { .. } => true,
        UtilityFamily::Ces { rho, .. } => *rho > 0.0,
        UtilityFamily::Nested { root, .. } => !root.any_node(&|r| r < 0.0),
        UtilityFamily::Leontief { .. } | UtilityFamily::MinAffine { .. } => false,
    }
}

/// Whether a family is total complements (or Leontief, covered through
/// duality with linear utilities).
pub fn is_tc_family(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Leontief { .. } | UtilityFamily::CobbDouglas { .. } => true,
        UtilityFamily::Ces { rho, .. } => *rho < 0.0,
        UtilityFamily::Nested { root, .. } => !root.any_node(&|r| r > 0.0),
        _ => false,
    }
}

pub(crate) fn require(
    inst: &MarketInstance,
    kind: MarketKind,
    pred: fn(&UtilityFamily) -> bool,
    what: &str,
) -> Result<()> {
    inst.expect_kind(kind)?;
    if let Some((i, u)) = inst.utilities()?.iter().enumerate().find(|(_, u)| !pred(u)) {
        return Err(Error::Incompatible(format!("agent {i} has a {} utility, which is not {what}", u.kind_name())));
    }
    Ok(())
}

/// Fisher proportional response for gross substitutes:
/// `b_ij <- B_i x_ij d_j u_i(x_i) / sum_k x_ik d_k u_i(x_i)` with
/// `x_ij = b_ij / p_j` and `p_j = sum_i b_ij`.
pub fn prd_fisher_gs_step(inst: &MarketInstance, b: &Matrix) -> Result<Matrix> {
    inst.expect_kind(MarketKind::FisherGoods)?;
    check_spending(inst, b)?;
    let p = positive_columns(b, inst.m(), "good")?;
    inst.utilities()?
        .iter()
        .zip(b)
        .zip(inst.budgets())
        .map(|((u, row), &budget)| {
            let x: Vec<f64> = row.iter().zip(&p).map(|(v, pj)| v / pj).collect();
            rescale(u.spending_shares(&x)?, budget)
        })
        .collect()
}

/// Lindahl expenditure best response: `b_ij <- p_ij x^D_ij(p_i, B_i)` with
/// personalized prices `p_ij = b_ij / x_j`.
pub fn prd_lindahl_tc_step(inst: &MarketInstance, b: &Matrix) -> Result<Matrix> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_spending(inst, b)?;
    let x = positive_columns(b, inst.m(), "good")?;
    inst.utilities()?
        .iter()
        .zip(b)
        .zip(inst.budgets())
        .map(|((u, row), &budget)| {
            let p: Vec<f64> = row.iter().zip(&x).map(|(v, xj)| v / xj).collect();
            let d = u.marshallian_demand(&p, budget)?;
            rescale(p.iter().zip(&d).map(|(a, b)| a * b).collect(), budget)
        })
        .collect()
}

/// Lindahl proportional response for gross substitutes:
/// `b_ij <- B_i x_j d_j u_i(x) / sum_k x_k d_k u_i(x)` with `x_j = sum_i b_ij`.
pub fn prd_lindahl_gs_step(inst: &MarketInstance, b: &Matrix) -> Result<Matrix> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_spending(inst, b)?;
    let x = column_sums(b, inst.m());
    inst.utilities()?.iter().zip(inst.budgets()).map(|(u, &budget)| rescale(u.spending_shares(&x)?, budget)).collect()
}

/// Fisher proportional response for total complements:
/// `b_ij <- p_j x^D_ij(p, B_i)` with `p_j = sum_i b_ij`.
pub fn prd_fisher_tc_step(inst: &MarketInstance, b: &Matrix) -> Result<Matrix> {
    inst.expect_kind(MarketKind::FisherGoods)?;
    check_spending(inst, b)?;
    let p = positive_columns(b, inst.m(), "good")?;
    inst.utilities()?
        .iter()
        .zip(inst.budgets())
        .map(|(u, &budget)| {
            let d = u.marshallian_demand(&p, budget)?;
            rescale(p.iter().zip(&d).map(|(a, b)| a * b).collect(), budget)
        })
        .collect()
}

/// Excess demand `z_j = sum_i x^D_ij(p, B_i) - 1`. The Fisher TC step moves
/// prices by `p_j <- p_j (1 + z_j)`.
pub fn fisher_excess_demand(inst: &MarketInstance, p: &[f64]) -> Result<Vec<f64>> {
    inst.expect_kind(MarketKind::FisherGoods)?;
    check_dim(inst.m(), p.len())?;
    let mut z = vec![-1.0; inst.m()];
    for (u, &budget) in inst.utilities()?.iter().zip(inst.budgets()) {
        for (t, v) in z.iter_mut().zip(u.marshallian_demand(p, budget)?) {
            *t += v;
        }
    }
    Ok(z)
}

/// Overpayment `o_j = sum_i b_ij / x_j - 1` where `b` is the spending that
/// supports `x`: `b_ij = B_i x_j d_j u_i(x) / <x, grad u_i(x)>`.
pub fn lindahl_overpayment(inst: &MarketInstance, x: &[f64]) -> Result<(Matrix, Vec<f64>)> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_dim(inst.m(), x.len())?;
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("allocation must be strictly positive".into()));
    }
    let b: Matrix = inst
        .utilities()?
        .iter()
        .zip(inst.budgets())
        .map(|(u, &budget)| rescale(u.spending_shares(x)?, budget))
        .collect::<Result<_>>()?;
    let o = column_sums(&b, inst.m()).iter().zip(x).map(|(s, xj)| s / xj - 1.0).collect();
    Ok((b, o))
}

/// Mirror descent (ascent) on the spending program for CES-type agents.
///
/// * `rho` in `(0, 1]`: `b_ij ~ a_ij x_j^rho`
/// * `rho` in `(-inf, 0)`: `b_ij ~ (a_ij (x_j / b_ij)^rho)^(1 / (1 - rho))`
/// * `rho = -inf`: `b_ij ~ a_ij b_ij / x_j`
/// * `rho = 0`: pinned at `B_i a_ij / sum a_i`
pub fn prd_ces_mirror_step(inst: &MarketInstance, b: &Matrix) -> Result<Matrix> {
    inst.expect_kind(MarketKind::LindahlGoods)?;
    check_spending(inst, b)?;
    let rhos: Vec<f64> = inst.utilities()?.iter().map(shmyrev_rho).collect::<Result<_>>()?;
    if rhos.iter().any(|&r| r > 0.0) && rhos.iter().any(|&r| r < 0.0) {
        return Err(Error::Incompatible("mirror updates need all elasticities on one side of zero".into()));
    }
    let x = column_sums(b, inst.m());
    inst.utilities()?
        .iter()
        .zip(b)
        .zip(inst.budgets())
        .zip(&rhos)
        .map(|(((u, row), &budget), &rho)| {
            let a = u.coefficients().expect("flat CES-type family");
            let shares: Vec<f64> = (0..row.len())
                .map(|j| {
                    if a[j] <= 0.0 {
                        0.0
                    } else if rho == 0.0 {
                        a[j]
                    } else if rho > 0.0 {
                        a[j] * x[j].powf(rho)
                    } else if rho == f64::NEG_INFINITY {
                        a[j] * row[j] / x[j]
                    } else {
                        (a[j] * (x[j] / row[j]).powf(rho)).powf(1.0 / (1.0 - rho))
                    }
                })
                .collect();
            rescale(shares, budget)
        })
        .collect()
}

/// Default step size for Fisher tatonnement: `8 - (252/25) min_i SI(u_i)`.
pub fn fisher_gamma_bound(inst: &MarketInstance) -> Result<f64> {
    let mut worst = 0.0f64;
    for u in inst.utilities()? {
        worst = worst.min(substitutes_index(u)?);
    }
    Ok(8.0 - 252.0 / 25.0 * worst)
}

/// Default step size for Lindahl tatonnement: `8 - (252/25) min_i CI(u_i)`.
pub fn lindahl_gamma_bound(inst: &MarketInstance) -> Result<f64> {
    let mut worst = 0.0f64;
    for u in inst.utilities()? {
        worst = worst.min(complements_index(u)?);
    }
    Ok(8.0 - 252.0 / 25.0 * worst)
}

/// Tatonnement families for Fisher markets: CES-type trees with no
/// additive node.
pub fn is_tat_fisher_family(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Leontief { .. } | UtilityFamily::CobbDouglas { .. } => true,
        UtilityFamily::Ces { rho, .. } => *rho < 1.0,
        UtilityFamily::Nested { root, .. } => !root.any_node(&|r| r == 1.0),
        _ => false,
    }
}

/// Tatonnement families for Lindahl markets: CES-type trees with no
/// Leontief node.
pub fn is_tat_lindahl_family(u: &UtilityFamily) -> bool {
    match u {
        UtilityFamily::Linear { .. } | UtilityFamily::CobbDouglas { .. } => true,
        UtilityFamily::Ces { .. } => true,
        UtilityFamily::Nested { root, .. } => !root.any_node(&|r| r == f64::NEG_INFINITY),
        _ => false,
    }
}

/// `p_j <- p_j exp(min(z_j, 1) / gamma_j)`; returns the new prices and the
/// excess demand at the old ones.
pub fn tatonnement_fisher_step(inst: &MarketInstance, p: &[f64], gamma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(inst.m(), gamma.len())?;
    let z = fisher_excess_demand(inst, p)?;
    let next = p.iter().zip(&z).zip(gamma).map(|((pj, zj), g)| pj * (zj.min(1.0) / g).exp()).collect();
    Ok((next, z))
}

/// `x_j <- x_j exp(min(o_j, 1) / gamma_j)`; returns the new allocation, the
/// supporting spending at the old one and the overpayment.
pub fn tatonnement_lindahl_step(
    inst: &MarketInstance,
    x: &[f64],
    gamma: &[f64],
) -> Result<(Vec<f64>, Matrix, Vec<f64>)> {
    check_dim(inst.m(), gamma.len())?;
    let (b, o) = lindahl_overpayment(inst, x)?;
    let next = x.iter().zip(&o).zip(gamma).map(|((xj, oj), g)| xj * (oj.min(1.0) / g).exp()).collect();
    Ok((next, b, o))
}
