//! Utility and disutility families: evaluation, gradients, Marshallian
//! demand, indirect utility, the dual transform and structural checks.
//!
//! Every homogeneous family carries a positive `scale` prefactor. Dual
//! transforms only touch the prefactor and coefficients; demand and argmax
//! computations ignore it.

mod ces;
mod disutility;
mod nested;
mod piecewise;
mod structure;

pub use disutility::{dual_disutility, DisutilityFamily};
pub use nested::{NestChild, NestNode, NestTarget};
pub use piecewise::AffinePiece;
pub use structure::{
    check_gross_substitutes, check_total_complements, complements_index, substitutes_index, StructureReport,
    StructureWitness, DEFAULT_SAMPLES,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// Tagged utility descriptor.
///
/// `LogLinear` (`ln(shift + <a, x>)`) and `MinAffine` are the concave,
/// non-homogeneous families used for welfare comparisons; they have no dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityFamily {
    /// `scale * <a, x>`
    Linear {
        a: Vec<f64>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    /// `scale * min_{a_j > 0} x_j / a_j`
    Leontief {
        a: Vec<f64>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    /// `scale * (sum_j a_j x_j^rho)^(1/rho)`
    Ces {
        a: Vec<f64>,
        rho: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    /// `scale * prod_j x_j^(a_j / sum a)`
    CobbDouglas {
        a: Vec<f64>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    Nested {
        #[serde(flatten)]
        root: NestNode,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    LogLinear {
        a: Vec<f64>,
        #[serde(default)]
        shift: f64,
    },
    MinAffine {
        pieces: Vec<AffinePiece>,
    },
}

impl UtilityFamily {
    pub fn linear(a: Vec<f64>) -> Self {
        UtilityFamily::Linear { a, scale: 1.0 }
    }

    pub fn leontief(a: Vec<f64>) -> Self {
        UtilityFamily::Leontief { a, scale: 1.0 }
    }

    pub fn ces(a: Vec<f64>, rho: f64) -> Self {
        UtilityFamily::Ces { a, rho, scale: 1.0 }
    }

    pub fn cobb_douglas(a: Vec<f64>) -> Self {
        UtilityFamily::CobbDouglas { a, scale: 1.0 }
    }

    pub fn nested(root: NestNode) -> Self {
        UtilityFamily::Nested { root, scale: 1.0 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            UtilityFamily::Linear { .. } => "linear",
            UtilityFamily::Leontief { .. } => "leontief",
            UtilityFamily::Ces { .. } => "ces",
            UtilityFamily::CobbDouglas { .. } => "cobb_douglas",
            UtilityFamily::Nested { .. } => "nested",
            UtilityFamily::LogLinear { .. } => "log_linear",
            UtilityFamily::MinAffine { .. } => "min_affine",
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            UtilityFamily::Linear { scale, .. }
            | UtilityFamily::Leontief { scale, .. }
            | UtilityFamily::Ces { scale, .. }
            | UtilityFamily::CobbDouglas { scale, .. }
            | UtilityFamily::Nested { scale, .. } => *scale,
            _ => 1.0,
        }
    }

    /// Same family with the prefactor reset to one.
    pub fn unscaled(&self) -> Self {
        let mut u = self.clone();
        match &mut u {
            UtilityFamily::Linear { scale, .. }
            | UtilityFamily::Leontief { scale, .. }
            | UtilityFamily::Ces { scale, .. }
            | UtilityFamily::CobbDouglas { scale, .. }
            | UtilityFamily::Nested { scale, .. } => *scale = 1.0,
            _ => {}
        }
        u
    }

    /// Flat coefficient vector, when the family has one.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match self {
            UtilityFamily::Linear { a, .. }
            | UtilityFamily::Leontief { a, .. }
            | UtilityFamily::Ces { a, .. }
            | UtilityFamily::CobbDouglas { a, .. }
            | UtilityFamily::LogLinear { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Elasticity of the flat CES-like kinds: 1 for linear, `-inf` for
    /// Leontief, 0 for Cobb-Douglas.
    pub fn ces_rho(&self) -> Option<f64> {
        match self {
            UtilityFamily::Linear { .. } => Some(1.0),
            UtilityFamily::Leontief { .. } => Some(f64::NEG_INFINITY),
            UtilityFamily::Ces { rho, .. } => Some(*rho),
            UtilityFamily::CobbDouglas { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        !matches!(self, UtilityFamily::LogLinear { .. } | UtilityFamily::MinAffine { .. })
    }

    /// The family as a nested tree (flat CES kinds become a single node).
    pub fn as_tree(&self) -> Option<NestNode> {
        let leaves = |a: &[f64]| {
            a.iter()
                .enumerate()
                .map(|(j, &w)| NestChild { a: w, target: NestTarget::Good { good: j } })
                .collect::<Vec<_>>()
        };
        match self {
            UtilityFamily::Linear { a, .. } => Some(NestNode::new(1.0, leaves(a))),
            UtilityFamily::Leontief { a, .. } => Some(NestNode::new(f64::NEG_INFINITY, leaves(a))),
            UtilityFamily::Ces { a, rho, .. } => Some(NestNode::new(*rho, leaves(a))),
            UtilityFamily::Nested { root, .. } => Some(root.clone()),
            _ => None,
        }
    }

    /// Number of goods the family is defined over (for trees, the largest
    /// leaf index plus one).
    pub fn min_goods(&self) -> usize {
        match self {
            UtilityFamily::Linear { a, .. }
            | UtilityFamily::Leontief { a, .. }
            | UtilityFamily::Ces { a, .. }
            | UtilityFamily::CobbDouglas { a, .. }
            | UtilityFamily::LogLinear { a, .. } => a.len(),
            UtilityFamily::Nested { root, .. } => root.span(),
            UtilityFamily::MinAffine { pieces } => pieces.first().map_or(0, |p| p.c.len()),
        }
    }

    /// Goods with a positive weight: the goods this utility can value.
    pub fn support(&self, m: usize) -> Vec<bool> {
        let mut out = vec![false; m];
        match self {
            UtilityFamily::Nested { root, .. } => root.mark_support(&mut out),
            UtilityFamily::MinAffine { pieces } => {
                for piece in pieces {
                    for (j, c) in piece.c.iter().enumerate().take(m) {
                        out[j] |= *c > 0.0;
                    }
                }
            }
            _ => {
                if let Some(a) = self.coefficients() {
                    for (j, w) in a.iter().enumerate().take(m) {
                        out[j] = *w > 0.0;
                    }
                }
            }
        }
        out
    }

    /// Checks the family invariants against an item count `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        let scale = self.scale();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidFamily("scale must be positive and finite".into()));
        }
        match self {
            UtilityFamily::Linear { a, .. }
            | UtilityFamily::Leontief { a, .. }
            | UtilityFamily::CobbDouglas { a, .. } => {
                ces::check_coefficients(a, self.kind_name())?;
                check_dim(m, a.len())
            }
            UtilityFamily::Ces { a, rho, .. } => {
                ces::check_rho(*rho, false)?;
                ces::check_coefficients(a, "ces")?;
                check_dim(m, a.len())
            }
            UtilityFamily::Nested { root, .. } => {
                let mut seen = Vec::new();
                root.validate(&mut seen)?;
                if let Some(&g) = seen.iter().find(|&&g| g >= m) {
                    return Err(Error::InvalidFamily(format!("leaf good {g} out of range (m = {m})")));
                }
                Ok(())
            }
            UtilityFamily::LogLinear { a, shift } => {
                ces::check_coefficients(a, "log_linear")?;
                if !shift.is_finite() || *shift < 0.0 {
                    return Err(Error::InvalidFamily("log_linear: shift must be >= 0".into()));
                }
                check_dim(m, a.len())
            }
            UtilityFamily::MinAffine { pieces } => {
                let k = piecewise::validate(pieces)?;
                check_dim(m, k)
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        match self {
            UtilityFamily::Nested { root, .. } => {
                if root.span() > len {
                    Err(Error::Dimension { expected: root.span(), got: len })
                } else {
                    Ok(())
                }
            }
            _ => check_dim(self.min_goods(), len),
        }
    }

    /// Rejects an elasticity that must use a dedicated kind.
    fn check_params(&self) -> Result<()> {
        if let UtilityFamily::Ces { rho, .. } = self {
            ces::check_rho(*rho, false)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        self.check_params()?;
        if x.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::Domain("allocation must be nonnegative".into()));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            UtilityFamily::Linear { a, scale } => scale * ces::aggregate(1.0, a, x),
            UtilityFamily::Leontief { a, scale } => scale * ces::aggregate(f64::NEG_INFINITY, a, x),
            UtilityFamily::Ces { a, rho, scale } => scale * ces::aggregate(*rho, a, x),
            UtilityFamily::CobbDouglas { a, scale } => {
                let total: f64 = a.iter().sum();
                let log: f64 = a.iter().zip(x).filter(|(w, _)| **w > 0.0).map(|(w, v)| w / total * v.ln()).sum();
                scale * log.exp()
            }
            UtilityFamily::Nested { root, scale } => scale * root.value(x),
            UtilityFamily::LogLinear { a, shift } => (shift + a.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).ln(),
            UtilityFamily::MinAffine { pieces } => piecewise::value(pieces, x),
        }
    }

    /// Gradient at an interior point. Leontief kinds are rejected; for
    /// `min_affine` the averaged slope of the active pieces is returned.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        self.check_params()?;
        let m = x.len();
        match self {
            UtilityFamily::Linear { a, scale } => Ok(a.iter().map(|w| w * scale).collect()),
            UtilityFamily::Leontief { .. } => Err(Error::Domain("Leontief utility is not differentiable".into())),
            UtilityFamily::Ces { a, rho, scale } => {
                let u = ces::aggregate(*rho, a, x);
                let g = ces::partials(*rho, a, x, u)?;
                Ok(g.into_iter().map(|v| v * scale).collect())
            }
            UtilityFamily::CobbDouglas { a, .. } => {
                let total: f64 = a.iter().sum();
                let u = self.eval_unchecked(x);
                let mut g = vec![0.0; m];
                for j in 0..m {
                    if a[j] > 0.0 {
                        if x[j] <= 0.0 {
                            return Err(Error::Domain("gradient is singular on the boundary".into()));
                        }
                        g[j] = u * a[j] / total / x[j];
                    }
                }
                Ok(g)
            }
            UtilityFamily::Nested { root, scale } => {
                let mut g = vec![0.0; m];
                root.gradient(x, *scale, &mut g)?;
                Ok(g)
            }
            UtilityFamily::LogLinear { a, shift } => {
                let s = shift + a.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                if s <= 0.0 {
                    return Err(Error::Domain("log_linear: argument must be positive".into()));
                }
                Ok(a.iter().map(|w| w / s).collect())
            }
            UtilityFamily::MinAffine { pieces } => Ok(piecewise::supergradient(pieces, x)),
        }
    }

    /// Expenditure shares `x_j * du/dx_j / <x, grad u>` at `x`: the spending
    /// split of a buyer whose supporting prices are proportional to the
    /// gradient. For trees this is the product of node shares along the path.
    pub fn spending_shares(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        self.check_params()?;
        let m = x.len();
        let mut s = vec![0.0; m];
        match self {
            UtilityFamily::Ces { a, rho, .. } => {
                s = ces::value_shares(*rho, a, x)?;
            }
            UtilityFamily::Linear { a, .. } => {
                s = ces::value_shares(1.0, a, x)?;
            }
            UtilityFamily::CobbDouglas { a, .. } => {
                let total: f64 = a.iter().sum();
                for j in 0..m {
                    s[j] = a[j] / total;
                }
            }
            UtilityFamily::Nested { root, .. } => root.path_shares(x, 1.0, &mut s)?,
            _ => {
                let g = self.gradient(x)?;
                let tot: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
                if !(tot > 0.0) {
                    return Err(Error::Domain("no marginal value at this point".into()));
                }
                for j in 0..m {
                    s[j] = g[j] * x[j] / tot;
                }
            }
        }
        Ok(s)
    }

    /// Utility-maximising bundle on `<p, x> <= budget`.
    pub fn marshallian_demand(&self, p: &[f64], budget: f64) -> Result<Vec<f64>> {
        self.check_len(p.len())?;
        self.check_params()?;
        check_budget(budget)?;
        if p.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::Domain("prices must be nonnegative".into()));
        }
        let m = p.len();
        match self {
            UtilityFamily::Linear { a, .. } | UtilityFamily::LogLinear { a, .. } => {
                spend_shares(&ces::cost_shares(1.0, a, p)?, p, budget)
            }
            UtilityFamily::Leontief { a, .. } => {
                let cost = ces::unit_cost(f64::NEG_INFINITY, a, p);
                if !(cost > 0.0) {
                    return Err(Error::Unbounded("bundle direction costs nothing".into()));
                }
                let t = budget / cost;
                Ok(a.iter().map(|w| w * t).collect())
            }
            UtilityFamily::Ces { a, rho, .. } => spend_shares(&ces::cost_shares(*rho, a, p)?, p, budget),
            UtilityFamily::CobbDouglas { a, .. } => {
                let total: f64 = a.iter().sum();
                let s: Vec<f64> = a.iter().map(|w| w / total).collect();
                spend_shares(&s, p, budget)
            }
            UtilityFamily::Nested { root, .. } => {
                let mut x = vec![0.0; m];
                root.demand(p, budget, &mut x)?;
                Ok(x)
            }
            UtilityFamily::MinAffine { pieces } => piecewise::solve(pieces, p, budget)
                .map(|(_, x)| x)
                .ok_or_else(|| Error::Unbounded("utility grows along free goods".into())),
        }
    }

    /// Maximal utility at prices `p` with budget `budget`; `+inf` when
    /// demand is unbounded.
    pub fn indirect_utility(&self, p: &[f64], budget: f64) -> Result<f64> {
        self.check_len(p.len())?;
        self.check_params()?;
        check_budget(budget)?;
        if p.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::Domain("prices must be nonnegative".into()));
        }
        let inv = |c: f64| if c > 0.0 { budget / c } else { f64::INFINITY };
        Ok(match self {
            UtilityFamily::Linear { a, scale } => scale * inv(ces::unit_cost(1.0, a, p)),
            UtilityFamily::Leontief { a, scale } => scale * inv(ces::unit_cost(f64::NEG_INFINITY, a, p)),
            UtilityFamily::Ces { a, rho, scale } => scale * inv(ces::unit_cost(*rho, a, p)),
            UtilityFamily::CobbDouglas { a, scale } => {
                let total: f64 = a.iter().sum();
                let mut log = budget.ln();
                for (w, pj) in a.iter().zip(p) {
                    if *w > 0.0 {
                        if *pj <= 0.0 {
                            return Ok(f64::INFINITY);
                        }
                        let al = w / total;
                        log += al * (al / pj).ln();
                    }
                }
                scale * log.exp()
            }
            UtilityFamily::Nested { root, scale } => scale * inv(root.unit_cost(p)),
            UtilityFamily::LogLinear { a, shift } => {
                let best = inv(ces::unit_cost(1.0, a, p));
                (shift + best).ln()
            }
            UtilityFamily::MinAffine { pieces } => {
                piecewise::solve(pieces, p, budget).map_or(f64::INFINITY, |(v, _)| v)
            }
        })
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if budget > 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("budget must be positive, got {budget}")))
    }
}

fn spend_shares(s: &[f64], p: &[f64], budget: f64) -> Result<Vec<f64>> {
    s.iter()
        .zip(p)
        .map(|(sj, pj)| {
            if *sj == 0.0 {
                Ok(0.0)
            } else if *pj > 0.0 {
                Ok(sj * budget / pj)
            } else {
                Err(Error::Unbounded("zero price on a demanded good".into()))
            }
        })
        .collect()
}

/// Free functions mirroring the methods, for call sites that read better
/// without a receiver.
pub fn eval(u: &UtilityFamily, x: &[f64]) -> Result<f64> {
    u.eval(x)
}

pub fn gradient(u: &UtilityFamily, x: &[f64]) -> Result<Vec<f64>> {
    u.gradient(x)
}

pub fn marshallian_demand(u: &UtilityFamily, p: &[f64], budget: f64) -> Result<Vec<f64>> {
    u.marshallian_demand(p, budget)
}

pub fn indirect_utility(u: &UtilityFamily, p: &[f64], budget: f64) -> Result<f64> {
    u.indirect_utility(p, budget)
}

/// The family `p -> 1 / v(p, budget)`.
///
/// Linear and Leontief swap; CES maps `(a, rho)` to `(a^(1 - rho_hat), rho_hat)`
/// with `rho_hat = rho / (rho - 1)` (CES with `rho = 1` maps to Leontief);
/// Cobb-Douglas keeps its coefficients; trees transform node by node. The
/// factor `1 / (scale * budget)` lands in the prefactor.
pub fn dual_utility(u: &UtilityFamily, budget: f64) -> Result<UtilityFamily> {
    check_budget(budget)?;
    u.check_params()?;
    let s = 1.0 / (u.scale() * budget);
    Ok(match u {
        UtilityFamily::Linear { a, .. } => UtilityFamily::Leontief { a: a.clone(), scale: s },
        UtilityFamily::Leontief { a, .. } => UtilityFamily::Linear { a: a.clone(), scale: s },
        UtilityFamily::Ces { a, rho, .. } => {
            if *rho == 1.0 {
                UtilityFamily::Leontief { a: a.clone(), scale: s }
            } else {
                let (hat, b) = ces::dual_node(*rho, a);
                ces::check_rho(hat, false)?;
                UtilityFamily::Ces { a: b, rho: hat, scale: s }
            }
        }
        UtilityFamily::CobbDouglas { a, .. } => {
            let total: f64 = a.iter().sum();
            let log: f64 = a
                .iter()
                .filter(|w| **w > 0.0)
                .map(|w| {
                    let al = w / total;
                    -al * al.ln()
                })
                .sum();
            UtilityFamily::CobbDouglas { a: a.clone(), scale: s * log.exp() }
        }
        UtilityFamily::Nested { root, .. } => {
            let d = root.dual();
            let mut seen = Vec::new();
            d.validate(&mut seen)?;
            UtilityFamily::Nested { root: d, scale: s }
        }
        UtilityFamily::LogLinear { .. } | UtilityFamily::MinAffine { .. } => {
            return Err(Error::Incompatible(format!(
                "{} utilities are not homogeneous and have no closed-form dual",
                u.kind_name()
            )))
        }
    })
}
