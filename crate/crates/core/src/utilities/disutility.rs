//! Convex, 1-homogeneous disutilities for chores and their dual norms.

use serde::{Deserialize, Serialize};

use super::ces::check_coefficients;
use crate::error::{check_dim, Error, Result};

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// Tagged disutility descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisutilityFamily {
    /// `scale * <d, x>`
    Linear {
        d: Vec<f64>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    /// `scale * max_j d_j x_j`
    MaxRatio {
        d: Vec<f64>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    /// `scale * (sum_j d_j x_j^rho)^(1/rho)` with `rho >= 1`
    CesConvex {
        d: Vec<f64>,
        rho: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
}

const RHO_MAX: f64 = 1e9;

impl DisutilityFamily {
    pub fn linear(d: Vec<f64>) -> Self {
        DisutilityFamily::Linear { d, scale: 1.0 }
    }

    pub fn max_ratio(d: Vec<f64>) -> Self {
        DisutilityFamily::MaxRatio { d, scale: 1.0 }
    }

    pub fn ces_convex(d: Vec<f64>, rho: f64) -> Self {
        DisutilityFamily::CesConvex { d, rho, scale: 1.0 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DisutilityFamily::Linear { .. } => "linear",
            DisutilityFamily::MaxRatio { .. } => "max_ratio",
            DisutilityFamily::CesConvex { .. } => "ces_convex",
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            DisutilityFamily::Linear { d, .. }
            | DisutilityFamily::MaxRatio { d, .. }
            | DisutilityFamily::CesConvex { d, .. } => d,
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            DisutilityFamily::Linear { scale, .. }
            | DisutilityFamily::MaxRatio { scale, .. }
            | DisutilityFamily::CesConvex { scale, .. } => *scale,
        }
    }

    pub fn unscaled(&self) -> Self {
        let mut d = self.clone();
        match &mut d {
            DisutilityFamily::Linear { scale, .. }
            | DisutilityFamily::MaxRatio { scale, .. }
            | DisutilityFamily::CesConvex { scale, .. } => *scale = 1.0,
        }
        d
    }

    /// Same family restricted to the listed chores.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut out = self.clone();
        match &mut out {
            DisutilityFamily::Linear { d, .. }
            | DisutilityFamily::MaxRatio { d, .. }
            | DisutilityFamily::CesConvex { d, .. } => {
                *d = keep.iter().map(|&j| d[j]).collect();
            }
        }
        out
    }

    /// Checks coefficients, the elasticity range and the item count. Zero
    /// coefficients are accepted here; see [`Self::is_positive`].
    pub fn validate(&self, m: usize) -> Result<()> {
        let scale = self.scale();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidFamily("scale must be positive and finite".into()));
        }
        check_coefficients(self.coefficients(), self.kind_name())?;
        if let DisutilityFamily::CesConvex { rho, .. } = self {
            if !(*rho >= 1.0 && *rho <= RHO_MAX) {
                return Err(Error::InvalidFamily(format!("ces_convex: rho must lie in [1, {RHO_MAX}], got {rho}")));
            }
        }
        check_dim(m, self.coefficients().len())
    }

    /// Positivity on every basis vector: `d(e_j) > 0` for all `j`.
    pub fn is_positive(&self) -> bool {
        self.coefficients().iter().all(|&v| v > 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.coefficients().len(), x.len())?;
        if x.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::Domain("allocation must be nonnegative".into()));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let pairs = self.coefficients().iter().zip(x);
        self.scale()
            * match self {
                DisutilityFamily::Linear { .. } => pairs.map(|(d, v)| d * v).sum(),
                DisutilityFamily::MaxRatio { .. } => pairs.map(|(d, v)| d * v).fold(0.0, f64::max),
                DisutilityFamily::CesConvex { rho, .. } => {
                    let s: f64 = pairs.map(|(d, v)| d * v.powf(*rho)).sum();
                    s.powf(1.0 / rho)
                }
            }
    }

    /// A subgradient of `d` at `x`; ties of the max kind are averaged.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.coefficients().len(), x.len())?;
        let s = self.scale();
        let dv = self.coefficients();
        Ok(match self {
            DisutilityFamily::Linear { .. } => dv.iter().map(|d| d * s).collect(),
            DisutilityFamily::MaxRatio { .. } => {
                let best = dv.iter().zip(x).map(|(d, v)| d * v).fold(0.0, f64::max);
                let tol = 1e-12 * best;
                let ties: Vec<usize> = (0..x.len()).filter(|&j| dv[j] * x[j] >= best - tol).collect();
                let mut g = vec![0.0; x.len()];
                for &j in &ties {
                    g[j] = s * dv[j] / ties.len() as f64;
                }
                g
            }
            DisutilityFamily::CesConvex { rho, .. } => {
                let total: f64 = dv.iter().zip(x).map(|(d, v)| d * v.powf(*rho)).sum();
                if !(total > 0.0) {
                    return Ok(vec![0.0; x.len()]);
                }
                let f = total.powf(1.0 / rho - 1.0);
                dv.iter().zip(x).map(|(d, v)| s * d * v.powf(rho - 1.0) * f).collect()
            }
        })
    }

    /// Dual norm `d*(p) = max { <p, x> : d(x) <= 1, x >= 0 }`. Negative
    /// prices are clipped to zero.
    pub fn dual_norm(&self, p: &[f64]) -> Result<f64> {
        check_dim(self.coefficients().len(), p.len())?;
        Ok(self.dual_norm_unchecked(p))
    }

    pub(crate) fn dual_norm_unchecked(&self, p: &[f64]) -> f64 {
        let dv = self.coefficients();
        let ratio = |d: f64, q: f64| {
            let q = q.max(0.0);
            if q == 0.0 {
                0.0
            } else if d > 0.0 {
                q / d
            } else {
                f64::INFINITY
            }
        };
        let base = match self {
            DisutilityFamily::Linear { .. } => dv.iter().zip(p).map(|(d, q)| ratio(*d, *q)).fold(0.0, f64::max),
            DisutilityFamily::MaxRatio { .. } => dv.iter().zip(p).map(|(d, q)| ratio(*d, *q)).sum(),
            DisutilityFamily::CesConvex { rho, .. } => {
                if *rho == 1.0 {
                    dv.iter().zip(p).map(|(d, q)| ratio(*d, *q)).fold(0.0, f64::max)
                } else {
                    let q_exp = rho / (rho - 1.0);
                    // (sum_j (p_j / d_j^(1/rho))^q)^(1/q), scaled by the largest term
                    let terms: Vec<f64> = dv.iter().zip(p).map(|(d, q)| ratio(d.powf(1.0 / rho), *q)).collect();
                    let big = terms.iter().cloned().fold(0.0, f64::max);
                    if big == 0.0 || !big.is_finite() {
                        big
                    } else {
                        let s: f64 = terms.iter().map(|t| (t / big).powf(q_exp)).sum();
                        big * s.powf(1.0 / q_exp)
                    }
                }
            }
        };
        base / self.scale()
    }

    /// A subgradient of the dual norm at `p`, taken at the clipped price.
    /// Linear ties are split equally. For `max_ratio`, chores with zero price
    /// keep their full slope so that callers see the largest admissible
    /// allocation.
    pub fn dual_norm_subgradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.coefficients().len(), p.len())?;
        let s = self.scale();
        let dv = self.coefficients();
        let m = p.len();
        let linear_ties = || {
            let vals: Vec<f64> =
                (0..m).map(|j| if dv[j] > 0.0 { p[j].max(0.0) / dv[j] } else { f64::INFINITY }).collect();
            let best = vals.iter().cloned().fold(0.0, f64::max);
            let tol = 1e-12 * best;
            let ties: Vec<usize> = (0..m).filter(|&j| vals[j] >= best - tol).collect();
            let mut g = vec![0.0; m];
            for &j in &ties {
                g[j] = 1.0 / (s * dv[j] * ties.len() as f64);
            }
            g
        };
        Ok(match self {
            DisutilityFamily::Linear { .. } => linear_ties(),
            DisutilityFamily::MaxRatio { .. } => dv.iter().map(|d| 1.0 / (s * d)).collect(),
            DisutilityFamily::CesConvex { rho, .. } => {
                if *rho == 1.0 {
                    linear_ties()
                } else {
                    let q_exp = rho / (rho - 1.0);
                    let norm = self.dual_norm_unchecked(p) * s;
                    if !(norm > 0.0) {
                        return Err(Error::Domain("dual norm vanishes at this price".into()));
                    }
                    dv.iter()
                        .zip(p)
                        .map(|(d, q)| {
                            let t = q.max(0.0) / d.powf(1.0 / rho);
                            (t / norm).powf(q_exp - 1.0) / (s * d.powf(1.0 / rho))
                        })
                        .collect()
                }
            }
        })
    }

    /// Indirect disutility `h(p, B) = B / d*(p)`; `+inf` when no chore pays.
    pub fn indirect_disutility(&self, p: &[f64], budget: f64) -> Result<f64> {
        let n = self.dual_norm(p)?;
        Ok(if n > 0.0 { budget / n } else { f64::INFINITY })
    }

    /// Roy's identity for chores: `x = B g / <g, p>` for a subgradient `g` of
    /// the dual norm at `p`.
    pub fn roy_demand(&self, p: &[f64], budget: f64) -> Result<Vec<f64>> {
        check_dim(self.coefficients().len(), p.len())?;
        if !p.iter().any(|v| *v > 0.0) {
            return Err(Error::Domain("no chore has a positive price".into()));
        }
        let g = self.dual_norm_subgradient(p)?;
        let gp: f64 = g.iter().zip(p).map(|(a, b)| a * b.max(0.0)).sum();
        if !(gp > 0.0) || !gp.is_finite() {
            return Err(Error::Domain("dual norm is not finite at this price".into()));
        }
        Ok(g.iter().map(|v| budget * v / gp).collect())
    }
}

/// The disutility `p -> 1 / h(p, B) = d*(p) / B`.
///
/// Linear and max-ratio swap with reciprocal coefficients; `ces_convex`
/// maps `(d, rho)` to `(d^(-1/(rho-1)), rho/(rho-1))`.
pub fn dual_disutility(d: &DisutilityFamily, budget: f64) -> Result<DisutilityFamily> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Domain(format!("budget must be positive, got {budget}")));
    }
    if !d.is_positive() {
        return Err(Error::Incompatible("dual disutility needs strictly positive coefficients".into()));
    }
    let scale = 1.0 / (d.scale() * budget);
    let inv = |v: &[f64]| v.iter().map(|x| 1.0 / x).collect::<Vec<_>>();
    Ok(match d {
        DisutilityFamily::Linear { d, .. } => DisutilityFamily::MaxRatio { d: inv(d), scale },
        DisutilityFamily::MaxRatio { d, .. } => DisutilityFamily::Linear { d: inv(d), scale },
        DisutilityFamily::CesConvex { d, rho, .. } => {
            if *rho == 1.0 {
                DisutilityFamily::MaxRatio { d: inv(d), scale }
            } else {
                let e = -1.0 / (rho - 1.0);
                DisutilityFamily::CesConvex { d: d.iter().map(|v| v.powf(e)).collect(), rho: rho / (rho - 1.0), scale }
            }
        }
    })
}
