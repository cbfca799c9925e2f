//! Nested-CES trees.

use serde::{Deserialize, Serialize};

use super::ces;
use crate::error::{Error, Result};

/// An internal node: a CES aggregate of its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestNode {
    #[serde(with = "rho_serde")]
    pub rho: f64,
    pub children: Vec<NestChild>,
}

/// An edge of the tree with its preference weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestChild {
    pub a: f64,
    #[serde(flatten)]
    pub target: NestTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NestTarget {
    Good { good: usize },
    Node { node: NestNode },
}

impl NestNode {
    pub fn new(rho: f64, children: Vec<NestChild>) -> Self {
        NestNode { rho, children }
    }

    pub(crate) fn weights(&self) -> Vec<f64> {
        self.children.iter().map(|c| c.a).collect()
    }

    pub(crate) fn validate(&self, seen: &mut Vec<usize>) -> Result<()> {
        ces::check_rho(self.rho, true)?;
        if self.children.is_empty() {
            return Err(Error::InvalidFamily("nested node without children".into()));
        }
        ces::check_coefficients(&self.weights(), "nested node")?;
        for c in &self.children {
            match &c.target {
                NestTarget::Good { good } => {
                    if seen.contains(good) {
                        return Err(Error::InvalidFamily(format!("good {good} appears in more than one leaf")));
                    }
                    seen.push(*good);
                }
                NestTarget::Node { node } => node.validate(seen)?,
            }
        }
        Ok(())
    }

    /// Largest good index referenced by a leaf, plus one.
    pub(crate) fn span(&self) -> usize {
        self.children
            .iter()
            .map(|c| match &c.target {
                NestTarget::Good { good } => good + 1,
                NestTarget::Node { node } => node.span(),
            })
            .max()
            .unwrap_or(0)
    }

    fn child_values(&self, x: &[f64]) -> Vec<f64> {
        self.children
            .iter()
            .map(|c| match &c.target {
                NestTarget::Good { good } => x[*good],
                NestTarget::Node { node } => node.value(x),
            })
            .collect()
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        ces::aggregate(self.rho, &self.weights(), &self.child_values(x))
    }

    fn child_costs(&self, p: &[f64]) -> Vec<f64> {
        self.children
            .iter()
            .map(|c| match &c.target {
                NestTarget::Good { good } => p[*good],
                NestTarget::Node { node } => node.unit_cost(p),
            })
            .collect()
    }

    pub(crate) fn unit_cost(&self, p: &[f64]) -> f64 {
        ces::unit_cost(self.rho, &self.weights(), &self.child_costs(p))
    }

    /// Recursive budget splitting; writes quantities into `out`.
    pub(crate) fn demand(&self, p: &[f64], budget: f64, out: &mut [f64]) -> Result<()> {
        let a = self.weights();
        let costs = self.child_costs(p);
        let shares = ces::cost_shares(self.rho, &a, &costs)?;
        let scale =
            if self.rho == f64::NEG_INFINITY { budget / ces::unit_cost(self.rho, &a, &costs) } else { f64::NAN };
        for (k, c) in self.children.iter().enumerate() {
            if a[k] <= 0.0 {
                continue;
            }
            let spend = shares[k] * budget;
            match &c.target {
                NestTarget::Good { good } => {
                    out[*good] = if self.rho == f64::NEG_INFINITY {
                        scale * a[k]
                    } else if p[*good] > 0.0 {
                        spend / p[*good]
                    } else if spend == 0.0 {
                        0.0
                    } else {
                        return Err(Error::Unbounded(format!("good {good} has zero price")));
                    };
                }
                NestTarget::Node { node } => {
                    if costs[k] <= 0.0 && self.rho == f64::NEG_INFINITY {
                        return Err(Error::Unbounded("free nest under a Leontief node".into()));
                    }
                    node.demand(p, spend, out)?;
                }
            }
        }
        Ok(())
    }

    /// Accumulates `factor * du/dx_j` into `out`.
    pub(crate) fn gradient(&self, x: &[f64], factor: f64, out: &mut [f64]) -> Result<()> {
        let a = self.weights();
        let v = self.child_values(x);
        let u = ces::aggregate(self.rho, &a, &v);
        let d = ces::partials(self.rho, &a, &v, u)?;
        for (k, c) in self.children.iter().enumerate() {
            if a[k] <= 0.0 {
                continue;
            }
            match &c.target {
                NestTarget::Good { good } => out[*good] += factor * d[k],
                NestTarget::Node { node } => node.gradient(x, factor * d[k], out)?,
            }
        }
        Ok(())
    }

    /// `x_j * du/dx_j / u`: the product of node value shares along the path
    /// from the root to each leaf.
    pub(crate) fn path_shares(&self, x: &[f64], factor: f64, out: &mut [f64]) -> Result<()> {
        let a = self.weights();
        let v = self.child_values(x);
        let s = ces::value_shares(self.rho, &a, &v)?;
        for (k, c) in self.children.iter().enumerate() {
            if a[k] <= 0.0 {
                continue;
            }
            match &c.target {
                NestTarget::Good { good } => out[*good] += factor * s[k],
                NestTarget::Node { node } => node.path_shares(x, factor * s[k], out)?,
            }
        }
        Ok(())
    }

    /// The tree computing this tree's unit cost.
    pub(crate) fn dual(&self) -> NestNode {
        let (rho, a) = ces::dual_node(self.rho, &self.weights());
        let children = self
            .children
            .iter()
            .zip(a)
            .map(|(c, w)| NestChild {
                a: w,
                target: match &c.target {
                    NestTarget::Good { good } => NestTarget::Good { good: *good },
                    NestTarget::Node { node } => NestTarget::Node { node: node.dual() },
                },
            })
            .collect();
        NestNode { rho, children }
    }

    /// Minimum over root-to-leaf paths of the summed per-node terms.
    pub(crate) fn min_path_sum(&self, term: &dyn Fn(f64) -> f64) -> f64 {
        let here = term(self.rho);
        let below = self
            .children
            .iter()
            .filter(|c| c.a > 0.0)
            .map(|c| match &c.target {
                NestTarget::Good { .. } => 0.0,
                NestTarget::Node { node } => node.min_path_sum(term),
            })
            .fold(f64::INFINITY, f64::min);
        here + below
    }

    pub(crate) fn mark_support(&self, out: &mut [bool]) {
        for c in self.children.iter().filter(|c| c.a > 0.0) {
            match &c.target {
                NestTarget::Good { good } => {
                    if let Some(slot) = out.get_mut(*good) {
                        *slot = true;
                    }
                }
                NestTarget::Node { node } => node.mark_support(out),
            }
        }
    }

    pub(crate) fn any_node(&self, pred: &dyn Fn(f64) -> bool) -> bool {
        pred(self.rho)
            || self.children.iter().any(|c| match &c.target {
                NestTarget::Good { .. } => false,
                NestTarget::Node { node } => node.any_node(pred),
            })
    }
}

mod rho_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rho: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *rho == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*rho)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Text(t) => Err(de::Error::custom(format!("invalid rho {t:?}"))),
        }
    }
}
