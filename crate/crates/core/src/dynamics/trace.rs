use std::fmt::Write as _;
use std::io;

use super::DynamicKind;
use crate::market::Equilibrium;
use crate::Matrix;

/// One recorded iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub b: Matrix,
    /// Prices for Fisher rules, the public allocation for Lindahl rules.
    pub vector: Vec<f64>,
    /// Shmyrev objective of `b`, on the dual instance for Fisher rules.
    pub potential: Option<f64>,
    pub kl: Option<f64>,
    /// Largest verifier gap of the induced candidate equilibrium.
    pub residual: f64,
    /// Excess demand (Fisher) or overpayment (Lindahl), where the rule has one.
    pub excess: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsTrace {
    pub rule: DynamicKind,
    pub records: Vec<TraceRecord>,
    /// Steps taken.
    pub iterations: usize,
    pub converged: bool,
    pub gamma: Option<Vec<f64>>,
    pub reference_label: Option<String>,
    pub warnings: Vec<String>,
    /// Candidate equilibrium induced by the last iterate.
    pub equilibrium: Equilibrium,
}

fn field(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(out, "{v:.16e}");
    }
}

impl DynamicsTrace {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("a trace holds at least the initial record")
    }

    pub fn final_residual(&self) -> f64 {
        self.final_record().residual
    }

    /// CSV with columns `iter,potential,kl,residual` and, when `with_b`,
    /// one `b_i_j` column per spending entry. Missing values are empty.
    pub fn to_csv(&self, with_b: bool) -> String {
        let mut out = String::from("iter,potential,kl,residual");
        if with_b {
            let first = &self.records[0].b;
            for (i, row) in first.iter().enumerate() {
                for j in 0..row.len() {
                    let _ = write!(out, ",b_{i}_{j}");
                }
            }
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},", r.iter);
            field(&mut out, r.potential);
            out.push(',');
            field(&mut out, r.kl);
            out.push(',');
            field(&mut out, Some(r.residual));
            if with_b {
                for v in r.b.iter().flatten() {
                    out.push(',');
                    field(&mut out, Some(*v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W, with_b: bool) -> io::Result<()> {
        w.write_all(self.to_csv(with_b).as_bytes())
    }
}
