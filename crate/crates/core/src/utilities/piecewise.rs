//! Concave piecewise-affine utilities `u(x) = min_k <c_k, x> + d_k`.
//!
//! Demand and indirect utility solve a small LP by enumerating vertices of
//! `{(x, t) : t <= <c_k, x> + d_k, <p, x> <= B, x >= 0}`; instances are tiny.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub c: Vec<f64>,
    #[serde(default)]
    pub d: f64,
}

pub(crate) fn validate(pieces: &[AffinePiece]) -> Result<usize> {
    let first = pieces.first().ok_or_else(|| Error::InvalidFamily("min_affine: no pieces".into()))?;
    let m = first.c.len();
    for pc in pieces {
        if pc.c.len() != m {
            return Err(Error::InvalidFamily("min_affine: ragged pieces".into()));
        }
        if pc.c.iter().any(|v| !v.is_finite() || *v < 0.0) || !pc.d.is_finite() {
            return Err(Error::InvalidFamily("min_affine: slopes must be finite and nonnegative".into()));
        }
    }
    Ok(m)
}

pub(crate) fn value(pieces: &[AffinePiece], x: &[f64]) -> f64 {
    pieces.iter().map(|pc| pc.c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + pc.d).fold(f64::INFINITY, f64::min)
}

/// Average slope of the active pieces (a supergradient).
pub(crate) fn supergradient(pieces: &[AffinePiece], x: &[f64]) -> Vec<f64> {
    let vals: Vec<f64> = pieces.iter().map(|pc| pc.c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + pc.d).collect();
    let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    let active: Vec<usize> = (0..pieces.len()).filter(|&k| vals[k] <= best + tol).collect();
    let mut g = vec![0.0; x.len()];
    for &k in &active {
        for (gj, cj) in g.iter_mut().zip(&pieces[k].c) {
            *gj += cj / active.len() as f64;
        }
    }
    g
}

/// Utility is unbounded iff every piece rises along some free good.
fn unbounded(pieces: &[AffinePiece], p: &[f64]) -> bool {
    pieces.iter().all(|pc| pc.c.iter().zip(p).any(|(c, pj)| *c > 0.0 && *pj <= 0.0))
}

/// Best vertex `(value, x)`, or `None` if utility is unbounded.
pub(crate) fn solve(pieces: &[AffinePiece], p: &[f64], budget: f64) -> Option<(f64, Vec<f64>)> {
    if unbounded(pieces, p) {
        return None;
    }
    let m = p.len();
    let k = pieces.len();
    let rows = k + 1 + m;
    let dim = m + 1;
    // row r of the constraint system as (coefficients on (x, t), rhs)
    let row = |r: usize| -> (Vec<f64>, f64) {
        let mut coef = vec![0.0; dim];
        if r < k {
            for (c, v) in coef.iter_mut().zip(&pieces[r].c) {
                *c = -v;
            }
            coef[m] = 1.0;
            (coef, pieces[r].d)
        } else if r == k {
            coef[..m].copy_from_slice(p);
            (coef, budget)
        } else {
            coef[r - k - 1] = 1.0;
            (coef, 0.0)
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick = vec![0usize; dim];
    for (i, v) in pick.iter_mut().enumerate() {
        *v = i;
    }
    loop {
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        for (ri, &r) in pick.iter().enumerate() {
            let (coef, rhs) = row(r);
            for c in 0..dim {
                a[(ri, c)] = coef[c];
            }
            b[ri] = rhs;
        }
        if let Some(sol) = a.lu().solve(&b) {
            let x: Vec<f64> = (0..m).map(|j| sol[j]).collect();
            let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let spend: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
            let feasible = sol.iter().all(|v| v.is_finite())
                && x.iter().all(|&v| v >= -1e-12 * scale)
                && spend <= budget + 1e-12 * budget.abs().max(1.0) * scale;
            if feasible {
                let x: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
                let val = value(pieces, &x);
                if best.as_ref().is_none_or(|(bv, _)| val > *bv + 1e-14 * bv.abs().max(1.0)) {
                    best = Some((val, x));
                }
            }
        }
        // next combination of `dim` rows out of `rows`
        let mut i = dim;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < rows - dim + i {
                pick[i] += 1;
                for t in i + 1..dim {
                    pick[t] = pick[t - 1] + 1;
                }
                break;
            }
        }
    }
}
