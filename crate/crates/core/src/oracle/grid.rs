use rayon::prelude::*;

/// Result of [`simplex_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub point: Vec<f64>,
    pub value: f64,
    /// Change of the best value at the last step halving.
    pub precision: f64,
    pub evaluations: usize,
}

fn compositions(k: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(k);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 0..=k {
        prefix.push(first);
        compositions(k - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

fn best<F: Fn(&[f64]) -> f64 + Sync + ?Sized>(points: &[Vec<f64>], f: &F) -> (usize, f64) {
    let values: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let v = f(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    let mut arg = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[arg] {
            arg = i;
        }
    }
    (arg, values[arg])
}

/// Maximizes `f` over `{x >= 0, sum x = total}` in dimension `m`: a full
/// lattice with `resolution` divisions, then a local lattice around the
/// incumbent whose step halves whenever the incumbent survives, down to
/// `tol * total`.
pub fn simplex_search<F: Fn(&[f64]) -> f64 + Sync + ?Sized>(
    m: usize,
    total: f64,
    f: &F,
    resolution: usize,
    tol: f64,
) -> GridResult {
    if m == 1 {
        let x = vec![total];
        let value = f(&x);
        return GridResult { point: x, value, precision: 0.0, evaluations: 1 };
    }
    let mut k = resolution.max(1);
    // keep the initial lattice below ~2e5 points
    loop {
        let count = (1..m).fold(1.0f64, |c, i| c * (k + i) as f64 / i as f64);
        if count <= 2e5 || k == 1 {
            break;
        }
        k /= 2;
    }
    let mut lattice = Vec::new();
    compositions(k, m, &mut Vec::new(), &mut lattice);
    let points: Vec<Vec<f64>> =
        lattice.iter().map(|c| c.iter().map(|&v| total * v as f64 / k as f64).collect()).collect();
    let (arg, mut value) = best(&points, f);
    let mut center = points[arg].clone();
    let mut evaluations = points.len();

    let radius: i64 = if m <= 3 { 3 } else { 1 };
    let width = (2 * radius + 1) as usize;
    let offsets: Vec<Vec<i64>> = (0..width.pow(m as u32 - 1))
        .map(|mut code| {
            (0..m - 1)
                .map(|_| {
                    let d = (code % width) as i64 - radius;
                    code /= width;
                    d
                })
                .collect()
        })
        .collect();
    let mut h = total / k as f64;
    let mut precision = f64::INFINITY;
    let mut last_value = value;
    let mut rounds = 0;
    while h > tol * total && rounds < 20_000 {
        rounds += 1;
        let trial: Vec<Vec<f64>> = offsets
            .iter()
            .filter_map(|d| {
                let mut x = center.clone();
                let mut shift = 0.0;
                for (t, &dj) in d.iter().enumerate() {
                    x[t] += h * dj as f64;
                    shift += h * dj as f64;
                }
                x[m - 1] -= shift;
                if x.iter().any(|v| *v < -1e-15 * total) {
                    return None;
                }
                x.iter_mut().for_each(|v| *v = v.max(0.0));
                Some(x)
            })
            .collect();
        evaluations += trial.len();
        let (arg, v) = best(&trial, f);
        if v > value {
            value = v;
            center = trial[arg].clone();
        } else {
            h *= 0.5;
            precision = (value - last_value).abs();
            last_value = value;
        }
    }
    GridResult { point: center, value, precision, evaluations }
}
