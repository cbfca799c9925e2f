//! Linear markets: equilibria supported on a forest of best-ratio edges.

use crate::Matrix;

/// Goods: agents buy the items with the highest `c_ij / p_j`. Chores: agents
/// take the items with the lowest `c_ij / p_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    #[cfg_attr(not(feature = "oracle"), allow(dead_code))]
    Goods,
    Chores,
}

fn find(parent: &mut [usize], v: usize) -> usize {
    let mut r = v;
    while parent[r] != r {
        r = parent[r];
    }
    let mut v = v;
    while parent[v] != r {
        let next = parent[v];
        parent[v] = r;
        v = next;
    }
    r
}

/// Equilibrium supported on a forest of agent-item edges. Prices satisfy
/// `p_j = c_ij theta_i` on every edge and each component's items sum to its
/// agents' budgets; spending is routed through the forest by leaf
/// elimination. Returns `None` unless every flow is nonnegative and every
/// edge is a best ratio for its agent. Vertices `0..n` are agents and
/// `n..n+m` items.
pub(crate) fn forest_equilibrium(
    c: &Matrix,
    budgets: &[f64],
    chosen: &[(usize, usize)],
    side: Side,
) -> Option<(Vec<f64>, Matrix)> {
    let (n, m) = (c.len(), c[0].len());
    let mut parent: Vec<usize> = (0..n + m).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + m];
    let mut forest = Vec::new();
    for &(i, j) in chosen {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a != b {
            parent[a] = b;
            adj[i].push(n + j);
            adj[n + j].push(i);
            forest.push((i, j));
        }
    }
    if adj.iter().any(|a| a.is_empty()) {
        return None;
    }

    // theta_i for agents, p_j for chores, propagated from one root per component
    let mut val = vec![f64::NAN; n + m];
    let mut comp = vec![usize::MAX; n + m];
    let mut components = Vec::new();
    for root in 0..n {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![root];
        comp[root] = id;
        val[root] = 1.0;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            k += 1;
            for &u in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = id;
                    val[u] = if v < n { c[v][u - n] * val[v] } else { val[v] / c[u][v - n] };
                    members.push(u);
                }
            }
        }
        components.push(members);
    }
    if comp.contains(&usize::MAX) {
        return None;
    }
    for members in &components {
        let earn: f64 = members.iter().filter(|&&v| v < n).map(|&v| budgets[v]).sum();
        let paid: f64 = members.iter().filter(|&&v| v >= n).map(|&v| val[v]).sum();
        if !(paid > 0.0) {
            return None;
        }
        let s = earn / paid;
        for &v in members {
            val[v] *= s;
        }
    }
    let p: Vec<f64> = val[n..].to_vec();
    let theta = &val[..n];

    // leaf elimination for the spending on each forest edge
    let mut rem: Vec<f64> = budgets.iter().cloned().chain(p.iter().cloned()).collect();
    let mut deg: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut alive = vec![vec![false; m]; n];
    for &(i, j) in &forest {
        alive[i][j] = true;
    }
    let mut spend = vec![vec![0.0; m]; n];
    let mut stack: Vec<usize> = (0..n + m).filter(|&v| deg[v] == 1).collect();
    while let Some(v) = stack.pop() {
        if deg[v] != 1 {
            continue;
        }
        let u = *adj[v].iter().find(|&&u| {
            let (i, j) = if v < n { (v, u - n) } else { (u, v - n) };
            alive[i][j]
        })?;
        let (i, j) = if v < n { (v, u - n) } else { (u, v - n) };
        let s = rem[v];
        spend[i][j] = s;
        alive[i][j] = false;
        rem[v] = 0.0;
        rem[u] -= s;
        deg[v] -= 1;
        deg[u] -= 1;
        if deg[u] == 1 {
            stack.push(u);
        }
    }
    let total: f64 = budgets.iter().sum();
    if rem.iter().any(|r| r.abs() > 1e-9 * total) {
        return None;
    }
    let mut x = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            if spend[i][j] < -1e-12 * total {
                return None;
            }
            x[i][j] = spend[i][j].max(0.0) / p[j];
            let edge_price = c[i][j] * theta[i];
            let off = match side {
                Side::Goods => edge_price > p[j] * (1.0 + 1e-10),
                Side::Chores => edge_price < p[j] * (1.0 - 1e-10),
            };
            if off {
                return None;
            }
        }
    }
    Some((p, x))
}
