//! Exact solver for the balanced transportation problem
//!   min Σ f_ij c_ij  s.t.  Σ_j f_ij = a_i, Σ_i f_ij = b_j, f ≥ 0
//! by successive shortest augmenting paths with node potentials.
//!
//! Every augmentation runs a dense multi-source Dijkstra under reduced
//! costs (all nonnegative by the potential invariant), augments along the
//! cheapest residual path to any undersupplied sink, and lifts the
//! potentials. With consistent potentials the final flow satisfies
//! complementary slackness, hence optimality, up to float rounding.

/// Residual mass below this is treated as exhausted; with unit total mass
/// the induced cost error is far below the 1e-9 oracle tolerance.
const MASS_EPS: f64 = 1e-13;

/// Dense row-major cost matrix between every supply and demand site.
pub struct CostMatrix {
    pub n_supply: usize,
    pub n_demand: usize,
    pub costs: Vec<f64>,
}

impl CostMatrix {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n_demand + j]
    }
}

/// Optimal transport cost between `supply` and `demand` (equal totals,
/// nonnegative entries, nonnegative finite costs). Entries of zero mass
/// are allowed and simply never ship anything.
pub fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &CostMatrix) -> f64 {
    assert_eq!(supply.len(), cost.n_supply);
    assert_eq!(demand.len(), cost.n_demand);
    let n = supply.len();
    let m = demand.len();
    let mut res_supply = supply.to_vec();
    let mut res_demand = demand.to_vec();
    let mut flow = vec![0.0f64; n * m];
    // Node potentials; reduced cost of i→j is c_ij + pot_s[i] − pot_d[j].
    let mut pot_s = vec![0.0f64; n];
    let mut pot_d = vec![0.0f64; m];

    let mut dist_s = vec![0.0f64; n];
    let mut dist_d = vec![0.0f64; m];
    let mut done_s = vec![false; n];
    let mut done_d = vec![false; m];
    // Parent of a sink is the source that relaxed it; parent of a source
    // is the sink whose backward arc relaxed it.
    let mut par_d = vec![usize::MAX; m];
    let mut par_s = vec![usize::MAX; n];

    loop {
        let remaining: f64 = res_supply.iter().sum();
        let max_demand = res_demand.iter().cloned().fold(0.0, f64::max);
        if remaining <= MASS_EPS || max_demand <= MASS_EPS {
            break;
        }

        // Multi-source Dijkstra from every undersupplied source.
        for i in 0..n {
            dist_s[i] = if res_supply[i] > MASS_EPS { 0.0 } else { f64::INFINITY };
            done_s[i] = false;
            par_s[i] = usize::MAX;
        }
        for j in 0..m {
            dist_d[j] = f64::INFINITY;
            done_d[j] = false;
            par_d[j] = usize::MAX;
        }

        let mut target = usize::MAX;
        loop {
            // Settle the unvisited node with the smallest tentative label.
            let mut best = f64::INFINITY;
            let mut pick = usize::MAX; // sources are 0..n, sinks n..n+m
            for i in 0..n {
                if !done_s[i] && dist_s[i] < best {
                    best = dist_s[i];
                    pick = i;
                }
            }
            for j in 0..m {
                if !done_d[j] && dist_d[j] < best {
                    best = dist_d[j];
                    pick = n + j;
                }
            }
            if pick == usize::MAX {
                break; // nothing reachable is left
            }
            if pick >= n {
                let j = pick - n;
                done_d[j] = true;
                if res_demand[j] > MASS_EPS {
                    target = j;
                    break;
                }
                // Relax backward arcs j→i for flow-carrying pairs.
                for i in 0..n {
                    if done_s[i] || flow[i * m + j] <= 0.0 {
                        continue;
                    }
                    let rc = (pot_d[j] - pot_s[i] - cost.at(i, j)).max(0.0);
                    let nd = dist_d[j] + rc;
                    if nd < dist_s[i] {
                        dist_s[i] = nd;
                        par_s[i] = j;
                    }
                }
            } else {
                let i = pick;
                done_s[i] = true;
                for j in 0..m {
                    if done_d[j] {
                        continue;
                    }
                    let rc = (cost.at(i, j) + pot_s[i] - pot_d[j]).max(0.0);
                    let nd = dist_s[i] + rc;
                    if nd < dist_d[j] {
                        dist_d[j] = nd;
                        par_d[j] = i;
                    }
                }
            }
        }
        if target == usize::MAX {
            // Only numerical dust is left unmatched.
            break;
        }
        let reach = dist_d[target];

        // Lift potentials by the settled distances, capped at the target's,
        // so every tight path arc ends at reduced cost zero: with
        // rc(i→j) = c_ij + pot_s[i] − pot_d[j] and d_j = d_i + rc, adding
        // the distances gives rc_new = rc + d_i − d_j = 0.
        for i in 0..n {
            pot_s[i] += dist_s[i].min(reach);
        }
        for j in 0..m {
            pot_d[j] += dist_d[j].min(reach);
        }

        // Walk the path backwards to find the bottleneck, then augment.
        let mut delta = res_demand[target];
        let mut j = target;
        loop {
            let i = par_d[j];
            delta = delta.min(if par_s[i] == usize::MAX {
                res_supply[i]
            } else {
                f64::INFINITY
            });
            if par_s[i] == usize::MAX {
                break;
            }
            let back_j = par_s[i];
            delta = delta.min(flow[i * m + back_j]);
            j = back_j;
        }
        let mut j = target;
        loop {
            let i = par_d[j];
            flow[i * m + j] += delta;
            if par_s[i] == usize::MAX {
                res_supply[i] -= delta;
                break;
            }
            let back_j = par_s[i];
            flow[i * m + back_j] -= delta;
            j = back_j;
        }
        res_demand[target] -= delta;
        debug_assert!(delta > 0.0);
    }

    flow.iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(idx, f)| f * cost.costs[idx])
        .sum()
}
