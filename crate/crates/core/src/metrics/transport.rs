//! Exact balanced transportation problems solved by the primal network
//! simplex method.
//!
//! Sources and sinks form a complete bipartite graph with uncapacitated arcs.
//! An extra root node joined to every node by an artificial arc gives the
//! initial strongly feasible spanning tree; leaving arcs are chosen with the
//! strongly feasible tie rule so degenerate pivots cannot cycle. Entering
//! arcs come from block search pricing.

const NONE: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    /// Nonzero shipments `(source, sink, amount)`.
    pub flows: Vec<(usize, usize, f64)>,
}

struct Simplex<'a> {
    n_src: usize,
    n_dst: usize,
    real_arcs: usize,
    root: usize,
    costs: &'a [f64],
    art_cost: f64,
    // artificial arc endpoints; real arc endpoints derive from the index
    art_up: Vec<bool>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// +1 when `pred[u]` points from `u` to its parent, -1 otherwise.
    pred_dir: Vec<i8>,
    depth: Vec<usize>,
    tree_adj: Vec<Vec<usize>>,
    next_arc: usize,
    block_size: usize,
}

impl Simplex<'_> {
    fn endpoints(&self, arc: usize) -> (usize, usize) {
        if arc < self.real_arcs {
            (arc / self.n_dst, self.n_src + arc % self.n_dst)
        } else {
            let u = arc - self.real_arcs;
            if self.art_up[u] {
                (u, self.root)
            } else {
                (self.root, u)
            }
        }
    }

    fn cost(&self, arc: usize) -> f64 {
        if arc < self.real_arcs {
            self.costs[arc]
        } else if self.art_up[arc - self.real_arcs] {
            0.0
        } else {
            self.art_cost
        }
    }

    fn reduced_cost(&self, arc: usize) -> f64 {
        let (s, t) = self.endpoints(arc);
        self.cost(arc) + self.pi[s] - self.pi[t]
    }

    fn tolerance(&self, arc: usize) -> f64 {
        let (s, t) = self.endpoints(arc);
        1e-12 * (1.0 + self.cost(arc).abs() + self.pi[s].abs() + self.pi[t].abs())
    }

    fn total_arcs(&self) -> usize {
        self.real_arcs + self.root
    }

    /// Block search: the most negative reduced cost within the first block
    /// that contains any candidate.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.total_arcs();
        let mut best = None;
        let mut best_rc = 0.0;
        let mut scanned_in_block = 0;
        let mut e = self.next_arc;
        for _ in 0..total {
            if !self.in_tree[e] {
                let rc = self.reduced_cost(e);
                if rc < best_rc && rc < -self.tolerance(e) {
                    best_rc = rc;
                    best = Some(e);
                }
            }
            e += 1;
            if e == total {
                e = 0;
            }
            scanned_in_block += 1;
            if scanned_in_block == self.block_size {
                if best.is_some() {
                    break;
                }
                scanned_in_block = 0;
            }
        }
        self.next_arc = e;
        best
    }

    fn rebuild_tree(&mut self) {
        let mut stack = vec![self.root];
        self.parent[self.root] = NONE;
        self.pred[self.root] = NONE;
        self.depth[self.root] = 0;
        self.pi[self.root] = 0.0;
        while let Some(u) = stack.pop() {
            for i in 0..self.tree_adj[u].len() {
                let arc = self.tree_adj[u][i];
                if arc == self.pred[u] {
                    continue;
                }
                let (s, t) = self.endpoints(arc);
                let v = if s == u { t } else { s };
                self.parent[v] = u;
                self.pred[v] = arc;
                self.depth[v] = self.depth[u] + 1;
                let c = self.cost(arc);
                if s == v {
                    self.pred_dir[v] = 1;
                    self.pi[v] = self.pi[u] - c;
                } else {
                    self.pred_dir[v] = -1;
                    self.pi[v] = self.pi[u] + c;
                }
                stack.push(v);
            }
        }
    }

    fn pivot(&mut self, in_arc: usize) {
        let (first, second) = self.endpoints(in_arc);

        let (mut a, mut b) = (first, second);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut u = first;
        while u != join {
            if self.pred_dir[u] == 1 && self.flow[self.pred[u]] < delta {
                delta = self.flow[self.pred[u]];
                u_out = u;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if self.pred_dir[u] == -1 && self.flow[self.pred[u]] <= delta {
                delta = self.flow[self.pred[u]];
                u_out = u;
            }
            u = self.parent[u];
        }
        assert!(u_out != NONE, "unbounded transport problem");

        if delta > 0.0 {
            self.flow[in_arc] += delta;
            let mut u = first;
            while u != join {
                let arc = self.pred[u];
                self.flow[arc] -= f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let arc = self.pred[u];
                self.flow[arc] += f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
        }

        let out_arc = self.pred[u_out];
        self.flow[out_arc] = 0.0;
        self.in_tree[out_arc] = false;
        self.in_tree[in_arc] = true;
        let (s, t) = self.endpoints(out_arc);
        for node in [s, t] {
            let pos = self.tree_adj[node]
                .iter()
                .position(|&x| x == out_arc)
                .expect("leaving arc is a tree arc");
            self.tree_adj[node].swap_remove(pos);
        }
        self.tree_adj[first].push(in_arc);
        self.tree_adj[second].push(in_arc);
        self.rebuild_tree();
    }
}

/// Minimum-cost shipment of `supply` to `demand` where `costs[i * m + j]` is
/// the unit cost from source `i` to sink `j` (`m = demand.len()`).
///
/// Masses must be nonnegative with equal totals up to rounding; any rounding
/// imbalance is absorbed by the artificial root and is not charged.
pub fn solve_transport(supply: &[f64], demand: &[f64], costs: &[f64]) -> TransportPlan {
    let (n_src, n_dst) = (supply.len(), demand.len());
    assert_eq!(costs.len(), n_src * n_dst, "cost matrix shape");
    assert!(
        supply.iter().chain(demand).all(|&v| v >= 0.0 && v.is_finite()),
        "masses must be finite and nonnegative"
    );
    if n_src == 0 || n_dst == 0 {
        return TransportPlan {
            cost: 0.0,
            flows: Vec::new(),
        };
    }

    let nodes = n_src + n_dst;
    let real_arcs = n_src * n_dst;
    let max_cost = costs.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    let art_cost = (max_cost + 1.0) * nodes as f64;

    let node_supply = |u: usize| {
        if u < n_src {
            supply[u]
        } else {
            -demand[u - n_src]
        }
    };

    let mut s = Simplex {
        n_src,
        n_dst,
        real_arcs,
        root: nodes,
        costs,
        art_cost,
        art_up: (0..nodes).map(|u| node_supply(u) >= 0.0).collect(),
        flow: vec![0.0; real_arcs + nodes],
        in_tree: vec![false; real_arcs + nodes],
        pi: vec![0.0; nodes + 1],
        parent: vec![NONE; nodes + 1],
        pred: vec![NONE; nodes + 1],
        pred_dir: vec![0; nodes + 1],
        depth: vec![0; nodes + 1],
        tree_adj: vec![Vec::new(); nodes + 1],
        next_arc: 0,
        block_size: ((real_arcs + nodes) as f64).sqrt().ceil().max(10.0) as usize,
    };
    for u in 0..nodes {
        let arc = real_arcs + u;
        s.flow[arc] = node_supply(u).abs();
        s.in_tree[arc] = true;
        s.tree_adj[u].push(arc);
        s.tree_adj[nodes].push(arc);
    }
    s.rebuild_tree();

    while let Some(arc) = s.find_entering() {
        s.pivot(arc);
    }

    let mut cost = 0.0;
    let mut flows = Vec::new();
    for arc in 0..real_arcs {
        let f = s.flow[arc];
        if f > 0.0 {
            cost += f * costs[arc];
            flows.push((arc / n_dst, arc % n_dst, f));
        }
    }
    TransportPlan { cost, flows }
}
