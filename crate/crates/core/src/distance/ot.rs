//! Network simplex for dense discrete optimal transport.
//!
//! Sources `0..m`, sinks `m..m+n` and one artificial root `m+n`. The start
//! basis routes every unit through the root over big-M arcs; the leaving
//! arc rule keeps the spanning tree strongly feasible (every zero-flow tree
//! arc points away from the root), which rules out cycling on the
//! degenerate pivots that uniform marginals produce.

use crate::error::{Error, Result};

/// Solution of a transport problem.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    /// `sum_ij P_ij C_ij`.
    pub cost: f64,
    /// Nonzero entries of the optimal coupling, `(i, j, P_ij)`.
    pub plan: Vec<(usize, usize, f64)>,
    /// Dual potentials with `u_i + v_j <= C_ij`, tight on the support.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

struct Tree {
    m: usize,
    n: usize,
    root: usize,
    tail: Vec<usize>,
    head: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    queue: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn rebuild(&mut self) {
        let root = self.root;
        self.parent[root] = NONE;
        self.parent_arc[root] = NONE;
        self.depth[root] = 0;
        self.pot[root] = 0.0;
        self.queue.clear();
        self.queue.push(root);
        let mut qi = 0;
        while qi < self.queue.len() {
            let x = self.queue[qi];
            qi += 1;
            for k in 0..self.adj[x].len() {
                let arc = self.adj[x][k];
                if arc == self.parent_arc[x] {
                    continue;
                }
                let (t, h) = (self.tail[arc], self.head[arc]);
                let y = if t == x { h } else { t };
                self.parent[y] = x;
                self.parent_arc[y] = arc;
                self.depth[y] = self.depth[x] + 1;
                // reduced cost c + pot[tail] - pot[head] vanishes on tree arcs
                self.pot[y] = if t == x { self.pot[x] + self.cost[arc] } else { self.pot[x] - self.cost[arc] };
                self.queue.push(y);
            }
        }
    }

    /// Re-derives parent, depth and potential for the subtree reached from
    /// `top`, now attached to `parent` through `arc`.
    fn hang(&mut self, top: usize, parent: usize, arc: usize) {
        self.parent[top] = parent;
        self.parent_arc[top] = arc;
        self.depth[top] = self.depth[parent] + 1;
        self.pot[top] = if self.tail[arc] == parent {
            self.pot[parent] + self.cost[arc]
        } else {
            self.pot[parent] - self.cost[arc]
        };
        self.queue.clear();
        self.queue.push(top);
        let mut qi = 0;
        while qi < self.queue.len() {
            let x = self.queue[qi];
            qi += 1;
            for k in 0..self.adj[x].len() {
                let arc = self.adj[x][k];
                if arc == self.parent_arc[x] {
                    continue;
                }
                let (t, h) = (self.tail[arc], self.head[arc]);
                let y = if t == x { h } else { t };
                self.parent[y] = x;
                self.parent_arc[y] = arc;
                self.depth[y] = self.depth[x] + 1;
                self.pot[y] = if t == x { self.pot[x] + self.cost[arc] } else { self.pot[x] - self.cost[arc] };
                self.queue.push(y);
            }
        }
    }

    fn remove_adj(&mut self, node: usize, arc: usize) {
        let list = &mut self.adj[node];
        let pos = list.iter().position(|&a| a == arc).expect("tree arc present in adjacency");
        list.swap_remove(pos);
    }

    /// Pivots `entering` into the basis. Returns false if the cycle has no
    /// blocking arc.
    fn pivot(&mut self, entering: usize) -> bool {
        let (u, v) = (self.tail[entering], self.head[entering]);
        // join node
        let (mut a, mut b) = (u, v);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        // u side: traversed join -> u, backward arcs point child -> parent.
        let mut du = f64::INFINITY;
        let mut leave_u = NONE;
        let mut x = u;
        while x != join {
            let arc = self.parent_arc[x];
            if self.tail[arc] == x && self.flow[arc] < du {
                du = self.flow[arc];
                leave_u = arc;
            }
            x = self.parent[x];
        }
        // v side: traversed v -> join, backward arcs point parent -> child.
        let mut dv = f64::INFINITY;
        let mut leave_v = NONE;
        let mut x = v;
        while x != join {
            let arc = self.parent_arc[x];
            if self.tail[arc] != x && self.flow[arc] <= dv {
                dv = self.flow[arc];
                leave_v = arc;
            }
            x = self.parent[x];
        }
        let (delta, leaving) = if leave_v != NONE && dv <= du { (dv, leave_v) } else { (du, leave_u) };
        if leaving == NONE {
            return false;
        }

        if delta > 0.0 {
            let mut x = u;
            while x != join {
                let arc = self.parent_arc[x];
                if self.tail[arc] == x {
                    self.flow[arc] -= delta;
                } else {
                    self.flow[arc] += delta;
                }
                x = self.parent[x];
            }
            let mut x = v;
            while x != join {
                let arc = self.parent_arc[x];
                if self.tail[arc] == x {
                    self.flow[arc] += delta;
                } else {
                    self.flow[arc] -= delta;
                }
                x = self.parent[x];
            }
        }
        self.flow[entering] = delta;
        self.flow[leaving] = 0.0;

        // the subtree hanging below the leaving arc is re-rooted at the
        // entering arc's endpoint inside it
        let leaving_on_u_side = leaving == leave_u && !(leave_v != NONE && dv <= du);
        let (inner_end, outer_end) = if leaving_on_u_side { (u, v) } else { (v, u) };
        self.in_tree[leaving] = false;
        let (lt, lh) = (self.tail[leaving], self.head[leaving]);
        self.remove_adj(lt, leaving);
        self.remove_adj(lh, leaving);
        self.in_tree[entering] = true;
        self.adj[u].push(entering);
        self.adj[v].push(entering);
        self.hang(inner_end, outer_end, entering);
        true
    }
}

/// Network simplex state that can be re-solved after the costs change.
/// The marginals are fixed, so the previous optimal tree stays primal
/// feasible and only a few pivots are usually needed.
pub struct NetworkSimplex {
    tree: Tree,
    a: Vec<f64>,
    next: usize,
}

impl NetworkSimplex {
    /// Builds the artificial start basis for marginals `a`, `b`.
    pub fn new(a: &[f64], b: &[f64], cost: &[f64]) -> Result<Self> {
        let (m, n) = (a.len(), b.len());
        validate(a, b, cost)?;
        let real = m * n;
        let nodes = m + n + 1;
        let root = m + n;
        let big = big_m(cost, m, n);

        let n_arcs = real + m + n;
        let mut tail = Vec::with_capacity(n_arcs);
        let mut head = Vec::with_capacity(n_arcs);
        for i in 0..m {
            for _ in 0..n {
                tail.push(i);
            }
            head.extend(m..m + n);
        }
        let mut arc_cost = cost.to_vec();
        let mut flow = vec![0.0; n_arcs];
        let mut in_tree = vec![false; n_arcs];
        let mut adj = vec![Vec::new(); nodes];
        for (i, &ai) in a.iter().enumerate() {
            // zero-supply sources hang from the root so that every
            // zero-flow tree arc points away from it
            if ai > 0.0 {
                tail.push(i);
                head.push(root);
            } else {
                tail.push(root);
                head.push(i);
            }
            flow[real + i] = ai;
            arc_cost.push(big);
        }
        for (j, &bj) in b.iter().enumerate() {
            tail.push(root);
            head.push(m + j);
            flow[real + m + j] = bj;
            arc_cost.push(big);
        }
        for arc in real..n_arcs {
            in_tree[arc] = true;
            adj[tail[arc]].push(arc);
            adj[head[arc]].push(arc);
        }
        let mut tree = Tree {
            m,
            n,
            root,
            tail,
            head,
            cost: arc_cost,
            flow,
            in_tree,
            adj,
            parent: vec![NONE; nodes],
            parent_arc: vec![NONE; nodes],
            depth: vec![0; nodes],
            pot: vec![0.0; nodes],
            queue: Vec::with_capacity(nodes),
        };
        tree.rebuild();
        Ok(Self { tree, a: a.to_vec(), next: 0 })
    }

    /// Replaces the cost matrix, keeping the current basis.
    pub fn set_costs(&mut self, cost: &[f64]) -> Result<()> {
        let (m, n) = (self.tree.m, self.tree.n);
        if cost.len() != m * n || cost.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Transport("replacement costs must be finite, nonnegative and m x n".into()));
        }
        let real = m * n;
        let big = big_m(cost, m, n).max(self.tree.cost[real]);
        self.tree.cost[..real].copy_from_slice(cost);
        self.tree.cost[real..].iter_mut().for_each(|c| *c = big);
        self.tree.rebuild();
        Ok(())
    }

    /// Pivots to optimality and returns the solution.
    pub fn solve(&mut self) -> Result<TransportSolution> {
        let (m, n) = (self.tree.m, self.tree.n);
        let tree = &mut self.tree;
        let real = m * n;
        let max_cost = tree.cost[..real].iter().copied().fold(0.0, f64::max);
        let eps = 1e-12 * (max_cost + 1.0);
        let block = ((real as f64).sqrt().ceil() as usize).max(10).min(real.max(1));
        let max_pivots = 200 * (m + n) * ((m + n) as f64).log2().ceil().max(1.0) as usize + 10_000;
        let mut next = self.next;
        let mut pivots = 0usize;
        loop {
            // block pricing over real arcs
            let mut best = NONE;
            let mut best_rc = -eps;
            let mut scanned = 0usize;
            while scanned < real {
                let end = (scanned + block).min(real);
                let (mut i, mut j) = (next / n, next % n);
                for _ in scanned..end {
                    let arc = next;
                    if !tree.in_tree[arc] {
                        let rc = tree.cost[arc] + tree.pot[i] - tree.pot[m + j];
                        if rc < best_rc {
                            best_rc = rc;
                            best = arc;
                        }
                    }
                    next += 1;
                    j += 1;
                    if j == n {
                        j = 0;
                        i += 1;
                    }
                    if next == real {
                        next = 0;
                        i = 0;
                        j = 0;
                    }
                }
                scanned = end;
                if best != NONE {
                    break;
                }
            }
            if best == NONE {
                break;
            }
            if !tree.pivot(best) {
                return Err(Error::Transport("unbounded pivot cycle".into()));
            }
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Transport(format!("no convergence after {pivots} pivots")));
            }
        }
        self.next = next;

        let total: f64 = self.a.iter().sum();
        let artificial: f64 = tree.flow[real..].iter().sum();
        if artificial > 1e-9 * total.max(1e-300) {
            return Err(Error::Transport(format!("artificial arcs carry flow {artificial}")));
        }
        let mut plan = Vec::new();
        let mut value = 0.0;
        for arc in 0..real {
            let f = tree.flow[arc];
            if tree.in_tree[arc] && f > 0.0 {
                plan.push((arc / n, arc % n, f));
                value += f * tree.cost[arc];
            }
        }
        let u = (0..m).map(|i| -tree.pot[i]).collect();
        let v = (0..n).map(|j| tree.pot[m + j]).collect();
        Ok(TransportSolution { cost: value, plan, u, v, pivots })
    }
}

fn big_m(cost: &[f64], m: usize, n: usize) -> f64 {
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    (max_cost + 1.0) * (m + n) as f64
}

/// Solves `min <P, C>` over couplings with marginals `a` (rows) and `b`
/// (columns). `cost` is row-major `m x n` and must be finite and
/// nonnegative; `a` and `b` must have equal totals.
pub fn network_simplex(a: &[f64], b: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    NetworkSimplex::new(a, b, cost)?.solve()
}

pub(crate) fn validate(a: &[f64], b: &[f64], cost: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Transport("empty marginal".into()));
    }
    if cost.len() != a.len() * b.len() {
        return Err(Error::Transport(format!(
            "cost matrix has {} entries for a {}x{} problem",
            cost.len(),
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Transport("marginals must be finite and nonnegative".into()));
    }
    if cost.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Transport("costs must be finite and nonnegative".into()));
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1e-300) {
        return Err(Error::Transport(format!("marginal totals differ: {sa} vs {sb}")));
    }
    Ok(())
}
