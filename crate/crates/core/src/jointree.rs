//! Clique-tree construction and exact propagation: clique factors, messages,
//! likelihood, posteriors, and two-pass calibration.
//!
//! Construction is fully deterministic: elimination ties break by ascending
//! variable id, spanning-tree ties by lexicographic cluster pair, so trees
//! and all downstream size statistics are reproducible across runs.

use std::collections::BTreeSet;

use crate::meter;
use crate::model::{evidence_indicator, Evidence, Network, VarId};
use crate::partition::{JointDomain, ScopeWalker};

/// Elimination-ordering heuristic used for triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    /// Eliminate the variable introducing the fewest fill edges.
    #[default]
    MinFill,
    /// Eliminate the variable with the fewest remaining neighbors.
    MinDegree,
}

/// A clique tree (possibly a forest stitched with empty separators): clusters
/// of variables satisfying the running-intersection property, with every
/// CPT's family contained in its assigned cluster.
#[derive(Debug, Clone)]
pub struct CliqueTree {
    clusters: Vec<Vec<VarId>>,
    scopes: Vec<JointDomain>,
    edges: Vec<(usize, usize)>,
    sep_scopes: Vec<JointDomain>,
    neighbors: Vec<Vec<(usize, usize)>>,
    assignment: Vec<usize>,
}

impl CliqueTree {
    pub fn node_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, node: usize) -> &[VarId] {
        &self.clusters[node]
    }

    pub fn scope(&self, node: usize) -> &JointDomain {
        &self.scopes[node]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn separator_scope(&self, edge: usize) -> &JointDomain {
        &self.sep_scopes[edge]
    }

    /// Adjacent `(node, edge index)` pairs of `node`, ascending by node.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.neighbors[node]
    }

    /// The cluster each variable's CPT is assigned to.
    pub fn assignment(&self, var: VarId) -> usize {
        self.assignment[var]
    }

    /// Directed-edge slot: edge index and 0 for low-to-high node direction.
    pub fn direction(&self, edge: usize, from: usize) -> usize {
        usize::from(self.edges[edge].0 != from)
    }

    /// Connected components as sorted node lists.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &(v, _) in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}

/// Moralize, triangulate with the chosen heuristic, extract maximal cliques,
/// and connect them by a maximum-separator-weight spanning tree.
pub fn build_clique_tree(net: &Network, heuristic: Heuristic) -> CliqueTree {
    let n = net.var_count();
    let mut adj: Vec<BTreeSet<VarId>> = vec![BTreeSet::new(); n];
    let connect = |a: VarId, b: VarId, adj: &mut Vec<BTreeSet<VarId>>| {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    };
    for cpt in &net.cpts {
        for &p in &cpt.parents {
            connect(cpt.child, p, &mut adj);
        }
        for (i, &p) in cpt.parents.iter().enumerate() {
            for &q in &cpt.parents[i + 1..] {
                connect(p, q, &mut adj);
            }
        }
    }

    // Triangulate; record the elimination clique of every step.
    let mut remaining: BTreeSet<VarId> = (0..n).collect();
    let mut elim_cliques: Vec<Vec<VarId>> = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let v = *remaining
            .iter()
            .min_by_key(|&&v| {
                let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
                let cost = match heuristic {
                    Heuristic::MinDegree => nbrs.len(),
                    Heuristic::MinFill => {
                        let mut fill = 0;
                        for (i, &a) in nbrs.iter().enumerate() {
                            for &b in &nbrs[i + 1..] {
                                if !adj[a].contains(&b) {
                                    fill += 1;
                                }
                            }
                        }
                        fill
                    }
                };
                (cost, v)
            })
            .expect("remaining is non-empty");
        let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
        let mut clique = nbrs.clone();
        clique.push(v);
        clique.sort_unstable();
        elim_cliques.push(clique);
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                connect(a, b, &mut adj);
            }
        }
        for &u in &nbrs {
            adj[u].remove(&v);
        }
        adj[v].clear();
        remaining.remove(&v);
    }

    // Keep maximal cliques. A later elimination clique never contains an
    // earlier eliminated vertex, so subset relations only point backwards.
    let mut clusters: Vec<Vec<VarId>> = Vec::new();
    for clique in elim_cliques {
        let subset_of_kept = clusters
            .iter()
            .any(|kept| clique.iter().all(|v| kept.binary_search(v).is_ok()));
        if !subset_of_kept {
            clusters.push(clique);
        }
    }

    // Maximum-weight spanning tree over separator sizes; zero-weight edges
    // keep disconnected networks in a single structure.
    let k = clusters.len();
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let weight = clusters[i]
                .iter()
                .filter(|v| clusters[j].binary_search(v).is_ok())
                .count();
            candidates.push((i, j, weight));
        }
    }
    candidates.sort_by(|a, b| {
        b.2.cmp(&a.2)
            .then_with(|| clusters[a.0].cmp(&clusters[b.0]))
            .then_with(|| clusters[a.1].cmp(&clusters[b.1]))
    });
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(k.saturating_sub(1));
    for (i, j, _) in candidates {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            edges.push((i, j));
        }
    }
    edges.sort_unstable();

    let scopes: Vec<JointDomain> = clusters
        .iter()
        .map(|c| {
            JointDomain::new(c.iter().map(|&v| (v, net.domain_size(v))).collect())
                .expect("cluster variables are unique")
        })
        .collect();
    let sep_scopes: Vec<JointDomain> = edges
        .iter()
        .map(|&(l, m)| {
            let sep: Vec<(VarId, usize)> = clusters[l]
                .iter()
                .filter(|v| clusters[m].binary_search(v).is_ok())
                .map(|&v| (v, net.domain_size(v)))
                .collect();
            JointDomain::new(sep).expect("separator variables are unique")
        })
        .collect();
    let mut neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for (e, &(l, m)) in edges.iter().enumerate() {
        neighbors[l].push((m, e));
        neighbors[m].push((l, e));
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    let assignment: Vec<usize> = (0..n)
        .map(|v| {
            let family: Vec<VarId> = {
                let mut f = net.cpts[v].parents.clone();
                f.push(v);
                f
            };
            clusters
                .iter()
                .position(|c| family.iter().all(|u| c.binary_search(u).is_ok()))
                .expect("every family is contained in some cluster")
        })
        .collect();

    let tree = CliqueTree {
        clusters,
        scopes,
        edges,
        sep_scopes,
        neighbors,
        assignment,
    };
    debug_assert!(tree.check_running_intersection());
    tree
}

impl CliqueTree {
    /// Running intersection: the nodes containing any given variable induce a
    /// connected subtree.
    pub fn check_running_intersection(&self) -> bool {
        let max_var = self
            .clusters
            .iter()
            .flat_map(|c| c.iter().copied())
            .max()
            .map(|v| v + 1)
            .unwrap_or(0);
        for var in 0..max_var {
            let holders: Vec<usize> = (0..self.node_count())
                .filter(|&l| self.clusters[l].binary_search(&var).is_ok())
                .collect();
            if holders.is_empty() {
                return false;
            }
            let mut seen = vec![false; self.node_count()];
            let mut stack = vec![holders[0]];
            seen[holders[0]] = true;
            let mut reached = 0;
            while let Some(u) = stack.pop() {
                reached += 1;
                for &(v, _) in &self.neighbors[u] {
                    if !seen[v]
                        && self.clusters[v].binary_search(&var).is_ok()
                        && self.clusters[u].binary_search(&var).is_ok()
                    {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if reached != holders.len() {
                return false;
            }
        }
        true
    }
}

/// A non-negative table over a sorted scope with a separate log-scale
/// accumulator: the represented value is `values[i] * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct Factor {
    pub scope: JointDomain,
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl Factor {
    pub fn ones(scope: JointDomain) -> Factor {
        let size = scope.size();
        Factor {
            scope,
            values: vec![1.0; size],
            log_scale: 0.0,
        }
    }

    /// ln of the sum of represented values.
    pub fn ln_sum(&self) -> f64 {
        let s: f64 = self.values.iter().sum();
        if s == 0.0 {
            f64::NEG_INFINITY
        } else {
            s.ln() + self.log_scale
        }
    }

    /// Represented values with the scale folded back in.
    pub fn expanded_values(&self) -> Vec<f64> {
        let scale = self.log_scale.exp();
        self.values.iter().map(|&v| v * scale).collect()
    }

    /// Rescale so the maximum entry is 1, folding the factor into
    /// `log_scale`; an all-zero table becomes the -inf sentinel.
    pub fn renormalize(&mut self) {
        let max = self.values.iter().cloned().fold(0.0f64, f64::max);
        if max == 0.0 {
            self.log_scale = f64::NEG_INFINITY;
        } else if max != 1.0 {
            for v in &mut self.values {
                *v /= max;
            }
            self.log_scale += max.ln();
        }
    }
}

/// Builds per-node clique factors: the product of the CPTs assigned to each
/// node, times the evidence indicators of evidence variables assigned there.
pub fn attach_evidence(tree: &CliqueTree, net: &Network, ev: &Evidence) -> Vec<Factor> {
    let mut factors: Vec<Factor> = (0..tree.node_count())
        .map(|l| Factor::ones(tree.scope(l).clone()))
        .collect();
    for v in 0..net.var_count() {
        let node = tree.assignment(v);
        let factor = &mut factors[node];
        let cpt = net.cpt(v);
        // strides of the CPT table per clique-scope digit: child innermost,
        // parents row-major in list order
        let mut strides = vec![0usize; factor.scope.len()];
        let pos_of = |var: VarId, scope: &JointDomain| {
            scope
                .vars()
                .iter()
                .position(|&(w, _)| w == var)
                .expect("family variable must be in the assigned cluster")
        };
        let mut stride = net.domain_size(v);
        strides[pos_of(v, &factor.scope)] = 1;
        for &p in cpt.parents.iter().rev() {
            strides[pos_of(p, &factor.scope)] = stride;
            stride *= net.domain_size(p);
        }
        let sizes: Vec<usize> = factor.scope.vars().iter().map(|&(_, s)| s).collect();
        let mut walker = ScopeWalker::with_strides(sizes, vec![strides]);
        let mut idx = 0;
        loop {
            factor.values[idx] *= cpt.table[walker.proj(0)];
            idx += 1;
            if !walker.advance() {
                break;
            }
        }
        if ev.contains(v) {
            let indicator = evidence_indicator(net, v, ev);
            let scope = factor.scope.clone();
            let var_scope =
                JointDomain::new(vec![(v, net.domain_size(v))]).expect("single-variable scope");
            let mut walker = ScopeWalker::new(&scope, &[&var_scope]);
            let mut idx = 0;
            loop {
                factor.values[idx] *= indicator[walker.proj(0)];
                idx += 1;
                if !walker.advance() {
                    break;
                }
            }
        }
    }
    factors
}

/// One message: sums the sending clique's factor times all other incoming
/// messages over the variables outside the separator.
pub fn compute_message(
    tree: &CliqueTree,
    factors: &[Factor],
    from: usize,
    to: usize,
    incoming: &[&Factor],
) -> Factor {
    compute_message_impl(tree, factors, from, to, incoming, true)
}

fn compute_message_impl(
    tree: &CliqueTree,
    factors: &[Factor],
    from: usize,
    to: usize,
    incoming: &[&Factor],
    rescale: bool,
) -> Factor {
    let edge = tree
        .neighbors(from)
        .iter()
        .find(|&&(n, _)| n == to)
        .map(|&(_, e)| e)
        .expect("message endpoints must be adjacent");
    let sep = tree.separator_scope(edge).clone();
    let g = &factors[from];
    let mut out = vec![0.0f64; sep.size()];
    let mut subs: Vec<&JointDomain> = vec![&sep];
    subs.extend(incoming.iter().map(|m| &m.scope));
    let mut walker = ScopeWalker::new(&g.scope, &subs);
    let mut idx = 0;
    loop {
        let mut prod = g.values[idx];
        for (k, inc) in incoming.iter().enumerate() {
            prod *= inc.values[walker.proj(k + 1)];
        }
        out[walker.proj(0)] += prod;
        idx += 1;
        if !walker.advance() {
            break;
        }
    }
    meter::add_mul_adds(g.values.len() as u64 * (incoming.len() as u64 + 1));
    let mut msg = Factor {
        scope: sep,
        values: out,
        log_scale: g.log_scale + incoming.iter().map(|m| m.log_scale).sum::<f64>(),
    };
    if rescale {
        msg.renormalize();
    }
    msg
}

/// Message from `from` toward `to`, recursively collecting the subtree
/// behind `from`.
fn gather_impl(
    tree: &CliqueTree,
    factors: &[Factor],
    from: usize,
    to: usize,
    rescale: bool,
) -> Factor {
    let incoming: Vec<Factor> = tree
        .neighbors(from)
        .iter()
        .filter(|&&(n, _)| n != to)
        .map(|&(n, _)| gather_impl(tree, factors, n, from, rescale))
        .collect();
    let refs: Vec<&Factor> = incoming.iter().collect();
    compute_message_impl(tree, factors, from, to, &refs, rescale)
}

/// ln P(e | B): splits each tree component at its first edge per the
/// separator factorization; single-node components contribute their factor
/// sum. Returns -inf for zero-probability evidence.
pub fn likelihood(tree: &CliqueTree, factors: &[Factor]) -> f64 {
    likelihood_impl(tree, factors, true)
}

/// ln P(e | B) with the max-entry-1 message rescaling switched off.
/// A numerical cross-check hook: apart from underflow protection the
/// rescaling must not change any reported probability.
pub fn likelihood_unscaled(tree: &CliqueTree, factors: &[Factor]) -> f64 {
    likelihood_impl(tree, factors, false)
}

fn likelihood_impl(tree: &CliqueTree, factors: &[Factor], rescale: bool) -> f64 {
    let mut total = 0.0f64;
    for comp in tree.components() {
        let edge = tree
            .edges()
            .iter()
            .enumerate()
            .find(|(_, &(l, _))| comp.binary_search(&l).is_ok());
        let part = match edge {
            Some((_, &(l, m))) => {
                let fl = gather_impl(tree, factors, l, m, rescale);
                let fm = gather_impl(tree, factors, m, l, rescale);
                let mut sum = 0.0;
                for (a, b) in fl.values.iter().zip(&fm.values) {
                    sum += a * b;
                }
                meter::add_mul_adds(2 * fl.values.len() as u64);
                if sum == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    sum.ln() + fl.log_scale + fm.log_scale
                }
            }
            None => {
                let g = &factors[comp[0]];
                meter::add_mul_adds(g.values.len() as u64);
                g.ln_sum()
            }
        };
        total += part;
    }
    total
}

/// All directed messages plus the per-clique posteriors P(e, c_l | B).
#[derive(Debug)]
pub struct Calibration {
    /// Per edge: `[low-to-high, high-to-low]` messages.
    pub messages: Vec<[Factor; 2]>,
    /// Per node: `g_l` times all incoming messages.
    pub posteriors: Vec<Factor>,
}

/// Two passes over each component: inward to the component root, then
/// outward, then per-clique products.
pub fn calibrate(tree: &CliqueTree, factors: &[Factor]) -> Calibration {
    calibrate_at(tree, factors, None)
}

/// Calibration rooted at a chosen node (its component only; every other
/// component roots at its smallest node). The choice must not change any
/// posterior.
pub fn calibrate_at(
    tree: &CliqueTree,
    factors: &[Factor],
    preferred_root: Option<usize>,
) -> Calibration {
    let mut messages: Vec<[Option<Factor>; 2]> =
        (0..tree.edges().len()).map(|_| [None, None]).collect();

    fn inward(
        tree: &CliqueTree,
        factors: &[Factor],
        messages: &mut Vec<[Option<Factor>; 2]>,
        node: usize,
        parent: Option<usize>,
    ) {
        for &(n, _) in tree.neighbors(node) {
            if Some(n) != parent {
                inward(tree, factors, messages, n, Some(node));
            }
        }
        if let Some(parent) = parent {
            let incoming: Vec<&Factor> = tree
                .neighbors(node)
                .iter()
                .filter(|&&(n, _)| n != parent)
                .map(|&(n, e)| {
                    messages[e][tree.direction(e, n)]
                        .as_ref()
                        .expect("inward message computed by recursion")
                })
                .collect();
            let msg = compute_message(tree, factors, node, parent, &incoming);
            let e = tree
                .neighbors(node)
                .iter()
                .find(|&&(n, _)| n == parent)
                .map(|&(_, e)| e)
                .unwrap();
            messages[e][tree.direction(e, node)] = Some(msg);
        }
    }

    fn outward(
        tree: &CliqueTree,
        factors: &[Factor],
        messages: &mut Vec<[Option<Factor>; 2]>,
        node: usize,
        parent: Option<usize>,
    ) {
        for &(child, child_edge) in tree.neighbors(node) {
            if Some(child) == parent {
                continue;
            }
            let incoming: Vec<Factor> = tree
                .neighbors(node)
                .iter()
                .filter(|&&(n, _)| n != child)
                .map(|&(_, e)| {
                    let other = if tree.edges()[e].0 == node {
                        tree.edges()[e].1
                    } else {
                        tree.edges()[e].0
                    };
                    messages[e][tree.direction(e, other)]
                        .clone()
                        .expect("incoming message available")
                })
                .collect();
            let refs: Vec<&Factor> = incoming.iter().collect();
            let msg = compute_message(tree, factors, node, child, &refs);
            messages[child_edge][tree.direction(child_edge, node)] = Some(msg);
            outward(tree, factors, messages, child, Some(node));
        }
    }

    for comp in tree.components() {
        let root = match preferred_root {
            Some(r) if comp.binary_search(&r).is_ok() => r,
            _ => comp[0],
        };
        inward(tree, factors, &mut messages, root, None);
        outward(tree, factors, &mut messages, root, None);
    }

    let posteriors: Vec<Factor> = (0..tree.node_count())
        .map(|l| {
            let incoming: Vec<&Factor> = tree
                .neighbors(l)
                .iter()
                .map(|&(n, e)| {
                    messages[e][tree.direction(e, n)]
                        .as_ref()
                        .expect("calibration computed all messages")
                })
                .collect();
            let g = &factors[l];
            let mut values = g.values.clone();
            let subs: Vec<&JointDomain> = incoming.iter().map(|m| &m.scope).collect();
            let mut walker = ScopeWalker::new(&g.scope, &subs);
            let mut idx = 0;
            loop {
                for (k, inc) in incoming.iter().enumerate() {
                    values[idx] *= inc.values[walker.proj(k)];
                }
                idx += 1;
                if !walker.advance() {
                    break;
                }
            }
            meter::add_mul_adds(values.len() as u64 * incoming.len() as u64);
            Factor {
                scope: g.scope.clone(),
                values,
                log_scale: g.log_scale + incoming.iter().map(|m| m.log_scale).sum::<f64>(),
            }
        })
        .collect();

    let messages = messages
        .into_iter()
        .map(|[a, b]| [a.expect("all messages set"), b.expect("all messages set")])
        .collect();
    Calibration {
        messages,
        posteriors,
    }
}
