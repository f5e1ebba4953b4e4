//! Message-specific abstraction on the clique tree: per-clique and
//! per-directed-separator partitions computed by an abstraction-propagation
//! pass, then inference carried out over abstract blocks only.
//!
//! Each undirected edge carries two partitions, one per direction; they
//! generally differ and both are coarser than the refinement a posterior
//! needs, which is why posteriors rebuild that refinement on demand.

use crate::jointree::{CliqueTree, Factor};
use crate::meter;
use crate::model::{evidence_indicator, Evidence, Network};
use crate::partition::{
    coarsest_safe_for, combine, marginalize, refine, JointDomain, Partition, ScopeWalker,
};

/// Clique and directed-separator partitions for one clique tree under one
/// fixed set of evidence-loaded factors.
#[derive(Debug, Clone)]
pub struct AbstractedCliqueTree {
    pub clique_partitions: Vec<Partition>,
    /// Per edge: `[low-to-high, high-to-low]` separator partitions.
    pub directed: Vec<[Partition; 2]>,
}

impl AbstractedCliqueTree {
    pub fn directed_partition(&self, tree: &CliqueTree, edge: usize, from: usize) -> &Partition {
        &self.directed[edge][tree.direction(edge, from)]
    }

    /// Drops every zero flag, keeping the block structure. Used when the
    /// partitions are reused against retuned parameters and entries that
    /// were zero once may no longer be.
    pub fn without_zero_flags(&self) -> AbstractedCliqueTree {
        AbstractedCliqueTree {
            clique_partitions: self.clique_partitions.iter().map(strip_zero_flag).collect(),
            directed: self
                .directed
                .iter()
                .map(|[a, b]| [strip_zero_flag(a), strip_zero_flag(b)])
                .collect(),
        }
    }
}

fn strip_zero_flag(p: &Partition) -> Partition {
    Partition::from_keys(p.domain_size(), |v| p.block_of(v)).expect("non-empty domain")
}

/// The coarsest partition safe for one clique factor: entries grouped by
/// value, zeros (including evidence-masked entries) in the zero block.
pub fn clique_abstraction(factor: &Factor, eps: f64) -> Partition {
    coarsest_safe_for(&factor.values, eps).expect("factors are non-empty")
}

/// Clique partitions for every node from the evidence-loaded factors.
pub fn clique_abstractions(factors: &[Factor], eps: f64) -> Vec<Partition> {
    factors.iter().map(|f| clique_abstraction(f, eps)).collect()
}

/// The combination route: combine the safe partitions of each assigned CPT
/// with the evidence partitions of assigned observed variables, padding the
/// rest of the cluster with the single-block partition. May keep
/// distinctions the factor-first route would not.
pub fn clique_abstraction_by_combination(
    tree: &CliqueTree,
    net: &Network,
    ev: &Evidence,
    node: usize,
    eps: f64,
) -> Partition {
    let clique_scope = tree.scope(node).clone();
    let mut acc_scope = JointDomain::empty();
    let mut acc = Partition::coarsest(1).unwrap();
    let fold = |p: Partition, s: JointDomain, acc: &mut Partition, acc_scope: &mut JointDomain| {
        let (scope, combined) = combine(acc, acc_scope, &p, &s).expect("scopes share the clique");
        meter::add_partition_ops(scope.size() as u64);
        *acc = combined;
        *acc_scope = scope;
    };
    for v in 0..net.var_count() {
        if tree.assignment(v) != node {
            continue;
        }
        let cpt = net.cpt(v);
        let family = JointDomain::new(
            cpt.parents
                .iter()
                .copied()
                .chain([v])
                .map(|u| (u, net.domain_size(u)))
                .collect(),
        )
        .expect("family variables are unique");
        // CPT entries rearranged into sorted-scope order
        let mut strides = vec![0usize; family.len()];
        let mut stride = net.domain_size(v);
        let pos = family
            .vars()
            .iter()
            .position(|&(w, _)| w == v)
            .expect("child in family");
        strides[pos] = 1;
        for &p in cpt.parents.iter().rev() {
            let pos = family
                .vars()
                .iter()
                .position(|&(w, _)| w == p)
                .expect("parent in family");
            strides[pos] = stride;
            stride *= net.domain_size(p);
        }
        let sizes: Vec<usize> = family.vars().iter().map(|&(_, s)| s).collect();
        let mut values = Vec::with_capacity(family.size());
        let mut walker = ScopeWalker::with_strides(sizes, vec![strides]);
        loop {
            values.push(cpt.table[walker.proj(0)]);
            if !walker.advance() {
                break;
            }
        }
        let p = coarsest_safe_for(&values, eps).expect("tables are non-empty");
        fold(p, family, &mut acc, &mut acc_scope);
        if ev.contains(v) {
            let indicator = evidence_indicator(net, v, ev);
            let p = Partition::from_keys_with_zero(indicator.len(), |_| 0, |x| indicator[x] == 0.0)
                .expect("non-empty domain");
            let s = JointDomain::new(vec![(v, net.domain_size(v))]).unwrap();
            fold(p, s, &mut acc, &mut acc_scope);
        }
    }
    let missing = clique_scope.difference(&acc_scope);
    if !missing.is_empty() {
        let p = Partition::coarsest(missing.size()).unwrap();
        fold(p, missing, &mut acc, &mut acc_scope);
    }
    debug_assert_eq!(acc_scope, clique_scope);
    acc
}

/// The partition of `Val(C_from)` refined by the clique's own partition and
/// the directed partitions flowing in from every neighbor except `exclude`.
fn combined_partition(
    tree: &CliqueTree,
    clique_partitions: &[Partition],
    directed: &dyn Fn(usize, usize) -> Partition,
    from: usize,
    exclude: Option<usize>,
) -> Partition {
    let scope = tree.scope(from).clone();
    let mut acc = clique_partitions[from].clone();
    for &(n, e) in tree.neighbors(from) {
        if Some(n) == exclude {
            continue;
        }
        let inc = directed(e, n);
        let (s, combined) = combine(&acc, &scope, &inc, tree.separator_scope(e))
            .expect("separator scopes lie inside the clique scope");
        meter::add_partition_ops(s.size() as u64);
        debug_assert_eq!(s, scope);
        acc = combined;
    }
    acc
}

/// Dynamic programming over directed edges, mirroring message scheduling:
/// the partition sent from `l` toward `m` is the clique partition of `l`
/// combined with all other incoming directed partitions, marginalized onto
/// the separator.
pub fn propagate_abstractions(
    tree: &CliqueTree,
    clique_partitions: Vec<Partition>,
) -> AbstractedCliqueTree {
    let mut directed: Vec<[Option<Partition>; 2]> =
        (0..tree.edges().len()).map(|_| [None, None]).collect();

    fn send(
        tree: &CliqueTree,
        clique_partitions: &[Partition],
        directed: &mut Vec<[Option<Partition>; 2]>,
        from: usize,
        to: usize,
        edge: usize,
    ) {
        let lookup = |e: usize, n: usize| -> Partition {
            directed[e][tree.direction(e, n)]
                .clone()
                .expect("incoming partition available by schedule")
        };
        let pi = combined_partition(tree, clique_partitions, &lookup, from, Some(to));
        let sigma = marginalize(&pi, tree.scope(from), tree.separator_scope(edge))
            .expect("separator is a sub-scope");
        meter::add_partition_ops(tree.scope(from).size() as u64);
        directed[edge][tree.direction(edge, from)] = Some(sigma);
    }

    fn inward(
        tree: &CliqueTree,
        clique_partitions: &[Partition],
        directed: &mut Vec<[Option<Partition>; 2]>,
        node: usize,
        parent: Option<usize>,
    ) {
        for &(n, _) in tree.neighbors(node) {
            if Some(n) != parent {
                inward(tree, clique_partitions, directed, n, Some(node));
            }
        }
        if let Some(parent) = parent {
            let edge = tree
                .neighbors(node)
                .iter()
                .find(|&&(n, _)| n == parent)
                .map(|&(_, e)| e)
                .unwrap();
            send(tree, clique_partitions, directed, node, parent, edge);
        }
    }

    fn outward(
        tree: &CliqueTree,
        clique_partitions: &[Partition],
        directed: &mut Vec<[Option<Partition>; 2]>,
        node: usize,
        parent: Option<usize>,
    ) {
        for &(child, edge) in tree.neighbors(node) {
            if Some(child) == parent {
                continue;
            }
            send(tree, clique_partitions, directed, node, child, edge);
            outward(tree, clique_partitions, directed, child, Some(node));
        }
    }

    for comp in tree.components() {
        let root = comp[0];
        inward(tree, &clique_partitions, &mut directed, root, None);
        outward(tree, &clique_partitions, &mut directed, root, None);
    }

    AbstractedCliqueTree {
        clique_partitions,
        directed: directed
            .into_iter()
            .map(|[a, b]| [a.expect("all directed partitions set"), b.expect("set")])
            .collect(),
    }
}

/// A message over the blocks of a directed separator partition. Values are
/// indexed by block id; a zero block's slot holds 0.
#[derive(Debug, Clone)]
pub struct BlockMessage {
    pub partition: Partition,
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl BlockMessage {
    fn zero(partition: Partition) -> BlockMessage {
        let n = partition.num_blocks();
        BlockMessage {
            partition,
            values: vec![0.0; n],
            log_scale: f64::NEG_INFINITY,
        }
    }

    fn renormalize(&mut self) {
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

fn project_index(
    scope: &JointDomain,
    scope_strides: &[usize],
    sub_strides: &[usize],
    idx: usize,
) -> usize {
    scope
        .vars()
        .iter()
        .enumerate()
        .map(|(i, &(_, size))| ((idx / scope_strides[i]) % size) * sub_strides[i])
        .sum()
}

/// One abstract message: one multiply per non-zero combined block, one
/// count-weighted add per (separator block, combined block) pair. Zero
/// blocks are skipped entirely.
fn abstract_message(
    tree: &CliqueTree,
    atree: &AbstractedCliqueTree,
    factors: &[Factor],
    from: usize,
    to: usize,
    incoming: &[(usize, &BlockMessage)],
) -> BlockMessage {
    let edge = tree
        .neighbors(from)
        .iter()
        .find(|&&(n, _)| n == to)
        .map(|&(_, e)| e)
        .expect("message endpoints must be adjacent");
    let sigma_dir = atree.directed_partition(tree, edge, from).clone();
    let g = &factors[from];
    let scope = tree.scope(from);
    let scope_strides = scope.strides();

    let lookup =
        |e: usize, n: usize| -> Partition { atree.directed[e][tree.direction(e, n)].clone() };
    let pi = combined_partition(tree, &atree.clique_partitions, &lookup, from, Some(to));
    let pi_reps = pi.representatives();

    // per-block terms: clique factor value times incoming block values
    let inc_strides: Vec<Vec<usize>> = incoming
        .iter()
        .map(|&(e, _)| scope.projection_strides(tree.separator_scope(e)))
        .collect();
    let mut terms = vec![0.0f64; pi.num_blocks()];
    let mut muls = 0u64;
    for b in 0..pi.num_blocks() {
        if Some(b as u32) == pi.zero_block() {
            continue;
        }
        let rep = pi_reps[b];
        let mut term = g.values[rep];
        for (k, &(_, msg)) in incoming.iter().enumerate() {
            let proj = project_index(scope, &scope_strides, &inc_strides[k], rep);
            term *= msg.values[msg.partition.block_of(proj) as usize];
        }
        muls += incoming.len() as u64;
        terms[b] = term;
    }
    meter::add_mul_adds(muls);

    // sum terms per separator block, weighting by member counts taken at a
    // representative separator value
    let sep_scope = tree.separator_scope(edge);
    let sep_strides = sep_scope.strides();
    // stride of each separator variable inside the clique scope
    let sep_in_scope: Vec<usize> = sep_scope
        .vars()
        .iter()
        .map(|&(v, _)| {
            let pos = scope
                .vars()
                .iter()
                .position(|&(w, _)| w == v)
                .expect("separator variable lies in the clique");
            scope_strides[pos]
        })
        .collect();
    let complement = scope.difference(sep_scope);
    // stride of each summed-out variable inside the clique scope
    let comp_in_scope: Vec<usize> = complement
        .vars()
        .iter()
        .map(|&(v, _)| {
            let pos = scope
                .vars()
                .iter()
                .position(|&(w, _)| w == v)
                .expect("complement variable lies in the clique");
            scope_strides[pos]
        })
        .collect();
    let comp_sizes: Vec<usize> = complement.vars().iter().map(|&(_, s)| s).collect();
    let sep_reps = sigma_dir.representatives();
    let mut values = vec![0.0f64; sigma_dir.num_blocks()];
    let mut counts = vec![0u64; pi.num_blocks()];
    let mut ops = 0u64;
    for s_block in 0..sigma_dir.num_blocks() {
        if Some(s_block as u32) == sigma_dir.zero_block() {
            continue;
        }
        let s_rep = sep_reps[s_block];
        // embed the representative separator value into the clique scope
        let mut base = 0usize;
        for (i, &(_, size)) in sep_scope.vars().iter().enumerate() {
            base += ((s_rep / sep_strides[i]) % size) * sep_in_scope[i];
        }
        counts.iter_mut().for_each(|c| *c = 0);
        let mut walker = ScopeWalker::with_strides(comp_sizes.clone(), vec![comp_in_scope.clone()]);
        loop {
            let b = pi.block_of(base + walker.proj(0)) as usize;
            if Some(b as u32) != pi.zero_block() {
                counts[b] += 1;
            }
            if !walker.advance() {
                break;
            }
        }
        let mut acc = 0.0f64;
        for (b, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            if count == 1 {
                acc += terms[b];
                ops += 1;
            } else {
                acc += count as f64 * terms[b];
                ops += 2;
            }
        }
        values[s_block] = acc;
    }
    meter::add_mul_adds(ops);

    let mut msg = BlockMessage {
        partition: sigma_dir,
        values,
        log_scale: g.log_scale + incoming.iter().map(|&(_, m)| m.log_scale).sum::<f64>(),
    };
    msg.renormalize();
    msg
}

/// Message from `from` toward `to` over abstract blocks; a directed partition
/// whose zero block covers the whole separator short-circuits to the zero
/// message without visiting the subtree behind it.
fn a_gather(
    tree: &CliqueTree,
    atree: &AbstractedCliqueTree,
    factors: &[Factor],
    from: usize,
    to: usize,
) -> BlockMessage {
    let edge = tree
        .neighbors(from)
        .iter()
        .find(|&&(n, _)| n == to)
        .map(|&(_, e)| e)
        .unwrap();
    let sigma_dir = atree.directed_partition(tree, edge, from);
    if sigma_dir.num_nonzero_blocks() == 0 {
        return BlockMessage::zero(sigma_dir.clone());
    }
    let incoming: Vec<(usize, BlockMessage)> = tree
        .neighbors(from)
        .iter()
        .filter(|&&(n, _)| n != to)
        .map(|&(n, e)| (e, a_gather(tree, atree, factors, n, from)))
        .collect();
    let refs: Vec<(usize, &BlockMessage)> = incoming.iter().map(|(e, m)| (*e, m)).collect();
    abstract_message(tree, atree, factors, from, to, &refs)
}

/// ln P(e | B) computed over abstract blocks only.
pub fn abstracted_likelihood(
    tree: &CliqueTree,
    atree: &AbstractedCliqueTree,
    factors: &[Factor],
) -> f64 {
    let mut total = 0.0f64;
    for comp in tree.components() {
        let edge = tree
            .edges()
            .iter()
            .enumerate()
            .find(|(_, &(l, _))| comp.binary_search(&l).is_ok());
        let part = match edge {
            Some((e, &(l, m))) => {
                let fl = a_gather(tree, atree, factors, l, m);
                let fm = a_gather(tree, atree, factors, m, l);
                let rho = refine(&fl.partition, &fm.partition).expect("same separator");
                let reps = rho.representatives();
                let sizes = rho.block_sizes();
                let mut sum = 0.0f64;
                let mut ops = 0u64;
                for b in 0..rho.num_blocks() {
                    if Some(b as u32) == rho.zero_block() {
                        continue;
                    }
                    let r = reps[b];
                    let v = fl.values[fl.partition.block_of(r) as usize]
                        * fm.values[fm.partition.block_of(r) as usize];
                    if sizes[b] == 1 {
                        sum += v;
                        ops += 2;
                    } else {
                        sum += sizes[b] as f64 * v;
                        ops += 3;
                    }
                }
                meter::add_mul_adds(ops);
                let _ = e;
                if sum == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    sum.ln() + fl.log_scale + fm.log_scale
                }
            }
            None => {
                let l = comp[0];
                let sigma = &atree.clique_partitions[l];
                let reps = sigma.representatives();
                let sizes = sigma.block_sizes();
                let g = &factors[l];
                let mut sum = 0.0f64;
                let mut ops = 0u64;
                for b in 0..sigma.num_blocks() {
                    if Some(b as u32) == sigma.zero_block() {
                        continue;
                    }
                    if sizes[b] == 1 {
                        sum += g.values[reps[b]];
                        ops += 1;
                    } else {
                        sum += sizes[b] as f64 * g.values[reps[b]];
                        ops += 2;
                    }
                }
                meter::add_mul_adds(ops);
                if sum == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    sum.ln() + g.log_scale
                }
            }
        };
        total += part;
    }
    total
}

/// A per-clique posterior over the refinement of the clique partition and
/// every incoming directed partition.
#[derive(Debug, Clone)]
pub struct BlockPosterior {
    pub scope: JointDomain,
    pub partition: Partition,
    /// Indexed by block id; zero-block slot holds 0.
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl BlockPosterior {
    /// Expands block values back to a concrete table: every value inherits
    /// its block's entry.
    pub fn expand(&self) -> Factor {
        let values = (0..self.scope.size())
            .map(|c| self.values[self.partition.block_of(c) as usize])
            .collect();
        Factor {
            scope: self.scope.clone(),
            values,
            log_scale: self.log_scale,
        }
    }
}

/// Abstract two-pass calibration followed by per-clique block posteriors.
pub fn abstracted_posteriors(
    tree: &CliqueTree,
    atree: &AbstractedCliqueTree,
    factors: &[Factor],
) -> Vec<BlockPosterior> {
    let mut messages: Vec<[Option<BlockMessage>; 2]> =
        (0..tree.edges().len()).map(|_| [None, None]).collect();

    #[allow(clippy::too_many_arguments)]
    fn send(
        tree: &CliqueTree,
        atree: &AbstractedCliqueTree,
        factors: &[Factor],
        messages: &mut Vec<[Option<BlockMessage>; 2]>,
        from: usize,
        to: usize,
        edge: usize,
    ) {
        let sigma_dir = atree.directed_partition(tree, edge, from);
        let msg = if sigma_dir.num_nonzero_blocks() == 0 {
            BlockMessage::zero(sigma_dir.clone())
        } else {
            let incoming: Vec<(usize, &BlockMessage)> = tree
                .neighbors(from)
                .iter()
                .filter(|&&(n, _)| n != to)
                .map(|&(n, e)| {
                    (
                        e,
                        messages[e][tree.direction(e, n)]
                            .as_ref()
                            .expect("incoming message available by schedule"),
                    )
                })
                .collect();
            abstract_message(tree, atree, factors, from, to, &incoming)
        };
        messages[edge][tree.direction(edge, from)] = Some(msg);
    }

    fn inward(
        tree: &CliqueTree,
        atree: &AbstractedCliqueTree,
        factors: &[Factor],
        messages: &mut Vec<[Option<BlockMessage>; 2]>,
        node: usize,
        parent: Option<usize>,
    ) {
        for &(n, _) in tree.neighbors(node) {
            if Some(n) != parent {
                inward(tree, atree, factors, messages, n, Some(node));
            }
        }
        if let Some(parent) = parent {
            let edge = tree
                .neighbors(node)
                .iter()
                .find(|&&(n, _)| n == parent)
                .map(|&(_, e)| e)
                .unwrap();
            send(tree, atree, factors, messages, node, parent, edge);
        }
    }

    fn outward(
        tree: &CliqueTree,
        atree: &AbstractedCliqueTree,
        factors: &[Factor],
        messages: &mut Vec<[Option<BlockMessage>; 2]>,
        node: usize,
        parent: Option<usize>,
    ) {
        for &(child, edge) in tree.neighbors(node) {
            if Some(child) == parent {
                continue;
            }
            send(tree, atree, factors, messages, node, child, edge);
            outward(tree, atree, factors, messages, child, Some(node));
        }
    }

    for comp in tree.components() {
        let root = comp[0];
        inward(tree, atree, factors, &mut messages, root, None);
        outward(tree, atree, factors, &mut messages, root, None);
    }

    (0..tree.node_count())
        .map(|l| {
            let scope = tree.scope(l).clone();
            let scope_strides = scope.strides();
            let lookup = |e: usize, n: usize| -> Partition {
                atree.directed[e][tree.direction(e, n)].clone()
            };
            let pi = combined_partition(tree, &atree.clique_partitions, &lookup, l, None);
            let reps = pi.representatives();
            let incoming: Vec<(&BlockMessage, Vec<usize>)> = tree
                .neighbors(l)
                .iter()
                .map(|&(n, e)| {
                    (
                        messages[e][tree.direction(e, n)]
                            .as_ref()
                            .expect("calibration computed all messages"),
                        scope.projection_strides(tree.separator_scope(e)),
                    )
                })
                .collect();
            let g = &factors[l];
            let mut values = vec![0.0f64; pi.num_blocks()];
            let mut muls = 0u64;
            for b in 0..pi.num_blocks() {
                if Some(b as u32) == pi.zero_block() {
                    continue;
                }
                let rep = reps[b];
                let mut v = g.values[rep];
                for (msg, strides) in &incoming {
                    let proj = project_index(&scope, &scope_strides, strides, rep);
                    v *= msg.values[msg.partition.block_of(proj) as usize];
                }
                muls += incoming.len() as u64;
                values[b] = v;
            }
            meter::add_mul_adds(muls);
            BlockPosterior {
                scope,
                partition: pi,
                values,
                log_scale: g.log_scale + incoming.iter().map(|(m, _)| m.log_scale).sum::<f64>(),
            }
        })
        .collect()
}

/// Reduction statistics: block counts against concrete state-space sizes.
#[derive(Debug, Clone)]
pub struct SeparatorSaving {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
    pub separator_size: usize,
    /// Blocks of the directed partition; a zero block counts as one.
    pub blocks: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct CliqueSaving {
    pub node: usize,
    pub size: usize,
    /// Blocks of the refinement used for this clique's posterior.
    pub blocks: usize,
}

#[derive(Debug, Clone)]
pub struct SavingsReport {
    pub separators: Vec<SeparatorSaving>,
    pub cliques: Vec<CliqueSaving>,
    pub original_total: usize,
    pub abstracted_total: usize,
}

pub fn savings_report(tree: &CliqueTree, atree: &AbstractedCliqueTree) -> SavingsReport {
    let mut separators = Vec::new();
    for (e, &(l, m)) in tree.edges().iter().enumerate() {
        let size = tree.separator_scope(e).size();
        for (from, to) in [(l, m), (m, l)] {
            let blocks = atree.directed_partition(tree, e, from).num_blocks();
            separators.push(SeparatorSaving {
                edge: e,
                from,
                to,
                separator_size: size,
                blocks,
                ratio: blocks as f64 / size as f64,
            });
        }
    }
    let lookup =
        |e: usize, n: usize| -> Partition { atree.directed[e][tree.direction(e, n)].clone() };
    let cliques: Vec<CliqueSaving> = (0..tree.node_count())
        .map(|l| {
            let pi = combined_partition(tree, &atree.clique_partitions, &lookup, l, None);
            CliqueSaving {
                node: l,
                size: tree.scope(l).size(),
                blocks: pi.num_blocks(),
            }
        })
        .collect();
    let original_total = cliques.iter().map(|c| c.size).sum();
    let abstracted_total = cliques.iter().map(|c| c.blocks).sum();
    SavingsReport {
        separators,
        cliques,
        original_total,
        abstracted_total,
    }
}
