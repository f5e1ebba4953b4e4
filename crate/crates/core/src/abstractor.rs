//! Network-level value abstraction: discard values incompatible with the
//! evidence by constraint propagation, compute cautious parent partitions
//! bottom-up, and construct abstracted tables.
//!
//! The result is a network over abstract values whose likelihood of the
//! evidence equals the original's exactly (under exact-equality grouping).
//! Discarded values sit in each partition's zero block and carry no mass in
//! the abstracted tables, so the abstracted network's total mass *is* the
//! likelihood of the evidence.

use std::collections::VecDeque;

use thiserror::Error;

use crate::meter;
use crate::model::{Cpt, Evidence, Network, VarId, Variable};
use crate::partition::{refine, Partition};

#[derive(Debug, Error)]
pub enum AbstractorError {
    /// The evidence has probability 0; callers short-circuit the likelihood.
    #[error("evidence is impossible: variable {variable} has no compatible value")]
    ImpossibleEvidence { variable: VarId },
    /// Abstracted table entries disagreed across representatives. Indicates
    /// a bug under exact grouping; under tolerance grouping it is downgraded
    /// to a recorded discrepancy.
    #[error(
        "abstracted CPT of variable {variable} differs across representatives by {discrepancy}"
    )]
    CautiousnessViolation { variable: VarId, discrepancy: f64 },
}

/// Grouping configuration. `eps == 0` means exact 64-bit equality; a
/// positive value groups `|a-b| <= eps * max(|a|,|b|)` and downgrades the
/// construct-tables audit from an error to a recorded discrepancy.
#[derive(Debug, Clone, Copy, Default)]
pub struct AbstractionConfig {
    pub eps: f64,
}

impl AbstractionConfig {
    pub fn exact() -> Self {
        AbstractionConfig { eps: 0.0 }
    }

    fn eq(&self, a: f64, b: f64) -> bool {
        if self.eps == 0.0 {
            a.to_bits() == b.to_bits()
        } else {
            a == b || (a - b).abs() <= self.eps * a.abs().max(b.abs())
        }
    }
}

/// Per variable, the values not ruled out by evidence propagation.
#[derive(Debug, Clone)]
pub struct SupportSets {
    supported: Vec<Vec<bool>>,
}

impl SupportSets {
    pub fn full(net: &Network) -> Self {
        SupportSets {
            supported: (0..net.var_count())
                .map(|v| vec![true; net.domain_size(v)])
                .collect(),
        }
    }

    pub fn is_supported(&self, var: VarId, value: usize) -> bool {
        self.supported[var][value]
    }

    pub fn supported_values(&self, var: VarId) -> Vec<usize> {
        self.supported[var]
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn count(&self, var: VarId) -> usize {
        self.supported[var].iter().filter(|&&s| s).count()
    }

    /// One block holding the supported values, unsupported values in the
    /// zero block.
    pub fn seed_partition(&self, var: VarId) -> Partition {
        Partition::from_keys_with_zero(
            self.supported[var].len(),
            |_| 0,
            |v| !self.supported[var][v],
        )
        .expect("domains are non-empty")
    }
}

/// Arc consistency over the CPT zero patterns, seeded by the evidence.
///
/// Each CPT acts as one n-ary constraint whose allowed tuples are the table
/// entries greater than zero. A value survives only while some allowed tuple
/// over currently-supported values witnesses it. The fixpoint is unique, so
/// the propagation order does not matter.
pub fn discard(net: &Network, ev: &Evidence) -> Result<SupportSets, AbstractorError> {
    let n = net.var_count();
    let mut supported: Vec<Vec<bool>> = (0..n)
        .map(|v| {
            (0..net.domain_size(v))
                .map(|x| ev.allows(v, x))
                .collect::<Vec<bool>>()
        })
        .collect();
    for v in 0..n {
        if supported[v].iter().all(|&s| !s) {
            return Err(AbstractorError::ImpossibleEvidence { variable: v });
        }
    }

    let mut constraints_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (c, cpt) in net.cpts.iter().enumerate() {
        constraints_of[cpt.child].push(c);
        for &p in &cpt.parents {
            constraints_of[p].push(c);
        }
    }
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    while let Some(c) = queue.pop_front() {
        queued[c] = false;
        let cpt = &net.cpts[c];
        let family: Vec<VarId> = cpt.parents.iter().copied().chain([cpt.child]).collect();
        let mut witnessed: Vec<Vec<bool>> = family
            .iter()
            .map(|&v| vec![false; net.domain_size(v)])
            .collect();
        // family digits in table order: parents (last fastest), then child
        let sizes: Vec<usize> = family.iter().map(|&v| net.domain_size(v)).collect();
        let mut digits = vec![0usize; family.len()];
        'rows: for &entry in &cpt.table {
            let ok = entry > 0.0 && digits.iter().zip(&family).all(|(&d, &v)| supported[v][d]);
            if ok {
                for (k, &d) in digits.iter().enumerate() {
                    witnessed[k][d] = true;
                }
            }
            // advance digits (child innermost)
            let mut i = family.len();
            loop {
                if i == 0 {
                    break 'rows;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < sizes[i] {
                    break;
                }
                digits[i] = 0;
            }
        }
        for (k, &v) in family.iter().enumerate() {
            let mut shrunk = false;
            for x in 0..net.domain_size(v) {
                if supported[v][x] && !witnessed[k][x] {
                    supported[v][x] = false;
                    shrunk = true;
                }
            }
            if shrunk {
                if supported[v].iter().all(|&s| !s) {
                    return Err(AbstractorError::ImpossibleEvidence { variable: v });
                }
                for &c2 in &constraints_of[v] {
                    if !queued[c2] {
                        queued[c2] = true;
                        queue.push_back(c2);
                    }
                }
            }
        }
    }
    Ok(SupportSets { supported })
}

/// Coarsest per-parent partitions under which the child's abstracted rows
/// are constant: two supported parent values share a block iff, for every
/// supported configuration of the remaining parents and every non-zero
/// abstract child value, the summed child probabilities agree. Unsupported
/// parent values go to the zero block.
pub fn cautious_parent_partitions(
    net: &Network,
    cpt: &Cpt,
    child_partition: &Partition,
    supports: &SupportSets,
    cfg: &AbstractionConfig,
) -> Vec<Partition> {
    let child_size = net.domain_size(cpt.child);
    debug_assert_eq!(child_partition.domain_size(), child_size);
    let child_blocks: Vec<Vec<usize>> = nonzero_blocks(child_partition)
        .into_iter()
        .map(|members| {
            members
                .into_iter()
                .filter(|&x| supports.is_supported(cpt.child, x))
                .collect()
        })
        .collect();
    let parent_sizes: Vec<usize> = cpt.parents.iter().map(|&p| net.domain_size(p)).collect();
    // stride of each parent in table configs
    let mut strides = vec![1usize; cpt.parents.len()];
    for i in (0..cpt.parents.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * parent_sizes[i + 1];
    }

    cpt.parents
        .iter()
        .enumerate()
        .map(|(jpos, &parent)| {
            let supported: Vec<usize> = supports.supported_values(parent);
            let other_supported: Vec<Vec<usize>> = cpt
                .parents
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != jpos)
                .map(|(_, &q)| supports.supported_values(q))
                .collect();
            let other_strides: Vec<usize> = (0..cpt.parents.len())
                .filter(|&k| k != jpos)
                .map(|k| strides[k])
                .collect();
            let mut group_of = vec![usize::MAX; net.domain_size(parent)];
            let mut reps: Vec<usize> = Vec::new();
            for &x in &supported {
                let mut joined = false;
                for (g, &rep) in reps.iter().enumerate() {
                    if rows_equal(
                        cpt,
                        child_size,
                        &child_blocks,
                        &other_supported,
                        &other_strides,
                        strides[jpos],
                        x,
                        rep,
                        cfg,
                    ) {
                        group_of[x] = g;
                        joined = true;
                        break;
                    }
                }
                if !joined {
                    group_of[x] = reps.len();
                    reps.push(x);
                }
            }
            Partition::from_keys_with_zero(
                net.domain_size(parent),
                |v| group_of[v],
                |v| !supports.is_supported(parent, v),
            )
            .expect("domains are non-empty")
        })
        .collect()
}

/// Compares the abstracted child distributions induced by two values of one
/// parent across every supported configuration of the remaining parents,
/// with early exit on the first mismatch.
#[allow(clippy::too_many_arguments)]
fn rows_equal(
    cpt: &Cpt,
    child_size: usize,
    child_blocks: &[Vec<usize>],
    other_supported: &[Vec<usize>],
    other_strides: &[usize],
    parent_stride: usize,
    x: usize,
    y: usize,
    cfg: &AbstractionConfig,
) -> bool {
    let mut digits = vec![0usize; other_supported.len()];
    let mut touched: u64 = 0;
    let equal = 'configs: loop {
        let mut base = 0usize;
        for (k, &d) in digits.iter().enumerate() {
            base += other_supported[k][d] * other_strides[k];
        }
        let row_x = (base + x * parent_stride) * child_size;
        let row_y = (base + y * parent_stride) * child_size;
        for block in child_blocks {
            let mut sum_x = 0.0;
            let mut sum_y = 0.0;
            for &cv in block {
                sum_x += cpt.table[row_x + cv];
                sum_y += cpt.table[row_y + cv];
            }
            touched += 2 * block.len() as u64;
            if !cfg.eq(sum_x, sum_y) {
                break 'configs false;
            }
        }
        let mut i = other_supported.len();
        loop {
            if i == 0 {
                break 'configs true;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < other_supported[i].len() {
                break;
            }
            digits[i] = 0;
        }
    };
    meter::add_cpt_touches(touched);
    equal
}

/// A network over abstract values, together with the per-variable partitions
/// that produced it. Non-zero blocks become the abstract domains; the zero
/// block (discarded values) carries no mass, so abstracted rows sum to the
/// retained mass and the total mass of `network` equals P(e | original).
#[derive(Debug, Clone)]
pub struct AbstractNetwork {
    pub original: Network,
    pub partitions: Vec<Partition>,
    pub network: Network,
    /// Maximum representative disagreement observed by the table audit;
    /// exactly 0 in exact mode (anything else raises instead).
    pub audit_discrepancy: f64,
}

impl AbstractNetwork {
    /// Blocks of supported values per variable, in abstract-value order.
    pub fn abstract_values(&self, var: VarId) -> Vec<Vec<usize>> {
        nonzero_blocks(&self.partitions[var])
    }
}

fn nonzero_blocks(p: &Partition) -> Vec<Vec<usize>> {
    p.blocks()
        .into_iter()
        .enumerate()
        .filter(|&(id, _)| Some(id as u32) != p.zero_block().map(|z| z as usize as u32))
        .map(|(_, members)| members)
        .collect()
}

fn block_label(variable: &Variable, members: &[usize]) -> String {
    if members.len() == 1 {
        variable.domain[members[0]].clone()
    } else {
        let labels: Vec<&str> = members
            .iter()
            .map(|&v| variable.domain[v].as_str())
            .collect();
        format!("{{{}}}", labels.join(","))
    }
}

/// Builds the abstracted network for the given cautious partitions.
///
/// Each entry is the child-block sum of the original row at one
/// representative parent configuration; an audit recomputes every entry from
/// every supported representative and raises on disagreement (downgraded to
/// a recorded discrepancy under tolerance grouping).
pub fn construct_tables(
    net: &Network,
    partitions: &[Partition],
    cfg: &AbstractionConfig,
) -> Result<AbstractNetwork, AbstractorError> {
    construct_tables_impl(net, partitions, cfg, true)
}

/// Representative-based table construction without the per-representative
/// audit. Used when partitions are deliberately reused against retuned
/// parameters and disagreement is checked end to end instead.
pub fn construct_tables_unaudited(net: &Network, partitions: &[Partition]) -> AbstractNetwork {
    construct_tables_impl(net, partitions, &AbstractionConfig::exact(), false)
        .expect("unaudited construction cannot fail")
}

fn construct_tables_impl(
    net: &Network,
    partitions: &[Partition],
    cfg: &AbstractionConfig,
    audit: bool,
) -> Result<AbstractNetwork, AbstractorError> {
    assert_eq!(partitions.len(), net.var_count());
    let blocks: Vec<Vec<Vec<usize>>> = partitions.iter().map(nonzero_blocks).collect();
    // abstract index of each original value (usize::MAX for discarded)
    let abstract_index: Vec<Vec<usize>> = partitions
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let mut index = vec![usize::MAX; p.domain_size()];
            for (a, members) in blocks[v].iter().enumerate() {
                for &x in members {
                    index[x] = a;
                }
            }
            index
        })
        .collect();

    let variables: Vec<Variable> = net
        .variables
        .iter()
        .map(|var| Variable {
            id: var.id,
            name: var.name.clone(),
            domain: blocks[var.id]
                .iter()
                .map(|members| block_label(var, members))
                .collect(),
        })
        .collect();

    let mut audit_discrepancy = 0.0f64;
    let mut cpts = Vec::with_capacity(net.cpts.len());
    for cpt in &net.cpts {
        let child = cpt.child;
        let child_size = net.domain_size(child);
        let a_child = &blocks[child];
        let a_parent_blocks: Vec<&Vec<Vec<usize>>> =
            cpt.parents.iter().map(|&p| &blocks[p]).collect();
        let a_configs: usize = a_parent_blocks.iter().map(|b| b.len()).product();
        let mut table = vec![0.0f64; a_configs * a_child.len()];

        // representative entries
        let mut digits = vec![0usize; cpt.parents.len()];
        let mut touched = 0u64;
        for a_config in 0..a_configs {
            let mut config = 0usize;
            for (k, &p) in cpt.parents.iter().enumerate() {
                config = config * net.domain_size(p) + a_parent_blocks[k][digits[k]][0];
            }
            let row = config * child_size;
            for (a, members) in a_child.iter().enumerate() {
                let mut sum = 0.0;
                for &x in members {
                    sum += cpt.table[row + x];
                }
                touched += members.len() as u64;
                table[a_config * a_child.len() + a] = sum;
            }
            let mut i = cpt.parents.len();
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < a_parent_blocks[i].len() {
                    break;
                }
                digits[i] = 0;
            }
        }

        if audit {
            // re-derive every entry from every supported parent configuration
            let supported_lists: Vec<Vec<usize>> = cpt
                .parents
                .iter()
                .map(|&p| {
                    (0..net.domain_size(p))
                        .filter(|&x| abstract_index[p][x] != usize::MAX)
                        .collect()
                })
                .collect();
            if supported_lists.iter().all(|l| !l.is_empty()) {
                let mut digits = vec![0usize; cpt.parents.len()];
                'audit: loop {
                    let mut config = 0usize;
                    let mut a_config = 0usize;
                    for (k, &p) in cpt.parents.iter().enumerate() {
                        let x = supported_lists[k][digits[k]];
                        config = config * net.domain_size(p) + x;
                        a_config = a_config * a_parent_blocks[k].len() + abstract_index[p][x];
                    }
                    let row = config * child_size;
                    for (a, members) in a_child.iter().enumerate() {
                        let mut sum = 0.0;
                        for &x in members {
                            sum += cpt.table[row + x];
                        }
                        touched += members.len() as u64;
                        let stored = table[a_config * a_child.len() + a];
                        if !cfg.eq(sum, stored) {
                            let gap = (sum - stored).abs();
                            if cfg.eps == 0.0 {
                                meter::add_cpt_touches(touched);
                                return Err(AbstractorError::CautiousnessViolation {
                                    variable: child,
                                    discrepancy: gap,
                                });
                            }
                            audit_discrepancy = audit_discrepancy.max(gap);
                        } else if cfg.eps > 0.0 {
                            audit_discrepancy = audit_discrepancy.max((sum - stored).abs());
                        }
                    }
                    let mut i = cpt.parents.len();
                    loop {
                        if i == 0 {
                            break 'audit;
                        }
                        i -= 1;
                        digits[i] += 1;
                        if digits[i] < supported_lists[i].len() {
                            break;
                        }
                        digits[i] = 0;
                    }
                }
            }
        }
        meter::add_cpt_touches(touched);

        cpts.push(Cpt {
            child,
            parents: cpt.parents.clone(),
            table,
        });
    }

    Ok(AbstractNetwork {
        original: net.clone(),
        partitions: partitions.to_vec(),
        network: Network { variables, cpts },
        audit_discrepancy,
    })
}

/// The full abstraction pass: discard, then per-variable partitions in
/// reverse topological order (each variable's partition is the tight
/// refinement of the partitions its children demand, seeded coarse and
/// refined by the evidence-indicator split for observed variables), then
/// table construction.
pub fn value_abstract(
    net: &Network,
    ev: &Evidence,
    cfg: &AbstractionConfig,
) -> Result<AbstractNetwork, AbstractorError> {
    let partitions = abstraction_partitions(net, ev, cfg)?;
    construct_tables(net, &partitions, cfg)
}

/// The Discard and Abstract phases only: the per-variable partitions.
pub fn abstraction_partitions(
    net: &Network,
    ev: &Evidence,
    cfg: &AbstractionConfig,
) -> Result<Vec<Partition>, AbstractorError> {
    let supports = discard(net, ev)?;
    let order = crate::model::topological_order(net).expect("network is valid");
    let mut sigma: Vec<Partition> = (0..net.var_count())
        .map(|v| {
            let mut p = supports.seed_partition(v);
            if ev.contains(v) {
                let indicator =
                    Partition::from_keys_with_zero(net.domain_size(v), |_| 0, |x| !ev.allows(v, x))
                        .expect("domains are non-empty");
                p = refine(&p, &indicator).expect("same domain");
            }
            p
        })
        .collect();
    for &v in order.iter().rev() {
        let cpt = net.cpt(v);
        if cpt.parents.is_empty() {
            continue;
        }
        let child_partition = sigma[v].clone();
        let demands = cautious_parent_partitions(net, cpt, &child_partition, &supports, cfg);
        for (&p, demand) in cpt.parents.iter().zip(demands) {
            sigma[p] = refine(&sigma[p], &demand).expect("same domain");
        }
    }
    Ok(sigma)
}
