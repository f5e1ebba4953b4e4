//! End-to-end inference pipelines tying the stages together: plain clique
//! tree, clique tree over the value-abstracted network, and the fully
//! abstracted propagation on top of it. Also holds the frozen-abstraction
//! reuse path for parameter scans and the reduction statistics.

use crate::abstract_propagation::{
    abstracted_likelihood, clique_abstraction_by_combination, clique_abstractions,
    propagate_abstractions, savings_report, AbstractedCliqueTree, SavingsReport,
};
use crate::abstractor::{
    construct_tables_unaudited, value_abstract, AbstractNetwork, AbstractionConfig,
};
use crate::jointree::{attach_evidence, build_clique_tree, likelihood, CliqueTree, Heuristic};
use crate::meter;
use crate::model::{Evidence, Network};
use crate::partition::Partition;

/// How much abstraction the inference pipeline applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbstractionMode {
    /// Plain clique-tree inference on the original network.
    None,
    /// Network-level abstraction, then plain clique-tree inference.
    ValueAbstractOnly,
    /// Network-level abstraction plus message-level abstraction.
    #[default]
    Full,
}

/// How clique partitions are constructed in full mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CliqueRoute {
    /// Group the evidence-loaded factor's values directly.
    #[default]
    FactorFirst,
    /// Combine per-CPT safe partitions with evidence partitions; finer or
    /// equal to the factor-first grouping, but avoids building the factor
    /// before grouping.
    Combination,
}

#[derive(Debug, Clone, Copy)]
pub struct InferOptions {
    pub heuristic: Heuristic,
    pub eps: f64,
    pub mode: AbstractionMode,
    pub clique_route: CliqueRoute,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            heuristic: Heuristic::MinFill,
            eps: 0.0,
            mode: AbstractionMode::Full,
            clique_route: CliqueRoute::FactorFirst,
        }
    }
}

impl InferOptions {
    fn config(&self) -> AbstractionConfig {
        AbstractionConfig { eps: self.eps }
    }
}

fn clique_partitions_for(
    tree: &CliqueTree,
    net: &Network,
    ev: &Evidence,
    factors: &[crate::jointree::Factor],
    options: &InferOptions,
) -> Vec<Partition> {
    match options.clique_route {
        CliqueRoute::FactorFirst => clique_abstractions(factors, options.eps),
        CliqueRoute::Combination => (0..tree.node_count())
            .map(|l| clique_abstraction_by_combination(tree, net, ev, l, options.eps))
            .collect(),
    }
}

/// ln P(e | B) under the chosen pipeline; impossible evidence yields -inf.
pub fn infer_ln_likelihood(net: &Network, ev: &Evidence, options: &InferOptions) -> f64 {
    match options.mode {
        AbstractionMode::None => {
            let tree = build_clique_tree(net, options.heuristic);
            let factors = attach_evidence(&tree, net, ev);
            likelihood(&tree, &factors)
        }
        AbstractionMode::ValueAbstractOnly => {
            let abs = match value_abstract(net, ev, &options.config()) {
                Ok(abs) => abs,
                Err(_) => return f64::NEG_INFINITY,
            };
            let tree = build_clique_tree(&abs.network, options.heuristic);
            let factors = attach_evidence(&tree, &abs.network, &Evidence::new());
            likelihood(&tree, &factors)
        }
        AbstractionMode::Full => {
            let abs = match value_abstract(net, ev, &options.config()) {
                Ok(abs) => abs,
                Err(_) => return f64::NEG_INFINITY,
            };
            let tree = build_clique_tree(&abs.network, options.heuristic);
            let empty = Evidence::new();
            let factors = attach_evidence(&tree, &abs.network, &empty);
            let partitions = clique_partitions_for(&tree, &abs.network, &empty, &factors, options);
            let atree = propagate_abstractions(&tree, partitions);
            abstracted_likelihood(&tree, &atree, &factors)
        }
    }
}

/// ln P(e | B) plus the multiply-add count the run used.
pub fn infer_with_workload(net: &Network, ev: &Evidence, options: &InferOptions) -> (f64, u64) {
    let (ln, used) = meter::measure(|| infer_ln_likelihood(net, ev, options));
    (ln, used.mul_adds)
}

/// Abstraction structures computed once and reused across parameter changes
/// that keep the network structure and domains fixed.
///
/// The per-variable partitions, the clique tree, and the clique/separator
/// partitions are frozen; only table values are recomputed per query, taken
/// at block representatives. Zero flags are dropped from the message-level
/// partitions because entries that were zero under the freezing parameters
/// may not stay zero; value-level zero blocks (discarded values) are kept.
/// Reuse is exact whenever the frozen grouping still separates unequal
/// values under the new parameters, which the caller is expected to verify
/// against a fresh run.
#[derive(Debug, Clone)]
pub struct FrozenAbstraction {
    partitions: Vec<Partition>,
    tree: CliqueTree,
    atree: AbstractedCliqueTree,
}

impl FrozenAbstraction {
    /// Freezes the abstraction structure of `net` under `ev`; None when the
    /// evidence is impossible under these parameters.
    pub fn freeze(net: &Network, ev: &Evidence, options: &InferOptions) -> Option<Self> {
        let abs = value_abstract(net, ev, &options.config()).ok()?;
        let tree = build_clique_tree(&abs.network, options.heuristic);
        let empty = Evidence::new();
        let factors = attach_evidence(&tree, &abs.network, &empty);
        let partitions = clique_partitions_for(&tree, &abs.network, &empty, &factors, options);
        let atree = propagate_abstractions(&tree, partitions).without_zero_flags();
        Some(FrozenAbstraction {
            partitions: abs.partitions,
            tree,
            atree,
        })
    }

    /// ln P(e | B') for a network with the same structure and domains but
    /// retuned tables, reusing every frozen partition.
    pub fn ln_likelihood(&self, net: &Network) -> f64 {
        let abs = construct_tables_unaudited(net, &self.partitions);
        let factors = attach_evidence(&self.tree, &abs.network, &Evidence::new());
        abstracted_likelihood(&self.tree, &self.atree, &factors)
    }
}

/// Reduction statistics for one network and evidence set.
#[derive(Debug, Clone)]
pub struct StatsReport {
    /// Per variable: original domain size and abstract block count.
    pub variables: Vec<VariableStat>,
    /// Clique and separator statistics on the abstracted network's tree.
    pub savings: SavingsReport,
    pub variable_total_original: usize,
    pub variable_total_abstract: usize,
}

#[derive(Debug, Clone)]
pub struct VariableStat {
    pub name: String,
    pub original: usize,
    pub abstracted: usize,
}

/// Full abstraction statistics: per-variable domain reduction from the
/// network-level pass, clique and directed-separator reductions from the
/// message-level pass on the abstracted network's tree.
pub fn stats(
    net: &Network,
    ev: &Evidence,
    options: &InferOptions,
) -> Result<(AbstractNetwork, CliqueTree, StatsReport), crate::abstractor::AbstractorError> {
    let abs = value_abstract(net, ev, &options.config())?;
    let tree = build_clique_tree(&abs.network, options.heuristic);
    let factors = attach_evidence(&tree, &abs.network, &Evidence::new());
    let atree = propagate_abstractions(&tree, clique_abstractions(&factors, options.eps));
    let savings = savings_report(&tree, &atree);
    let variables: Vec<VariableStat> = net
        .variables
        .iter()
        .map(|v| VariableStat {
            name: v.name.clone(),
            original: v.domain.len(),
            abstracted: abs.partitions[v.id].num_blocks(),
        })
        .collect();
    let variable_total_original = variables.iter().map(|v| v.original).sum();
    let variable_total_abstract = variables.iter().map(|v| v.abstracted).sum();
    let report = StatsReport {
        variables,
        savings,
        variable_total_original,
        variable_total_abstract,
    };
    Ok((abs, tree, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{dice_network, random_evidence, random_network, RandomNetworkConfig};
    use crate::oracle;

    fn assert_close(a: f64, b: f64, tol: f64) {
        if a == b {
            return;
        }
        assert!(
            (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0),
            "{a} vs {b}"
        );
    }

    #[test]
    fn three_modes_agree_on_dice() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let mut ev = crate::model::Evidence::new();
        ev.set(2, vec![1]).unwrap();
        let expect = 0.5f64.ln();
        for mode in [
            AbstractionMode::None,
            AbstractionMode::ValueAbstractOnly,
            AbstractionMode::Full,
        ] {
            let options = InferOptions {
                mode,
                ..Default::default()
            };
            assert_close(infer_ln_likelihood(&net, &ev, &options), expect, 1e-9);
        }
    }

    #[test]
    fn modes_agree_on_random_networks() {
        let cfg = RandomNetworkConfig::default();
        for seed in 0..25 {
            let net = random_network(seed, &cfg);
            let ev = random_evidence(&net, seed.wrapping_mul(31).wrapping_add(7));
            let reference = oracle::enumerate_likelihood(&net, &ev, &Default::default()).unwrap();
            let expect = if reference == 0.0 {
                f64::NEG_INFINITY
            } else {
                reference.ln()
            };
            for mode in [
                AbstractionMode::None,
                AbstractionMode::ValueAbstractOnly,
                AbstractionMode::Full,
            ] {
                let options = InferOptions {
                    mode,
                    ..Default::default()
                };
                let got = infer_ln_likelihood(&net, &ev, &options);
                if expect == f64::NEG_INFINITY {
                    assert_eq!(got, f64::NEG_INFINITY, "seed {seed}, mode {mode:?}");
                } else {
                    assert_close(got, expect, 1e-9);
                }
            }
        }
    }

    #[test]
    fn combination_route_agrees() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let mut ev = crate::model::Evidence::new();
        ev.set(2, vec![1]).unwrap();
        let factor_first = infer_ln_likelihood(&net, &ev, &Default::default());
        let options = InferOptions {
            clique_route: CliqueRoute::Combination,
            ..Default::default()
        };
        assert_close(
            infer_ln_likelihood(&net, &ev, &options),
            factor_first,
            1e-12,
        );
    }

    #[test]
    fn stats_trivial_without_evidence() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let (_, _, report) =
            stats(&net, &crate::model::Evidence::new(), &Default::default()).unwrap();
        for v in &report.variables {
            assert_eq!(v.abstracted, 1);
        }
    }

    #[test]
    fn stats_reports_dice_reduction() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let mut ev = crate::model::Evidence::new();
        ev.set(2, vec![1]).unwrap();
        let (_, _, report) = stats(&net, &ev, &Default::default()).unwrap();
        let dice = report.variables.iter().find(|v| v.name == "Dice").unwrap();
        assert_eq!(dice.original, 6);
        assert_eq!(dice.abstracted, 2);
    }
}
