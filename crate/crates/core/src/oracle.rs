//! Brute-force reference implementations: joint enumeration for likelihoods
//! and posteriors, and value-grouping for maximally safe abstractions.
//!
//! Everything here is deliberately simple enough to trust by inspection and
//! is capped by an explicit state budget. Summation uses compensated
//! accumulation in plain (non-log) arithmetic.

use thiserror::Error;

use crate::model::{Evidence, Network, VarId};
use crate::partition::{JointDomain, Partition};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("joint state count {states} exceeds the enumeration budget {budget}")]
    BudgetExceeded { states: u128, budget: u64 },
}

/// Cap on the number of joint states the oracle will enumerate.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    pub max_states: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_states: 10_000_000,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn check_budget(net: &Network, budget: &EnumerationBudget) -> Result<(), OracleError> {
    let mut states: u128 = 1;
    for v in &net.variables {
        states = states.saturating_mul(v.domain.len() as u128);
    }
    if states > budget.max_states as u128 {
        return Err(OracleError::BudgetExceeded {
            states,
            budget: budget.max_states,
        });
    }
    Ok(())
}

/// Enumerates every joint assignment consistent with the per-variable allowed
/// sets and feeds the product of CPT entries to `visit(assignment, product)`.
fn for_each_joint(net: &Network, allowed: &[Vec<usize>], mut visit: impl FnMut(&[usize], f64)) {
    let n = net.var_count();
    if allowed.iter().any(|a| a.is_empty()) {
        return;
    }
    // digit i indexes into allowed[i]
    let mut digit = vec![0usize; n];
    let mut assignment: Vec<usize> = allowed.iter().map(|a| a[0]).collect();
    loop {
        let mut product = 1.0;
        for cpt in &net.cpts {
            let mut config = 0usize;
            for &p in &cpt.parents {
                config = config * net.domain_size(p) + assignment[p];
            }
            product *= cpt.table[config * net.domain_size(cpt.child) + assignment[cpt.child]];
            if product == 0.0 {
                break;
            }
        }
        visit(&assignment, product);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            digit[i] += 1;
            if digit[i] < allowed[i].len() {
                assignment[i] = allowed[i][digit[i]];
                break;
            }
            digit[i] = 0;
            assignment[i] = allowed[i][0];
        }
    }
}

fn allowed_values(net: &Network, ev: &Evidence) -> Vec<Vec<usize>> {
    (0..net.var_count())
        .map(|v| match ev.get(v) {
            Some(values) => values.to_vec(),
            None => (0..net.domain_size(v)).collect(),
        })
        .collect()
}

/// P(e | B): the exact sum over all evidence-consistent joint assignments of
/// the product of CPT entries.
pub fn enumerate_likelihood(
    net: &Network,
    ev: &Evidence,
    budget: &EnumerationBudget,
) -> Result<f64, OracleError> {
    check_budget(net, budget)?;
    let allowed = allowed_values(net, ev);
    let mut acc = KahanSum::default();
    for_each_joint(net, &allowed, |_, p| acc.add(p));
    Ok(acc.sum)
}

/// P(e, scope values | B) as a table over the (sorted) scope.
pub fn enumerate_posterior(
    net: &Network,
    ev: &Evidence,
    scope: &[VarId],
    budget: &EnumerationBudget,
) -> Result<(JointDomain, Vec<f64>), OracleError> {
    check_budget(net, budget)?;
    let domain = JointDomain::new(scope.iter().map(|&v| (v, net.domain_size(v))).collect())
        .expect("posterior scope must not repeat variables");
    let strides = domain.strides();
    let vars: Vec<VarId> = domain.var_ids().collect();
    let allowed = allowed_values(net, ev);
    let mut sums = vec![KahanSum::default(); domain.size()];
    for_each_joint(net, &allowed, |assignment, p| {
        let mut idx = 0usize;
        for (k, &v) in vars.iter().enumerate() {
            idx += assignment[v] * strides[k];
        }
        sums[idx].add(p);
    });
    Ok((domain, sums.iter().map(|k| k.sum).collect()))
}

/// Groups values of `var` by the value of P(e | X = x); values with
/// P(X = x) = 0 form the zero block (the conditional is undefined there).
pub fn maximally_safe_partition(
    net: &Network,
    ev: &Evidence,
    var: VarId,
    budget: &EnumerationBudget,
) -> Result<Partition, OracleError> {
    maximally_safe_partition_eps(net, ev, var, 0.0, budget)
}

/// Like [`maximally_safe_partition`] with the configurable equality test:
/// `eps == 0` groups by exact 64-bit equality; a positive `eps` clusters
/// conditionals whose relative gap is within `eps` against the cluster's
/// first member. Enumeration rounding can split mathematically equal
/// conditionals by a final ulp, so comparisons against computed groupings
/// pass a small positive `eps`.
pub fn maximally_safe_partition_eps(
    net: &Network,
    ev: &Evidence,
    var: VarId,
    eps: f64,
    budget: &EnumerationBudget,
) -> Result<Partition, OracleError> {
    let (_, joint) = enumerate_posterior(net, ev, &[var], budget)?;
    let (_, prior) = enumerate_posterior(net, &Evidence::new(), &[var], budget)?;
    let n = net.domain_size(var);
    let conditional: Vec<f64> = joint
        .iter()
        .zip(&prior)
        .map(|(&j, &p)| if p == 0.0 { f64::NAN } else { j / p })
        .collect();
    if eps == 0.0 {
        return Ok(Partition::from_keys_with_zero(
            n,
            |v| conditional[v].to_bits(),
            |v| prior[v] == 0.0,
        )
        .expect("variable domains are non-empty"));
    }
    let mut order: Vec<usize> = (0..n).filter(|&v| prior[v] != 0.0).collect();
    order.sort_by(|&a, &b| {
        conditional[a]
            .partial_cmp(&conditional[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut cluster_of = vec![usize::MAX; n];
    let mut anchor = f64::NAN;
    let mut cluster = usize::MAX;
    for &v in &order {
        let x = conditional[v];
        if cluster == usize::MAX || (x - anchor).abs() > eps * x.abs().max(anchor.abs()) {
            cluster = cluster.wrapping_add(1);
            anchor = x;
        }
        cluster_of[v] = cluster;
    }
    Ok(
        Partition::from_keys_with_zero(n, |v| cluster_of[v], |v| prior[v] == 0.0)
            .expect("variable domains are non-empty"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::dice_network;
    use crate::model::{variable, Cpt};

    #[test]
    fn no_evidence_sums_to_one() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let p = enumerate_likelihood(&net, &Evidence::new(), &Default::default()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dice_win_probability_is_half() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let win = net.var_by_name("Win").unwrap();
        let mut ev = Evidence::new();
        ev.set(win, vec![1]).unwrap();
        let p = enumerate_likelihood(&net, &ev, &Default::default()).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_empty_scope_is_likelihood() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let win = net.var_by_name("Win").unwrap();
        let mut ev = Evidence::new();
        ev.set(win, vec![1]).unwrap();
        let (domain, table) = enumerate_posterior(&net, &ev, &[], &Default::default()).unwrap();
        assert_eq!(domain.size(), 1);
        let like = enumerate_likelihood(&net, &ev, &Default::default()).unwrap();
        assert_eq!(table[0], like);
    }

    #[test]
    fn full_scope_no_evidence_sums_to_one() {
        let net = dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
        let (_, table) =
            enumerate_posterior(&net, &Evidence::new(), &[0, 1, 2], &Default::default()).unwrap();
        let total: f64 = table.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(table.len(), 2 * 6 * 2);
    }

    #[test]
    fn dice_partition_under_biased_bet() {
        // With a non-uniform bet the conditional likelihood separates the
        // parity classes; with a uniform bet both classes give 1/2 and the
        // grouping legitimately collapses to a single block.
        let net = dice_network(&[0.6, 0.4], &[1.0 / 6.0; 6]);
        let win = net.var_by_name("Win").unwrap();
        let dice = net.var_by_name("Dice").unwrap();
        let mut ev = Evidence::new();
        ev.set(win, vec![1]).unwrap();
        let p = maximally_safe_partition(&net, &ev, dice, &Default::default()).unwrap();
        assert_eq!(p.to_string(), "{0,2,4}|{1,3,5}");

        // Biasing the dice as well keeps the same partition: safety depends
        // on the likelihood columns, not on the dice prior. Dyadic priors
        // keep the exact-equality grouping free of rounding noise in the
        // conditional's division.
        let biased = dice_network(&[0.6, 0.4], &[0.25, 0.25, 0.125, 0.125, 0.125, 0.125]);
        let p = maximally_safe_partition(&biased, &ev, dice, &Default::default()).unwrap();
        assert_eq!(p.to_string(), "{0,2,4}|{1,3,5}");
    }

    #[test]
    fn no_evidence_gives_coarsest() {
        let net = dice_network(&[0.6, 0.4], &[1.0 / 6.0; 6]);
        for v in 0..net.var_count() {
            let p =
                maximally_safe_partition(&net, &Evidence::new(), v, &Default::default()).unwrap();
            assert!(p.is_coarsest(), "variable {v} grouped as {p}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let net = Network {
            variables: (0..30)
                .map(|i| variable(i, &format!("V{i}"), &["0", "1"]))
                .collect(),
            cpts: (0..30)
                .map(|i| Cpt {
                    child: i,
                    parents: vec![],
                    table: vec![0.5, 0.5],
                })
                .collect(),
        };
        let err = enumerate_likelihood(&net, &Evidence::new(), &Default::default()).unwrap_err();
        assert!(matches!(err, OracleError::BudgetExceeded { .. }));
    }
}
