//! Core discrete Bayesian-network representation: variables, domains,
//! conditional probability tables, evidence, and validation.
//!
//! Values are referenced internally by dense 0-based indices; labels appear
//! only at the I/O boundary. CPT tables are flat, indexed row-major over the
//! ordered parent list with the last parent varying fastest, child value
//! contiguous innermost: `table[config * child_size + child_value]`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::partition::VarId;

/// Tolerance for probability-row normalization checks.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parent relation contains a cycle")]
    CyclicGraph,
    #[error("CPT rows of {variable} at parent configuration {config} sum to {sum}, not 1")]
    RowSumViolation {
        variable: String,
        config: usize,
        sum: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("duplicate domain label {label:?} in variable {variable}")]
    DuplicateLabel { variable: String, label: String },
    #[error("variable {0} is missing a CPT or has more than one")]
    CptCoverage(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown label {label:?} for variable {variable}")]
    UnknownLabel { variable: String, label: String },
    #[error("evidence subset for variable {0} is empty")]
    EmptyEvidence(String),
    #[error("invalid file: {0}")]
    Parse(String),
}

/// A discrete variable: dense id, display name, ordered value labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub domain: Vec<String>,
}

impl Variable {
    pub fn domain_size(&self) -> usize {
        self.domain.len()
    }
}

/// Conditional probability table of one variable given its ordered parents.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub child: VarId,
    pub parents: Vec<VarId>,
    /// `table[config * |Val(child)| + value]`, configs row-major over the
    /// parent list with the last parent varying fastest.
    pub table: Vec<f64>,
}

/// A Bayesian network: one CPT per variable over an acyclic parent relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub variables: Vec<Variable>,
    pub cpts: Vec<Cpt>,
}

impl Network {
    pub fn var_count(&self) -> usize {
        self.variables.len()
    }

    pub fn domain_size(&self, var: VarId) -> usize {
        self.variables[var].domain.len()
    }

    pub fn cpt(&self, var: VarId) -> &Cpt {
        &self.cpts[var]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Children of each variable, ascending, indexed by variable id.
    pub fn children(&self) -> Vec<Vec<VarId>> {
        let mut children = vec![Vec::new(); self.var_count()];
        for cpt in &self.cpts {
            for &p in &cpt.parents {
                children[p].push(cpt.child);
            }
        }
        children
    }

    /// Number of parent configurations of `var`'s CPT.
    pub fn config_count(&self, var: VarId) -> usize {
        self.cpts[var]
            .parents
            .iter()
            .map(|&p| self.domain_size(p))
            .product()
    }
}

/// Evidence: per variable, a non-empty subset of observed value indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    observed: BTreeMap<VarId, Vec<usize>>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    /// Records an observation; value indices are deduplicated and sorted.
    /// A variable may be set at most once.
    pub fn set(&mut self, var: VarId, mut values: Vec<usize>) -> Result<(), ModelError> {
        values.sort_unstable();
        values.dedup();
        if values.is_empty() {
            return Err(ModelError::EmptyEvidence(var.to_string()));
        }
        if self.observed.contains_key(&var) {
            return Err(ModelError::Parse(format!(
                "variable {var} observed more than once"
            )));
        }
        self.observed.insert(var, values);
        Ok(())
    }

    pub fn get(&self, var: VarId) -> Option<&[usize]> {
        self.observed.get(&var).map(|v| v.as_slice())
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.observed.contains_key(&var)
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &[usize])> {
        self.observed.iter().map(|(&v, s)| (v, s.as_slice()))
    }

    /// True iff `value` of `var` is allowed by the evidence.
    pub fn allows(&self, var: VarId, value: usize) -> bool {
        match self.observed.get(&var) {
            Some(values) => values.binary_search(&value).is_ok(),
            None => true,
        }
    }
}

/// Checks all structural invariants: dense ids, unique labels, exactly one
/// CPT per variable, acyclic parents, table shapes, and row normalization.
pub fn validate_network(net: &Network) -> Result<(), ModelError> {
    let n = net.variables.len();
    let mut names = HashMap::new();
    for (i, var) in net.variables.iter().enumerate() {
        if var.id != i {
            return Err(ModelError::ShapeMismatch(format!(
                "variable {} carries id {}, expected {}",
                var.name, var.id, i
            )));
        }
        if var.domain.is_empty() {
            return Err(ModelError::ShapeMismatch(format!(
                "variable {} has an empty domain",
                var.name
            )));
        }
        if names.insert(var.name.clone(), i).is_some() {
            return Err(ModelError::ShapeMismatch(format!(
                "duplicate variable name {:?}",
                var.name
            )));
        }
        let mut labels = HashMap::new();
        for label in &var.domain {
            if labels.insert(label, ()).is_some() {
                return Err(ModelError::DuplicateLabel {
                    variable: var.name.clone(),
                    label: label.clone(),
                });
            }
        }
    }
    if net.cpts.len() != n {
        return Err(ModelError::ShapeMismatch(format!(
            "{} variables but {} CPTs",
            n,
            net.cpts.len()
        )));
    }
    let mut covered = vec![false; n];
    for (pos, cpt) in net.cpts.iter().enumerate() {
        if cpt.child >= n {
            return Err(ModelError::ShapeMismatch(format!(
                "CPT child id {} out of range",
                cpt.child
            )));
        }
        // CPTs are stored positionally: cpts[v] is the table of variable v
        if cpt.child != pos {
            return Err(ModelError::ShapeMismatch(format!(
                "CPT at position {pos} has child {}",
                cpt.child
            )));
        }
        if covered[cpt.child] {
            return Err(ModelError::CptCoverage(
                net.variables[cpt.child].name.clone(),
            ));
        }
        covered[cpt.child] = true;
        let mut seen_parents = vec![false; n];
        for &p in &cpt.parents {
            if p >= n {
                return Err(ModelError::ShapeMismatch(format!(
                    "parent id {p} out of range in CPT of {}",
                    net.variables[cpt.child].name
                )));
            }
            if seen_parents[p] {
                return Err(ModelError::ShapeMismatch(format!(
                    "duplicate parent {} in CPT of {}",
                    net.variables[p].name, net.variables[cpt.child].name
                )));
            }
            seen_parents[p] = true;
        }
        let child_size = net.domain_size(cpt.child);
        let configs: usize = cpt.parents.iter().map(|&p| net.domain_size(p)).product();
        if cpt.table.len() != configs * child_size {
            return Err(ModelError::ShapeMismatch(format!(
                "CPT of {} has {} entries, expected {}",
                net.variables[cpt.child].name,
                cpt.table.len(),
                configs * child_size
            )));
        }
        for (config, row) in cpt.table.chunks(child_size).enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(ModelError::ShapeMismatch(format!(
                    "CPT of {} contains a value outside [0, 1]",
                    net.variables[cpt.child].name
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::RowSumViolation {
                    variable: net.variables[cpt.child].name.clone(),
                    config,
                    sum,
                });
            }
        }
    }
    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(ModelError::CptCoverage(net.variables[missing].name.clone()));
    }
    topological_order(net).map(|_| ())
}

/// Topological order of variable ids: parents before children, ties broken
/// by ascending id.
pub fn topological_order(net: &Network) -> Result<Vec<VarId>, ModelError> {
    let n = net.var_count();
    let mut indegree = vec![0usize; n];
    let children = net.children();
    for cpt in &net.cpts {
        indegree[cpt.child] = cpt.parents.len();
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<VarId>> = indegree
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d == 0)
        .map(|(v, _)| std::cmp::Reverse(v))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(std::cmp::Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(ModelError::CyclicGraph);
    }
    Ok(order)
}

/// 0/1 indicator over `Val(var)`: 1 iff the value is allowed by the evidence.
pub fn evidence_indicator(net: &Network, var: VarId, ev: &Evidence) -> Vec<f64> {
    (0..net.domain_size(var))
        .map(|v| if ev.allows(var, v) { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct VariableFile {
    name: String,
    domain: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CptFile {
    child: String,
    parents: Vec<String>,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    variables: Vec<VariableFile>,
    cpts: Vec<CptFile>,
}

impl Network {
    /// Parses the JSON network format. The parsed network is validated.
    pub fn from_json_str(text: &str) -> Result<Network, ModelError> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let mut ids = HashMap::new();
        let variables: Vec<Variable> = file
            .variables
            .into_iter()
            .enumerate()
            .map(|(id, v)| {
                ids.insert(v.name.clone(), id);
                Variable {
                    id,
                    name: v.name,
                    domain: v.domain,
                }
            })
            .collect();
        let lookup = |name: &str| -> Result<VarId, ModelError> {
            ids.get(name)
                .copied()
                .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
        };
        let mut cpts: Vec<Option<Cpt>> = vec![None; variables.len()];
        for cpt in file.cpts {
            let child = lookup(&cpt.child)?;
            let parents = cpt
                .parents
                .iter()
                .map(|p| lookup(p))
                .collect::<Result<Vec<_>, _>>()?;
            if cpts[child].is_some() {
                return Err(ModelError::CptCoverage(cpt.child));
            }
            cpts[child] = Some(Cpt {
                child,
                parents,
                table: cpt.table,
            });
        }
        let cpts = cpts
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| ModelError::CptCoverage(variables[i].name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let net = Network { variables, cpts };
        validate_network(&net)?;
        Ok(net)
    }

    /// Serializes to the JSON network format.
    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            variables: self
                .variables
                .iter()
                .map(|v| VariableFile {
                    name: v.name.clone(),
                    domain: v.domain.clone(),
                })
                .collect(),
            cpts: self
                .cpts
                .iter()
                .map(|c| CptFile {
                    child: self.variables[c.child].name.clone(),
                    parents: c
                        .parents
                        .iter()
                        .map(|&p| self.variables[p].name.clone())
                        .collect(),
                    table: c.table.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
    }
}

impl Evidence {
    /// Parses the JSON evidence format: an object mapping variable name to a
    /// label or an array of labels.
    pub fn from_json_str(text: &str, net: &Network) -> Result<Evidence, ModelError> {
        let file: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let mut ev = Evidence::new();
        for (name, value) in file {
            let var = net
                .var_by_name(&name)
                .ok_or_else(|| ModelError::UnknownVariable(name.clone()))?;
            let labels: Vec<String> = match value {
                serde_json::Value::String(s) => vec![s],
                serde_json::Value::Array(items) => items
                    .into_iter()
                    .map(|item| match item {
                        serde_json::Value::String(s) => Ok(s),
                        other => Err(ModelError::Parse(format!(
                            "evidence for {name} contains a non-string entry: {other}"
                        ))),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                other => {
                    return Err(ModelError::Parse(format!(
                        "evidence for {name} must be a label or array of labels, got {other}"
                    )))
                }
            };
            let indices = labels
                .iter()
                .map(|label| {
                    net.variables[var]
                        .domain
                        .iter()
                        .position(|d| d == label)
                        .ok_or_else(|| ModelError::UnknownLabel {
                            variable: name.clone(),
                            label: label.clone(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            ev.set(var, indices)?;
        }
        Ok(ev)
    }

    /// Serializes to the JSON evidence format using the network's labels.
    pub fn to_json_string(&self, net: &Network) -> String {
        let mut file = BTreeMap::new();
        for (var, values) in self.iter() {
            let labels: Vec<&str> = values
                .iter()
                .map(|&v| net.variables[var].domain[v].as_str())
                .collect();
            let value = if labels.len() == 1 {
                serde_json::Value::String(labels[0].to_string())
            } else {
                serde_json::Value::Array(
                    labels
                        .iter()
                        .map(|l| serde_json::Value::String(l.to_string()))
                        .collect(),
                )
            };
            file.insert(net.variables[var].name.clone(), value);
        }
        serde_json::to_string_pretty(&file).expect("evidence serialization cannot fail")
    }
}

/// Convenience constructor used across tests and generators.
pub fn variable(id: VarId, name: &str, labels: &[&str]) -> Variable {
    Variable {
        id,
        name: name.to_string(),
        domain: labels.iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_binary(prior: [f64; 2]) -> Network {
        Network {
            variables: vec![variable(0, "X", &["0", "1"])],
            cpts: vec![Cpt {
                child: 0,
                parents: vec![],
                table: prior.to_vec(),
            }],
        }
    }

    #[test]
    fn validate_minimal_network() {
        assert!(validate_network(&single_binary([0.5, 0.5])).is_ok());
    }

    #[test]
    fn validate_rejects_bad_row_sum() {
        let err = validate_network(&single_binary([0.6, 0.6])).unwrap_err();
        match err {
            ModelError::RowSumViolation {
                variable,
                config,
                sum,
            } => {
                assert_eq!(variable, "X");
                assert_eq!(config, 0);
                assert!((sum - 1.2).abs() < 1e-12);
            }
            other => panic!("expected RowSumViolation, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_two_cycle() {
        let net = Network {
            variables: vec![variable(0, "A", &["0", "1"]), variable(1, "B", &["0", "1"])],
            cpts: vec![
                Cpt {
                    child: 0,
                    parents: vec![1],
                    table: vec![0.5, 0.5, 0.5, 0.5],
                },
                Cpt {
                    child: 1,
                    parents: vec![0],
                    table: vec![0.5, 0.5, 0.5, 0.5],
                },
            ],
        };
        assert!(matches!(
            validate_network(&net).unwrap_err(),
            ModelError::CyclicGraph
        ));
    }

    fn chain3() -> Network {
        let flip = vec![0.9, 0.1, 0.1, 0.9];
        Network {
            variables: vec![
                variable(0, "X1", &["0", "1"]),
                variable(1, "X2", &["0", "1"]),
                variable(2, "X3", &["0", "1"]),
            ],
            cpts: vec![
                Cpt {
                    child: 0,
                    parents: vec![],
                    table: vec![0.3, 0.7],
                },
                Cpt {
                    child: 1,
                    parents: vec![0],
                    table: flip.clone(),
                },
                Cpt {
                    child: 2,
                    parents: vec![1],
                    table: flip,
                },
            ],
        }
    }

    #[test]
    fn validate_rejects_duplicate_parent() {
        let net = Network {
            variables: vec![variable(0, "A", &["0", "1"]), variable(1, "B", &["0", "1"])],
            cpts: vec![
                Cpt {
                    child: 0,
                    parents: vec![],
                    table: vec![0.5, 0.5],
                },
                Cpt {
                    child: 1,
                    parents: vec![0, 0],
                    table: vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
                },
            ],
        };
        assert!(matches!(
            validate_network(&net).unwrap_err(),
            ModelError::ShapeMismatch(_)
        ));
    }

    #[test]
    fn topological_order_chain() {
        assert_eq!(topological_order(&chain3()).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn topological_order_ties_by_id() {
        let net = Network {
            variables: vec![
                variable(0, "B", &["0"]),
                variable(1, "C", &["0"]),
                variable(2, "A", &["0"]),
            ],
            cpts: (0..3)
                .map(|i| Cpt {
                    child: i,
                    parents: vec![],
                    table: vec![1.0],
                })
                .collect(),
        };
        assert_eq!(topological_order(&net).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn topological_order_v_structure() {
        let net = Network {
            variables: vec![
                variable(0, "X1", &["0", "1"]),
                variable(1, "X2", &["0", "1"]),
                variable(2, "X3", &["0", "1"]),
            ],
            cpts: vec![
                Cpt {
                    child: 0,
                    parents: vec![],
                    table: vec![0.5, 0.5],
                },
                Cpt {
                    child: 1,
                    parents: vec![],
                    table: vec![0.5, 0.5],
                },
                Cpt {
                    child: 2,
                    parents: vec![0, 1],
                    table: vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
                },
            ],
        };
        assert_eq!(topological_order(&net).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn indicator_reflects_evidence() {
        let net = chain3();
        let mut ev = Evidence::new();
        ev.set(0, vec![0]).unwrap();
        assert_eq!(evidence_indicator(&net, 0, &ev), vec![1.0, 0.0]);
        assert_eq!(evidence_indicator(&net, 1, &ev), vec![1.0, 1.0]);

        let dice = Network {
            variables: vec![variable(0, "Dice", &["1", "2", "3", "4", "5", "6"])],
            cpts: vec![Cpt {
                child: 0,
                parents: vec![],
                table: vec![1.0 / 6.0; 6],
            }],
        };
        let mut ev = Evidence::new();
        ev.set(0, vec![0, 2, 4]).unwrap();
        assert_eq!(
            evidence_indicator(&dice, 0, &ev),
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn network_json_round_trip() {
        let net = chain3();
        let text = net.to_json_string();
        let parsed = Network::from_json_str(&text).unwrap();
        assert_eq!(parsed, net);
    }

    #[test]
    fn evidence_json_round_trip() {
        let net = chain3();
        let text = r#"{"X1": "1", "X3": ["0", "1"]}"#;
        let ev = Evidence::from_json_str(text, &net).unwrap();
        assert_eq!(ev.get(0), Some(&[1usize][..]));
        assert_eq!(ev.get(2), Some(&[0usize, 1][..]));
        let back = Evidence::from_json_str(&ev.to_json_string(&net), &net).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn evidence_rejects_unknown_label() {
        let net = chain3();
        let err = Evidence::from_json_str(r#"{"X1": "5"}"#, &net).unwrap_err();
        assert!(matches!(err, ModelError::UnknownLabel { .. }));
    }
}
