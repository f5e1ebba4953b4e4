//! Genetic-linkage front-end: pedigree and loci data model, compilation into
//! a Bayesian network over per-haplotype allele variables and binary meiosis
//! selectors, and recombination-fraction likelihood scans.
//!
//! Per individual `i` and locus `A` the network holds `A[i,p]` and `A[i,m]`,
//! the paternal and maternal allele copies. A non-founder's copy is a
//! deterministic pick between the corresponding parent's two copies, driven
//! by a binary selector; selectors of adjacent loci form a Markov chain with
//! switch probability theta. Unordered marker typings become indicator
//! observation variables so the phase ambiguity survives until inference.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Cpt, Evidence, Network, VarId, Variable};

#[derive(Debug, Error)]
pub enum PedigreeError {
    #[error("invalid pedigree: {0}")]
    InvalidPedigree(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid scan: {0}")]
    InvalidScan(String),
    #[error("invalid file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct Individual {
    pub id: String,
    pub father: Option<String>,
    pub mother: Option<String>,
    pub sex: Sex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocusKind {
    Marker,
    Trait,
}

/// Penetrance of a trait locus: P(phenotype | ordered genotype), rows over
/// ordered pairs (paternal allele, maternal allele), phenotype innermost.
#[derive(Debug, Clone)]
pub struct Penetrance {
    pub phenotypes: Vec<String>,
    pub table: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Locus {
    pub name: String,
    pub kind: LocusKind,
    pub alleles: Vec<String>,
    pub founder_freqs: Vec<f64>,
    pub penetrance: Option<Penetrance>,
}

#[derive(Debug, Clone)]
pub enum ObservationValue {
    /// Unordered marker typing.
    Alleles(String, String),
    /// Trait phenotype label.
    Phenotype(String),
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub individual: String,
    pub locus: String,
    pub value: ObservationValue,
}

#[derive(Debug, Clone)]
pub struct PedigreeProblem {
    pub individuals: Vec<Individual>,
    /// Loci in map order.
    pub loci: Vec<Locus>,
    /// Recombination fraction between adjacent loci; length = loci - 1.
    pub theta: Vec<f64>,
    pub observations: Vec<Observation>,
}

/// Which haplotype or selector a compiled variable plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    HapPaternal,
    HapMaternal,
    SelectorPaternal,
    SelectorMaternal,
    Observation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NameMapEntry {
    pub variable: String,
    pub id: VarId,
    pub individual: String,
    pub locus: String,
    pub role: Role,
}

/// A selector CPT that depends on theta: the selectors of every locus after
/// the first. `locus` indexes the locus whose selector it is, so the entry
/// depends on `theta[locus - 1]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectorCpt {
    pub var: VarId,
    pub locus: usize,
}

#[derive(Debug, Clone)]
pub struct CompiledPedigree {
    pub network: Network,
    pub evidence: Evidence,
    pub name_map: Vec<NameMapEntry>,
    pub selector_cpts: Vec<SelectorCpt>,
}

impl CompiledPedigree {
    pub fn var(&self, individual: &str, locus: &str, role: Role) -> Option<VarId> {
        self.name_map
            .iter()
            .find(|e| e.individual == individual && e.locus == locus && e.role == role)
            .map(|e| e.id)
    }

    /// Rewrites the theta-dependent selector CPTs of the locus after map
    /// edge `edge_index` in place. Nothing else changes, in particular the
    /// network structure.
    pub fn set_edge_theta(&mut self, edge_index: usize, theta: f64) {
        let locus = edge_index + 1;
        for sel in &self.selector_cpts {
            if sel.locus == locus {
                self.network.cpts[sel.var].table = vec![1.0 - theta, theta, theta, 1.0 - theta];
            }
        }
    }

    pub fn name_map_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "variables": self.name_map,
            "selector_cpts": self.selector_cpts,
        }))
        .expect("name map serialization cannot fail")
    }
}

fn validate_problem(problem: &PedigreeProblem) -> Result<HashMap<String, usize>, PedigreeError> {
    if problem.individuals.is_empty() {
        return Err(PedigreeError::InvalidPedigree("empty pedigree".into()));
    }
    if problem.loci.is_empty() {
        return Err(PedigreeError::InvalidPedigree("no loci".into()));
    }
    if problem.theta.len() + 1 != problem.loci.len() {
        return Err(PedigreeError::InvalidPedigree(format!(
            "{} loci require {} theta values, got {}",
            problem.loci.len(),
            problem.loci.len() - 1,
            problem.theta.len()
        )));
    }
    for &t in &problem.theta {
        if !(0.0..=0.5).contains(&t) {
            return Err(PedigreeError::InvalidPedigree(format!(
                "theta {t} outside [0, 0.5]"
            )));
        }
    }
    let mut index = HashMap::new();
    for (i, ind) in problem.individuals.iter().enumerate() {
        if index.insert(ind.id.clone(), i).is_some() {
            return Err(PedigreeError::InvalidPedigree(format!(
                "duplicate individual {}",
                ind.id
            )));
        }
    }
    for ind in &problem.individuals {
        match (&ind.father, &ind.mother) {
            (None, None) => {}
            (Some(f), Some(m)) => {
                for parent in [f, m] {
                    if !index.contains_key(parent) {
                        return Err(PedigreeError::InvalidPedigree(format!(
                            "{} references missing parent {parent}",
                            ind.id
                        )));
                    }
                }
            }
            _ => {
                return Err(PedigreeError::InvalidPedigree(format!(
                    "{} must have both parents or neither",
                    ind.id
                )))
            }
        }
    }
    // ancestry must be acyclic
    let n = problem.individuals.len();
    let mut state = vec![0u8; n]; // 0 unvisited, 1 in progress, 2 done
    fn visit(
        problem: &PedigreeProblem,
        index: &HashMap<String, usize>,
        state: &mut Vec<u8>,
        i: usize,
    ) -> Result<(), PedigreeError> {
        if state[i] == 2 {
            return Ok(());
        }
        if state[i] == 1 {
            return Err(PedigreeError::InvalidPedigree(format!(
                "cyclic ancestry through {}",
                problem.individuals[i].id
            )));
        }
        state[i] = 1;
        for parent in [
            &problem.individuals[i].father,
            &problem.individuals[i].mother,
        ]
        .into_iter()
        .flatten()
        {
            visit(problem, index, state, index[parent])?;
        }
        state[i] = 2;
        Ok(())
    }
    for i in 0..n {
        visit(problem, &index, &mut state, i)?;
    }

    let mut locus_names = HashSet::new();
    for locus in &problem.loci {
        if !locus_names.insert(locus.name.clone()) {
            return Err(PedigreeError::InvalidPedigree(format!(
                "duplicate locus {}",
                locus.name
            )));
        }
        if locus.alleles.is_empty() {
            return Err(PedigreeError::InvalidPedigree(format!(
                "locus {} has no alleles",
                locus.name
            )));
        }
        if locus.founder_freqs.len() != locus.alleles.len() {
            return Err(PedigreeError::InvalidPedigree(format!(
                "locus {} has {} alleles but {} frequencies",
                locus.name,
                locus.alleles.len(),
                locus.founder_freqs.len()
            )));
        }
        let sum: f64 = locus.founder_freqs.iter().sum();
        if (sum - 1.0).abs() > crate::model::ROW_SUM_TOL {
            return Err(PedigreeError::InvalidPedigree(format!(
                "founder frequencies of {} sum to {sum}",
                locus.name
            )));
        }
        match (locus.kind, &locus.penetrance) {
            (LocusKind::Trait, Some(pen)) => {
                let n = locus.alleles.len();
                if pen.phenotypes.is_empty() || pen.table.len() != n * n * pen.phenotypes.len() {
                    return Err(PedigreeError::InvalidPedigree(format!(
                        "penetrance table of {} has the wrong shape",
                        locus.name
                    )));
                }
                for row in pen.table.chunks(pen.phenotypes.len()) {
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > crate::model::ROW_SUM_TOL {
                        return Err(PedigreeError::InvalidPedigree(format!(
                            "penetrance row of {} sums to {sum}",
                            locus.name
                        )));
                    }
                }
            }
            (LocusKind::Trait, None) => {
                return Err(PedigreeError::InvalidPedigree(format!(
                    "trait locus {} is missing a penetrance model",
                    locus.name
                )))
            }
            (LocusKind::Marker, Some(_)) => {
                return Err(PedigreeError::InvalidPedigree(format!(
                    "marker locus {} must not carry a penetrance model",
                    locus.name
                )))
            }
            (LocusKind::Marker, None) => {}
        }
    }

    let mut seen = HashSet::new();
    for obs in &problem.observations {
        if !index.contains_key(&obs.individual) {
            return Err(PedigreeError::InvalidObservation(format!(
                "unknown individual {}",
                obs.individual
            )));
        }
        let locus = problem
            .loci
            .iter()
            .find(|l| l.name == obs.locus)
            .ok_or_else(|| {
                PedigreeError::InvalidObservation(format!("unknown locus {}", obs.locus))
            })?;
        if !seen.insert((obs.individual.clone(), obs.locus.clone())) {
            return Err(PedigreeError::InvalidObservation(format!(
                "{} observed twice at {}",
                obs.individual, obs.locus
            )));
        }
        match (&obs.value, locus.kind) {
            (ObservationValue::Alleles(a, b), LocusKind::Marker) => {
                for allele in [a, b] {
                    if !locus.alleles.contains(allele) {
                        return Err(PedigreeError::InvalidObservation(format!(
                            "allele {allele} not in locus {}",
                            locus.name
                        )));
                    }
                }
            }
            (ObservationValue::Phenotype(ph), LocusKind::Trait) => {
                let pen = locus.penetrance.as_ref().expect("validated above");
                if !pen.phenotypes.contains(ph) {
                    return Err(PedigreeError::InvalidObservation(format!(
                        "phenotype {ph} not in locus {}",
                        locus.name
                    )));
                }
            }
            (ObservationValue::Alleles(..), LocusKind::Trait) => {
                return Err(PedigreeError::InvalidObservation(format!(
                    "allele typing given for trait locus {}",
                    locus.name
                )))
            }
            (ObservationValue::Phenotype(_), LocusKind::Marker) => {
                return Err(PedigreeError::InvalidObservation(format!(
                    "phenotype given for marker locus {}",
                    locus.name
                )))
            }
        }
    }
    Ok(index)
}

/// Compiles a pedigree problem into a network plus evidence.
pub fn compile(problem: &PedigreeProblem) -> Result<CompiledPedigree, PedigreeError> {
    let index = validate_problem(problem)?;
    let mut variables: Vec<Variable> = Vec::new();
    let mut cpts: Vec<Cpt> = Vec::new();
    let mut name_map: Vec<NameMapEntry> = Vec::new();
    let mut selector_cpts: Vec<SelectorCpt> = Vec::new();
    let mut evidence = Evidence::new();

    // (locus, individual, side 0=p/1=m) -> var id
    let mut hap: HashMap<(usize, usize, usize), VarId> = HashMap::new();
    let mut sel: HashMap<(usize, usize, usize), VarId> = HashMap::new();

    let push_var = |variables: &mut Vec<Variable>,
                    name_map: &mut Vec<NameMapEntry>,
                    name: String,
                    domain: Vec<String>,
                    individual: &str,
                    locus: &str,
                    role: Role| {
        let id = variables.len();
        variables.push(Variable {
            id,
            name: name.clone(),
            domain,
        });
        name_map.push(NameMapEntry {
            variable: name,
            id,
            individual: individual.to_string(),
            locus: locus.to_string(),
            role,
        });
        id
    };

    let observation_of = |ind: &str, locus: &str| {
        problem
            .observations
            .iter()
            .find(|o| o.individual == ind && o.locus == locus)
    };

    for (t, locus) in problem.loci.iter().enumerate() {
        let n = locus.alleles.len();
        // first create every haplotype and selector variable of this locus,
        // so inheritance CPTs can reference parents listed in any order
        for (i, ind) in problem.individuals.iter().enumerate() {
            let founder = ind.father.is_none();
            for (side, tag) in [(0, "p"), (1, "m")] {
                let role = if side == 0 {
                    Role::HapPaternal
                } else {
                    Role::HapMaternal
                };
                let id = push_var(
                    &mut variables,
                    &mut name_map,
                    format!("{}:{}:{}", locus.name, ind.id, tag),
                    locus.alleles.clone(),
                    &ind.id,
                    &locus.name,
                    role,
                );
                hap.insert((t, i, side), id);
                if founder {
                    cpts.push(Cpt {
                        child: id,
                        parents: vec![],
                        table: locus.founder_freqs.clone(),
                    });
                }
            }
            if !founder {
                for (side, tag) in [(0, "p"), (1, "m")] {
                    let role = if side == 0 {
                        Role::SelectorPaternal
                    } else {
                        Role::SelectorMaternal
                    };
                    let id = push_var(
                        &mut variables,
                        &mut name_map,
                        format!("{}:{}:S{}", locus.name, ind.id, tag),
                        vec!["0".into(), "1".into()],
                        &ind.id,
                        &locus.name,
                        role,
                    );
                    sel.insert((t, i, side), id);
                    if t == 0 {
                        cpts.push(Cpt {
                            child: id,
                            parents: vec![],
                            table: vec![0.5, 0.5],
                        });
                    } else {
                        let theta = problem.theta[t - 1];
                        let prev = sel[&(t - 1, i, side)];
                        cpts.push(Cpt {
                            child: id,
                            parents: vec![prev],
                            table: vec![1.0 - theta, theta, theta, 1.0 - theta],
                        });
                        selector_cpts.push(SelectorCpt { var: id, locus: t });
                    }
                }
            }
        }
        // then inheritance models and observations
        for (i, ind) in problem.individuals.iter().enumerate() {
            if ind.father.is_some() {
                // the copy from each parent is a deterministic pick between
                // that parent's two copies, driven by the selector
                for side in [0, 1] {
                    let parent_id = if side == 0 {
                        ind.father.as_ref().expect("non-founder has both parents")
                    } else {
                        ind.mother.as_ref().expect("non-founder has both parents")
                    };
                    let j = index[parent_id];
                    let child_hap = hap[&(t, i, side)];
                    let selector = sel[&(t, i, side)];
                    let parent_p = hap[&(t, j, 0)];
                    let parent_m = hap[&(t, j, 1)];
                    let mut table = Vec::with_capacity(2 * n * n * n);
                    for s in 0..2 {
                        for fp in 0..n {
                            for fm in 0..n {
                                let picked = if s == 0 { fp } else { fm };
                                for a in 0..n {
                                    table.push(if a == picked { 1.0 } else { 0.0 });
                                }
                            }
                        }
                    }
                    cpts.push(Cpt {
                        child: child_hap,
                        parents: vec![selector, parent_p, parent_m],
                        table,
                    });
                }
            }
            if let Some(obs) = observation_of(&ind.id, &locus.name) {
                let hap_p = hap[&(t, i, 0)];
                let hap_m = hap[&(t, i, 1)];
                match (&obs.value, locus.kind) {
                    (ObservationValue::Alleles(a, b), LocusKind::Marker) => {
                        let oa = locus.alleles.iter().position(|x| x == a).unwrap();
                        let ob = locus.alleles.iter().position(|x| x == b).unwrap();
                        let id = push_var(
                            &mut variables,
                            &mut name_map,
                            format!("{}:{}:obs", locus.name, ind.id),
                            vec!["no".into(), "yes".into()],
                            &ind.id,
                            &locus.name,
                            Role::Observation,
                        );
                        let mut table = Vec::with_capacity(n * n * 2);
                        for hp in 0..n {
                            for hm in 0..n {
                                let matches = (hp == oa && hm == ob) || (hp == ob && hm == oa);
                                table.push(if matches { 0.0 } else { 1.0 });
                                table.push(if matches { 1.0 } else { 0.0 });
                            }
                        }
                        cpts.push(Cpt {
                            child: id,
                            parents: vec![hap_p, hap_m],
                            table,
                        });
                        evidence.set(id, vec![1]).expect("fresh variable");
                    }
                    (ObservationValue::Phenotype(ph), LocusKind::Trait) => {
                        let pen = locus.penetrance.as_ref().expect("validated");
                        let id = push_var(
                            &mut variables,
                            &mut name_map,
                            format!("{}:{}:obs", locus.name, ind.id),
                            pen.phenotypes.clone(),
                            &ind.id,
                            &locus.name,
                            Role::Observation,
                        );
                        cpts.push(Cpt {
                            child: id,
                            parents: vec![hap_p, hap_m],
                            table: pen.table.clone(),
                        });
                        let value = pen.phenotypes.iter().position(|x| x == ph).unwrap();
                        evidence.set(id, vec![value]).expect("fresh variable");
                    }
                    _ => unreachable!("observation kinds validated"),
                }
            }
        }
    }

    // CPTs were pushed in variable-creation order keyed by child
    cpts.sort_by_key(|c| c.child);
    let network = Network { variables, cpts };
    crate::model::validate_network(&network)
        .map_err(|e| PedigreeError::InvalidPedigree(format!("compiled network invalid: {e}")))?;
    Ok(CompiledPedigree {
        network,
        evidence,
        name_map,
        selector_cpts,
    })
}

/// One grid point of a theta scan.
#[derive(Debug, Clone, Copy)]
pub struct ScanPoint {
    pub theta: f64,
    pub ln_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Recompute every abstraction at every grid point.
    Fresh,
    /// Compute abstractions once at the first feasible grid point and reuse
    /// them, verifying against a fresh run at the final point.
    ReuseAbstraction,
}

/// Outcome of the end-of-grid verification in reuse mode.
#[derive(Debug, Clone, Copy)]
pub struct ScanVerification {
    pub theta: f64,
    pub fresh: f64,
    pub reused: f64,
    pub discrepancy: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub edge_index: usize,
    pub mode: ScanMode,
    pub points: Vec<ScanPoint>,
    /// Present in reuse mode only.
    pub verification: Option<ScanVerification>,
}

/// Tolerance for the reuse-vs-fresh agreement check on log-likelihoods.
pub const REUSE_VERIFY_TOL: f64 = 1e-12;

/// Scans the recombination fraction of one map edge over a grid, rewriting
/// only the theta-dependent selector CPTs between points. Impossible
/// evidence yields -inf points rather than errors.
pub fn scan_theta(
    problem: &PedigreeProblem,
    edge_index: usize,
    grid: &[f64],
    mode: ScanMode,
    options: &crate::pipeline::InferOptions,
) -> Result<ScanResult, PedigreeError> {
    if problem.loci.len() < 2 {
        return Err(PedigreeError::InvalidScan(
            "a scan needs at least two loci".into(),
        ));
    }
    if edge_index + 1 >= problem.loci.len() {
        return Err(PedigreeError::InvalidScan(format!(
            "edge index {edge_index} out of range for {} loci",
            problem.loci.len()
        )));
    }
    if grid.is_empty() {
        return Err(PedigreeError::InvalidScan("empty grid".into()));
    }
    for &t in grid {
        if !(0.0..=0.5).contains(&t) {
            return Err(PedigreeError::InvalidScan(format!(
                "theta {t} out of range [0, 0.5]"
            )));
        }
    }
    let mut compiled = compile(problem)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut frozen: Option<crate::pipeline::FrozenAbstraction> = None;
    for &theta in grid {
        compiled.set_edge_theta(edge_index, theta);
        let ln = match mode {
            ScanMode::Fresh => {
                crate::pipeline::infer_ln_likelihood(&compiled.network, &compiled.evidence, options)
            }
            ScanMode::ReuseAbstraction => {
                if frozen.is_none() {
                    frozen = crate::pipeline::FrozenAbstraction::freeze(
                        &compiled.network,
                        &compiled.evidence,
                        options,
                    );
                }
                match &frozen {
                    Some(f) => f.ln_likelihood(&compiled.network),
                    None => f64::NEG_INFINITY,
                }
            }
        };
        points.push(ScanPoint {
            theta,
            ln_likelihood: ln,
        });
    }
    let verification = match mode {
        ScanMode::Fresh => None,
        ScanMode::ReuseAbstraction => {
            let theta = *grid.last().expect("grid is non-empty");
            compiled.set_edge_theta(edge_index, theta);
            let fresh = crate::pipeline::infer_ln_likelihood(
                &compiled.network,
                &compiled.evidence,
                options,
            );
            let reused = points.last().expect("grid is non-empty").ln_likelihood;
            let discrepancy = if fresh == reused {
                0.0
            } else {
                (fresh - reused).abs()
            };
            let passed = discrepancy <= REUSE_VERIFY_TOL * fresh.abs().max(reused.abs()).max(1.0);
            Some(ScanVerification {
                theta,
                fresh,
                reused,
                discrepancy,
                passed,
            })
        }
    };
    Ok(ScanResult {
        edge_index,
        mode,
        points,
        verification,
    })
}

#[derive(Serialize, Deserialize)]
struct PenetranceFile {
    phenotypes: Vec<String>,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LocusFile {
    name: String,
    kind: LocusKind,
    alleles: Vec<String>,
    freqs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    penetrance: Option<PenetranceFile>,
}

#[derive(Serialize, Deserialize)]
struct IndividualFile {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    father: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mother: Option<String>,
    #[serde(default = "default_sex")]
    sex: Sex,
}

fn default_sex() -> Sex {
    Sex::Unknown
}

#[derive(Serialize, Deserialize)]
struct ObservationFile {
    individual: String,
    locus: String,
    value: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct PedigreeFile {
    loci: Vec<LocusFile>,
    #[serde(default)]
    theta: Vec<f64>,
    individuals: Vec<IndividualFile>,
    #[serde(default)]
    observations: Vec<ObservationFile>,
}

impl PedigreeProblem {
    pub fn from_json_str(text: &str) -> Result<PedigreeProblem, PedigreeError> {
        let file: PedigreeFile =
            serde_json::from_str(text).map_err(|e| PedigreeError::Parse(e.to_string()))?;
        let loci: Vec<Locus> = file
            .loci
            .into_iter()
            .map(|l| Locus {
                name: l.name,
                kind: l.kind,
                alleles: l.alleles,
                founder_freqs: l.freqs,
                penetrance: l.penetrance.map(|p| Penetrance {
                    phenotypes: p.phenotypes,
                    table: p.table,
                }),
            })
            .collect();
        let individuals = file
            .individuals
            .into_iter()
            .map(|i| Individual {
                id: i.id,
                father: i.father,
                mother: i.mother,
                sex: i.sex,
            })
            .collect();
        let observations = file
            .observations
            .into_iter()
            .map(|o| {
                let value = match &o.value {
                    serde_json::Value::Array(items) if items.len() == 2 => {
                        let a = items[0].as_str().ok_or_else(|| {
                            PedigreeError::Parse("allele pair must hold strings".into())
                        })?;
                        let b = items[1].as_str().ok_or_else(|| {
                            PedigreeError::Parse("allele pair must hold strings".into())
                        })?;
                        ObservationValue::Alleles(a.to_string(), b.to_string())
                    }
                    serde_json::Value::String(s) => ObservationValue::Phenotype(s.clone()),
                    other => {
                        return Err(PedigreeError::Parse(format!(
                            "observation value must be [allele, allele] or a phenotype label, got {other}"
                        )))
                    }
                };
                Ok(Observation {
                    individual: o.individual,
                    locus: o.locus,
                    value,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PedigreeProblem {
            individuals,
            loci,
            theta: file.theta,
            observations,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = PedigreeFile {
            loci: self
                .loci
                .iter()
                .map(|l| LocusFile {
                    name: l.name.clone(),
                    kind: l.kind,
                    alleles: l.alleles.clone(),
                    freqs: l.founder_freqs.clone(),
                    penetrance: l.penetrance.as_ref().map(|p| PenetranceFile {
                        phenotypes: p.phenotypes.clone(),
                        table: p.table.clone(),
                    }),
                })
                .collect(),
            theta: self.theta.clone(),
            individuals: self
                .individuals
                .iter()
                .map(|i| IndividualFile {
                    id: i.id.clone(),
                    father: i.father.clone(),
                    mother: i.mother.clone(),
                    sex: i.sex,
                })
                .collect(),
            observations: self
                .observations
                .iter()
                .map(|o| ObservationFile {
                    individual: o.individual.clone(),
                    locus: o.locus.clone(),
                    value: match &o.value {
                        ObservationValue::Alleles(a, b) => serde_json::json!([a, b]),
                        ObservationValue::Phenotype(p) => serde_json::json!(p),
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("pedigree serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{typed_child_problem, untyped_allele_problem, PedigreeShape};
    use crate::model::validate_network;
    use crate::oracle;

    #[test]
    fn founder_only_compiles() {
        let problem = PedigreeProblem {
            individuals: vec![Individual {
                id: "solo".into(),
                father: None,
                mother: None,
                sex: Sex::Unknown,
            }],
            loci: vec![Locus {
                name: "M".into(),
                kind: LocusKind::Marker,
                alleles: vec!["a".into(), "A".into()],
                founder_freqs: vec![0.5, 0.5],
                penetrance: None,
            }],
            theta: vec![],
            observations: vec![],
        };
        let compiled = compile(&problem).unwrap();
        assert_eq!(compiled.network.var_count(), 2);
        assert!(compiled.evidence.is_empty());
        let p = oracle::enumerate_likelihood(
            &compiled.network,
            &compiled.evidence,
            &Default::default(),
        )
        .unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trio_variable_count_and_likelihood() {
        let problem = untyped_allele_problem(PedigreeShape::Trio, 2);
        let compiled = compile(&problem).unwrap();
        // 6 haplotype vars + 2 child selectors + 1 typing indicator
        assert_eq!(compiled.network.var_count(), 9);
        validate_network(&compiled.network).unwrap();
        let p = oracle::enumerate_likelihood(
            &compiled.network,
            &compiled.evidence,
            &Default::default(),
        )
        .unwrap();
        // child heterozygous {a1,a2} under uniform biallelic founders: 1/2
        assert!((p - 0.5).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn inheritance_rows_are_deterministic_picks() {
        let problem = untyped_allele_problem(PedigreeShape::Trio, 2);
        let compiled = compile(&problem).unwrap();
        let child_p = compiled.var("child", "M1", Role::HapPaternal).unwrap();
        let cpt = compiled.network.cpt(child_p);
        // parents: (selector, father's paternal, father's maternal)
        assert_eq!(cpt.parents.len(), 3);
        // selector = 0, father = (a1, a2) -> child copies a1 with certainty
        // config (s=0, fp=0, fm=1) => row index (0*2+0)*2+1 = 1
        assert_eq!(&cpt.table[1 * 2..1 * 2 + 2], &[1.0, 0.0]);
        // selector = 1 picks the maternal copy: config (1,0,1) => row 5
        assert_eq!(&cpt.table[5 * 2..5 * 2 + 2], &[0.0, 1.0]);
    }

    #[test]
    fn selector_list_covers_theta_tables() {
        let problem = typed_child_problem(PedigreeShape::Trio, 3, 0.1);
        let compiled = compile(&problem).unwrap();
        // child only non-founder: 2 selectors per locus, loci 1 and 2 depend
        // on theta
        assert_eq!(compiled.selector_cpts.len(), 4);
        let mut a = compiled.clone();
        let mut b = compiled.clone();
        a.set_edge_theta(0, 0.1);
        b.set_edge_theta(0, 0.3);
        let mut differing = Vec::new();
        for (x, y) in a.network.cpts.iter().zip(&b.network.cpts) {
            if x.table != y.table {
                differing.push(x.child);
            }
        }
        let expected: Vec<VarId> = compiled
            .selector_cpts
            .iter()
            .filter(|s| s.locus == 1)
            .map(|s| s.var)
            .collect();
        assert_eq!(differing, expected);
    }

    #[test]
    fn edge_rewrite_equals_recompilation() {
        let base = typed_child_problem(PedigreeShape::Trio, 3, 0.1);
        let mut rewritten = compile(&base).unwrap();
        rewritten.set_edge_theta(1, 0.35);
        let mut changed = base.clone();
        changed.theta[1] = 0.35;
        let recompiled = compile(&changed).unwrap();
        assert_eq!(rewritten.network, recompiled.network);
        // and only the selector tables of that locus differ from the base
        let original = compile(&base).unwrap();
        let expected: Vec<VarId> = original
            .selector_cpts
            .iter()
            .filter(|s| s.locus == 2)
            .map(|s| s.var)
            .collect();
        let differing: Vec<VarId> = original
            .network
            .cpts
            .iter()
            .zip(&recompiled.network.cpts)
            .filter(|(a, b)| a.table != b.table)
            .map(|(a, _)| a.child)
            .collect();
        assert_eq!(differing, expected);
    }

    #[test]
    fn unlinked_loci_factorize() {
        let multi = typed_child_problem(PedigreeShape::Trio, 2, 0.5);
        let compiled = compile(&multi).unwrap();
        let joint = oracle::enumerate_likelihood(
            &compiled.network,
            &compiled.evidence,
            &Default::default(),
        )
        .unwrap();
        let single = typed_child_problem(PedigreeShape::Trio, 1, 0.0);
        let compiled1 = compile(&single).unwrap();
        let p1 = oracle::enumerate_likelihood(
            &compiled1.network,
            &compiled1.evidence,
            &Default::default(),
        )
        .unwrap();
        assert!((joint - p1 * p1).abs() <= 1e-9 * joint.abs().max(1.0));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut problem = untyped_allele_problem(PedigreeShape::Trio, 2);
        problem.observations[0].value = ObservationValue::Alleles("a1".into(), "zz".into());
        assert!(matches!(
            compile(&problem),
            Err(PedigreeError::InvalidObservation(_))
        ));

        let mut problem = untyped_allele_problem(PedigreeShape::Trio, 2);
        problem.individuals[2].mother = None;
        assert!(matches!(
            compile(&problem),
            Err(PedigreeError::InvalidPedigree(_))
        ));

        let problem = PedigreeProblem {
            individuals: vec![],
            loci: vec![],
            theta: vec![],
            observations: vec![],
        };
        assert!(matches!(
            compile(&problem),
            Err(PedigreeError::InvalidPedigree(_))
        ));
    }

    #[test]
    fn cyclic_ancestry_is_rejected() {
        let problem = PedigreeProblem {
            individuals: vec![
                Individual {
                    id: "a".into(),
                    father: Some("b".into()),
                    mother: Some("m".into()),
                    sex: Sex::Male,
                },
                Individual {
                    id: "b".into(),
                    father: Some("a".into()),
                    mother: Some("m".into()),
                    sex: Sex::Male,
                },
                Individual {
                    id: "m".into(),
                    father: None,
                    mother: None,
                    sex: Sex::Female,
                },
            ],
            loci: vec![Locus {
                name: "M".into(),
                kind: LocusKind::Marker,
                alleles: vec!["a".into(), "A".into()],
                founder_freqs: vec![0.5, 0.5],
                penetrance: None,
            }],
            theta: vec![],
            observations: vec![],
        };
        match compile(&problem) {
            Err(PedigreeError::InvalidPedigree(msg)) => {
                assert!(msg.contains("cyclic"), "got: {msg}")
            }
            other => panic!("expected cyclic-ancestry error, got {other:?}"),
        }
    }

    #[test]
    fn scan_validates_its_inputs() {
        let options = crate::pipeline::InferOptions::default();
        let one_locus = untyped_allele_problem(PedigreeShape::Trio, 4);
        assert!(matches!(
            scan_theta(&one_locus, 0, &[0.1], ScanMode::Fresh, &options),
            Err(PedigreeError::InvalidScan(_))
        ));
        let two_loci = typed_child_problem(PedigreeShape::Trio, 2, 0.1);
        assert!(matches!(
            scan_theta(&two_loci, 0, &[0.1, 0.7], ScanMode::Fresh, &options),
            Err(PedigreeError::InvalidScan(_))
        ));
        assert!(matches!(
            scan_theta(&two_loci, 3, &[0.1], ScanMode::Fresh, &options),
            Err(PedigreeError::InvalidScan(_))
        ));
        assert!(matches!(
            scan_theta(&two_loci, 0, &[], ScanMode::Fresh, &options),
            Err(PedigreeError::InvalidScan(_))
        ));
    }

    #[test]
    fn pedigree_json_round_trip() {
        let problem = crate::generate::trait_trio_problem(0.2);
        let text = problem.to_json_string();
        let parsed = PedigreeProblem::from_json_str(&text).unwrap();
        let a = compile(&problem).unwrap();
        let b = compile(&parsed).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.evidence, b.evidence);
    }
}
