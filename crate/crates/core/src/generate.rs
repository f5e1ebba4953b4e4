//! Seeded generators for the synthetic test families: random networks with
//! structural zeros, the dice-game network, chains, and parametric pedigree
//! families (trio, three-generation, untyped-allele). Everything is
//! deterministic given the seed, so fixtures are reproducible byte for byte.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::model::{variable, Cpt, Evidence, Network, VarId};
use crate::pedigree::{
    Individual, Locus, LocusKind, ObservationValue, PedigreeProblem, Penetrance, Sex,
};

/// Shape limits for random networks.
#[derive(Debug, Clone, Copy)]
pub struct RandomNetworkConfig {
    pub min_vars: usize,
    pub max_vars: usize,
    pub max_domain: usize,
    pub max_indegree: usize,
    /// Probability that a CPT cell is forced to zero before normalization.
    pub zero_fraction: f64,
    /// Upper bound on the joint state count (keeps the oracle fast).
    pub max_joint_states: usize,
}

impl Default for RandomNetworkConfig {
    fn default() -> Self {
        RandomNetworkConfig {
            min_vars: 8,
            max_vars: 12,
            max_domain: 4,
            max_indegree: 3,
            zero_fraction: 0.2,
            max_joint_states: 200_000,
        }
    }
}

/// A random valid network: random DAG (edges only from lower to higher id),
/// random domain sizes, Dirichlet-free random rows with structural zeros.
pub fn random_network(seed: u64, cfg: &RandomNetworkConfig) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(cfg.min_vars..=cfg.max_vars);
    let mut sizes = Vec::with_capacity(n);
    let mut joint = 1usize;
    for i in 0..n {
        // leave room for the remaining variables at size 2 each
        let reserve = 1usize << (n - i - 1);
        let cap = (cfg.max_joint_states / joint.saturating_mul(reserve)).max(2);
        let s = rng.gen_range(2..=cfg.max_domain.min(cap));
        joint = joint.saturating_mul(s);
        sizes.push(s);
    }
    let variables: Vec<_> = (0..n)
        .map(|i| {
            let labels: Vec<String> = (0..sizes[i]).map(|v| format!("v{v}")).collect();
            let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            variable(i, &format!("X{i}"), &refs)
        })
        .collect();
    let mut cpts = Vec::with_capacity(n);
    for child in 0..n {
        let max_parents = cfg.max_indegree.min(child);
        let k = if max_parents == 0 {
            0
        } else {
            rng.gen_range(0..=max_parents)
        };
        let mut parents: Vec<VarId> = (0..child).collect();
        parents.shuffle(&mut rng);
        let mut parents: Vec<VarId> = parents.into_iter().take(k).collect();
        parents.sort_unstable();
        let configs: usize = parents.iter().map(|&p| sizes[p]).product();
        let child_size = sizes[child];
        let mut table = Vec::with_capacity(configs * child_size);
        for _ in 0..configs {
            table.extend(random_row(&mut rng, child_size, cfg.zero_fraction));
        }
        cpts.push(Cpt {
            child,
            parents,
            table,
        });
    }
    Network { variables, cpts }
}

/// Like [`random_network`] but with CPT entries drawn from a small integer
/// grid before normalization, so exact row coincidences (and therefore
/// non-trivial value merges) actually occur.
pub fn random_gridded_network(seed: u64, cfg: &RandomNetworkConfig) -> Network {
    let mut net = random_network(seed, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1e9955bd1e995);
    for cpt in &mut net.cpts {
        let child_size = net.variables[cpt.child].domain.len();
        for row in cpt.table.chunks_mut(child_size) {
            loop {
                let raw: Vec<u32> = (0..child_size)
                    .map(|_| {
                        if rng.gen_bool(cfg.zero_fraction) {
                            0
                        } else {
                            rng.gen_range(1..=3)
                        }
                    })
                    .collect();
                let sum: u32 = raw.iter().sum();
                if sum == 0 {
                    continue;
                }
                for (cell, &r) in row.iter_mut().zip(&raw) {
                    *cell = r as f64 / sum as f64;
                }
                let total: f64 = row.iter().sum();
                let imax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                row[imax] += 1.0 - total;
                break;
            }
        }
    }
    net
}

/// One normalized CPT row with roughly `zero_fraction` structural zeros.
fn random_row(rng: &mut ChaCha8Rng, len: usize, zero_fraction: f64) -> Vec<f64> {
    loop {
        let mut row: Vec<f64> = (0..len)
            .map(|_| {
                if rng.gen_bool(zero_fraction) {
                    0.0
                } else {
                    rng.gen_range(0.05..1.0)
                }
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum == 0.0 {
            continue;
        }
        for x in &mut row {
            *x /= sum;
        }
        // repair rounding drift on the largest entry so the row sums to 1
        let total: f64 = row.iter().sum();
        let imax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        row[imax] += 1.0 - total;
        return row;
    }
}

/// Evidence for the random suite: every childless variable gets a singleton
/// observation, and a few internal variables get random singleton or subset
/// observations. Observing all sinks mirrors how evidence arrives in the
/// linkage domain (phenotype leaves) and keeps per-variable partitions
/// comparable against the value-grouping oracle.
pub fn random_evidence(net: &Network, seed: u64) -> Evidence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let children = net.children();
    let mut ev = Evidence::new();
    for v in 0..net.var_count() {
        let size = net.domain_size(v);
        if children[v].is_empty() {
            ev.set(v, vec![rng.gen_range(0..size)]).unwrap();
        } else if rng.gen_bool(0.25) {
            if rng.gen_bool(0.5) && size > 2 {
                // subset evidence: a random proper subset with >= 2 values
                let mut values: Vec<usize> = (0..size).collect();
                values.shuffle(&mut rng);
                let keep = rng.gen_range(2..size);
                ev.set(v, values.into_iter().take(keep).collect()).unwrap();
            } else {
                ev.set(v, vec![rng.gen_range(0..size)]).unwrap();
            }
        }
    }
    ev
}

/// The betting game: Bet in {odd, even}, a six-sided Dice, and Win = yes
/// exactly when the bet matches the dice parity.
pub fn dice_network(bet_probs: &[f64; 2], dice_probs: &[f64; 6]) -> Network {
    let variables = vec![
        variable(0, "Bet", &["odd", "even"]),
        variable(1, "Dice", &["1", "2", "3", "4", "5", "6"]),
        variable(2, "Win", &["no", "yes"]),
    ];
    let mut win_table = Vec::with_capacity(2 * 6 * 2);
    for bet in 0..2 {
        for dice in 0..6 {
            // dice value index 0 is the face "1" (odd); bet 0 is "odd"
            let dice_is_odd = dice % 2 == 0;
            let wins = (bet == 0) == dice_is_odd;
            win_table.push(if wins { 0.0 } else { 1.0 });
            win_table.push(if wins { 1.0 } else { 0.0 });
        }
    }
    Network {
        variables,
        cpts: vec![
            Cpt {
                child: 0,
                parents: vec![],
                table: bet_probs.to_vec(),
            },
            Cpt {
                child: 1,
                parents: vec![],
                table: dice_probs.to_vec(),
            },
            Cpt {
                child: 2,
                parents: vec![0, 1],
                table: win_table,
            },
        ],
    }
}

/// A binary Markov chain X1 -> X2 -> ... -> Xn with the given flip
/// probability on every edge and a uniform root.
pub fn binary_chain(n: usize, flip: f64) -> Network {
    assert!(n >= 1);
    let variables: Vec<_> = (0..n)
        .map(|i| variable(i, &format!("X{}", i + 1), &["0", "1"]))
        .collect();
    let mut cpts = vec![Cpt {
        child: 0,
        parents: vec![],
        table: vec![0.5, 0.5],
    }];
    for i in 1..n {
        cpts.push(Cpt {
            child: i,
            parents: vec![i - 1],
            table: vec![1.0 - flip, flip, flip, 1.0 - flip],
        });
    }
    Network { variables, cpts }
}

fn uniform_freqs(n: usize) -> Vec<f64> {
    let mut freqs = vec![1.0 / n as f64; n];
    let total: f64 = freqs.iter().sum();
    freqs[0] += 1.0 - total;
    freqs
}

fn marker_locus(name: &str, n_alleles: usize) -> Locus {
    Locus {
        name: name.to_string(),
        kind: LocusKind::Marker,
        alleles: (1..=n_alleles).map(|i| format!("a{i}")).collect(),
        founder_freqs: uniform_freqs(n_alleles),
        penetrance: None,
    }
}

fn trio_individuals() -> Vec<Individual> {
    vec![
        Individual {
            id: "father".into(),
            father: None,
            mother: None,
            sex: Sex::Male,
        },
        Individual {
            id: "mother".into(),
            father: None,
            mother: None,
            sex: Sex::Female,
        },
        Individual {
            id: "child".into(),
            father: Some("father".into()),
            mother: Some("mother".into()),
            sex: Sex::Unknown,
        },
    ]
}

/// Father, mother, child; four grandparents above them.
fn three_generation_individuals() -> Vec<Individual> {
    let founder = |id: &str, sex| Individual {
        id: id.into(),
        father: None,
        mother: None,
        sex,
    };
    vec![
        founder("gf1", Sex::Male),
        founder("gm1", Sex::Female),
        founder("gf2", Sex::Male),
        founder("gm2", Sex::Female),
        Individual {
            id: "father".into(),
            father: Some("gf1".into()),
            mother: Some("gm1".into()),
            sex: Sex::Male,
        },
        Individual {
            id: "mother".into(),
            father: Some("gf2".into()),
            mother: Some("gm2".into()),
            sex: Sex::Female,
        },
        Individual {
            id: "child".into(),
            father: Some("father".into()),
            mother: Some("mother".into()),
            sex: Sex::Unknown,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PedigreeShape {
    Trio,
    ThreeGeneration,
}

/// A pedigree with `n_loci` linked biallelic markers where the child is
/// typed heterozygous at every marker and everyone else is untyped.
pub fn typed_child_problem(shape: PedigreeShape, n_loci: usize, theta: f64) -> PedigreeProblem {
    let individuals = match shape {
        PedigreeShape::Trio => trio_individuals(),
        PedigreeShape::ThreeGeneration => three_generation_individuals(),
    };
    let loci: Vec<Locus> = (0..n_loci)
        .map(|i| marker_locus(&format!("M{}", i + 1), 2))
        .collect();
    let observations = loci
        .iter()
        .map(|locus| {
            (
                "child".to_string(),
                locus.name.clone(),
                crate::pedigree::ObservationValue::Alleles("a1".into(), "a2".into()),
            )
        })
        .collect();
    PedigreeProblem {
        individuals,
        loci,
        theta: vec![theta; n_loci.saturating_sub(1)],
        observations: observations_from(observations),
    }
}

/// The untyped-allele family: one marker with `n_alleles` alleles, typed
/// individuals (the child only) jointly exhibiting two alleles.
pub fn untyped_allele_problem(shape: PedigreeShape, n_alleles: usize) -> PedigreeProblem {
    let individuals = match shape {
        PedigreeShape::Trio => trio_individuals(),
        PedigreeShape::ThreeGeneration => three_generation_individuals(),
    };
    let loci = vec![marker_locus("M1", n_alleles)];
    let observations = vec![(
        "child".to_string(),
        "M1".to_string(),
        crate::pedigree::ObservationValue::Alleles("a1".into(), "a2".into()),
    )];
    PedigreeProblem {
        individuals,
        loci,
        theta: vec![],
        observations: observations_from(observations),
    }
}

/// A two-child sibship typed at two linked biallelic markers in a
/// phase-informative pattern: the father is heterozygous at both loci, the
/// mother homozygous, and both children received the same paternal pattern,
/// so the likelihood carries a theta^2 + (1-theta)^2 factor. A single child
/// of founder parents would be flat in theta (founder haplotypes are in
/// linkage equilibrium, so one phase-unknown meiosis is uninformative).
pub fn phase_informative_sibship(theta: f64) -> PedigreeProblem {
    let mut individuals = trio_individuals();
    individuals.push(Individual {
        id: "child2".into(),
        father: Some("father".into()),
        mother: Some("mother".into()),
        sex: Sex::Unknown,
    });
    let loci = vec![marker_locus("M1", 2), marker_locus("M2", 2)];
    let pair = |a: &str, b: &str| ObservationValue::Alleles(a.into(), b.into());
    let mut observations = vec![
        ("father".to_string(), "M1".to_string(), pair("a1", "a2")),
        ("father".to_string(), "M2".to_string(), pair("a1", "a2")),
        ("mother".to_string(), "M1".to_string(), pair("a1", "a1")),
        ("mother".to_string(), "M2".to_string(), pair("a1", "a1")),
    ];
    for child in ["child", "child2"] {
        observations.push((child.to_string(), "M1".to_string(), pair("a1", "a1")));
        observations.push((child.to_string(), "M2".to_string(), pair("a1", "a1")));
    }
    PedigreeProblem {
        individuals,
        loci,
        theta: vec![theta],
        observations: observations_from(observations),
    }
}

/// A trio with one biallelic marker linked to a dominant trait locus; the
/// child is typed at the marker and affected at the trait.
pub fn trait_trio_problem(theta: f64) -> PedigreeProblem {
    let trait_locus = Locus {
        name: "D".into(),
        kind: LocusKind::Trait,
        alleles: vec!["d".into(), "D".into()],
        founder_freqs: vec![0.9, 0.1],
        penetrance: Some(Penetrance {
            phenotypes: vec!["unaffected".into(), "affected".into()],
            // ordered genotypes (d,d), (d,D), (D,d), (D,D); D dominant
            table: vec![1.0, 0.0, 0.05, 0.95, 0.05, 0.95, 0.01, 0.99],
        }),
    };
    let observations = vec![
        (
            "child".to_string(),
            "M1".to_string(),
            crate::pedigree::ObservationValue::Alleles("a1".into(), "a2".into()),
        ),
        (
            "child".to_string(),
            "D".to_string(),
            crate::pedigree::ObservationValue::Phenotype("affected".into()),
        ),
    ];
    PedigreeProblem {
        individuals: trio_individuals(),
        loci: vec![marker_locus("M1", 2), trait_locus],
        theta: vec![theta],
        observations: observations_from(observations),
    }
}

fn observations_from(
    items: Vec<(String, String, crate::pedigree::ObservationValue)>,
) -> Vec<crate::pedigree::Observation> {
    items
        .into_iter()
        .map(|(individual, locus, value)| crate::pedigree::Observation {
            individual,
            locus,
            value,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_network;

    #[test]
    fn random_networks_validate() {
        for seed in 0..40 {
            let net = random_network(seed, &RandomNetworkConfig::default());
            validate_network(&net).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let joint: usize = net.variables.iter().map(|v| v.domain.len()).product();
            assert!(joint <= RandomNetworkConfig::default().max_joint_states);
        }
    }

    #[test]
    fn random_networks_are_deterministic() {
        let cfg = RandomNetworkConfig::default();
        assert_eq!(random_network(7, &cfg), random_network(7, &cfg));
        let net = random_network(7, &cfg);
        assert_eq!(random_evidence(&net, 3), random_evidence(&net, 3));
    }

    #[test]
    fn evidence_covers_all_sinks() {
        for seed in 0..20 {
            let net = random_network(seed, &RandomNetworkConfig::default());
            let ev = random_evidence(&net, seed ^ 0xabcd);
            let children = net.children();
            for v in 0..net.var_count() {
                if children[v].is_empty() {
                    let obs = ev.get(v).expect("sink must be observed");
                    assert_eq!(obs.len(), 1);
                }
            }
        }
    }

    #[test]
    fn dice_network_is_valid() {
        validate_network(&dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6])).unwrap();
        validate_network(&dice_network(
            &[0.6, 0.4],
            &[0.05, 0.1, 0.15, 0.2, 0.24, 0.26],
        ))
        .unwrap();
    }
}
