//! Exact inference for discrete Bayesian networks, sped up by
//! evidence-specific value abstraction.
//!
//! The engine groups variable values that the current evidence cannot tell
//! apart and runs clique-tree inference over the grouped (abstract) values,
//! at both the network level ([`abstractor`]) and the message level inside a
//! clique tree ([`abstract_propagation`]). A genetic-linkage front-end
//! ([`pedigree`]) compiles pedigrees into networks and scans recombination
//! fractions under fixed evidence, which is where repeated likelihood
//! evaluations make the abstraction pay off.

pub mod abstract_propagation;
pub mod abstractor;
pub mod generate;
pub mod jointree;
pub mod meter;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod pedigree;
pub mod pipeline;
