//! Differentially private publication of categorical tables.
//!
//! A trusted curator learns a noisy Bayesian network over the attributes,
//! groups attributes by Markov blanket, and perturbs each group with a
//! randomized-response channel followed by an estimated inverse channel
//! (an invariant post-randomization). In local mode every client applies
//! randomized response to its own record and the server runs the same
//! second-stage perturbation on the noisy data only.
//!
//! ```
//! use dp2pub_core::{publish, synth, PipelineConfig};
//!
//! let data = synth::planted_pairs(2000, 4, 7);
//! let config = PipelineConfig { epsilon: 1.0, seed: 7, ..Default::default() };
//! let (published, report) = publish(&data, &config).unwrap();
//! assert_eq!(published.len(), data.len());
//! assert_eq!(report.attributes, 4);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayesnet;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod info;
pub mod local;
pub mod pipeline;
pub mod pram;
pub mod seed;
pub mod synth;

pub use bayesnet::{
    build_dp_network, build_greedy_network, kl_network_divergence, ApPair, BayesianNetwork, NamedApPair,
};
pub use cluster::{
    budget_allocation, cluster_attributes, cluster_importance, markov_blanket, BudgetRule, Cluster, ClusterMembers,
    Clustering, HeadRule,
};
pub use data::{
    empirical_marginal, load_csv, read_csv, save_csv, write_csv, Attribute, AttributeSchema, DistributionVector,
    EncodedDataset,
};
pub use error::{Error, Result};
pub use eval::{alpha_way_avg, avd, default_alphas, run_sweep, SweepConfig, SweepReport};
pub use info::{entropy, joint_entropy, mi_sensitivity, mutual_information};
pub use local::{LocalBudget, NoisyRecord};
pub use pipeline::{publish, Mode, PipelineConfig, PublicationReport};
pub use pram::{estimate_distribution, inverse_channel, rr_matrix, TransitionMatrix};
pub use seed::{Seeder, Stage};
