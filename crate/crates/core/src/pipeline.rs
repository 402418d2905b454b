//! End-to-end publication in trusted-curator and local mode.
//!
//! Seed layout: one master seed per publication. The network draws from
//! `(Network, 0)`, cluster heads from `(Clustering, 0)`, the trusted double
//! perturbation of attribute `a` from `(Perturbation, a)`, client `j` from
//! `(Client, j)` and the server-side perturbation of attribute `a` from
//! `(ServerPerturbation, a)`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bayesnet::{build_dp_network, NamedApPair};
use crate::cluster::{cluster_attributes, BudgetRule, Clustering, HeadRule};
use crate::data::{empirical_marginal, EncodedDataset};
use crate::error::{Error, Result};
use crate::info::entropy;
use crate::local::{aggregate, publish_local, randomize_dataset, LocalBudget};
use crate::pram::{pram_cluster, ChannelDiagnostics};
use crate::seed::{Seeder, Stage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The curator sees raw data; budget is split between network learning
    /// and randomization.
    #[default]
    Trusted,
    /// Clients randomize their own records; the server only post-processes.
    Local,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Trusted => "trusted",
            Mode::Local => "local",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trusted" => Ok(Mode::Trusted),
            "local" => Ok(Mode::Local),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub epsilon: f64,
    /// Fraction of `epsilon` spent on network learning (trusted mode).
    pub split: f64,
    pub degree: usize,
    pub seed: u64,
    /// Marginal orders to evaluate; empty selects the schema default.
    pub alpha: Vec<usize>,
    pub runs: usize,
    pub budget_rule: BudgetRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Trusted,
            epsilon: 1.0,
            split: 0.5,
            degree: 2,
            seed: 0,
            alpha: Vec::new(),
            runs: 50,
            budget_rule: BudgetRule::InverseImportance,
            input: None,
            output: None,
            report: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split must lie in (0, 1), got {}",
                self.split
            )));
        }
        if self.degree < 1 {
            return Err(Error::InvalidParameter("degree must be at least 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.alpha.contains(&0) {
            return Err(Error::InvalidParameter("alpha values must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Budget bookkeeping for one publication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAccounting {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_budget_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_dim_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub head: String,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cif: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_product_gap: Option<f64>,
}

/// Wall-clock milliseconds per pipeline phase.
pub type Timing = BTreeMap<String, f64>;

fn timing(phases: &[(&str, f64)]) -> Timing {
    phases.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationReport {
    pub mode: Mode,
    pub config: PipelineConfig,
    pub records: usize,
    pub attributes: usize,
    pub budget: BudgetAccounting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_dim_eps: Option<f64>,
    pub network: Vec<NamedApPair>,
    pub clusters: Vec<ClusterReport>,
    pub channels: Vec<ChannelDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl PublicationReport {
    /// The report with wall-clock timing removed, so it depends only on
    /// input, configuration and seed.
    pub fn without_timing(mut self) -> Self {
        self.timing = None;
        self
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Publishes under `config.mode`.
pub fn publish(data: &EncodedDataset, config: &PipelineConfig) -> Result<(EncodedDataset, PublicationReport)> {
    match config.mode {
        Mode::Trusted => publish_trusted(data, config),
        Mode::Local => publish_local_cmd(data, config),
    }
}

/// Trusted curator: `split·ε` learns the network, the remaining budget is
/// divided across Markov-blanket clusters and spent on double perturbation.
pub fn publish_trusted(data: &EncodedDataset, config: &PipelineConfig) -> Result<(EncodedDataset, PublicationReport)> {
    config.validate()?;
    let d = data.num_attributes();
    if d < 2 {
        return Err(Error::TooFewAttributes(d));
    }
    let start = Instant::now();
    let seeder = Seeder::new(config.seed);
    let eps1 = config.split * config.epsilon;
    let eps2 = (1.0 - config.split) * config.epsilon;

    let network = build_dp_network(data, config.degree, eps1, &mut seeder.rng(Stage::Network, 0))?;
    let network_ms = elapsed_ms(start);

    let t = Instant::now();
    let entropies: Vec<f64> = (0..d)
        .map(|a| empirical_marginal(data, &[a]).map(|m| entropy(&m)))
        .collect::<Result<_>>()?;
    let members = cluster_attributes(
        &network,
        HeadRule::Random,
        Some(&entropies),
        &mut seeder.rng(Stage::Clustering, 0),
    )?;
    let clustering = Clustering::allocate(members, &entropies, eps2, config.budget_rule)?;
    let clustering_ms = elapsed_ms(t);

    let t = Instant::now();
    let mut columns: Vec<Vec<u32>> = vec![Vec::new(); d];
    let mut channels = Vec::with_capacity(d);
    let mut gaps = Vec::with_capacity(clustering.len());
    for cluster in clustering.clusters() {
        let out = pram_cluster(data, &cluster.members, cluster.budget, &seeder)?;
        for (a, col) in out.columns {
            columns[a] = col;
        }
        gaps.push(out.joint_product_gap);
        channels.extend(out.channels);
    }
    channels.sort_by_key(|c| c.attribute);
    let published = data.with_columns(columns)?;
    let perturbation_ms = elapsed_ms(t);

    let schema = data.schema();
    let report = PublicationReport {
        mode: Mode::Trusted,
        config: config.clone(),
        records: data.len(),
        attributes: d,
        budget: BudgetAccounting {
            epsilon: config.epsilon,
            eps1: Some(eps1),
            eps2: Some(eps2),
            cluster_budget_total: Some(clustering.total_budget()),
            per_dim_eps: None,
        },
        per_dim_eps: None,
        network: network.to_named(schema),
        clusters: clustering
            .clusters()
            .iter()
            .zip(gaps)
            .map(|(c, gap)| ClusterReport {
                head: schema.name(c.head).to_string(),
                members: c.members.iter().map(|&m| schema.name(m).to_string()).collect(),
                cif: Some(c.cif),
                pbc: Some(c.pbc),
                budget: Some(c.budget),
                joint_product_gap: gap,
            })
            .collect(),
        channels: channels
            .iter()
            .map(|c| c.diagnostics(schema.name(c.attribute)))
            .collect(),
        timing: Some(timing(&[
            ("network_ms", network_ms),
            ("clustering_ms", clustering_ms),
            ("perturbation_ms", perturbation_ms),
            ("total_ms", elapsed_ms(start)),
        ])),
    };
    Ok((published, report))
}

/// Local mode: every row is one simulated client randomizing at `ε/d` per
/// dimension; the server then post-processes the noisy records.
pub fn publish_local_cmd(
    data: &EncodedDataset,
    config: &PipelineConfig,
) -> Result<(EncodedDataset, PublicationReport)> {
    config.validate()?;
    let d = data.num_attributes();
    if d < 2 {
        return Err(Error::TooFewAttributes(d));
    }
    let start = Instant::now();
    let seeder = Seeder::new(config.seed);
    let budget = LocalBudget::new(config.epsilon, d)?;
    let noisy = randomize_dataset(data, budget, &seeder)?;
    let (noisy, lambdas) = aggregate(data.shared_schema(), &noisy)?;
    let randomize_ms = elapsed_ms(start);

    let t = Instant::now();
    let out = publish_local(&noisy, &lambdas, budget, config.degree, &seeder)?;
    let server_ms = elapsed_ms(t);

    let schema = data.schema();
    let report = PublicationReport {
        mode: Mode::Local,
        config: config.clone(),
        records: data.len(),
        attributes: d,
        budget: BudgetAccounting {
            epsilon: config.epsilon,
            eps1: None,
            eps2: None,
            cluster_budget_total: None,
            per_dim_eps: Some(budget.per_dim_eps),
        },
        per_dim_eps: Some(budget.per_dim_eps),
        network: out.network.to_named(schema),
        clusters: out
            .clusters
            .iter()
            .map(|c| ClusterReport {
                head: schema.name(c.head).to_string(),
                members: c.members.iter().map(|&m| schema.name(m).to_string()).collect(),
                cif: c.cif,
                pbc: c.pbc,
                budget: None,
                joint_product_gap: None,
            })
            .collect(),
        channels: out
            .channels
            .iter()
            .map(|c| c.diagnostics(schema.name(c.attribute)))
            .collect(),
        timing: Some(timing(&[
            ("client_randomization_ms", randomize_ms),
            ("server_ms", server_ms),
            ("total_ms", elapsed_ms(start)),
        ])),
    };
    Ok((out.published, report))
}
