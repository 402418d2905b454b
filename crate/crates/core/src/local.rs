//! Publication without a trusted curator.
//!
//! Each client randomizes its own record, dimension by dimension, with RR at
//! `ε' = ε / d`. The server only ever sees [`NoisyRecord`]s: it estimates
//! per-attribute source distributions, learns a network greedily, clusters
//! with max-entropy heads and applies each attribute's posterior channel
//! `Q̃` as post-processing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{build_greedy_network, BayesianNetwork};
use crate::cluster::{
    budget_coefficients, cluster_attributes, cluster_importance, BudgetRule, ClusterMembers, HeadRule,
};
use crate::data::{AttributeSchema, DistributionVector, EncodedDataset};
use crate::error::{Error, Result};
use crate::info::entropy;
use crate::pram::{apply_channel, rr_matrix, AttributeChannel, ChannelSampler, TransitionMatrix};
use crate::seed::{Seeder, Stage};

/// Total budget and its even per-dimension share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBudget {
    pub total_eps: f64,
    pub per_dim_eps: f64,
}

impl LocalBudget {
    pub fn new(total_eps: f64, dimensions: usize) -> Result<Self> {
        if !(total_eps > 0.0) || !total_eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {total_eps}"
            )));
        }
        if dimensions == 0 {
            return Err(Error::InvalidParameter("no dimensions to split the budget over".into()));
        }
        Ok(Self {
            total_eps,
            per_dim_eps: total_eps / dimensions as f64,
        })
    }
}

/// A randomized record as sent by one client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyRecord(pub Vec<u32>);

/// Client-side randomizer holding one RR channel per dimension.
pub struct LocalRandomizer {
    channels: Vec<TransitionMatrix>,
    samplers: Vec<ChannelSampler>,
}

impl LocalRandomizer {
    pub fn new(schema: &AttributeSchema, budget: LocalBudget) -> Result<Self> {
        let channels = schema
            .domain_sizes()
            .into_iter()
            .map(|s| rr_matrix(s, budget.per_dim_eps))
            .collect::<Result<Vec<_>>>()?;
        let samplers = channels.iter().map(ChannelSampler::new).collect();
        Ok(Self { channels, samplers })
    }

    pub fn channels(&self) -> &[TransitionMatrix] {
        &self.channels
    }

    pub fn randomize<R: Rng + ?Sized>(&self, record: &[u32], rng: &mut R) -> Result<NoisyRecord> {
        if record.len() != self.samplers.len() {
            return Err(Error::SchemaMismatch(format!(
                "record has {} values, schema has {} attributes",
                record.len(),
                self.samplers.len()
            )));
        }
        record
            .iter()
            .zip(&self.samplers)
            .map(|(&v, s)| s.sample(v, rng))
            .collect::<Result<_>>()
            .map(NoisyRecord)
    }

    /// Worst-case likelihood ratio of any output record across two inputs.
    pub fn record_ratio_bound(&self) -> f64 {
        self.channels.iter().map(TransitionMatrix::max_column_ratio).product()
    }
}

/// Passes each dimension of `record` through RR at the per-dimension budget.
pub fn randomize_record<R: Rng + ?Sized>(
    record: &[u32],
    schema: &AttributeSchema,
    budget: LocalBudget,
    rng: &mut R,
) -> Result<NoisyRecord> {
    LocalRandomizer::new(schema, budget)?.randomize(record, rng)
}

/// Simulates one client per row; client `j` uses substream `(Client, j)`.
pub fn randomize_dataset(data: &EncodedDataset, budget: LocalBudget, seeder: &Seeder) -> Result<Vec<NoisyRecord>> {
    let randomizer = LocalRandomizer::new(data.schema(), budget)?;
    (0..data.len())
        .into_par_iter()
        .map(|j| {
            let mut rng = seeder.rng(Stage::Client, j as u64);
            randomizer.randomize(&data.row(j), &mut rng)
        })
        .collect()
}

/// Assembles arriving records into a dataset and per-attribute frequencies.
pub fn aggregate(
    schema: std::sync::Arc<AttributeSchema>,
    records: &[NoisyRecord],
) -> Result<(EncodedDataset, Vec<DistributionVector>)> {
    let rows: Vec<Vec<u32>> = records.iter().map(|r| r.0.clone()).collect();
    let data = EncodedDataset::from_rows(schema, &rows)?;
    let lambdas = (0..data.num_attributes())
        .map(|a| crate::data::empirical_marginal(&data, &[a]))
        .collect::<Result<_>>()?;
    Ok((data, lambdas))
}

/// Server-side cluster summary. Importance values are diagnostic only and
/// absent when estimated entropies are degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCluster {
    pub head: usize,
    pub members: Vec<usize>,
    pub cif: Option<f64>,
    pub pbc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalPublication {
    pub published: EncodedDataset,
    pub budget: LocalBudget,
    pub network: BayesianNetwork,
    pub clusters: Vec<LocalCluster>,
    pub channels: Vec<AttributeChannel>,
}

/// Server pipeline over noisy records only. Attribute `a`'s second
/// perturbation uses substream `(ServerPerturbation, a)`.
pub fn publish_local(
    noisy: &EncodedDataset,
    lambdas: &[DistributionVector],
    budget: LocalBudget,
    degree: usize,
    seeder: &Seeder,
) -> Result<LocalPublication> {
    let d = noisy.num_attributes();
    if lambdas.len() != d {
        return Err(Error::SchemaMismatch(format!(
            "{} frequency vectors for {d} attributes",
            lambdas.len()
        )));
    }
    if ((budget.per_dim_eps * d as f64) - budget.total_eps).abs() > 1e-12 * budget.total_eps.max(1.0) {
        return Err(Error::InvalidParameter(
            "per-dimension budget does not match the attribute count".into(),
        ));
    }
    let channels = (0..d)
        .into_par_iter()
        .map(|a| {
            let forward = rr_matrix(noisy.schema().domain_size(a), budget.per_dim_eps)?;
            fit_from_lambda(a, budget.per_dim_eps, forward, &lambdas[a])
        })
        .collect::<Result<Vec<_>>>()?;

    let network = build_greedy_network(noisy, degree)?;
    let entropies: Vec<f64> = channels.iter().map(|c| entropy(&c.estimate.distribution)).collect();
    // Max-entropy heads draw nothing from this stream.
    let mut rng = seeder.rng(Stage::Clustering, 0);
    let members = cluster_attributes(&network, HeadRule::MaxEntropy, Some(&entropies), &mut rng)?;
    let clusters = summarize_clusters(members, &entropies);

    let columns = channels
        .par_iter()
        .map(|c| {
            let mut rng = seeder.rng(Stage::ServerPerturbation, c.attribute as u64);
            apply_channel(noisy.column(c.attribute), &c.inverse, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalPublication {
        published: noisy.with_columns(columns)?,
        budget,
        network,
        clusters,
        channels,
    })
}

fn fit_from_lambda(
    attribute: usize,
    eps: f64,
    forward: TransitionMatrix,
    lambda: &DistributionVector,
) -> Result<AttributeChannel> {
    let estimate = crate::pram::estimate_distribution(lambda, &forward)?;
    let inverse = crate::pram::inverse_channel(&forward, &estimate.distribution)?;
    Ok(AttributeChannel {
        attribute,
        eps,
        forward,
        lambda_hat: lambda.clone(),
        estimate,
        inverse,
    })
}

fn summarize_clusters(members: Vec<ClusterMembers>, entropies: &[f64]) -> Vec<LocalCluster> {
    let cifs = cluster_importance(&members, entropies).ok();
    let pbcs = cifs
        .as_ref()
        .and_then(|c| budget_coefficients(c, BudgetRule::InverseImportance).ok());
    members
        .into_iter()
        .enumerate()
        .map(|(i, m)| LocalCluster {
            head: m.head,
            members: m.members,
            cif: cifs.as_ref().map(|c| c[i]),
            pbc: pbcs.as_ref().map(|p| p[i]),
        })
        .collect()
}
