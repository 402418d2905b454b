//! Markov-blanket attribute clustering and per-cluster budget allocation.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayesnet::BayesianNetwork;
use crate::error::{Error, Result};

/// Parents, children and co-parents of `x`, excluding `x` itself.
pub fn markov_blanket(net: &BayesianNetwork, x: usize) -> BTreeSet<usize> {
    let mut blanket: BTreeSet<usize> = net.parents_of(x).iter().copied().collect();
    for pair in net.pairs().iter().filter(|p| p.parents.contains(&x)) {
        blanket.insert(pair.attribute);
        blanket.extend(pair.parents.iter().copied());
    }
    blanket.remove(&x);
    blanket
}

/// How each cluster head is chosen from the unassigned attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadRule {
    Random,
    MaxEntropy,
}

/// Head and members (sorted, head included) of one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMembers {
    pub head: usize,
    pub members: Vec<usize>,
}

/// Repeatedly picks a head from the unassigned set `S` and forms the cluster
/// `(MB(head) ∩ S) ∪ {head}` until `S` is empty.
pub fn cluster_attributes<R: Rng + ?Sized>(
    net: &BayesianNetwork,
    rule: HeadRule,
    entropies: Option<&[f64]>,
    rng: &mut R,
) -> Result<Vec<ClusterMembers>> {
    let d = net.len();
    let entropies = match (rule, entropies) {
        (HeadRule::MaxEntropy, None) => {
            return Err(Error::InvalidParameter(
                "max-entropy heads need per-attribute entropies".into(),
            ))
        }
        (_, Some(e)) if e.len() != d => {
            return Err(Error::InvalidParameter(format!(
                "{} entropies for {} attributes",
                e.len(),
                d
            )))
        }
        (_, e) => e,
    };
    let mut unassigned: BTreeSet<usize> = (0..d).collect();
    let mut clusters = Vec::new();
    while !unassigned.is_empty() {
        let head = match rule {
            HeadRule::Random => {
                let pos = rng.gen_range(0..unassigned.len());
                *unassigned.iter().nth(pos).expect("position in range")
            }
            HeadRule::MaxEntropy => {
                let h = entropies.expect("checked above");
                let mut best = *unassigned.iter().next().expect("non-empty");
                for &a in &unassigned {
                    if h[a] > h[best] {
                        best = a;
                    }
                }
                best
            }
        };
        let mut members: Vec<usize> = markov_blanket(net, head)
            .into_iter()
            .filter(|a| unassigned.contains(a))
            .collect();
        members.push(head);
        members.sort_unstable();
        for a in &members {
            unassigned.remove(a);
        }
        clusters.push(ClusterMembers { head, members });
    }
    Ok(clusters)
}

/// Entropy share of each cluster: `Σ_{A∈CL} H(A) / Σ_k H(A_k)`.
pub fn cluster_importance(clusters: &[ClusterMembers], entropies: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = entropies.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateEntropies);
    }
    clusters
        .iter()
        .map(|c| {
            c.members
                .iter()
                .map(|&a| {
                    entropies
                        .get(a)
                        .copied()
                        .ok_or_else(|| Error::InvalidAttributes(format!("no entropy for attribute {a}")))
                })
                .sum::<Result<f64>>()
                .map(|s| s / total)
        })
        .collect()
}

/// How the randomization budget is split across clusters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetRule {
    /// Coefficients proportional to `1 / CIF`: important clusters get less budget.
    #[default]
    InverseImportance,
    /// Coefficients proportional to `CIF`.
    Proportional,
}

/// Normalized budget coefficients for each cluster.
pub fn budget_coefficients(cifs: &[f64], rule: BudgetRule) -> Result<Vec<f64>> {
    if let Some(i) = cifs.iter().position(|&c| !(c > 0.0)) {
        return Err(Error::ZeroImportance(i));
    }
    let raw: Vec<f64> = match rule {
        BudgetRule::InverseImportance => cifs.iter().map(|c| 1.0 / c).collect(),
        BudgetRule::Proportional => cifs.to_vec(),
    };
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// `budget_i = PBC_i · eps2` with inverse-importance coefficients.
pub fn budget_allocation(cifs: &[f64], eps2: f64) -> Result<Vec<f64>> {
    budget_allocation_with(cifs, eps2, BudgetRule::InverseImportance)
}

pub fn budget_allocation_with(cifs: &[f64], eps2: f64, rule: BudgetRule) -> Result<Vec<f64>> {
    if !(eps2 > 0.0) {
        return Err(Error::InvalidParameter(format!("eps2 must be positive, got {eps2}")));
    }
    Ok(budget_coefficients(cifs, rule)?.into_iter().map(|p| p * eps2).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub head: usize,
    pub members: Vec<usize>,
    pub cif: f64,
    pub pbc: f64,
    pub budget: f64,
}

/// A partition of the attributes with each cluster's share of `eps2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    clusters: Vec<Cluster>,
}

impl Clustering {
    pub fn allocate(members: Vec<ClusterMembers>, entropies: &[f64], eps2: f64, rule: BudgetRule) -> Result<Self> {
        let cifs = cluster_importance(&members, entropies)?;
        let pbcs = budget_coefficients(&cifs, rule)?;
        if !(eps2 > 0.0) {
            return Err(Error::InvalidParameter(format!("eps2 must be positive, got {eps2}")));
        }
        let clusters = members
            .into_iter()
            .zip(cifs)
            .zip(pbcs)
            .map(|((m, cif), pbc)| Cluster {
                head: m.head,
                members: m.members,
                cif,
                pbc,
                budget: pbc * eps2,
            })
            .collect();
        Ok(Self { clusters })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Number of clusters `t`.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn total_budget(&self) -> f64 {
        self.clusters.iter().map(|c| c.budget).sum()
    }
}
