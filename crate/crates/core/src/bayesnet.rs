//! k-degree Bayesian networks over the attributes of a dataset.
//!
//! Networks are grown one attribute at a time. Each round enumerates every
//! unchosen attribute paired with every parent set of size `min(k, |V|)`
//! drawn from the already-chosen attributes `V`, scores the candidates by
//! mutual information, and picks one either with the exponential mechanism
//! (trusted curator) or greedily (when the input is already
//! locally randomized).

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{marginal_counts, strides_of, DistributionVector, EncodedDataset, DEFAULT_CELL_CAP};
use crate::error::{Error, Result};
use crate::info::{joint_entropy, mi_sensitivity, mutual_information_from_entropies, MiSensitivityInput};

/// An attribute together with its parent set (sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApPair {
    pub attribute: usize,
    pub parents: Vec<usize>,
}

impl ApPair {
    pub fn new(attribute: usize, mut parents: Vec<usize>) -> Self {
        parents.sort_unstable();
        Self { attribute, parents }
    }
}

/// AP pair with attribute names, as written to network JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedApPair {
    pub attribute: String,
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BayesianNetwork {
    pairs: Vec<ApPair>,
    degree: usize,
}

impl BayesianNetwork {
    /// Validates that `pairs` is a construction-ordered DAG covering all
    /// `num_attributes` attributes with parent sets of size at most
    /// `min(degree, position)`.
    pub fn new(pairs: Vec<ApPair>, degree: usize, num_attributes: usize) -> Result<Self> {
        if pairs.len() != num_attributes {
            return Err(Error::InvalidAttributes(format!(
                "network has {} pairs for {} attributes",
                pairs.len(),
                num_attributes
            )));
        }
        let mut placed = vec![false; num_attributes];
        for (i, pair) in pairs.iter().enumerate() {
            if pair.attribute >= num_attributes || placed[pair.attribute] {
                return Err(Error::InvalidAttributes(format!(
                    "attribute {} is out of range or appears twice",
                    pair.attribute
                )));
            }
            if pair.parents.len() > degree.min(i) {
                return Err(Error::InvalidAttributes(format!(
                    "pair {} has {} parents, at most {} allowed",
                    i,
                    pair.parents.len(),
                    degree.min(i)
                )));
            }
            if let Some(p) = pair.parents.iter().find(|&&p| p >= num_attributes || !placed[p]) {
                return Err(Error::InvalidAttributes(format!(
                    "parent {} of attribute {} is not an earlier attribute",
                    p, pair.attribute
                )));
            }
            if pair.parents.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidAttributes(format!(
                    "parents of attribute {} are not sorted and distinct",
                    pair.attribute
                )));
            }
            placed[pair.attribute] = true;
        }
        Ok(Self { pairs, degree })
    }

    pub fn pairs(&self) -> &[ApPair] {
        &self.pairs
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn parents_of(&self, attribute: usize) -> &[usize] {
        self.pairs
            .iter()
            .find(|p| p.attribute == attribute)
            .map(|p| p.parents.as_slice())
            .unwrap_or(&[])
    }

    pub fn children_of(&self, attribute: usize) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|p| p.parents.contains(&attribute))
            .map(|p| p.attribute)
            .collect()
    }

    pub fn to_named(&self, schema: &crate::data::AttributeSchema) -> Vec<NamedApPair> {
        self.pairs
            .iter()
            .map(|p| NamedApPair {
                attribute: schema.name(p.attribute).to_string(),
                parents: p.parents.iter().map(|&q| schema.name(q).to_string()).collect(),
            })
            .collect()
    }

    pub fn from_named(named: &[NamedApPair], schema: &crate::data::AttributeSchema, degree: usize) -> Result<Self> {
        let lookup = |name: &str| {
            schema
                .index_of(name)
                .ok_or_else(|| Error::SchemaMismatch(format!("unknown attribute {name:?}")))
        };
        let pairs = named
            .iter()
            .map(|p| {
                Ok(ApPair::new(
                    lookup(&p.attribute)?,
                    p.parents.iter().map(|q| lookup(q)).collect::<Result<_>>()?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs, degree, schema.len())
    }
}

/// All `(A, Π)` with `A` in `remaining` and `Π ⊆ chosen`, `|Π| = min(k, |chosen|)`,
/// ordered by attribute index then lexicographic parent set.
pub fn enumerate_candidates(chosen: &[usize], remaining: &[usize], degree: usize) -> Vec<ApPair> {
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    let mut remaining = remaining.to_vec();
    remaining.sort_unstable();
    let size = degree.min(chosen.len());
    let parent_sets: Vec<Vec<usize>> = chosen.iter().copied().combinations(size).collect();
    remaining
        .iter()
        .flat_map(|&a| {
            parent_sets.iter().map(move |ps| ApPair {
                attribute: a,
                parents: ps.clone(),
            })
        })
        .collect()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
/// Weights are shifted by their maximum before exponentiation.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    if log_weights.is_empty() {
        return Err(Error::InvalidParameter("no candidates to select from".into()));
    }
    if log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::InvalidParameter("candidate weight is NaN".into()));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return Ok(i);
        }
        target -= w;
    }
    // Rounding left `target` past the last bucket; fall back to the last positive weight.
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// Exponential mechanism: index `i` is drawn with probability proportional
/// to `exp(eps_round * scores[i] / (2 * delta))`.
pub fn exp_mechanism_select<R: Rng + ?Sized>(scores: &[f64], eps_round: f64, delta: f64, rng: &mut R) -> Result<usize> {
    if !(eps_round > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exponential mechanism needs eps > 0 and delta > 0, got {eps_round} and {delta}"
        )));
    }
    let log_weights: Vec<f64> = scores.iter().map(|s| eps_round * s / (2.0 * delta)).collect();
    sample_log_weights(&log_weights, rng)
}

/// Candidate scores for one construction round.
struct ScoredCandidates {
    candidates: Vec<ApPair>,
    mutual_information: Vec<f64>,
}

fn score_round(
    data: &EncodedDataset,
    attr_entropy: &[f64],
    chosen: &[usize],
    remaining: &[usize],
    degree: usize,
) -> Result<ScoredCandidates> {
    let candidates = enumerate_candidates(chosen, remaining, degree);
    let parent_sets: Vec<&Vec<usize>> = candidates
        .iter()
        .map(|c| &c.parents)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let parent_entropy: Vec<(Vec<usize>, f64)> = parent_sets
        .par_iter()
        .map(|ps| joint_entropy(data, ps).map(|h| ((*ps).clone(), h)))
        .collect::<Result<_>>()?;
    let parent_entropy: std::collections::HashMap<Vec<usize>, f64> = parent_entropy.into_iter().collect();
    let mutual_information = candidates
        .par_iter()
        .map(|c| {
            let mut joint = Vec::with_capacity(c.parents.len() + 1);
            joint.push(c.attribute);
            joint.extend_from_slice(&c.parents);
            let h_joint = joint_entropy(data, &joint)?;
            Ok(mutual_information_from_entropies(
                attr_entropy[c.attribute],
                parent_entropy[&c.parents],
                h_joint,
            ))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoredCandidates {
        candidates,
        mutual_information,
    })
}

fn attribute_entropies(data: &EncodedDataset) -> Result<Vec<f64>> {
    (0..data.num_attributes()).map(|a| joint_entropy(data, &[a])).collect()
}

fn candidate_is_binary(data: &EncodedDataset, pair: &ApPair) -> bool {
    let schema = data.schema();
    let parent_domain: usize = pair.parents.iter().map(|&p| schema.domain_size(p)).product();
    schema.domain_size(pair.attribute) == 2 || parent_domain == 2
}

fn grow_network<F>(data: &EncodedDataset, degree: usize, first: usize, mut select: F) -> Result<BayesianNetwork>
where
    F: FnMut(&ScoredCandidates) -> Result<usize>,
{
    let d = data.num_attributes();
    let entropies = attribute_entropies(data)?;
    let mut chosen = vec![first];
    let mut remaining: Vec<usize> = (0..d).filter(|&a| a != first).collect();
    let mut pairs = vec![ApPair::new(first, Vec::new())];
    while !remaining.is_empty() {
        let scored = score_round(data, &entropies, &chosen, &remaining, degree)?;
        let pick = scored.candidates[select(&scored)?].clone();
        remaining.retain(|&a| a != pick.attribute);
        chosen.push(pick.attribute);
        pairs.push(pick);
    }
    BayesianNetwork::new(pairs, degree, d)
}

/// Differentially private network construction. The first attribute is
/// drawn uniformly; each of the `d - 1` following rounds spends
/// `eps1 / (d - 1)` on one exponential-mechanism draw whose per-candidate
/// sensitivity follows the binary/non-binary case split.
pub fn build_dp_network<R: Rng + ?Sized>(
    data: &EncodedDataset,
    degree: usize,
    eps1: f64,
    rng: &mut R,
) -> Result<BayesianNetwork> {
    let d = data.num_attributes();
    if d < 2 {
        return Err(Error::TooFewAttributes(d));
    }
    if degree < 1 {
        return Err(Error::InvalidParameter("network degree must be at least 1".into()));
    }
    if !(eps1 > 0.0) || !eps1.is_finite() {
        return Err(Error::InvalidParameter(format!("eps1 must be positive, got {eps1}")));
    }
    let n = data.len();
    let eps_round = eps1 / (d - 1) as f64;
    let delta_binary = mi_sensitivity(MiSensitivityInput { n, any_binary: true })?;
    let delta_general = mi_sensitivity(MiSensitivityInput { n, any_binary: false })?;
    let first = rng.gen_range(0..d);
    grow_network(data, degree, first, |scored| {
        let log_weights: Vec<f64> = scored
            .candidates
            .iter()
            .zip(&scored.mutual_information)
            .map(|(c, &mi)| {
                let delta = if candidate_is_binary(data, c) {
                    delta_binary
                } else {
                    delta_general
                };
                eps_round * mi / (2.0 * delta)
            })
            .collect();
        sample_log_weights(&log_weights, rng)
    })
}

const TIE_TOLERANCE: f64 = 1e-12;

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOLERANCE {
            best = i;
        }
    }
    best
}

/// Non-private construction: start from the highest-entropy attribute,
/// then repeatedly take the candidate with the largest mutual information.
/// Ties go to the earliest attribute / candidate in canonical order.
pub fn build_greedy_network(data: &EncodedDataset, degree: usize) -> Result<BayesianNetwork> {
    let d = data.num_attributes();
    if d < 2 {
        return Err(Error::TooFewAttributes(d));
    }
    if degree < 1 {
        return Err(Error::InvalidParameter("network degree must be at least 1".into()));
    }
    let first = argmax_first(&attribute_entropies(data)?);
    grow_network(data, degree, first, |scored| {
        Ok(argmax_first(&scored.mutual_information))
    })
}

/// Full joint `Π Pr[A_i | Π_i]` assembled from empirical conditionals.
/// Parent configurations that never occur get a uniform conditional.
pub fn network_joint(net: &BayesianNetwork, data: &EncodedDataset) -> Result<DistributionVector> {
    network_joint_capped(net, data, DEFAULT_CELL_CAP)
}

pub fn network_joint_capped(
    net: &BayesianNetwork,
    data: &EncodedDataset,
    cell_cap: usize,
) -> Result<DistributionVector> {
    let sizes = data.schema().domain_sizes();
    let cells = sizes.iter().map(|&s| s as u128).product::<u128>();
    if cells > cell_cap as u128 {
        return Err(Error::CellCapExceeded { cells, cap: cell_cap });
    }
    let full_strides = strides_of(&sizes);

    // Per pair: conditional table laid out as [parents..., attribute].
    let conditionals: Vec<Vec<f64>> = net
        .pairs()
        .iter()
        .map(|pair| {
            let mut axes = pair.parents.clone();
            axes.push(pair.attribute);
            let counts = marginal_counts(data, &axes, cell_cap)?;
            let s = sizes[pair.attribute];
            let mut table = vec![0.0; counts.len()];
            for (cfg, block) in counts.chunks(s).enumerate() {
                let total: u64 = block.iter().sum();
                for (x, &c) in block.iter().enumerate() {
                    table[cfg * s + x] = if total == 0 {
                        1.0 / s as f64
                    } else {
                        c as f64 / total as f64
                    };
                }
            }
            Ok(table)
        })
        .collect::<Result<_>>()?;

    let mut joint = vec![0.0; cells as usize];
    for (cell, slot) in joint.iter_mut().enumerate() {
        let coord = |a: usize| (cell / full_strides[a]) % sizes[a];
        let mut p = 1.0;
        for (pair, table) in net.pairs().iter().zip(&conditionals) {
            let mut idx = 0;
            for &q in &pair.parents {
                idx = idx * sizes[q] + coord(q);
            }
            idx = idx * sizes[pair.attribute] + coord(pair.attribute);
            p *= table[idx];
            if p == 0.0 {
                break;
            }
        }
        *slot = p;
    }
    DistributionVector::new(sizes, joint)
}

/// `KL(Pr[A] || Pr_N[A]) = Σ H(A_i) - Σ I(A_i, Π_i) - H(A)` in bits.
pub fn kl_network_divergence(data: &EncodedDataset, net: &BayesianNetwork) -> Result<f64> {
    let all: Vec<usize> = (0..data.num_attributes()).collect();
    let h_joint = joint_entropy(data, &all)?;
    let mut total = -h_joint;
    for pair in net.pairs() {
        let h_a = joint_entropy(data, &[pair.attribute])?;
        let mi = if pair.parents.is_empty() {
            0.0
        } else {
            let mut axes = vec![pair.attribute];
            axes.extend_from_slice(&pair.parents);
            mutual_information_from_entropies(h_a, joint_entropy(data, &pair.parents)?, joint_entropy(data, &axes)?)
        };
        total += h_a - mi;
    }
    Ok(if total.abs() < 1e-12 { 0.0 } else { total })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::data::{empirical_marginal, Attribute, AttributeSchema};

    fn binary_dataset(columns: Vec<Vec<u32>>) -> EncodedDataset {
        let attrs = (0..columns.len())
            .map(|i| Attribute {
                name: format!("a{i}"),
                categories: vec!["0".into(), "1".into()],
            })
            .collect();
        EncodedDataset::from_columns(Arc::new(AttributeSchema::new(attrs).unwrap()), columns).unwrap()
    }

    fn pairs(net: &BayesianNetwork) -> Vec<(usize, Vec<usize>)> {
        net.pairs().iter().map(|p| (p.attribute, p.parents.clone())).collect()
    }

    #[test]
    fn candidate_enumeration() {
        let c = enumerate_candidates(&[0], &[1, 2], 2);
        assert_eq!(c, vec![ApPair::new(1, vec![0]), ApPair::new(2, vec![0])]);
        let c = enumerate_candidates(&[2, 0, 1], &[3], 2);
        assert_eq!(
            c,
            vec![
                ApPair::new(3, vec![0, 1]),
                ApPair::new(3, vec![0, 2]),
                ApPair::new(3, vec![1, 2]),
            ]
        );
    }

    #[test]
    fn exp_mechanism_degenerate_and_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(exp_mechanism_select(&[3.0], 1.0, 0.1, &mut rng).unwrap(), 0);
        }
        assert!(exp_mechanism_select(&[], 1.0, 0.1, &mut rng).is_err());
        assert!(exp_mechanism_select(&[1.0], 1.0, 0.0, &mut rng).is_err());
        assert!(exp_mechanism_select(&[1.0], 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn exp_mechanism_equal_scores_split_evenly() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| exp_mechanism_select(&[0.7, 0.7], 1.0, 0.5, &mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / draws as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn exp_mechanism_weight_ratio_two() {
        // A score gap of (2 delta / eps) ln 2 doubles the weight.
        let (eps, delta) = (0.8, 0.3);
        let gap = 2.0 * delta / eps * std::f64::consts::LN_2;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| exp_mechanism_select(&[0.0, gap], eps, delta, &mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / draws as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn log_weight_sampling_is_stable_for_large_scores() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let i = sample_log_weights(&[1e6, 1e6 + 50.0], &mut rng).unwrap();
        assert_eq!(i, 1);
    }

    #[test]
    fn two_attribute_network_shape() {
        let data = binary_dataset(vec![vec![0, 1, 1, 0], vec![1, 1, 0, 0]]);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let net = build_dp_network(&data, 2, 1.0, &mut rng).unwrap();
        let p = pairs(&net);
        assert_eq!(p.len(), 2);
        assert!(p[0].1.is_empty());
        assert_eq!(p[1].1, vec![p[0].0]);
    }

    #[test]
    fn dp_network_rejects_single_attribute() {
        let data = binary_dataset(vec![vec![0, 1]]);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            build_dp_network(&data, 2, 1.0, &mut rng),
            Err(Error::TooFewAttributes(1))
        ));
        assert!(matches!(
            build_greedy_network(&data, 2),
            Err(Error::TooFewAttributes(1))
        ));
    }

    #[test]
    fn greedy_ties_follow_canonical_order() {
        let col = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let data = binary_dataset(vec![col.clone(), col.clone(), col.clone(), col]);
        let net = build_greedy_network(&data, 2).unwrap();
        assert_eq!(
            pairs(&net),
            vec![(0, vec![]), (1, vec![0]), (2, vec![0, 1]), (3, vec![0, 1])]
        );

        let indep = binary_dataset(vec![
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            vec![0, 0, 1, 1, 0, 0, 1, 1],
            vec![0, 1, 0, 1, 0, 1, 0, 1],
        ]);
        let net = build_greedy_network(&indep, 1).unwrap();
        assert_eq!(pairs(&net), vec![(0, vec![]), (1, vec![0]), (2, vec![0])]);
    }

    #[test]
    fn network_validation() {
        assert!(BayesianNetwork::new(vec![ApPair::new(0, vec![1]), ApPair::new(1, vec![])], 1, 2).is_err());
        assert!(BayesianNetwork::new(vec![ApPair::new(0, vec![]), ApPair::new(0, vec![])], 1, 2).is_err());
        assert!(BayesianNetwork::new(
            vec![
                ApPair::new(0, vec![]),
                ApPair::new(1, vec![0]),
                ApPair::new(2, vec![0, 1])
            ],
            1,
            3
        )
        .is_err());
        assert!(BayesianNetwork::new(vec![ApPair::new(0, vec![])], 1, 2).is_err());
    }

    #[test]
    fn chain_joint_by_hand() {
        let data = binary_dataset(vec![vec![0, 0, 1, 1], vec![0, 0, 0, 1]]);
        let net = BayesianNetwork::new(vec![ApPair::new(0, vec![]), ApPair::new(1, vec![0])], 1, 2).unwrap();
        let joint = network_joint(&net, &data).unwrap();
        assert_eq!(joint.probabilities(), &[0.5, 0.0, 0.25, 0.25]);
    }

    #[test]
    fn independent_factorization_and_saturation() {
        let data = binary_dataset(vec![
            vec![0, 1, 1, 0, 1, 1, 0],
            vec![1, 1, 0, 0, 1, 0, 0],
            vec![0, 0, 0, 1, 1, 1, 0],
        ]);
        let empty = BayesianNetwork::new((0..3).map(|a| ApPair::new(a, vec![])).collect(), 2, 3).unwrap();
        let joint = network_joint(&empty, &data).unwrap();
        let m: Vec<_> = (0..3).map(|a| empirical_marginal(&data, &[a]).unwrap()).collect();
        for (cell, p) in joint.probabilities().iter().enumerate() {
            let expected: f64 = (0..3).map(|a| m[a].probabilities()[(cell >> (2 - a)) & 1]).product();
            assert!((p - expected).abs() < 1e-15);
        }

        let saturated = BayesianNetwork::new(
            vec![
                ApPair::new(2, vec![]),
                ApPair::new(0, vec![2]),
                ApPair::new(1, vec![0, 2]),
            ],
            2,
            3,
        )
        .unwrap();
        let joint = network_joint(&saturated, &data).unwrap();
        let empirical = empirical_marginal(&data, &[0, 1, 2]).unwrap();
        for (a, b) in joint.probabilities().iter().zip(empirical.probabilities()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(kl_network_divergence(&data, &saturated).unwrap().abs() < 1e-9);
    }

    #[test]
    fn kl_examples() {
        let copy = binary_dataset(vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1]]);
        let empty = BayesianNetwork::new(vec![ApPair::new(0, vec![]), ApPair::new(1, vec![])], 1, 2).unwrap();
        assert!((kl_network_divergence(&copy, &empty).unwrap() - 1.0).abs() < 1e-12);

        let indep = binary_dataset(vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]]);
        assert!(kl_network_divergence(&indep, &empty).unwrap().abs() < 1e-9);
    }

    #[test]
    fn named_round_trip() {
        let data = binary_dataset(vec![vec![0, 1], vec![1, 0], vec![0, 0]]);
        let net = build_greedy_network(&data, 2).unwrap();
        let named = net.to_named(data.schema());
        let json = serde_json::to_string(&named).unwrap();
        assert!(json.starts_with(r#"[{"attribute":"#));
        let back: Vec<NamedApPair> = serde_json::from_str(&json).unwrap();
        assert_eq!(BayesianNetwork::from_named(&back, data.schema(), 2).unwrap(), net);
    }
}
