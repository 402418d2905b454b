//! Entropy and mutual information over empirical marginals (all in bits),
//! plus the global sensitivity of mutual information used to score
//! candidate parent sets.

use crate::data::{empirical_marginal, DistributionVector, EncodedDataset};
use crate::error::{Error, Result};

/// Shannon entropy in bits of a probability slice, with `0 log 0 = 0`.
pub fn entropy_of(probabilities: &[f64]) -> f64 {
    let h: f64 = probabilities.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h.max(0.0)
}

pub fn entropy(p: &DistributionVector) -> f64 {
    entropy_of(p.probabilities())
}

/// Entropy of the empirical joint over `attrs`.
pub fn joint_entropy(data: &EncodedDataset, attrs: &[usize]) -> Result<f64> {
    Ok(entropy(&empirical_marginal(data, attrs)?))
}

/// `I(A; Π) = H(A) + H(Π) - H(A, Π)`. An empty parent set scores zero;
/// rounding noise below zero is clamped.
pub fn mutual_information(data: &EncodedDataset, attribute: usize, parents: &[usize]) -> Result<f64> {
    if parents.contains(&attribute) {
        return Err(Error::InvalidAttributes(format!(
            "attribute {attribute} is among its own parents"
        )));
    }
    if parents.is_empty() {
        if attribute >= data.num_attributes() {
            return Err(Error::InvalidAttributes(format!(
                "attribute index {attribute} out of range"
            )));
        }
        return Ok(0.0);
    }
    let mut joint = Vec::with_capacity(parents.len() + 1);
    joint.push(attribute);
    joint.extend_from_slice(parents);
    let h_a = joint_entropy(data, &[attribute])?;
    let h_p = joint_entropy(data, parents)?;
    let h_ap = joint_entropy(data, &joint)?;
    Ok(mutual_information_from_entropies(h_a, h_p, h_ap))
}

pub(crate) fn mutual_information_from_entropies(h_a: f64, h_p: f64, h_joint: f64) -> f64 {
    (h_a + h_p - h_joint).max(0.0)
}

/// Inputs to the mutual-information sensitivity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiSensitivityInput {
    /// Record count.
    pub n: usize,
    /// True when the child or the compound parent domain is binary.
    pub any_binary: bool,
}

/// Global sensitivity of `I(A; Π)` over datasets of `n` records, in bits.
pub fn mi_sensitivity(input: MiSensitivityInput) -> Result<f64> {
    let MiSensitivityInput { n, any_binary } = input;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "sensitivity needs at least two records, got {n}"
        )));
    }
    let n = n as f64;
    let delta = if any_binary {
        n.log2() / n + (n - 1.0) / n * (n / (n - 1.0)).log2()
    } else {
        2.0 / n * ((n + 1.0) / 2.0).log2() + (n - 1.0) / n * ((n + 1.0) / (n - 1.0)).log2()
    };
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{Attribute, AttributeSchema};

    fn binary_dataset(columns: Vec<Vec<u32>>) -> EncodedDataset {
        let attrs = (0..columns.len())
            .map(|i| Attribute {
                name: format!("a{i}"),
                categories: vec!["0".into(), "1".into()],
            })
            .collect();
        EncodedDataset::from_columns(Arc::new(AttributeSchema::new(attrs).unwrap()), columns).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_of(&[0.5, 0.5]), 1.0);
        assert_eq!(entropy_of(&[1.0, 0.0]), 0.0);
        // -(0.25 log2 0.25 + 0.75 log2 0.75)
        let expected = 0.5 + 0.75 * (4.0f64 / 3.0).log2();
        assert!((entropy_of(&[0.25, 0.75]) - expected).abs() < 1e-15);
        assert!((expected - 0.811_278_124_459_132_9).abs() < 1e-15);
    }

    #[test]
    fn joint_entropy_examples() {
        let copy = binary_dataset(vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1]]);
        assert!((joint_entropy(&copy, &[0, 1]).unwrap() - 1.0).abs() < 1e-15);
        let indep = binary_dataset(vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]]);
        assert!((joint_entropy(&indep, &[0, 1]).unwrap() - 2.0).abs() < 1e-15);
        let constant = binary_dataset(vec![vec![1, 1, 1]]);
        assert_eq!(joint_entropy(&constant, &[0]).unwrap(), 0.0);
    }

    #[test]
    fn mutual_information_examples() {
        let copy = binary_dataset(vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1]]);
        assert!((mutual_information(&copy, 0, &[1]).unwrap() - 1.0).abs() < 1e-15);
        let indep = binary_dataset(vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]]);
        assert_eq!(mutual_information(&indep, 0, &[1]).unwrap(), 0.0);
        assert_eq!(mutual_information(&indep, 1, &[]).unwrap(), 0.0);
        assert!(matches!(
            mutual_information(&indep, 1, &[1]),
            Err(Error::InvalidAttributes(_))
        ));
    }

    #[test]
    fn sensitivity_examples() {
        let binary = |n| mi_sensitivity(MiSensitivityInput { n, any_binary: true }).unwrap();
        let general = |n| mi_sensitivity(MiSensitivityInput { n, any_binary: false }).unwrap();
        // n = 2: (1/2) log2 2 + (1/2) log2 2
        assert!((binary(2) - 1.0).abs() < 1e-15);
        // n = 3: (2/3) log2 2 + (2/3) log2 2
        assert!((general(3) - 4.0 / 3.0).abs() < 1e-15);
        assert!(binary(1_000_000) < 1e-4);
        assert!(mi_sensitivity(MiSensitivityInput { n: 1, any_binary: true }).is_err());
    }

    #[test]
    fn sensitivity_decreases_with_n() {
        for any_binary in [true, false] {
            let mut prev = f64::INFINITY;
            for n in (2..2000).chain([10_000, 100_000, 1_000_000]) {
                let d = mi_sensitivity(MiSensitivityInput { n, any_binary }).unwrap();
                assert!(d > 0.0 && d < prev, "n={n} binary={any_binary}");
                prev = d;
            }
        }
    }
}
