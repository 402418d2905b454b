//! Marginal utility: average variation distance over α-way marginals and
//! ε sweeps over repeated publications.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::BudgetRule;
use crate::data::{empirical_marginal, AttributeSchema, DistributionVector, EncodedDataset};
use crate::error::{Error, Result};
use crate::pipeline::{publish, Mode, PipelineConfig};
use crate::seed::{Seeder, Stage};

/// Default limit on the number of attribute subsets evaluated per α.
pub const DEFAULT_SUBSET_CAP: usize = 20_000;

/// Total variation distance `½ Σ |p_w - z_w|`.
pub fn avd(p: &DistributionVector, z: &DistributionVector) -> Result<f64> {
    if p.domain_sizes() != z.domain_sizes() {
        return Err(Error::DomainMismatch(format!(
            "domains {:?} and {:?} differ",
            p.domain_sizes(),
            z.domain_sizes()
        )));
    }
    let sum: f64 = p
        .probabilities()
        .iter()
        .zip(z.probabilities())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((sum / 2.0).min(1.0))
}

/// Marginal orders evaluated by default: 3 and 4 for all-binary schemas,
/// 2 and 3 otherwise, restricted to orders the schema can support.
pub fn default_alphas(schema: &AttributeSchema) -> Vec<usize> {
    let wanted: &[usize] = if schema.is_all_binary() { &[3, 4] } else { &[2, 3] };
    let d = schema.len();
    let mut out: Vec<usize> = wanted.iter().copied().filter(|&a| a <= d).collect();
    if out.is_empty() {
        out.push(d);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlphaWayOptions {
    pub subset_cap: usize,
    /// When more than `subset_cap` subsets exist, evaluate a seeded uniform
    /// sample of `subset_cap` of them instead of failing.
    pub sample_beyond_cap: bool,
    pub seed: u64,
}

impl Default for AlphaWayOptions {
    fn default() -> Self {
        Self {
            subset_cap: DEFAULT_SUBSET_CAP,
            sample_beyond_cap: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaWayResult {
    pub alpha: usize,
    pub mean: f64,
    pub subsets_evaluated: usize,
    pub sampled: bool,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Mean AVD between `original` and `published` over every α-subset of attributes.
pub fn alpha_way_avg(original: &EncodedDataset, published: &EncodedDataset, alpha: usize) -> Result<f64> {
    Ok(alpha_way_avg_with(original, published, alpha, &AlphaWayOptions::default())?.mean)
}

pub fn alpha_way_avg_with(
    original: &EncodedDataset,
    published: &EncodedDataset,
    alpha: usize,
    options: &AlphaWayOptions,
) -> Result<AlphaWayResult> {
    if original.schema() != published.schema() {
        return Err(Error::SchemaMismatch("original and published schemas differ".into()));
    }
    let d = original.num_attributes();
    if alpha < 1 || alpha > d {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [1, {d}], got {alpha}"
        )));
    }
    let total = binomial(d, alpha);
    let (subsets, sampled): (Vec<Vec<usize>>, bool) = if total <= options.subset_cap as u128 {
        ((0..d).combinations(alpha).collect(), false)
    } else if options.sample_beyond_cap {
        let mut rng = Seeder::new(options.seed).rng(Stage::SubsetSample, alpha as u64);
        let mut chosen = BTreeSet::new();
        while chosen.len() < options.subset_cap {
            let mut pick: Vec<usize> = index::sample(&mut rng, d, alpha).into_vec();
            pick.sort_unstable();
            chosen.insert(pick);
        }
        (chosen.into_iter().collect(), true)
    } else {
        return Err(Error::SubsetCapExceeded {
            count: total,
            cap: options.subset_cap,
        });
    };
    let distances = subsets
        .par_iter()
        .map(|s| avd(&empirical_marginal(original, s)?, &empirical_marginal(published, s)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AlphaWayResult {
        alpha,
        mean: distances.iter().sum::<f64>() / distances.len() as f64,
        subsets_evaluated: distances.len(),
        sampled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: Mode,
    pub epsilons: Vec<f64>,
    pub runs: usize,
    pub alphas: Vec<usize>,
    pub degree: usize,
    pub split: f64,
    pub budget_rule: BudgetRule,
    pub seed: u64,
    pub subset_cap: usize,
}

impl SweepConfig {
    /// A sweep template taking mode, degree, split, seed and runs from a
    /// pipeline configuration.
    pub fn from_pipeline(config: &PipelineConfig, epsilons: Vec<f64>, alphas: Vec<usize>) -> Self {
        Self {
            mode: config.mode,
            epsilons,
            runs: config.runs,
            alphas,
            degree: config.degree,
            split: config.split,
            budget_rule: config.budget_rule,
            seed: config.seed,
            subset_cap: DEFAULT_SUBSET_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub epsilon: f64,
    pub alpha: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: Mode,
    pub k: usize,
    pub alphas: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub runs: usize,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, epsilon_index: usize, alpha: usize) -> Option<&SweepCell> {
        let eps = *self.epsilons.get(epsilon_index)?;
        self.cells.iter().find(|c| c.epsilon == eps && c.alpha == alpha)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epsilon,alpha,mean,sd\n");
        for c in &self.cells {
            out.push_str(&format!("{},{},{},{}\n", c.epsilon, c.alpha, c.mean, c.sd));
        }
        out
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Publishes `runs` times per ε and records mean and sample standard
/// deviation of the α-way AVD. Run `r` at ε index `i` uses the master seed
/// derived from `(Sweep, i, r)`; runs execute in parallel but are reduced
/// in index order.
pub fn run_sweep(data: &EncodedDataset, config: &SweepConfig) -> Result<SweepReport> {
    if config.epsilons.is_empty() || config.runs < 1 || config.alphas.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs epsilons, alphas and at least one run".into(),
        ));
    }
    let master = Seeder::new(config.seed);
    let jobs: Vec<(usize, usize)> = (0..config.epsilons.len())
        .flat_map(|i| (0..config.runs).map(move |r| (i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let seed = master.child(Stage::Sweep, i as u64, r as u64).master();
            let pipeline = PipelineConfig {
                mode: config.mode,
                epsilon: config.epsilons[i],
                split: config.split,
                degree: config.degree,
                seed,
                budget_rule: config.budget_rule,
                ..Default::default()
            };
            let (published, _) = publish(data, &pipeline)?;
            let options = AlphaWayOptions {
                subset_cap: config.subset_cap,
                sample_beyond_cap: true,
                seed,
            };
            config
                .alphas
                .iter()
                .map(|&a| alpha_way_avg_with(data, &published, a, &options).map(|r| r.mean))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for (i, &epsilon) in config.epsilons.iter().enumerate() {
        let runs = &results[i * config.runs..(i + 1) * config.runs];
        for (k, &alpha) in config.alphas.iter().enumerate() {
            let values: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            let (mean, sd) = mean_sd(&values);
            cells.push(SweepCell {
                epsilon,
                alpha,
                mean,
                sd,
            });
        }
    }
    Ok(SweepReport {
        mode: config.mode,
        k: config.degree,
        alphas: config.alphas.clone(),
        epsilons: config.epsilons.clone(),
        runs: config.runs,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::Attribute;
    use crate::synth::planted_pairs;

    fn dist(p: &[f64]) -> DistributionVector {
        DistributionVector::from_probabilities(p.to_vec()).unwrap()
    }

    #[test]
    fn avd_examples() {
        assert_eq!(avd(&dist(&[0.2, 0.8]), &dist(&[0.2, 0.8])).unwrap(), 0.0);
        assert_eq!(avd(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(avd(&dist(&[0.5, 0.5]), &dist(&[0.75, 0.25])).unwrap(), 0.25);
        assert!(avd(&dist(&[0.5, 0.5]), &dist(&[0.2, 0.3, 0.5])).is_err());
    }

    fn schema2() -> Arc<AttributeSchema> {
        Arc::new(
            AttributeSchema::new(
                ["x", "y"]
                    .iter()
                    .map(|n| Attribute {
                        name: n.to_string(),
                        categories: vec!["0".into(), "1".into()],
                    })
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn hand_built_two_way() {
        // original cells (00,01,10,11) = (2,1,0,1)/4; published = (1,1,1,1)/4
        let s = schema2();
        let orig =
            EncodedDataset::from_rows(Arc::clone(&s), &[vec![0, 0], vec![0, 0], vec![0, 1], vec![1, 1]]).unwrap();
        let publ = EncodedDataset::from_rows(s, &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]).unwrap();
        let v = alpha_way_avg(&orig, &publ, 2).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert_eq!(alpha_way_avg(&orig, &orig, 2).unwrap(), 0.0);
        // 1-way: x (0.75,0.25) vs (0.5,0.5) -> 0.25; y (0.5,0.5) vs (0.5,0.5) -> 0
        assert!((alpha_way_avg(&orig, &publ, 1).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn subset_count_and_cap() {
        let data = planted_pairs(200, 4, 1);
        let r = alpha_way_avg_with(&data, &data, 2, &AlphaWayOptions::default()).unwrap();
        assert_eq!(r.subsets_evaluated, 6);
        assert!(!r.sampled);
        let tight = AlphaWayOptions {
            subset_cap: 4,
            ..Default::default()
        };
        assert!(matches!(
            alpha_way_avg_with(&data, &data, 2, &tight),
            Err(Error::SubsetCapExceeded { count: 6, cap: 4 })
        ));
        let sampled = AlphaWayOptions {
            subset_cap: 4,
            sample_beyond_cap: true,
            seed: 3,
        };
        let r = alpha_way_avg_with(&data, &data, 2, &sampled).unwrap();
        assert_eq!((r.subsets_evaluated, r.sampled), (4, true));
        assert!(alpha_way_avg(&data, &data, 5).is_err());
    }

    #[test]
    fn schema_mismatch() {
        let a = planted_pairs(50, 4, 1);
        let b = planted_pairs(50, 2, 1);
        assert!(matches!(alpha_way_avg(&a, &b, 1), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn default_alpha_rule() {
        let binary = planted_pairs(10, 6, 0);
        assert_eq!(default_alphas(binary.schema()), vec![3, 4]);
        let mixed = AttributeSchema::new(vec![
            Attribute {
                name: "a".into(),
                categories: vec!["0".into(), "1".into(), "2".into()],
            },
            Attribute {
                name: "b".into(),
                categories: vec!["0".into(), "1".into()],
            },
            Attribute {
                name: "c".into(),
                categories: vec!["0".into(), "1".into()],
            },
        ])
        .unwrap();
        assert_eq!(default_alphas(&mixed), vec![2, 3]);
    }

    #[test]
    fn sweep_is_deterministic_and_near_zero_at_large_eps() {
        let data = planted_pairs(20_000, 6, 2);
        let config = SweepConfig {
            mode: Mode::Trusted,
            epsilons: vec![400.0],
            runs: 1,
            alphas: vec![2],
            degree: 2,
            split: 0.5,
            budget_rule: BudgetRule::InverseImportance,
            seed: 5,
            subset_cap: DEFAULT_SUBSET_CAP,
        };
        let a = run_sweep(&data, &config).unwrap();
        assert!(a.cells[0].mean < 0.02, "{:?}", a.cells);
        assert_eq!(a.cells[0].sd, 0.0);
        let b = run_sweep(&data, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.to_csv_string().starts_with("epsilon,alpha,mean,sd\n400,2,"));
    }
}
