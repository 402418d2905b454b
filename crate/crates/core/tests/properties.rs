use std::collections::BTreeSet;
use std::sync::Arc;

use dp2pub_core::bayesnet::{network_joint, ApPair};
use dp2pub_core::cluster::{cluster_attributes, cluster_importance, HeadRule};
use dp2pub_core::info::entropy_of;
use dp2pub_core::local::LocalRandomizer;
use dp2pub_core::pram::{compound_channel, kronecker};
use dp2pub_core::{
    alpha_way_avg, avd, budget_allocation, empirical_marginal, inverse_channel, joint_entropy, kl_network_divergence,
    load_csv, markov_blanket, mutual_information, rr_matrix, save_csv, Attribute, AttributeSchema, BayesianNetwork,
    DistributionVector, EncodedDataset, LocalBudget,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn schema_with(domains: &[usize], names: &[String]) -> Arc<AttributeSchema> {
    Arc::new(
        AttributeSchema::new(
            domains
                .iter()
                .zip(names)
                .map(|(&s, n)| Attribute {
                    name: n.clone(),
                    categories: (0..s).map(|c| c.to_string()).collect(),
                })
                .collect(),
        )
        .unwrap(),
    )
}

fn dataset() -> impl Strategy<Value = EncodedDataset> {
    proptest::collection::vec(2usize..=3, 2..=4).prop_flat_map(|domains| {
        let row = domains.iter().map(|&s| 0..s as u32).collect::<Vec<_>>();
        proptest::collection::vec(row, 1..80).prop_map(move |rows| {
            let names: Vec<String> = (0..domains.len()).map(|i| format!("x{i}")).collect();
            EncodedDataset::from_rows(schema_with(&domains, &names), &rows).unwrap()
        })
    })
}

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, len).prop_filter_map("all zero", |v| {
        let t: f64 = v.iter().sum();
        (t > 1e-6).then(|| v.into_iter().map(|x| x / t).collect())
    })
}

fn dv(p: Vec<f64>) -> DistributionVector {
    DistributionVector::from_probabilities(p).unwrap()
}

fn kl_direct(p: &DistributionVector, q: &DistributionVector) -> f64 {
    p.probabilities()
        .iter()
        .zip(q.probabilities())
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).log2())
        .sum()
}

fn chain_network(d: usize, degree: usize) -> BayesianNetwork {
    let pairs = (0..d)
        .map(|i| ApPair::new(i, (i.saturating_sub(degree)..i).collect()))
        .collect();
    BayesianNetwork::new(pairs, degree, d).unwrap()
}

fn permuted(data: &EncodedDataset, perm: &[usize]) -> EncodedDataset {
    let schema = data.schema();
    let attrs = perm.iter().map(|&p| schema.attribute(p).clone()).collect();
    let columns = perm.iter().map(|&p| data.column(p).to_vec()).collect();
    EncodedDataset::from_columns(Arc::new(AttributeSchema::new(attrs).unwrap()), columns).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn marginalizing_a_joint_matches_direct_counting(data in dataset()) {
        let joint = empirical_marginal(&data, &[0, 1]).unwrap();
        let m0 = joint.marginalize(&[0]).unwrap();
        let direct = empirical_marginal(&data, &[0]).unwrap();
        for (a, b) in m0.probabilities().iter().zip(direct.probabilities()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let swapped = joint.marginalize(&[1, 0]).unwrap();
        let direct = empirical_marginal(&data, &[1, 0]).unwrap();
        prop_assert_eq!(swapped.domain_sizes(), direct.domain_sizes());
        for (a, b) in swapped.probabilities().iter().zip(direct.probabilities()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn information_is_bounded_by_entropies(data in dataset()) {
        let d = data.num_attributes();
        let parents: Vec<usize> = (1..d).collect();
        let i = mutual_information(&data, 0, &parents).unwrap();
        let h0 = joint_entropy(&data, &[0]).unwrap();
        let hp = joint_entropy(&data, &parents).unwrap();
        prop_assert!(i >= 0.0);
        prop_assert!(i <= h0.min(hp) + 1e-12);
    }

    #[test]
    fn kl_identity_matches_direct_divergence(data in dataset(), degree in 0usize..3) {
        let net = chain_network(data.num_attributes(), degree);
        let full: Vec<usize> = (0..data.num_attributes()).collect();
        let joint = empirical_marginal(&data, &full).unwrap();
        let direct = kl_direct(&joint, &network_joint(&net, &data).unwrap());
        let identity = kl_network_divergence(&data, &net).unwrap();
        prop_assert!((direct - identity).abs() < 1e-9, "{} vs {}", direct, identity);
        prop_assert!(identity >= -1e-9);
    }

    #[test]
    fn csv_round_trip_preserves_data(data in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        save_csv(&path, &data).unwrap();
        let back = load_csv(&path, Some(data.schema())).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn avd_is_a_metric(p in simplex(5), q in simplex(5), r in simplex(5)) {
        let (p, q, r) = (dv(p), dv(q), dv(r));
        let pq = avd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert_eq!(pq, avd(&q, &p).unwrap());
        prop_assert!(avd(&p, &p).unwrap() < 1e-15);
        prop_assert!(pq <= avd(&p, &r).unwrap() + avd(&r, &q).unwrap() + 1e-12);
    }

    #[test]
    fn alpha_way_avg_is_permutation_invariant(
        a in dataset(),
        seed in any::<u64>(),
        alpha in 1usize..=2,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let columns = a.columns().iter().map(|c| {
            let mut c = c.clone();
            rand::seq::SliceRandom::shuffle(c.as_mut_slice(), &mut rng);
            c
        }).collect();
        let b = a.with_columns(columns).unwrap();
        let v = alpha_way_avg(&a, &b, alpha).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let d = a.num_attributes();
        let perm: Vec<usize> = (0..d).rev().collect();
        let w = alpha_way_avg(&permuted(&a, &perm), &permuted(&b, &perm), alpha).unwrap();
        prop_assert!((v - w).abs() < 1e-12);
    }

    #[test]
    fn inverse_channel_fixes_its_source(pi in simplex(4), eps in 0.2f64..5.0) {
        let q = rr_matrix(4, eps).unwrap();
        let inv = inverse_channel(&q, &dv(pi.clone())).unwrap();
        let back = inv.push_forward(&q.push_forward(&pi));
        for (x, y) in back.iter().zip(&pi) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        for row in 0..4 {
            prop_assert!((inv.row(row).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kronecker_pushes_forward_products(pa in simplex(2), pb in simplex(3), ea in 0.2f64..3.0, eb in 0.2f64..3.0) {
        let a = rr_matrix(2, ea).unwrap();
        let b = rr_matrix(3, eb).unwrap();
        let k = kronecker(&a, &b);
        prop_assert_eq!(compound_channel(&[&a, &b]).unwrap(), k.clone());
        let joint: Vec<f64> = pa.iter().flat_map(|x| pb.iter().map(move |y| x * y)).collect();
        let fa = a.push_forward(&pa);
        let fb = b.push_forward(&pb);
        let expected: Vec<f64> = fa.iter().flat_map(|x| fb.iter().map(move |y| x * y)).collect();
        for (x, y) in k.push_forward(&joint).iter().zip(&expected) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn local_record_ratio_is_e_eps(eps in 0.1f64..8.0, domains in proptest::collection::vec(2usize..=6, 1..6)) {
        let names: Vec<String> = (0..domains.len()).map(|i| format!("x{i}")).collect();
        let schema = schema_with(&domains, &names);
        let budget = LocalBudget::new(eps, domains.len()).unwrap();
        let r = LocalRandomizer::new(&schema, budget).unwrap();
        let ratio = r.record_ratio_bound();
        prop_assert!((ratio - eps.exp()).abs() <= 1e-12 * eps.exp());
    }

    #[test]
    fn budgets_sum_and_respect_inverse_order(cifs in simplex(4), eps2 in 0.1f64..5.0) {
        prop_assume!(cifs.iter().all(|&c| c > 1e-6));
        let b = budget_allocation(&cifs, eps2).unwrap();
        prop_assert!((b.iter().sum::<f64>() - eps2).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                if cifs[i] > cifs[j] {
                    prop_assert!(b[i] < b[j]);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Dag {
    d: usize,
    degree: usize,
    parents: Vec<Vec<usize>>,
}

fn dag() -> impl Strategy<Value = Dag> {
    (1usize..=8, 1usize..=3).prop_flat_map(|(d, degree)| {
        let per_node: Vec<_> = (0..d)
            .map(|i| proptest::sample::subsequence((0..i).collect::<Vec<_>>(), 0..=degree.min(i)))
            .collect();
        per_node.prop_map(move |parents| Dag { d, degree, parents })
    })
}

fn to_network(dag: &Dag) -> BayesianNetwork {
    let pairs = dag
        .parents
        .iter()
        .enumerate()
        .map(|(i, p)| ApPair::new(i, p.clone()))
        .collect();
    BayesianNetwork::new(pairs, dag.degree, dag.d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn markov_blanket_matches_brute_force(dag in dag()) {
        let net = to_network(&dag);
        for x in 0..dag.d {
            let mut expected: BTreeSet<usize> = dag.parents[x].iter().copied().collect();
            for (y, ps) in dag.parents.iter().enumerate() {
                if ps.contains(&x) {
                    expected.insert(y);
                    expected.extend(ps.iter().copied().filter(|&p| p != x));
                }
            }
            prop_assert_eq!(markov_blanket(&net, x), expected);
        }
    }

    #[test]
    fn clustering_partitions_the_attributes(dag in dag(), seed in any::<u64>(), weights in proptest::collection::vec(0.1f64..2.0, 8)) {
        let net = to_network(&dag);
        let entropies = &weights[..dag.d];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for rule in [HeadRule::Random, HeadRule::MaxEntropy] {
            let clusters = cluster_attributes(&net, rule, Some(entropies), &mut rng).unwrap();
            let mut seen = vec![0usize; dag.d];
            for c in &clusters {
                prop_assert!(c.members.contains(&c.head));
                for &m in &c.members {
                    seen[m] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            let cifs = cluster_importance(&clusters, entropies).unwrap();
            prop_assert!((cifs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn entropy_of_uniform_is_log_domain() {
    for s in 2..=8 {
        let p = vec![1.0 / s as f64; s];
        assert!((entropy_of(&p) - (s as f64).log2()).abs() < 1e-12);
    }
}
