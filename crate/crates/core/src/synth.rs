//! Seeded synthetic datasets with planted dependencies, used by tests,
//! benchmarks and the CLI's `generate` command.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{Attribute, AttributeSchema, EncodedDataset};

const BASE_RATES: [f64; 4] = [0.3, 0.5, 0.65, 0.2];
const FLIP_RATES: [f64; 3] = [0.1, 0.15, 0.12];

fn binary_schema(d: usize) -> AttributeSchema {
    let attributes = (0..d)
        .map(|i| Attribute {
            name: format!("a{i}"),
            categories: vec!["0".into(), "1".into()],
        })
        .collect();
    AttributeSchema::new(attributes).expect("generated schema is valid")
}

/// `n` records over `d` binary attributes `a0..a{d-1}`. Attributes come in
/// pairs `(a{2m}, a{2m+1})`: the first is Bernoulli with a pair-specific
/// rate and the second copies it with a small flip probability. A trailing
/// unpaired attribute is an independent fair coin.
pub fn planted_pairs(n: usize, d: usize, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut columns = vec![Vec::with_capacity(n); d];
    for _ in 0..n {
        for m in 0..d / 2 {
            let base = rng.gen_bool(BASE_RATES[m % BASE_RATES.len()]) as u32;
            let flip = rng.gen_bool(FLIP_RATES[m % FLIP_RATES.len()]) as u32;
            columns[2 * m].push(base);
            columns[2 * m + 1].push(base ^ flip);
        }
        if d % 2 == 1 {
            columns[d - 1].push(rng.gen_bool(0.5) as u32);
        }
    }
    EncodedDataset::from_columns(Arc::new(binary_schema(d)), columns).expect("generated columns are valid")
}

/// `n` records over a chain `x0 -> x1 -> ... ` of attributes with the given
/// domain sizes. `x0` is skewed toward low categories; each later attribute
/// keeps its parent's value (mod its own domain) with probability
/// `1 - noise` and is uniform otherwise.
pub fn planted_chain(n: usize, domains: &[usize], noise: f64, seed: u64) -> EncodedDataset {
    assert!(domains.iter().all(|&s| s >= 2), "domains need at least two categories");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let attributes = domains
        .iter()
        .enumerate()
        .map(|(i, &s)| Attribute {
            name: format!("x{i}"),
            categories: (0..s).map(|c| format!("c{c}")).collect(),
        })
        .collect();
    let schema = AttributeSchema::new(attributes).expect("generated schema is valid");
    let mut columns = vec![Vec::with_capacity(n); domains.len()];
    for _ in 0..n {
        let mut prev = {
            let s = domains[0] as u32;
            let u: f64 = rng.gen();
            ((u * u * s as f64) as u32).min(s - 1)
        };
        columns[0].push(prev);
        for (i, &s) in domains.iter().enumerate().skip(1) {
            let s = s as u32;
            let v = if rng.gen_bool(noise) {
                rng.gen_range(0..s)
            } else {
                prev % s
            };
            columns[i].push(v);
            prev = v;
        }
    }
    EncodedDataset::from_columns(Arc::new(schema), columns).expect("generated columns are valid")
}
