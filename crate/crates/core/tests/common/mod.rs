#![allow(dead_code)]

use groupcf_core::model::TableEntry;
use groupcf_core::tabular::{Provenance, SplitTag};
use groupcf_core::{
    Class, Classifier, Dataset, FeatureSchema, FeatureSpec, Instance, LookupTable, Result, Row,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn classes() -> [String; 2] {
    ["neg".into(), "pos".into()]
}

/// Every point of a small all-categorical space, scored by a random linear
/// function and stored in a lookup table.
pub struct DiscreteWorld {
    pub schema: FeatureSchema,
    pub cardinalities: Vec<usize>,
    pub points: Vec<Instance>,
    pub table: LookupTable,
}

impl DiscreteWorld {
    pub fn random(seed: u64, max_features: usize, max_values: usize) -> DiscreteWorld {
        let mut r = rng(seed);
        let n_features = r.random_range(2..=max_features);
        let cardinalities: Vec<usize> = (0..n_features).map(|_| r.random_range(2..=max_values)).collect();
        let features = cardinalities
            .iter()
            .enumerate()
            .map(|(f, &c)| FeatureSpec::categorical(format!("f{f}"), (0..c).map(|v| format!("v{v}"))))
            .collect();
        let schema = FeatureSchema::new(features, classes()).unwrap();
        // per-value weights make the boundary non-monotone in the ordinal code
        let weights: Vec<Vec<f64>> = cardinalities
            .iter()
            .map(|&c| (0..c).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let bias: f64 = r.random_range(-0.5..0.5);
        let points = enumerate(&cardinalities);
        let entries = points.iter().map(|x| {
            let score: f64 = bias
                + x.values()
                    .iter()
                    .enumerate()
                    .map(|(f, &v)| weights[f][v as usize])
                    .sum::<f64>();
            let p = 1.0 / (1.0 + (-3.0 * score).exp());
            TableEntry {
                instance: x.clone(),
                proba: [1.0 - p, p],
            }
        });
        let table = LookupTable::new(entries.collect::<Vec<_>>()).unwrap();
        DiscreteWorld {
            schema,
            cardinalities,
            points,
            table,
        }
    }

    /// Every point once, labelled with the table's prediction.
    pub fn dataset(&self) -> Dataset {
        let rows = self
            .points
            .iter()
            .enumerate()
            .map(|(id, x)| Row {
                id,
                instance: x.clone(),
                label: self.table.predict(x).unwrap(),
            })
            .collect();
        Dataset::new(self.schema.clone(), rows, provenance()).unwrap()
    }
}

pub fn enumerate(cardinalities: &[usize]) -> Vec<Instance> {
    let mut out = vec![Vec::new()];
    for &c in cardinalities {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                (0..c).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v as f64);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Instance::new).collect()
}

pub fn provenance() -> Provenance {
    Provenance {
        source: "generated".into(),
        split: SplitTag::Train,
    }
}

/// Two continuous and two categorical features with a smooth boundary.
pub fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(
        vec![
            FeatureSpec::continuous("age"),
            FeatureSpec::categorical("edu", ["a", "b", "c", "d"]),
            FeatureSpec::continuous("hours"),
            FeatureSpec::categorical("sector", ["x", "y", "z"]),
        ],
        classes(),
    )
    .unwrap()
}

pub struct Linear;

impl Classifier for Linear {
    fn predict_proba(&self, x: &Instance) -> Result<[f64; 2]> {
        let score = 0.04 * (x.get(0) - 40.0) + 0.6 * (x.get(1) - 1.5) + 0.08 * (x.get(2) - 40.0)
            - 0.3 * x.get(3);
        let p = 1.0 / (1.0 + (-score).exp());
        Ok([1.0 - p, p])
    }
}

pub fn mixed_dataset(seed: u64, n: usize) -> Dataset {
    let mut r = rng(seed);
    let rows = (0..n)
        .map(|id| {
            let x = Instance::new(vec![
                r.random_range(18..70) as f64,
                r.random_range(0..4) as f64,
                r.random_range(10..70) as f64,
                r.random_range(0..3) as f64,
            ]);
            let p = Linear.predict_proba(&x).unwrap()[1];
            let label = if r.random::<f64>() < p { Class::SECOND } else { Class::FIRST };
            Row { id, instance: x, label }
        })
        .collect();
    Dataset::new(mixed_schema(), rows, provenance()).unwrap()
}
