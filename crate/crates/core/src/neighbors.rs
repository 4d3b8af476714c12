//! Nearest like neighbour pools and study seed selection.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::Classifier;
use crate::rng::{derive_seed, rng_from, streams};
use crate::tabular::{Class, Dataset, FeatureStats, Instance};
use crate::{Error, Result};

/// Count of features whose discretised codes differ: categorical features by
/// ordinal code, continuous features by quantile bin.
pub fn hamming_distance(a: &Instance, b: &Instance, stats: &FeatureStats) -> Result<usize> {
    for x in [a, b] {
        if x.len() != stats.len() {
            return Err(Error::SchemaMismatch {
                expected: stats.len(),
                found: x.len(),
            });
        }
    }
    Ok((0..stats.len())
        .filter(|&f| stats.bin_of(f, a.get(f)) != stats.bin_of(f, b.get(f)))
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub row_id: usize,
    pub instance: Instance,
    pub distance: usize,
}

/// A query plus its nearest like neighbours, all predicted as `class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationPool {
    pub query: Instance,
    pub query_row: Option<usize>,
    pub class: Class,
    /// Sorted by ascending distance, ties by training row order.
    pub members: Vec<PoolMember>,
}

impl ExplanationPool {
    /// Query first, then members.
    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        core::iter::once(&self.query).chain(self.members.iter().map(|m| &m.instance))
    }

    /// Query plus members.
    pub fn size(&self) -> usize {
        self.members.len() + 1
    }
}

/// Which training rows may join a pool besides agreeing with the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikeFilter {
    /// Also require the dataset label to equal the model's prediction.
    pub correctly_classified: bool,
}

/// Training rows paired with their cached model predictions.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    train: &'a Dataset,
    predictions: Vec<Class>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new<C: Classifier + ?Sized>(train: &'a Dataset, model: &C) -> Result<Self> {
        let predictions = train
            .rows()
            .iter()
            .map(|r| model.predict(&r.instance))
            .collect::<Result<Vec<_>>>()?;
        Ok(NeighborIndex { train, predictions })
    }

    pub fn train(&self) -> &'a Dataset {
        self.train
    }

    /// Model prediction for the training row at `position`.
    pub fn prediction(&self, position: usize) -> Class {
        self.predictions[position]
    }

    pub fn predictions(&self) -> &[Class] {
        &self.predictions
    }

    /// The `n` training rows closest to `query` among those predicted as
    /// `class`, excluding the row whose id is `exclude`.
    pub fn nearest_like(
        &self,
        query: &Instance,
        class: Class,
        exclude: Option<usize>,
        n: usize,
        stats: &FeatureStats,
        filter: LikeFilter,
    ) -> Result<Vec<PoolMember>> {
        let mut scored = Vec::new();
        for (pos, row) in self.train.rows().iter().enumerate() {
            if self.predictions[pos] != class
                || Some(row.id) == exclude
                || (filter.correctly_classified && row.label != class)
            {
                continue;
            }
            scored.push((hamming_distance(query, &row.instance, stats)?, pos));
        }
        if scored.len() < n {
            return Err(Error::InsufficientNeighbors {
                found: scored.len(),
                wanted: n,
            });
        }
        // (distance, position) is a total order, so the unstable select is exact.
        if n < scored.len() {
            scored.select_nth_unstable(n);
            scored.truncate(n);
        }
        scored.sort_unstable();
        Ok(scored
            .into_iter()
            .map(|(distance, pos)| {
                let row = &self.train.rows()[pos];
                PoolMember {
                    row_id: row.id,
                    instance: row.instance.clone(),
                    distance,
                }
            })
            .collect())
    }

    /// Pool of the query and its `n` nearest like neighbours, where the like
    /// class is the model's prediction for the query.
    pub fn pool<C: Classifier + ?Sized>(
        &self,
        model: &C,
        query: &Instance,
        query_row: Option<usize>,
        n: usize,
        stats: &FeatureStats,
        filter: LikeFilter,
    ) -> Result<ExplanationPool> {
        let class = model.predict(query)?;
        let members = self.nearest_like(query, class, query_row, n, stats, filter)?;
        Ok(ExplanationPool {
            query: query.clone(),
            query_row,
            class,
            members,
        })
    }
}

/// One-shot form of [`NeighborIndex::pool`].
pub fn nearest_like_neighbors<C: Classifier + ?Sized>(
    query: &Instance,
    query_row: Option<usize>,
    train: &Dataset,
    model: &C,
    n: usize,
    stats: &FeatureStats,
) -> Result<ExplanationPool> {
    NeighborIndex::new(train, model)?.pool(model, query, query_row, n, stats, LikeFilter::default())
}

/// True when a correctly classified row's two class probabilities lie within
/// `margin` of each other.
pub fn is_low_confidence(proba: [f64; 2], margin: f64) -> bool {
    libm::fabs(proba[0] - proba[1]) <= margin
}

/// Positions of rows that are correctly classified and low-confidence,
/// grouped by label.
pub fn eligible_seeds<C: Classifier + ?Sized>(
    dataset: &Dataset,
    model: &C,
    margin: f64,
) -> Result<[Vec<usize>; 2]> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "margin {margin} not in (0, 1)"
        )));
    }
    let mut by_class = [Vec::new(), Vec::new()];
    for (pos, row) in dataset.rows().iter().enumerate() {
        let proba = model.predict_proba(&row.instance)?;
        if crate::model::argmax(proba) == row.label && is_low_confidence(proba, margin) {
            by_class[row.label.index()].push(pos);
        }
    }
    Ok(by_class)
}

/// Seeded random draw order over the eligible rows of each class.
pub fn seed_draw_order(mut eligible: [Vec<usize>; 2], seed: u64) -> [Vec<usize>; 2] {
    for (c, positions) in eligible.iter_mut().enumerate() {
        let mut rng = rng_from(derive_seed(seed, streams::SEEDS, c as u64));
        positions.shuffle(&mut rng);
    }
    eligible
}

/// Draws `count_per_class` eligible seeds from each class. Returned positions
/// alternate between the classes, starting with class 0.
pub fn select_seeds<C: Classifier + ?Sized>(
    dataset: &Dataset,
    model: &C,
    count_per_class: usize,
    margin: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let order = seed_draw_order(eligible_seeds(dataset, model, margin)?, seed);
    for (c, positions) in order.iter().enumerate() {
        if positions.len() < count_per_class {
            return Err(Error::InsufficientEligible {
                class: Class::from_index(c).expect("binary"),
                found: positions.len(),
                wanted: count_per_class,
            });
        }
    }
    Ok((0..count_per_class)
        .flat_map(|i| [order[0][i], order[1][i]])
        .collect())
}
