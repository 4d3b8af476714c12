//! Group counterfactuals: one shared feature substitution that flips the
//! model's prediction for a whole pool of similar instances.
//!
//! The search runs in four steps:
//!
//! 1. [`identify_key_features`] generates a single counterfactual for every
//!    pool instance and votes for the most frequently changed features,
//!    noting the majority direction of continuous changes.
//! 2. [`build_region`] collects contrast-class training rows, narrowed to
//!    the side of the pool median that matches each direction.
//! 3. [`sample_candidates`] projects region rows (or their medoids) onto the
//!    key features; every candidate is a real data point's values.
//! 4. [`evaluate_candidate`] substitutes a candidate into every pool
//!    instance; [`GroupExplainer::explain`] keeps the candidate with the
//!    highest coverage, then the lowest mean proximity, then the earliest
//!    draw.

mod kmedoids;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use kmedoids::{kmedoids, Medoids, TupleDissimilarity};

use crate::metrics::{proximity, ProximityScore};
use crate::model::Classifier;
use crate::neighbors::{ExplanationPool, LikeFilter, NeighborIndex};
use crate::rng::{derive_seed, rng_from, streams};
use crate::singlecf::{generate_single_cf, CfSearchConfig, Counterfactual, Direction, FeatureChange};
use crate::tabular::{median, Class, Dataset, FeatureKind, FeatureSchema, FeatureStats, Instance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub feature: usize,
    pub count: usize,
}

/// The features a group counterfactual may change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFeatureSet {
    /// Selected features, best-voted first.
    pub features: Vec<usize>,
    /// Aligned with `features`; always `None` for categorical features.
    pub directions: Vec<Direction>,
    /// Every feature changed by at least one valid single, by feature index.
    pub votes: Vec<Vote>,
}

impl KeyFeatureSet {
    pub fn vote_count(&self, feature: usize) -> usize {
        self.votes
            .iter()
            .find(|v| v.feature == feature)
            .map_or(0, |v| v.count)
    }

    pub fn named_votes(&self, schema: &FeatureSchema) -> Vec<(String, usize)> {
        self.votes
            .iter()
            .map(|v| (schema.feature(v.feature).name.clone(), v.count))
            .collect()
    }
}

/// Result of the key-feature step, including the singles it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFeatureOutcome {
    pub keys: KeyFeatureSet,
    /// One per pool instance, query first. Invalid singles are kept so the
    /// shortfall is visible.
    pub singles: Vec<Counterfactual>,
    pub failed: usize,
}

/// Runs a single counterfactual search for every pool instance and picks the
/// `k` most frequently changed actionable features (ties by lower index).
pub fn identify_key_features<C: Classifier + ?Sized>(
    pool: &ExplanationPool,
    model: &C,
    schema: &FeatureSchema,
    stats: &FeatureStats,
    cf_config: &CfSearchConfig,
    k: usize,
) -> Result<KeyFeatureOutcome> {
    let actionable = schema.features().iter().filter(|f| f.actionable).count();
    if k == 0 || k > actionable {
        return Err(Error::InvalidConfig(alloc::format!(
            "k = {k} key features requested, {actionable} actionable"
        )));
    }
    let target = pool.class.other();
    let mut singles = Vec::with_capacity(pool.size());
    let rows = core::iter::once(pool.query_row).chain(pool.members.iter().map(|m| Some(m.row_id)));
    for (i, (instance, row)) in pool.instances().zip(rows).enumerate() {
        let config = cf_config.with_seed(derive_seed(cf_config.seed, streams::SINGLE, i as u64));
        singles.push(generate_single_cf(model, instance, row, target, schema, stats, &config)?);
    }
    let valid: Vec<&Counterfactual> = singles.iter().filter(|s| s.valid).collect();
    if valid.is_empty() {
        return Err(Error::AllSinglesFailed {
            attempted: singles.len(),
        });
    }
    let failed = singles.len() - valid.len();
    let keys = tally(schema, &valid, k);
    Ok(KeyFeatureOutcome {
        keys,
        singles,
        failed,
    })
}

/// Per-feature vote over valid singles and the majority direction of each
/// selected continuous feature.
pub fn tally(schema: &FeatureSchema, singles: &[&Counterfactual], k: usize) -> KeyFeatureSet {
    let mut counts = vec![0usize; schema.len()];
    let mut signs = vec![(0usize, 0usize); schema.len()];
    for cf in singles {
        for change in &cf.changes {
            counts[change.feature] += 1;
            match change.direction() {
                Direction::Increase => signs[change.feature].0 += 1,
                Direction::Decrease => signs[change.feature].1 += 1,
                Direction::None => {}
            }
        }
    }
    let votes: Vec<Vote> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(feature, &count)| Vote { feature, count })
        .collect();
    let mut ranked: Vec<&Vote> = votes
        .iter()
        .filter(|v| schema.feature(v.feature).actionable)
        .collect();
    ranked.sort_by(|a, b| b.count.cmp(&a.count).then(a.feature.cmp(&b.feature)));
    let features: Vec<usize> = ranked.iter().take(k).map(|v| v.feature).collect();
    let directions = features
        .iter()
        .map(|&f| match schema.feature(f).kind {
            FeatureKind::Categorical => Direction::None,
            FeatureKind::Continuous => {
                let (up, down) = signs[f];
                match up.cmp(&down) {
                    core::cmp::Ordering::Greater => Direction::Increase,
                    core::cmp::Ordering::Less => Direction::Decrease,
                    core::cmp::Ordering::Equal => Direction::None,
                }
            }
        })
        .collect();
    KeyFeatureSet {
        features,
        directions,
        votes,
    }
}

/// A direction constraint applied when building a region: members must lie
/// strictly on the `direction` side of `pivot` (the pool median).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionFilter {
    pub feature: usize,
    pub direction: Direction,
    pub pivot: f64,
}

impl DirectionFilter {
    pub fn admits(&self, x: &Instance) -> bool {
        let v = x.get(self.feature);
        match self.direction {
            Direction::Increase => v > self.pivot,
            Direction::Decrease => v < self.pivot,
            Direction::None => true,
        }
    }
}

/// Contrast-class training rows that candidate values are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub target: Class,
    /// Positions in the training dataset, in row order.
    pub members: Vec<usize>,
    pub filters: Vec<DirectionFilter>,
    /// The filters emptied the region, so it holds every contrast-class row.
    pub fallback: bool,
}

pub fn build_region(
    index: &NeighborIndex<'_>,
    pool: &ExplanationPool,
    target: Class,
    keys: &KeyFeatureSet,
) -> Result<Region> {
    let train = index.train();
    let contrast: Vec<usize> = (0..train.len())
        .filter(|&p| index.prediction(p) == target)
        .collect();
    if contrast.is_empty() {
        return Err(Error::EmptyContrastClass(target));
    }
    let filters: Vec<DirectionFilter> = keys
        .features
        .iter()
        .zip(&keys.directions)
        .filter(|(_, d)| **d != Direction::None)
        .map(|(&feature, &direction)| {
            let mut values: Vec<f64> = pool.instances().map(|x| x.get(feature)).collect();
            DirectionFilter {
                feature,
                direction,
                pivot: median(&mut values).expect("pool is non-empty"),
            }
        })
        .collect();
    let filtered: Vec<usize> = contrast
        .iter()
        .copied()
        .filter(|&p| filters.iter().all(|f| f.admits(&train.rows()[p].instance)))
        .collect();
    let fallback = filtered.is_empty();
    Ok(Region {
        target,
        members: if fallback { contrast } else { filtered },
        filters,
        fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Rows,
    Medoids,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "source")]
pub enum Origin {
    Row { row_id: usize },
    Medoid { medoid: usize, row_id: usize },
}

/// Values for every key feature, taken from one real contrast-class row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSubstitution {
    /// `(feature, value)` aligned with the key features.
    pub values: Vec<(usize, f64)>,
    pub origin: Origin,
}

impl CandidateSubstitution {
    pub fn apply(&self, x: &Instance) -> Instance {
        let mut out = x.clone();
        for &(f, v) in &self.values {
            out.set(f, v);
        }
        out
    }

    pub fn changes_for(&self, x: &Instance) -> Vec<FeatureChange> {
        let mut changes: Vec<FeatureChange> = self
            .values
            .iter()
            .filter(|(f, v)| x.get(*f) != *v)
            .map(|&(feature, to)| FeatureChange {
                feature,
                from: x.get(feature),
                to,
            })
            .collect();
        changes.sort_by_key(|c| c.feature);
        changes
    }

    fn same_values(&self, other: &CandidateSubstitution) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.0 == b.0 && (a.1 + 0.0).to_bits() == (b.1 + 0.0).to_bits())
    }
}

fn project(train: &Dataset, position: usize, keys: &KeyFeatureSet) -> Vec<(usize, f64)> {
    let x = &train.rows()[position].instance;
    keys.features.iter().map(|&f| (f, x.get(f))).collect()
}

/// Candidate substitutions from a region. `Rows` draws up to `m` region rows
/// without replacement (a seeded permutation prefix, so larger `m` only adds
/// candidates) and removes duplicate tuples keeping first occurrences.
/// `Medoids` returns the k-medoid tuples of the region's projections with
/// `k = min(m, |region|)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_candidates(
    region: &Region,
    train: &Dataset,
    keys: &KeyFeatureSet,
    stats: &FeatureStats,
    m: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<Vec<CandidateSubstitution>> {
    if region.members.is_empty() {
        return Err(Error::EmptyContrastClass(region.target));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("candidate budget must be positive".into()));
    }
    let mut out: Vec<CandidateSubstitution> = Vec::new();
    let mut push = |c: CandidateSubstitution| {
        if !out.iter().any(|o| o.same_values(&c)) {
            out.push(c);
        }
    };
    match mode {
        SamplingMode::Rows => {
            let mut order = region.members.clone();
            order.shuffle(&mut rng_from(derive_seed(seed, streams::CANDIDATES, 0)));
            for &p in order.iter().take(m) {
                push(CandidateSubstitution {
                    values: project(train, p, keys),
                    origin: Origin::Row {
                        row_id: train.rows()[p].id,
                    },
                });
            }
        }
        SamplingMode::Medoids => {
            let points: Vec<Vec<f64>> = region
                .members
                .iter()
                .map(|&p| project(train, p, keys).into_iter().map(|(_, v)| v).collect())
                .collect();
            let dissimilarity = TupleDissimilarity {
                scales: keys
                    .features
                    .iter()
                    .map(|&f| stats.continuous(f).map(|_| stats.scale(f)))
                    .collect(),
            };
            let k = m.min(points.len());
            let found = kmedoids(&points, k, derive_seed(seed, streams::MEDOIDS, 0), &dissimilarity)?;
            for (medoid, &i) in found.medoids.iter().enumerate() {
                let p = region.members[i];
                push(CandidateSubstitution {
                    values: project(train, p, keys),
                    origin: Origin::Medoid {
                        medoid,
                        row_id: train.rows()[p].id,
                    },
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    /// Query first, then pool members.
    pub per_instance_valid: Vec<bool>,
    pub coverage: f64,
}

impl CandidateEvaluation {
    pub fn covered(&self) -> usize {
        self.per_instance_valid.iter().filter(|&&v| v).count()
    }
}

/// Substitutes the candidate into every pool instance and checks whether the
/// model now predicts the contrast class.
pub fn evaluate_candidate<C: Classifier + ?Sized>(
    model: &C,
    pool: &ExplanationPool,
    candidate: &CandidateSubstitution,
) -> Result<CandidateEvaluation> {
    let target = pool.class.other();
    let per_instance_valid = pool
        .instances()
        .map(|x| Ok(model.predict(&candidate.apply(x))? == target))
        .collect::<Result<Vec<bool>>>()?;
    let covered = per_instance_valid.iter().filter(|&&v| v).count();
    Ok(CandidateEvaluation {
        coverage: covered as f64 / per_instance_valid.len() as f64,
        per_instance_valid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    /// Pool size counting the query.
    pub pool_size: usize,
    /// Number of key features.
    pub k: usize,
    pub cf: CfSearchConfig,
    /// Candidate budget in rows mode.
    pub candidates: usize,
    pub mode: SamplingMode,
    /// Medoid count in medoids mode.
    pub k_medoids: usize,
    pub seed: u64,
    pub trace: bool,
    /// Skip candidates that leave any key feature of any pool instance
    /// unchanged, so every covered instance changes exactly `k` features.
    pub require_full_change: bool,
    pub neighbor_filter: LikeFilter,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            pool_size: 5,
            k: 2,
            cf: CfSearchConfig::default(),
            candidates: 100,
            mode: SamplingMode::Rows,
            k_medoids: 5,
            seed: 0,
            trace: false,
            require_full_change: false,
            neighbor_filter: LikeFilter::default(),
        }
    }
}

impl GroupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.k == 0 || self.candidates == 0 || self.k_medoids == 0 {
            return Err(Error::InvalidConfig(
                "pool size, k, candidate budget and medoid count must be positive".into(),
            ));
        }
        self.cf.validate()
    }
}

/// One scored candidate, as reported by tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub draw: usize,
    pub substitution: CandidateSubstitution,
    pub coverage: f64,
    pub mean_proximity: Option<f64>,
    /// Set when `require_full_change` excluded the candidate.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub size: usize,
    pub filters: Vec<DirectionFilter>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCounterfactual {
    pub pool: ExplanationPool,
    pub target: Class,
    pub key_features: KeyFeatureSet,
    /// Step-one singles, query first.
    pub singles: Vec<Counterfactual>,
    pub singles_failed: usize,
    pub region: RegionSummary,
    pub substitution: CandidateSubstitution,
    /// Query first, then pool members.
    pub per_instance_valid: Vec<bool>,
    pub coverage: f64,
    pub changes_per_instance: Vec<Vec<FeatureChange>>,
    pub proximity_per_instance: Vec<ProximityScore>,
    pub candidates_evaluated: usize,
    /// Every candidate, sorted by coverage descending (stable in draw order).
    pub trace: Option<Vec<CandidateScore>>,
}

impl GroupCounterfactual {
    pub fn covered(&self) -> usize {
        self.per_instance_valid.iter().filter(|&&v| v).count()
    }

    /// Number of key features in the shared substitution.
    pub fn sparsity(&self) -> usize {
        self.substitution.values.len()
    }
}

/// Model, training split and statistics shared by repeated group searches,
/// with training-set predictions cached once.
pub struct GroupExplainer<'a, C: Classifier + ?Sized> {
    model: &'a C,
    stats: &'a FeatureStats,
    index: NeighborIndex<'a>,
}

impl<'a, C: Classifier + ?Sized> GroupExplainer<'a, C> {
    pub fn new(model: &'a C, train: &'a Dataset, stats: &'a FeatureStats) -> Result<Self> {
        Ok(GroupExplainer {
            model,
            stats,
            index: NeighborIndex::new(train, model)?,
        })
    }

    pub fn model(&self) -> &'a C {
        self.model
    }

    pub fn train(&self) -> &'a Dataset {
        self.index.train()
    }

    pub fn schema(&self) -> &'a FeatureSchema {
        self.index.train().schema()
    }

    pub fn stats(&self) -> &'a FeatureStats {
        self.stats
    }

    pub fn index(&self) -> &NeighborIndex<'a> {
        &self.index
    }

    pub fn pool(
        &self,
        query: &Instance,
        query_row: Option<usize>,
        config: &GroupConfig,
    ) -> Result<ExplanationPool> {
        self.index.pool(
            self.model,
            query,
            query_row,
            config.pool_size - 1,
            self.stats,
            config.neighbor_filter,
        )
    }

    pub fn explain(
        &self,
        query: &Instance,
        query_row: Option<usize>,
        config: &GroupConfig,
    ) -> Result<GroupCounterfactual> {
        config.validate()?;
        let pool = self.pool(query, query_row, config)?;
        self.explain_pool(pool, config)
    }

    pub fn explain_pool(
        &self,
        pool: ExplanationPool,
        config: &GroupConfig,
    ) -> Result<GroupCounterfactual> {
        let key_step = self.key_features(&pool, config)?;
        self.explain_with_keys(pool, key_step, config)
    }

    pub fn key_features(
        &self,
        pool: &ExplanationPool,
        config: &GroupConfig,
    ) -> Result<KeyFeatureOutcome> {
        config.validate()?;
        let cf = config.cf.with_seed(config.seed);
        identify_key_features(pool, self.model, self.schema(), self.stats, &cf, config.k)
    }

    /// Steps two to four, given the outcome of the key-feature vote.
    pub fn explain_with_keys(
        &self,
        pool: ExplanationPool,
        key_step: KeyFeatureOutcome,
        config: &GroupConfig,
    ) -> Result<GroupCounterfactual> {
        let schema = self.schema();
        let target = pool.class.other();
        let keys = key_step.keys;
        let region = build_region(&self.index, &pool, target, &keys)?;
        let candidates = sample_candidates(
            &region,
            self.train(),
            &keys,
            self.stats,
            match config.mode {
                SamplingMode::Rows => config.candidates,
                SamplingMode::Medoids => config.k_medoids,
            },
            config.seed,
            config.mode,
        )?;

        let mut scores: Vec<CandidateScore> = Vec::with_capacity(candidates.len());
        let mut best: Option<(usize, f64, usize, CandidateEvaluation)> = None;
        for (draw, candidate) in candidates.iter().enumerate() {
            let excluded = config.require_full_change
                && pool
                    .instances()
                    .any(|x| candidate.values.iter().any(|&(f, v)| x.get(f) == v));
            if excluded {
                if config.trace {
                    scores.push(CandidateScore {
                        draw,
                        substitution: candidate.clone(),
                        coverage: 0.0,
                        mean_proximity: None,
                        excluded,
                    });
                }
                continue;
            }
            let eval = evaluate_candidate(self.model, &pool, candidate)?;
            let covered = eval.covered();
            let mean_proximity = if covered == 0 {
                None
            } else {
                let mut total = 0.0;
                for (x, _) in pool.instances().zip(&eval.per_instance_valid).filter(|(_, v)| **v) {
                    total += proximity(&candidate.changes_for(x), schema, self.stats)?.total;
                }
                Some(total / covered as f64)
            };
            let mp = mean_proximity.unwrap_or(f64::INFINITY);
            let better = match &best {
                None => true,
                Some((c, p, _, _)) => covered > *c || (covered == *c && mp < *p),
            };
            if config.trace {
                scores.push(CandidateScore {
                    draw,
                    substitution: candidate.clone(),
                    coverage: eval.coverage,
                    mean_proximity,
                    excluded,
                });
            }
            if better {
                best = Some((covered, mp, draw, eval));
            }
        }

        let Some((covered, _, draw, eval)) = best.filter(|b| b.0 > 0) else {
            return Err(Error::NoValidCandidate {
                region_size: region.members.len(),
                votes: keys.named_votes(schema),
            });
        };
        debug_assert_eq!(covered, eval.covered());
        let substitution = candidates[draw].clone();
        let changes_per_instance: Vec<Vec<FeatureChange>> =
            pool.instances().map(|x| substitution.changes_for(x)).collect();
        let proximity_per_instance = changes_per_instance
            .iter()
            .map(|c| proximity(c, schema, self.stats))
            .collect::<Result<Vec<_>>>()?;
        let trace = config.trace.then(|| {
            scores.sort_by(|a, b| b.coverage.total_cmp(&a.coverage));
            scores
        });
        Ok(GroupCounterfactual {
            target,
            key_features: keys,
            singles: key_step.singles,
            singles_failed: key_step.failed,
            region: RegionSummary {
                size: region.members.len(),
                filters: region.filters,
                fallback: region.fallback,
            },
            substitution,
            coverage: eval.coverage,
            per_instance_valid: eval.per_instance_valid,
            changes_per_instance,
            proximity_per_instance,
            candidates_evaluated: candidates.len(),
            trace,
            pool,
        })
    }
}

/// One-shot group search for a query.
pub fn group_explain<C: Classifier + ?Sized>(
    model: &C,
    train: &Dataset,
    stats: &FeatureStats,
    query: &Instance,
    query_row: Option<usize>,
    config: &GroupConfig,
) -> Result<GroupCounterfactual> {
    GroupExplainer::new(model, train, stats)?.explain(query, query_row, config)
}
