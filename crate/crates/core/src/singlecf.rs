//! Single-instance counterfactuals by random sampling, followed by greedy
//! post-hoc sparsification.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{proximity, ProximityScore};
use crate::model::{argmax, Classifier};
use crate::rng::{rng_from, SearchRng};
use crate::tabular::{Class, FeatureKind, FeatureSchema, FeatureStats, Instance};
use crate::{Error, Result};

/// One feature moved from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub feature: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
    None,
}

impl FeatureChange {
    pub fn direction(&self) -> Direction {
        if self.to > self.from {
            Direction::Increase
        } else if self.to < self.from {
            Direction::Decrease
        } else {
            Direction::None
        }
    }

    /// Changes that turn `original` into `changed`, in feature order.
    pub fn diff(original: &Instance, changed: &Instance) -> Result<Vec<FeatureChange>> {
        if original.len() != changed.len() {
            return Err(Error::SchemaMismatch {
                expected: original.len(),
                found: changed.len(),
            });
        }
        Ok(original
            .values()
            .iter()
            .zip(changed.values())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(feature, (&from, &to))| FeatureChange { feature, from, to })
            .collect())
    }
}

pub fn apply_changes(query: &Instance, changes: &[FeatureChange]) -> Instance {
    let mut out = query.clone();
    for c in changes {
        out.set(c.feature, c.to);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfSearchConfig {
    pub n_samples: usize,
    /// Quantile of the candidate's scaled continuous changes above which a
    /// continuous change is never reverted.
    pub sparsity_param: f64,
    /// Minimum target-class probability for a candidate to count as valid.
    pub stopping_threshold: f64,
    pub seed: u64,
    /// Upper bound on changed features per candidate; `None` means every
    /// actionable feature.
    pub max_features_changed: Option<usize>,
    /// Lower bound on changed features per candidate, also honoured by
    /// sparsification.
    pub min_features_changed: usize,
}

impl Default for CfSearchConfig {
    fn default() -> Self {
        CfSearchConfig {
            n_samples: 1000,
            sparsity_param: 0.1,
            stopping_threshold: 0.5,
            seed: 0,
            max_features_changed: None,
            min_features_changed: 1,
        }
    }
}

impl CfSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        if !(self.stopping_threshold > 0.0 && self.stopping_threshold < 1.0) {
            return bad("stopping_threshold must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.sparsity_param) {
            return bad("sparsity_param must lie in [0, 1]");
        }
        if self.min_features_changed == 0 {
            return bad("min_features_changed must be at least 1");
        }
        if self
            .max_features_changed
            .is_some_and(|m| m < self.min_features_changed)
        {
            return bad("max_features_changed is below min_features_changed");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub query_row: Option<usize>,
    pub query: Instance,
    pub target: Class,
    /// Sorted by feature index.
    pub changes: Vec<FeatureChange>,
    pub valid: bool,
    pub target_probability: f64,
    pub proximity: ProximityScore,
    pub sparsity: usize,
}

impl Counterfactual {
    pub fn instance(&self) -> Instance {
        apply_changes(&self.query, &self.changes)
    }

    pub fn changed_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.changes.iter().map(|c| c.feature)
    }
}

fn is_valid(proba: [f64; 2], target: Class, threshold: f64) -> bool {
    proba[target.index()] >= threshold && argmax(proba) == target
}

struct Sampler<'a> {
    schema: &'a FeatureSchema,
    stats: &'a FeatureStats,
    changeable: Vec<usize>,
}

impl<'a> Sampler<'a> {
    fn new(schema: &'a FeatureSchema, stats: &'a FeatureStats) -> Self {
        let changeable = (0..schema.len())
            .filter(|&f| {
                let spec = schema.feature(f);
                spec.actionable
                    && match spec.kind {
                        FeatureKind::Categorical => true,
                        FeatureKind::Continuous => {
                            stats.continuous(f).is_some_and(|c| c.max > c.min)
                        }
                    }
            })
            .collect();
        Sampler {
            schema,
            stats,
            changeable,
        }
    }

    fn redraw(&self, rng: &mut SearchRng, feature: usize, current: f64) -> Option<f64> {
        match self.schema.feature(feature).kind {
            FeatureKind::Categorical => {
                let k = self.schema.feature(feature).categories.len();
                let mut pick = rng.random_range(0..k - 1);
                if pick >= current as usize {
                    pick += 1;
                }
                Some(pick as f64)
            }
            FeatureKind::Continuous => {
                let c = self.stats.continuous(feature)?;
                for _ in 0..8 {
                    let mut v = rng.random_range(c.min..=c.max);
                    if c.integral {
                        v = libm::round(v);
                    }
                    if v != current {
                        return Some(v);
                    }
                }
                None
            }
        }
    }

    /// Every value `feature` can move to, when that set is finite and small.
    fn alternatives(&self, feature: usize, current: f64, limit: usize) -> Option<Vec<f64>> {
        let values: Vec<f64> = match self.schema.feature(feature).kind {
            FeatureKind::Categorical => {
                let k = self.schema.feature(feature).categories.len();
                (0..k).map(|v| v as f64).collect()
            }
            FeatureKind::Continuous => {
                let c = self.stats.continuous(feature)?;
                if !c.integral || c.max - c.min >= limit as f64 {
                    return None;
                }
                let lo = c.min as i64;
                (lo..=c.max as i64).map(|v| v as f64).collect()
            }
        };
        Some(values.into_iter().filter(|&v| v != current).collect())
    }

    /// All candidates with `min..=max` changes, if there are at most `limit`.
    /// Subsets come in bitmask order, values in ascending order.
    fn exhaustive(
        &self,
        query: &Instance,
        min: usize,
        max: usize,
        limit: usize,
    ) -> Option<Vec<Vec<FeatureChange>>> {
        let m = self.changeable.len();
        if m >= usize::BITS as usize - 1 {
            return None;
        }
        let alts = self
            .changeable
            .iter()
            .map(|&f| self.alternatives(f, query.get(f), limit))
            .collect::<Option<Vec<_>>>()?;
        // by_size[j]: number of candidates that change exactly j features
        let mut by_size = vec![0usize; m + 1];
        by_size[0] = 1;
        for a in &alts {
            for j in (1..=m).rev() {
                by_size[j] = by_size[j].saturating_add(by_size[j - 1].saturating_mul(a.len()));
            }
        }
        let total = by_size[min..=max]
            .iter()
            .fold(0usize, |acc, &c| acc.saturating_add(c));
        if total > limit {
            return None;
        }
        let mut out = Vec::with_capacity(total);
        for mask in 1usize..(1 << m) {
            let size = mask.count_ones() as usize;
            if size < min || size > max {
                continue;
            }
            let picked: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let mut digits = vec![0usize; picked.len()];
            loop {
                out.push(
                    picked
                        .iter()
                        .zip(&digits)
                        .map(|(&i, &d)| {
                            let feature = self.changeable[i];
                            FeatureChange {
                                feature,
                                from: query.get(feature),
                                to: alts[i][d],
                            }
                        })
                        .collect(),
                );
                let mut pos = 0;
                while pos < digits.len() {
                    digits[pos] += 1;
                    if digits[pos] < alts[picked[pos]].len() {
                        break;
                    }
                    digits[pos] = 0;
                    pos += 1;
                }
                if pos == digits.len() {
                    break;
                }
            }
        }
        Some(out)
    }

    fn candidate(
        &self,
        rng: &mut SearchRng,
        query: &Instance,
        min: usize,
        max: usize,
    ) -> Vec<FeatureChange> {
        let size = rng.random_range(min..=max);
        let mut picked: Vec<usize> = self.changeable.choose_multiple(rng, size).copied().collect();
        picked.sort_unstable();
        picked
            .into_iter()
            .filter_map(|feature| {
                let from = query.get(feature);
                self.redraw(rng, feature, from)
                    .map(|to| FeatureChange { feature, from, to })
            })
            .collect()
    }
}

/// Random-sampling counterfactual search. Draws `n_samples` candidates, keeps
/// the minimum-proximity valid one (ties by draw order) and sparsifies it.
/// When no candidate is valid, the candidate with the highest target
/// probability comes back with `valid == false`.
///
/// Sampling is without replacement in the limit: when the whole candidate
/// space fits in `n_samples`, every candidate is visited once instead.
pub fn generate_single_cf<C: Classifier + ?Sized>(
    model: &C,
    query: &Instance,
    query_row: Option<usize>,
    target: Class,
    schema: &FeatureSchema,
    stats: &FeatureStats,
    config: &CfSearchConfig,
) -> Result<Counterfactual> {
    config.validate()?;
    schema.check(query)?;
    if model.predict(query)? == target {
        return Err(Error::AlreadyTargetClass(target));
    }
    let sampler = Sampler::new(schema, stats);
    if sampler.changeable.is_empty() {
        return Err(Error::NoActionableFeatures);
    }
    let max = config
        .max_features_changed
        .unwrap_or(usize::MAX)
        .min(sampler.changeable.len());
    let min = config.min_features_changed.min(max);

    let mut rng = rng_from(config.seed);
    let mut best_valid: Option<(f64, Vec<FeatureChange>, f64)> = None;
    let mut best_attempt: Option<(f64, Vec<FeatureChange>)> = None;
    let mut consider = |changes: Vec<FeatureChange>| -> Result<()> {
        if changes.len() < min {
            return Ok(());
        }
        let proba = model.predict_proba(&apply_changes(query, &changes))?;
        let p_target = proba[target.index()];
        if is_valid(proba, target, config.stopping_threshold) {
            let prox = proximity(&changes, schema, stats)?.total;
            if best_valid.as_ref().is_none_or(|(b, _, _)| prox < *b) {
                best_valid = Some((prox, changes, p_target));
            }
        } else if best_valid.is_none() && best_attempt.as_ref().is_none_or(|(p, _)| p_target > *p) {
            best_attempt = Some((p_target, changes));
        }
        Ok(())
    };
    match sampler.exhaustive(query, min, max, config.n_samples) {
        Some(all) => all.into_iter().try_for_each(&mut consider)?,
        None => {
            for _ in 0..config.n_samples {
                consider(sampler.candidate(&mut rng, query, min, max))?;
            }
        }
    }

    let build = |changes: Vec<FeatureChange>, valid: bool, p: f64| -> Result<Counterfactual> {
        Ok(Counterfactual {
            query_row,
            query: query.clone(),
            target,
            proximity: proximity(&changes, schema, stats)?,
            sparsity: changes.len(),
            changes,
            valid,
            target_probability: p,
        })
    };
    match (best_valid, best_attempt) {
        (Some((_, changes, p)), _) => {
            let cf = build(changes, true, p)?;
            posthoc_sparsify(model, &cf, schema, stats, config)
        }
        (None, Some((p, changes))) => build(changes, false, p),
        (None, None) => build(Vec::new(), false, model.predict_proba(query)?[target.index()]),
    }
}

/// Greedily reverts changed features to their query values, smallest
/// MAD-scaled change first, keeping a revert only while the result stays
/// valid. Continuous changes above the `sparsity_param` quantile of the
/// candidate's scaled continuous changes are never reverted, and at least
/// `min_features_changed` changes remain.
pub fn posthoc_sparsify<C: Classifier + ?Sized>(
    model: &C,
    candidate: &Counterfactual,
    schema: &FeatureSchema,
    stats: &FeatureStats,
    config: &CfSearchConfig,
) -> Result<Counterfactual> {
    if !candidate.valid {
        return Err(Error::InvalidCounterfactual);
    }
    let scaled = |c: &FeatureChange| match schema.feature(c.feature).kind {
        FeatureKind::Continuous => libm::fabs(c.to - c.from) / stats.scale(c.feature),
        FeatureKind::Categorical => 1.0,
    };
    let mut continuous: Vec<f64> = candidate
        .changes
        .iter()
        .filter(|c| !schema.feature(c.feature).is_categorical())
        .map(scaled)
        .collect();
    continuous.sort_by(f64::total_cmp);
    let exempt_above = if continuous.is_empty() {
        f64::INFINITY
    } else {
        let h = (continuous.len() - 1) as f64 * config.sparsity_param;
        let lo = libm::floor(h) as usize;
        let hi = (lo + 1).min(continuous.len() - 1);
        continuous[lo] + (h - lo as f64) * (continuous[hi] - continuous[lo])
    };

    let mut order: Vec<(f64, usize)> = candidate
        .changes
        .iter()
        .filter(|c| schema.feature(c.feature).is_categorical() || scaled(c) <= exempt_above)
        .map(|c| (scaled(c), c.feature))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let floor = config.min_features_changed.max(1);
    let mut changes = candidate.changes.clone();
    let mut p_target = candidate.target_probability;
    for (_, feature) in order {
        if changes.len() <= floor {
            break;
        }
        let trial: Vec<FeatureChange> = changes.iter().filter(|c| c.feature != feature).copied().collect();
        let proba = model.predict_proba(&apply_changes(&candidate.query, &trial))?;
        if is_valid(proba, candidate.target, config.stopping_threshold) {
            changes = trial;
            p_target = proba[candidate.target.index()];
        }
    }
    Ok(Counterfactual {
        query_row: candidate.query_row,
        query: candidate.query.clone(),
        target: candidate.target,
        proximity: proximity(&changes, schema, stats)?,
        sparsity: changes.len(),
        changes,
        valid: true,
        target_probability: p_target,
    })
}
