//! Matched study materials: balanced seeds, five-item pools, a single and a
//! group explanation for every item, and a report checking that the two
//! explanation forms are matched on proximity and sparsity.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::groupcf::{GroupConfig, GroupCounterfactual, GroupExplainer};
use crate::metrics::{paired_t_test, ProximityScore, TTestResult};
use crate::model::Classifier;
use crate::neighbors::{seed_draw_order, eligible_seeds, LikeFilter};
use crate::rng::{derive_seed, streams};
use crate::singlecf::{Counterfactual, FeatureChange};
use crate::tabular::{Class, Dataset, FeatureSchema, FeatureStats, Instance};
use crate::{Error, Result};

/// Bundled names for rendered explanations, assigned by global item index.
pub const NAMES: [&str; 40] = [
    "Tom", "Mary", "Joe", "John", "Sarah", "Tim", "Anna", "David", "Laura", "Peter",
    "Emma", "James", "Kate", "Michael", "Lucy", "Paul", "Helen", "Mark", "Rachel", "Simon",
    "Claire", "Daniel", "Julia", "Chris", "Sophie", "Adam", "Grace", "Ben", "Alice", "Sam",
    "Ruth", "Nick", "Emily", "Frank", "Irene", "George", "Jane", "Henry", "Olivia", "Oscar",
];

pub fn name_for(index: usize) -> &'static str {
    NAMES[index % NAMES.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    Single,
    Group,
    GroupHint,
}

pub const HINT: &str = "is part of a group of people with similar characteristics.";

/// "If Tom's Hours per week had been 50 and Education had been Bachelors,
/// they would have earned over $50k." Changes are listed in schema order and
/// the class name starts lowercase.
pub fn render_changes(
    schema: &FeatureSchema,
    name: &str,
    changes: &[FeatureChange],
    target: Class,
    style: Style,
) -> Result<String> {
    if changes.is_empty() {
        return Err(Error::InvalidCounterfactual);
    }
    let mut sorted = changes.to_vec();
    sorted.sort_by_key(|c| c.feature);
    let mut text = String::new();
    if style == Style::GroupHint {
        let _ = write!(text, "{name} {HINT} ");
    }
    let _ = write!(text, "If {name}'s ");
    for (i, change) in sorted.iter().enumerate() {
        if i > 0 {
            text.push_str(if i + 1 == sorted.len() { " and " } else { ", " });
        }
        let spec = schema.feature(change.feature);
        match schema.decode(change.feature, change.to) {
            Some(category) => {
                let _ = write!(text, "{} had been {category}", spec.name);
            }
            None if spec.is_categorical() => return Err(Error::InvalidCounterfactual),
            None => {
                let _ = write!(text, "{} had been {}", spec.name, change.to);
            }
        }
    }
    let _ = write!(text, ", they would have earned ");
    let class = schema.class_name(target);
    let mut chars = class.chars();
    if let Some(first) = chars.next() {
        text.extend(first.to_lowercase());
        text.push_str(chars.as_str());
    }
    text.push('.');
    Ok(text)
}

pub fn render_single(
    schema: &FeatureSchema,
    name: &str,
    cf: &Counterfactual,
    style: Style,
) -> Result<String> {
    if !cf.valid {
        return Err(Error::InvalidCounterfactual);
    }
    render_changes(schema, name, &cf.changes, cf.target, style)
}

/// Text for pool instance `item` (0 is the query) under a group
/// counterfactual; fails if the substitution does not flip that instance.
pub fn render_group(
    schema: &FeatureSchema,
    name: &str,
    group: &GroupCounterfactual,
    item: usize,
    style: Style,
) -> Result<String> {
    match group.per_instance_valid.get(item) {
        Some(true) => {}
        _ => return Err(Error::InvalidCounterfactual),
    }
    render_changes(schema, name, &group.changes_per_instance[item], group.target, style)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_sets: usize,
    /// Maximum |p0 - p1| for a seed.
    pub margin: f64,
    /// Seeds drawn before giving up, as a multiple of `n_sets`.
    pub redraw_factor: usize,
    pub seed: u64,
    /// Pool size, key-feature count, search budgets and sampling mode.
    pub group: GroupConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_sets: 8,
            margin: 0.15,
            redraw_factor: 10,
            seed: 0,
            group: GroupConfig::default(),
        }
    }
}

impl StudyConfig {
    /// The group configuration used for every set: singles limited to exactly
    /// `k` changes, candidates that change every key feature of every item,
    /// and neighbours the model classifies correctly.
    pub fn matched_group_config(&self) -> GroupConfig {
        let mut g = self.group.clone();
        g.cf.min_features_changed = g.k;
        g.cf.max_features_changed = Some(g.k);
        g.require_full_change = true;
        g.neighbor_filter = LikeFilter {
            correctly_classified: true,
        };
        g.trace = false;
        g
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sets == 0 || self.redraw_factor == 0 {
            return Err(Error::InvalidConfig(
                "n_sets and redraw_factor must be positive".into(),
            ));
        }
        self.matched_group_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texts {
    pub single: String,
    pub group: String,
    pub group_hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyItem {
    /// `<set>-<position>`, unique across a study.
    pub item_id: String,
    pub row_id: usize,
    pub name: String,
    pub instance: Instance,
    pub label: Class,
    pub prediction: Class,
    pub single: Counterfactual,
    pub group_changes: Vec<FeatureChange>,
    pub group_proximity: ProximityScore,
    pub texts: Texts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSet {
    pub set_id: usize,
    /// Training position of the seed.
    pub seed_position: usize,
    pub seed_row: usize,
    pub class: Class,
    /// Seed first, then its four neighbours.
    pub items: Vec<StudyItem>,
    pub group: GroupCounterfactual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub item_id: String,
    pub single: f64,
    pub group: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityPair {
    pub item_id: String,
    pub single: usize,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub proximity_pairs: Vec<MatchPair>,
    pub sparsity_pairs: Vec<SparsityPair>,
    pub sparsity_equal: bool,
    /// `None` when the paired differences have zero variance.
    pub t_test: Option<TTestResult>,
    /// True when the two-tailed p exceeds .05, i.e. no detectable difference.
    pub matched: bool,
}

impl MatchReport {
    pub fn from_sets(sets: &[ItemSet]) -> Result<MatchReport> {
        let items = || sets.iter().flat_map(|s| s.items.iter());
        let proximity_pairs: Vec<MatchPair> = items()
            .map(|it| MatchPair {
                item_id: it.item_id.clone(),
                single: it.single.proximity.total,
                group: it.group_proximity.total,
            })
            .collect();
        let sparsity_pairs: Vec<SparsityPair> = items()
            .map(|it| SparsityPair {
                item_id: it.item_id.clone(),
                single: it.single.sparsity,
                group: it.group_changes.len(),
            })
            .collect();
        let xs: Vec<f64> = proximity_pairs.iter().map(|p| p.single).collect();
        let ys: Vec<f64> = proximity_pairs.iter().map(|p| p.group).collect();
        let t_test = match paired_t_test(&xs, &ys) {
            Ok(t) => Some(t),
            Err(Error::ZeroVariance) => None,
            Err(e) => return Err(e),
        };
        Ok(MatchReport {
            sparsity_equal: sparsity_pairs.iter().all(|p| p.single == p.group),
            matched: t_test.is_none_or(|t| t.p_two_tailed > 0.05),
            proximity_pairs,
            sparsity_pairs,
            t_test,
        })
    }

    /// `t(39)=1.30, p=.197`
    pub fn summary(&self) -> String {
        match &self.t_test {
            Some(t) => {
                if t.p_two_tailed < 0.0005 {
                    return format!("t({})={:.2}, p<.001", t.df, t.t);
                }
                let p = format!("{:.3}", t.p_two_tailed);
                let p = p.strip_prefix('0').unwrap_or(&p);
                format!("t({})={:.2}, p={}", t.df, t.t, p)
            }
            None => String::from("t undefined: identical proximities"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub item_sets: Vec<ItemSet>,
    pub report: MatchReport,
    /// Seeds tried, including discarded ones.
    pub draws: usize,
    pub discarded: Vec<Discard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub seed_row: usize,
    pub reason: String,
}

/// Builds `n_sets` matched item sets from training rows, alternating seed
/// classes (class 0 first). A seed is discarded and replaced when its group
/// counterfactual misses an item or when any single or group explanation does
/// not change exactly `k` features.
pub fn build_item_sets<C: Classifier + ?Sized>(
    train: &Dataset,
    model: &C,
    stats: &FeatureStats,
    config: &StudyConfig,
) -> Result<Study> {
    config.validate()?;
    let group_config = config.matched_group_config();
    let explainer = GroupExplainer::new(model, train, stats)?;
    let order = seed_draw_order(eligible_seeds(train, model, config.margin)?, config.seed);
    let quota = [config.n_sets.div_ceil(2), config.n_sets / 2];
    let mut done = [0usize; 2];
    let mut cursor = [0usize; 2];
    let max_draws = config.redraw_factor * config.n_sets;
    let mut draws = 0;
    let mut item_sets: Vec<ItemSet> = Vec::new();
    let mut discarded = Vec::new();
    let exhausted = |n: usize| Error::ExhaustedSeeds {
        succeeded: n,
        wanted: config.n_sets,
    };

    while item_sets.len() < config.n_sets {
        // the class that is furthest behind its quota, class 0 on ties
        let class = if quota[1] - done[1] > quota[0] - done[0] { 1 } else { 0 };
        if draws == max_draws || cursor[class] == order[class].len() {
            return Err(exhausted(item_sets.len()));
        }
        let position = order[class][cursor[class]];
        cursor[class] += 1;
        let set_seed = derive_seed(config.seed, streams::STUDY, draws as u64);
        draws += 1;
        let row = &train.rows()[position];
        let mut g = group_config.clone();
        g.seed = set_seed;
        let outcome = explainer.explain(&row.instance, Some(row.id), &g);
        let reject = |reason: String| Discard {
            seed_row: row.id,
            reason,
        };
        let group = match outcome {
            Ok(group) => group,
            Err(e @ (Error::NoValidCandidate { .. } | Error::AllSinglesFailed { .. })) => {
                discarded.push(reject(format!("{e}")));
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some(reason) = mismatch(&group, g.k) {
            discarded.push(reject(reason));
            continue;
        }
        item_sets.push(assemble(train, model, item_sets.len(), position, group)?);
        done[class] += 1;
    }
    let report = MatchReport::from_sets(&item_sets)?;
    Ok(Study {
        item_sets,
        report,
        draws,
        discarded,
    })
}

fn mismatch(group: &GroupCounterfactual, k: usize) -> Option<String> {
    if group.covered() != group.pool.size() {
        return Some(format!(
            "group counterfactual covers {} of {}",
            group.covered(),
            group.pool.size()
        ));
    }
    if let Some(i) = group.singles.iter().position(|s| !s.valid || s.sparsity != k) {
        return Some(format!("single for item {i} is invalid or not {k}-sparse"));
    }
    if let Some(i) = group.changes_per_instance.iter().position(|c| c.len() != k) {
        return Some(format!("group changes for item {i} are not {k}-sparse"));
    }
    None
}

fn assemble<C: Classifier + ?Sized>(
    train: &Dataset,
    model: &C,
    set_id: usize,
    seed_position: usize,
    group: GroupCounterfactual,
) -> Result<ItemSet> {
    let schema = train.schema();
    let seed_row = &train.rows()[seed_position];
    let row_ids = core::iter::once(seed_row.id).chain(group.pool.members.iter().map(|m| m.row_id));
    let mut items = Vec::with_capacity(group.pool.size());
    for (i, ((instance, row_id), single)) in group
        .pool
        .instances()
        .zip(row_ids)
        .zip(&group.singles)
        .enumerate()
    {
        let label = train
            .rows()
            .iter()
            .find(|r| r.id == row_id)
            .map(|r| r.label)
            .ok_or(Error::UnknownInstance)?;
        let name = name_for(set_id * group.pool.size() + i);
        let texts = Texts {
            single: render_single(schema, name, single, Style::Single)?,
            group: render_group(schema, name, &group, i, Style::Group)?,
            group_hint: render_group(schema, name, &group, i, Style::GroupHint)?,
        };
        items.push(StudyItem {
            item_id: format!("{set_id}-{i}"),
            row_id,
            name: name.into(),
            instance: instance.clone(),
            label,
            prediction: model.predict(instance)?,
            single: single.clone(),
            group_changes: group.changes_per_instance[i].clone(),
            group_proximity: group.proximity_per_instance[i],
            texts,
        });
    }
    Ok(ItemSet {
        set_id,
        seed_position,
        seed_row: seed_row.id,
        class: seed_row.label,
        items,
        group,
    })
}
