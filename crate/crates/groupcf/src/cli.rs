//! Command-line surface. Every command writes one JSON document (to `--out`
//! or stdout) carrying `format_version` and the resolved run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use groupcf_core::groupcf::{CandidateScore, RegionSummary};
use groupcf_core::metrics::gap_score;
use groupcf_core::model::accuracy;
use groupcf_core::singlecf::generate_single_cf;
use groupcf_core::studygen::{
    build_item_sets, name_for, render_group, render_single, MatchReport, StudyConfig, Style,
};
use groupcf_core::{
    BoostedTrees, CfSearchConfig, Class, Classifier, Counterfactual, Dataset, FeatureChange,
    FeatureSchema, FeatureStats, GroupConfig, GroupCounterfactual, GroupExplainer, Model,
    SamplingMode, TrainConfig,
};
use serde::Serialize;
use serde_json::Value;

use crate::data::{load_dataset, load_schema, SchemaFile};
use crate::error::{CliError, Result};
use crate::files::{
    load_item_sets, load_model, read_json, save_model, write_json, ModelFile, SplitSpec,
    FORMAT_VERSION,
};

#[derive(Debug, Parser)]
#[command(name = "groupcf", version, about = "Single and group counterfactual explanations for tabular classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the data, train boosted trees and report held-out accuracy.
    Train(TrainArgs),
    /// Predict class probabilities for the rows of a split.
    Predict(PredictArgs),
    /// Single counterfactual for one training row.
    Explain(ExplainArgs),
    /// Group counterfactual for one training row and its nearest like neighbours.
    GroupExplain(ExplainArgs),
    /// Build matched item sets for a study.
    StudyItems(StudyArgs),
    /// Gap scores of item sets within a presentation ordering.
    GapScore(GapArgs),
    /// Recompute the matching report of an item-set file.
    MatchCheck(MatchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Schema JSON: features, class names and label column.
    #[arg(long)]
    pub schema: PathBuf,
    /// CSV data with a header row.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Where to write the model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, env = "GROUPCF_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Rows,
    Medoids,
}

impl From<ModeArg> for SamplingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rows => SamplingMode::Rows,
            ModeArg::Medoids => SamplingMode::Medoids,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long, env = "GROUPCF_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Pool size, counting the query.
    #[arg(long, default_value_t = 5)]
    pub pool_size: usize,
    /// Number of key features.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Random samples per single counterfactual.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Candidate budget in rows mode.
    #[arg(long, default_value_t = 100)]
    pub candidates: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Rows)]
    pub mode: ModeArg,
    /// Medoid count in medoids mode.
    #[arg(long, default_value_t = 5)]
    pub k_medoids: usize,
    /// Quantile bins per continuous feature for neighbour distances.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub model: PathBuf,
    /// 0-based index into the training split.
    #[arg(long)]
    pub row: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Include every scored candidate (group-explain only).
    #[arg(long)]
    pub trace: bool,
    /// Use the study's matched settings (group-explain only): singles change
    /// exactly --k features, the substitution must change every key feature
    /// of every pool instance, and neighbours must be correctly classified.
    #[arg(long)]
    pub matched: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 8)]
    pub n_sets: usize,
    /// Seeds must have class probabilities within this margin of each other.
    #[arg(long, default_value_t = 0.15)]
    pub margin: f64,
    /// Seed draws allowed, as a multiple of --n-sets.
    #[arg(long, default_value_t = 10)]
    pub redraw_factor: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GapArgs {
    /// JSON array of item ids in presentation order.
    #[arg(long)]
    pub ordering: PathBuf,
    /// Item-set file written by study-items.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The resolved options of a run, echoed into every output.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single: Option<CfSearchConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    format_version: u32,
    command: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(out: Option<&Path>, command: &str, config: &RunConfig, body: T) -> Result<()> {
    write_json(
        out,
        &Output {
            format_version: FORMAT_VERSION,
            command,
            config,
            body,
        },
    )
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::Explain(a) => explain(&a),
        Command::GroupExplain(a) => group_explain(&a),
        Command::StudyItems(a) => study_items(&a),
        Command::GapScore(a) => gap(&a),
        Command::MatchCheck(a) => match_check(&a),
    }
}

fn input_config(inputs: &Inputs) -> RunConfig {
    RunConfig {
        schema: Some(show(&inputs.schema)),
        data: Some(show(&inputs.data)),
        ..RunConfig::default()
    }
}

fn train(a: &TrainArgs) -> Result<()> {
    let schema = load_schema(&a.inputs.schema)?;
    let data = load_dataset(&a.inputs.data, &schema)?;
    let split = SplitSpec {
        test_fraction: a.test_fraction,
        seed: a.seed,
    };
    let (train_set, test_set) = data.split(split.test_fraction, split.seed)?;
    let config = TrainConfig {
        n_trees: a.trees,
        learning_rate: a.learning_rate,
        max_depth: a.max_depth,
        seed: a.seed,
    };
    let model = Model::from(BoostedTrees::train(&train_set, &config)?);
    let test_accuracy = accuracy(&model, &test_set)?;
    let train_accuracy = accuracy(&model, &train_set)?;
    save_model(&a.model, &ModelFile::new(model, split))?;
    if a.out.is_some() {
        println!("accuracy: {test_accuracy:.4} on {} held-out rows", test_set.len());
    }

    #[derive(Serialize)]
    struct Report {
        train_rows: usize,
        test_rows: usize,
        train_class_counts: [usize; 2],
        test_class_counts: [usize; 2],
        accuracy: f64,
        train_accuracy: f64,
    }
    let run = RunConfig {
        model: Some(show(&a.model)),
        seed: Some(a.seed),
        split: Some(split),
        train: Some(config),
        out: a.out.as_deref().map(show),
        ..input_config(&a.inputs)
    };
    emit(
        a.out.as_deref(),
        "train",
        &run,
        Report {
            train_rows: train_set.len(),
            test_rows: test_set.len(),
            train_class_counts: train_set.class_counts(),
            test_class_counts: test_set.class_counts(),
            accuracy: test_accuracy,
            train_accuracy,
        },
    )
}

/// Schema, the model's training and test splits and training statistics.
pub struct Context {
    pub schema: SchemaFile,
    pub model_file: ModelFile,
    pub train: Dataset,
    pub test: Dataset,
}

impl Context {
    pub fn load(inputs: &Inputs, model: &Path) -> Result<Context> {
        let schema = load_schema(&inputs.schema)?;
        let model_file = load_model(model)?;
        let data = load_dataset(&inputs.data, &schema)?;
        let (train, test) = data.split(model_file.split.test_fraction, model_file.split.seed)?;
        Ok(Context {
            schema,
            model_file,
            train,
            test,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model_file.model
    }

    fn stats(&self, bins: usize) -> Result<FeatureStats> {
        Ok(FeatureStats::with_bins(&self.train, bins)?)
    }

    fn row(&self, row: usize) -> Result<&groupcf_core::Row> {
        self.train.row(row).ok_or(CliError::SelectorNotFound {
            row,
            len: self.train.len(),
        })
    }
}

fn predict(a: &PredictArgs) -> Result<()> {
    let ctx = Context::load(&a.inputs, &a.model)?;
    let rows: Vec<&groupcf_core::Row> = match a.split {
        SplitChoice::Train => ctx.train.rows().iter().collect(),
        SplitChoice::Test => ctx.test.rows().iter().collect(),
        SplitChoice::All => {
            let mut all: Vec<_> = ctx.train.rows().iter().chain(ctx.test.rows()).collect();
            all.sort_by_key(|r| r.id);
            all
        }
    };

    #[derive(Serialize)]
    struct Prediction {
        row_id: usize,
        proba: [f64; 2],
        prediction: Class,
        label: Class,
    }
    #[derive(Serialize)]
    struct Body {
        split: SplitChoice,
        accuracy: Option<f64>,
        predictions: Vec<Prediction>,
    }
    let predictions = rows
        .iter()
        .map(|r| {
            let proba = ctx.model().predict_proba(&r.instance)?;
            Ok(Prediction {
                row_id: r.id,
                proba,
                prediction: groupcf_core::model::argmax(proba),
                label: r.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = predictions.iter().filter(|p| p.prediction == p.label).count();
    let run = RunConfig {
        model: Some(show(&a.model)),
        split: Some(ctx.model_file.split),
        out: a.out.as_deref().map(show),
        ..input_config(&a.inputs)
    };
    emit(
        a.out.as_deref(),
        "predict",
        &run,
        Body {
            split: a.split,
            accuracy: (!predictions.is_empty()).then(|| correct as f64 / predictions.len() as f64),
            predictions,
        },
    )
}

fn cf_config(s: &SearchArgs) -> CfSearchConfig {
    CfSearchConfig {
        n_samples: s.samples,
        seed: s.seed,
        ..CfSearchConfig::default()
    }
}

fn group_config(s: &SearchArgs, trace: bool) -> GroupConfig {
    GroupConfig {
        pool_size: s.pool_size,
        k: s.k,
        cf: cf_config(s),
        candidates: s.candidates,
        mode: s.mode.into(),
        k_medoids: s.k_medoids,
        seed: s.seed,
        trace,
        ..GroupConfig::default()
    }
}

fn search_run(a: &ExplainArgs, ctx: &Context) -> RunConfig {
    RunConfig {
        model: Some(show(&a.model)),
        seed: Some(a.search.seed),
        split: Some(ctx.model_file.split),
        row: Some(a.row),
        bins: Some(a.search.bins),
        out: a.out.as_deref().map(show),
        ..input_config(&a.inputs)
    }
}

/// A feature value as it reads in the data: category name or number.
fn readable(schema: &FeatureSchema, feature: usize, value: f64) -> Value {
    match schema.decode(feature, value) {
        Some(c) => Value::from(c),
        None => Value::from(value),
    }
}

#[derive(Serialize)]
struct NamedChange {
    feature: String,
    from: Value,
    to: Value,
}

fn named_changes(schema: &FeatureSchema, changes: &[FeatureChange]) -> Vec<NamedChange> {
    changes
        .iter()
        .map(|c| NamedChange {
            feature: schema.feature(c.feature).name.clone(),
            from: readable(schema, c.feature, c.from),
            to: readable(schema, c.feature, c.to),
        })
        .collect()
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let ctx = Context::load(&a.inputs, &a.model)?;
    let stats = ctx.stats(a.search.bins)?;
    let row = ctx.row(a.row)?;
    let schema = &ctx.schema.schema;
    let config = cf_config(&a.search);
    let prediction = ctx.model().predict(&row.instance)?;
    let cf = generate_single_cf(
        ctx.model(),
        &row.instance,
        Some(row.id),
        prediction.other(),
        schema,
        &stats,
        &config,
    )?;
    let name = name_for(0);
    let text = if cf.valid {
        Some(render_single(schema, name, &cf, Style::Single)?)
    } else {
        None
    };

    #[derive(Serialize)]
    struct Body<'a> {
        row_id: usize,
        name: &'a str,
        prediction: Class,
        target: Class,
        valid: bool,
        changes: Vec<NamedChange>,
        proximity: f64,
        sparsity: usize,
        text: Option<String>,
        counterfactual: &'a Counterfactual,
    }
    let run = RunConfig {
        single: Some(config),
        ..search_run(a, &ctx)
    };
    emit(
        a.out.as_deref(),
        "explain",
        &run,
        Body {
            row_id: row.id,
            name,
            prediction,
            target: cf.target,
            valid: cf.valid,
            changes: named_changes(schema, &cf.changes),
            proximity: cf.proximity.total,
            sparsity: cf.sparsity,
            text,
            counterfactual: &cf,
        },
    )
}

#[derive(Serialize)]
struct KeyFeature {
    feature: String,
    direction: groupcf_core::singlecf::Direction,
    votes: usize,
}

#[derive(Serialize)]
struct PoolItem {
    row_id: Option<usize>,
    name: &'static str,
    distance: usize,
    valid: bool,
    changes: Vec<NamedChange>,
    sparsity: usize,
    proximity: f64,
    text: Option<String>,
    hint_text: Option<String>,
}

#[derive(Serialize)]
struct GroupBody<'a> {
    row_id: usize,
    prediction: Class,
    target: Class,
    key_features: Vec<KeyFeature>,
    votes: Vec<(String, usize)>,
    substitution: Vec<NamedValue>,
    coverage: f64,
    sparsity: usize,
    singles_failed: usize,
    region: &'a RegionSummary,
    candidates_evaluated: usize,
    pool: Vec<PoolItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<TraceEntry>>,
}

#[derive(Serialize)]
struct TraceEntry {
    draw: usize,
    values: Vec<NamedValue>,
    coverage: f64,
    mean_proximity: Option<f64>,
    excluded: bool,
}

#[derive(Serialize)]
struct NamedValue {
    feature: String,
    value: Value,
}

fn substitution_values(schema: &FeatureSchema, values: &[(usize, f64)]) -> Vec<NamedValue> {
    values
        .iter()
        .map(|&(f, v)| NamedValue {
            feature: schema.feature(f).name.clone(),
            value: readable(schema, f, v),
        })
        .collect()
}

fn group_body<'a>(schema: &FeatureSchema, row_id: usize, g: &'a GroupCounterfactual) -> Result<GroupBody<'a>> {
    let distances = std::iter::once(0).chain(g.pool.members.iter().map(|m| m.distance));
    let row_ids = std::iter::once(g.pool.query_row).chain(g.pool.members.iter().map(|m| Some(m.row_id)));
    let mut pool = Vec::with_capacity(g.pool.size());
    for (i, (row_id, distance)) in row_ids.zip(distances).enumerate() {
        let name = name_for(i);
        let valid = g.per_instance_valid[i];
        let text = |style| -> Result<Option<String>> {
            Ok(if valid { Some(render_group(schema, name, g, i, style)?) } else { None })
        };
        pool.push(PoolItem {
            row_id,
            name,
            distance,
            valid,
            changes: named_changes(schema, &g.changes_per_instance[i]),
            sparsity: g.changes_per_instance[i].len(),
            proximity: g.proximity_per_instance[i].total,
            text: text(Style::Group)?,
            hint_text: text(Style::GroupHint)?,
        });
    }
    let trace = g.trace.as_ref().map(|t| {
        t.iter()
            .map(|c: &CandidateScore| TraceEntry {
                draw: c.draw,
                values: substitution_values(schema, &c.substitution.values),
                coverage: c.coverage,
                mean_proximity: c.mean_proximity,
                excluded: c.excluded,
            })
            .collect()
    });
    Ok(GroupBody {
        row_id,
        prediction: g.pool.class,
        target: g.target,
        key_features: g
            .key_features
            .features
            .iter()
            .zip(&g.key_features.directions)
            .map(|(&f, &direction)| KeyFeature {
                feature: schema.feature(f).name.clone(),
                direction,
                votes: g.key_features.vote_count(f),
            })
            .collect(),
        votes: g.key_features.named_votes(schema),
        substitution: substitution_values(schema, &g.substitution.values),
        coverage: g.coverage,
        sparsity: g.sparsity(),
        singles_failed: g.singles_failed,
        region: &g.region,
        candidates_evaluated: g.candidates_evaluated,
        pool,
        trace,
    })
}

fn group_explain(a: &ExplainArgs) -> Result<()> {
    let ctx = Context::load(&a.inputs, &a.model)?;
    let stats = ctx.stats(a.search.bins)?;
    let row = ctx.row(a.row)?;
    let schema = &ctx.schema.schema;
    let mut config = group_config(&a.search, a.trace);
    if a.matched {
        config = StudyConfig {
            group: config,
            ..StudyConfig::default()
        }
        .matched_group_config();
        config.trace = a.trace;
    }
    let explainer = GroupExplainer::new(ctx.model(), &ctx.train, &stats)?;
    let g = explainer.explain(&row.instance, Some(row.id), &config)?;
    let run = RunConfig {
        group: Some(config),
        ..search_run(a, &ctx)
    };
    emit(a.out.as_deref(), "group-explain", &run, group_body(schema, row.id, &g)?)
}

fn study_items(a: &StudyArgs) -> Result<()> {
    let ctx = Context::load(&a.inputs, &a.model)?;
    let stats = ctx.stats(a.search.bins)?;
    let config = StudyConfig {
        n_sets: a.n_sets,
        margin: a.margin,
        redraw_factor: a.redraw_factor,
        seed: a.search.seed,
        group: group_config(&a.search, false),
    };
    let study = build_item_sets(&ctx.train, ctx.model(), &stats, &config)?;
    let report = &study.report;
    println!("{}", report.summary());
    println!(
        "{} items in {} sets; sparsity matched: {}; p > .05: {}",
        study.item_sets.iter().map(|s| s.items.len()).sum::<usize>(),
        study.item_sets.len(),
        yes_no(report.sparsity_equal),
        yes_no(report.matched),
    );

    #[derive(Serialize)]
    struct Body<'a> {
        summary: String,
        study: &'a groupcf_core::studygen::Study,
    }
    let run = RunConfig {
        model: Some(show(&a.model)),
        seed: Some(a.search.seed),
        split: Some(ctx.model_file.split),
        bins: Some(a.search.bins),
        study: Some(config.clone()),
        group: Some(config.matched_group_config()),
        out: Some(show(&a.out)),
        ..input_config(&a.inputs)
    };
    emit(
        Some(&a.out),
        "study-items",
        &run,
        Body {
            summary: report.summary(),
            study: &study,
        },
    )
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn gap(a: &GapArgs) -> Result<()> {
    let file = load_item_sets(&a.items)?;
    let ordering: Vec<String> = read_json(&a.ordering)?;
    let mut seen = BTreeSet::new();
    for id in &ordering {
        if !seen.insert(id) {
            return Err(CliError::DuplicateItem(id.clone()));
        }
    }

    #[derive(Serialize)]
    struct SetScore {
        set_id: usize,
        gap_score: usize,
    }
    #[derive(Serialize)]
    struct Body {
        sets: Vec<SetScore>,
        mean: f64,
    }
    let sets = file
        .study
        .item_sets
        .iter()
        .map(|s| {
            let ids: Vec<String> = s.items.iter().map(|i| i.item_id.clone()).collect();
            Ok(SetScore {
                set_id: s.set_id,
                gap_score: gap_score(&ordering, &ids)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = if sets.is_empty() {
        0.0
    } else {
        sets.iter().map(|s| s.gap_score as f64).sum::<f64>() / sets.len() as f64
    };
    let run = RunConfig {
        items: Some(show(&a.items)),
        ordering: Some(show(&a.ordering)),
        out: a.out.as_deref().map(show),
        ..RunConfig::default()
    };
    emit(a.out.as_deref(), "gap-score", &run, Body { sets, mean })
}

fn match_check(a: &MatchArgs) -> Result<()> {
    let file = load_item_sets(&a.items)?;
    let report = MatchReport::from_sets(&file.study.item_sets)?;
    let consistent = report == file.study.report;
    println!("{}", report.summary());

    #[derive(Serialize)]
    struct Body {
        summary: String,
        consistent: bool,
        report: MatchReport,
    }
    let run = RunConfig {
        items: Some(show(&a.items)),
        out: a.out.as_deref().map(show),
        ..RunConfig::default()
    };
    emit(
        a.out.as_deref(),
        "match-check",
        &run,
        Body {
            summary: report.summary(),
            consistent,
            report,
        },
    )
}
