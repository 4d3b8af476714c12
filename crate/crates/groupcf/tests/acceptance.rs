//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so the
//! report is always printed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use groupcf::cli::{Context, Inputs};
use groupcf_core::groupcf::group_explain;
use groupcf_core::metrics::{paired_t_test, student_t_two_tailed};
use groupcf_core::model::TableEntry;
use groupcf_core::neighbors::{LikeFilter, NeighborIndex};
use groupcf_core::singlecf::generate_single_cf;
use groupcf_core::studygen::{build_item_sets, StudyConfig};
use groupcf_core::tabular::{median_absolute_deviation, Provenance, Row, SplitTag};
use groupcf_core::{
    CfSearchConfig, Class, Classifier, Dataset, Error, FeatureSchema, FeatureSpec, FeatureStats,
    GroupConfig, Instance, LookupTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Env {
    dir: tempfile::TempDir,
    schema: PathBuf,
    data: PathBuf,
}

impl Env {
    fn new() -> Env {
        let adult = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/adult");
        Env {
            dir: tempfile::tempdir().unwrap(),
            schema: adult.join("schema.json"),
            data: adult.join("adult_10k.csv"),
        }
    }

    fn tmp(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn inputs(&self) -> Vec<String> {
        vec![
            "--schema".into(),
            self.schema.display().to_string(),
            "--data".into(),
            self.data.display().to_string(),
        ]
    }

    fn context(&self) -> Context {
        let inputs = Inputs {
            schema: self.schema.clone(),
            data: self.data.clone(),
        };
        Context::load(&inputs, Path::new(&self.tmp("model.json"))).unwrap()
    }
}

/// Runs the binary; returns stdout, panicking with stderr on failure.
fn groupcf(args: &[String]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_groupcf"))
        .args(args)
        .env_remove("GROUPCF_SEED")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "groupcf {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn read_json(path: &str) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn accuracy(env: &Env) -> Verdict {
    let start = Instant::now();
    let mut a = args(&["train"]);
    a.extend(env.inputs());
    a.extend(args(&["--model", &env.tmp("model.json"), "--seed", "0", "--test-fraction", "0.2"]));
    a.extend(args(&["--out", &env.tmp("train.json")]));
    groupcf(&a);
    let elapsed = start.elapsed();
    let report = read_json(&env.tmp("train.json"));
    let acc = report["accuracy"].as_f64().unwrap();
    let counts = &report["test_class_counts"];
    verdict(
        (0.80..=0.90).contains(&acc) && elapsed <= Duration::from_secs(120),
        format!(
            "accuracy {acc:.4} on {} held-out rows (class counts {counts}), trained in {:.1}s",
            report["test_rows"],
            elapsed.as_secs_f64()
        ),
    )
}

fn single_validity(env: &Env) -> Verdict {
    let ctx = env.context();
    let stats = FeatureStats::compute(&ctx.train).unwrap();
    let model = ctx.model();
    let (mut generated, mut valid, mut flipped) = (0, 0, 0);
    for (i, row) in ctx.test.rows().iter().take(200).enumerate() {
        let target = model.predict(&row.instance).unwrap().other();
        let config = CfSearchConfig::default().with_seed(i as u64);
        let cf = generate_single_cf(model, &row.instance, Some(row.id), target, &ctx.schema.schema, &stats, &config)
            .unwrap();
        generated += 1;
        if cf.valid {
            valid += 1;
            let mut x = row.instance.clone();
            for c in &cf.changes {
                x.set(c.feature, c.to);
            }
            let p = model.predict_proba(&x).unwrap();
            if model.predict(&x).unwrap() == target && p[target.index()] >= 0.5 {
                flipped += 1;
            }
        }
    }
    verdict(
        generated >= 200 && flipped == valid,
        format!("{generated} searches, {valid} valid, {flipped} of them flip on re-prediction"),
    )
}

fn study_groups(env: &Env) -> Verdict {
    let ctx = env.context();
    let stats = FeatureStats::compute(&ctx.train).unwrap();
    let start = Instant::now();
    let study = build_item_sets(&ctx.train, ctx.model(), &stats, &StudyConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let mut good = 0;
    for set in &study.item_sets {
        let target = set.class.other();
        let mut applied: BTreeSet<Vec<(usize, u64)>> = BTreeSet::new();
        let mut ok = set.items.len() == 5;
        for item in &set.items {
            let mut x = item.instance.clone();
            for c in &item.group_changes {
                ok &= item.instance.get(c.feature) == c.from && c.from != c.to;
                x.set(c.feature, c.to);
            }
            ok &= item.group_changes.len() == 2;
            ok &= ctx.model().predict(&x).unwrap() == target;
            applied.insert(item.group_changes.iter().map(|c| (c.feature, c.to.to_bits())).collect());
        }
        ok &= applied.len() == 1 && set.group.coverage == 1.0;
        good += ok as usize;
    }
    verdict(
        good >= 8 && elapsed <= Duration::from_secs(300),
        format!(
            "{good} of {} sets fully covered with one shared 2-feature substitution ({} draws, {} discarded, {:.1}s)",
            study.item_sets.len(),
            study.draws,
            study.discarded.len(),
            elapsed.as_secs_f64()
        ),
    )
}

struct Toy {
    schema: FeatureSchema,
    points: Vec<Instance>,
    table: LookupTable,
}

fn toy(seed: u64) -> Toy {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let cards: Vec<usize> = (0..r.random_range(3..=4)).map(|_| r.random_range(2..=6)).collect();
    let schema = FeatureSchema::new(
        cards
            .iter()
            .enumerate()
            .map(|(f, &c)| FeatureSpec::categorical(format!("f{f}"), (0..c).map(|v| format!("v{v}"))))
            .collect(),
        ["no".into(), "yes".into()],
    )
    .unwrap();
    let weights: Vec<Vec<f64>> = cards
        .iter()
        .map(|&c| (0..c).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let bias = r.random_range(-0.5..0.5);
    let mut points = vec![Instance::new(vec![])];
    for &c in &cards {
        points = points
            .into_iter()
            .flat_map(|x| {
                (0..c).map(move |v| {
                    let mut values = x.values().to_vec();
                    values.push(v as f64);
                    Instance::new(values)
                })
            })
            .collect();
    }
    let table = LookupTable::new(points.iter().map(|x| {
        let score = bias + x.values().iter().zip(&weights).map(|(&v, w)| w[v as usize]).sum::<f64>();
        let p = 1.0 / (1.0 + (-3.0 * score).exp());
        TableEntry {
            instance: x.clone(),
            proba: [1.0 - p, p],
        }
    }))
    .unwrap();
    Toy { schema, points, table }
}

fn brute_force_coverage() -> Verdict {
    let start = Instant::now();
    let (mut worlds, mut agree) = (0, 0);
    for seed in 0.. {
        if worlds == 25 || seed == 500 {
            break;
        }
        let t = toy(seed);
        let rows = t
            .points
            .iter()
            .enumerate()
            .map(|(id, x)| Row {
                id,
                instance: x.clone(),
                label: t.table.predict(x).unwrap(),
            })
            .collect();
        let provenance = Provenance {
            source: format!("toy-{seed}"),
            split: SplitTag::Train,
        };
        let data = Dataset::new(t.schema.clone(), rows, provenance).unwrap();
        let stats = FeatureStats::compute(&data).unwrap();
        let config = GroupConfig {
            candidates: t.points.len(),
            seed,
            ..GroupConfig::default()
        };
        let query = &data.rows()[seed as usize % data.len()];
        let g = match group_explain(&t.table, &data, &stats, &query.instance, Some(query.id), &config) {
            Ok(g) => g,
            Err(Error::AllSinglesFailed { .. } | Error::InsufficientNeighbors { .. } | Error::NoValidCandidate { .. }) => {
                continue
            }
            Err(e) => panic!("toy {seed}: {e}"),
        };
        worlds += 1;
        let keys = &g.key_features.features;
        let tuples: BTreeSet<Vec<u64>> = t
            .points
            .iter()
            .filter(|x| t.table.predict(x).unwrap() == g.target)
            .map(|x| keys.iter().map(|&f| x.get(f).to_bits()).collect())
            .collect();
        let best = tuples
            .iter()
            .map(|tuple| {
                g.pool
                    .instances()
                    .filter(|x| {
                        let mut y = (*x).clone();
                        for (&f, &b) in keys.iter().zip(tuple) {
                            y.set(f, f64::from_bits(b));
                        }
                        t.table.predict(&y).unwrap() == g.target
                    })
                    .count()
            })
            .max()
            .unwrap();
        agree += (best == g.covered()) as usize;
    }
    let elapsed = start.elapsed();
    verdict(
        worlds >= 20 && agree == worlds && elapsed <= Duration::from_secs(30),
        format!("{agree} of {worlds} toy worlds reach the brute-force maximum ({:.1}s)", elapsed.as_secs_f64()),
    )
}

fn nearest_like_neighbours(env: &Env) -> Verdict {
    let ctx = env.context();
    let stats = FeatureStats::compute(&ctx.train).unwrap();
    let model = ctx.model();
    let index = NeighborIndex::new(&ctx.train, model).unwrap();
    let predicted: Vec<Class> = ctx.train.rows().iter().map(|r| model.predict(&r.instance).unwrap()).collect();
    let distance = |a: &Instance, b: &Instance| {
        (0..a.len())
            .filter(|&f| match stats.continuous(f) {
                Some(c) => {
                    let bin = |v: f64| c.bin_edges.iter().filter(|&&e| e < v).count();
                    bin(a.get(f)) != bin(b.get(f))
                }
                None => a.get(f) != b.get(f),
            })
            .count()
    };
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    for q in 0..500 {
        let (query, query_row) = if q % 2 == 0 {
            let row = &ctx.train.rows()[r.random_range(0..ctx.train.len())];
            (&row.instance, Some(row.id))
        } else {
            (&ctx.test.rows()[r.random_range(0..ctx.test.len())].instance, None)
        };
        let pool = index.pool(model, query, query_row, 4, &stats, LikeFilter::default()).unwrap();
        let class = model.predict(query).unwrap();
        let mut scan: Vec<(usize, usize)> = ctx
            .train
            .rows()
            .iter()
            .zip(&predicted)
            .filter(|(row, &c)| c == class && Some(row.id) != query_row)
            .map(|(row, _)| (distance(query, &row.instance), row.id))
            .collect();
        scan.sort();
        scan.truncate(4);
        let got: Vec<(usize, usize)> = pool.members.iter().map(|m| (m.distance, m.row_id)).collect();
        agree += (got == scan) as usize;
    }
    verdict(agree == 500, format!("{agree} of 500 pools equal the linear scan"))
}

/// Two-tailed p by Simpson integration of the t density.
fn integrated_p(t: f64, df: f64) -> f64 {
    let log_c = libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (log_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut sum = density(0.0) + density(t.abs());
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * density(i as f64 * h);
    }
    1.0 - 2.0 * sum * h / 3.0
}

fn sorted_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn statistics() -> Verdict {
    let r = paired_t_test(&[2.0, 3.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
    let hand = (r.t - 4.0).abs() < 1e-12 && r.df == 2;
    let mut worst: f64 = 0.0;
    for df in [2.0, 10.0, 39.0] {
        for t in [0.25, 0.7, 1.3, 2.0, 2.7, 4.0] {
            worst = worst.max((student_t_two_tailed(t, df) - integrated_p(t, df)).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mad_exact = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let v: Vec<f64> = (0..n).map(|_| (rng.random_range(-500..500) as f64) / 4.0).collect();
        let m = sorted_median(&v);
        let dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
        mad_exact += (median_absolute_deviation(&v) == Some(sorted_median(&dev))) as usize;
    }
    verdict(
        hand && worst <= 1e-3 && mad_exact == 1000,
        format!(
            "t={:.3} df={}; max |p - integral| {worst:.2e} over df 2, 10, 39; MAD exact on {mad_exact} of 1000 vectors",
            r.t, r.df
        ),
    )
}

fn matching_report(env: &Env) -> Verdict {
    let mut a = args(&["study-items"]);
    a.extend(env.inputs());
    a.extend(args(&["--model", &env.tmp("model.json"), "--out", &env.tmp("items.json")]));
    let stdout = String::from_utf8(groupcf(&a)).unwrap();
    let file = read_json(&env.tmp("items.json"));
    let study = &file["study"];
    let ctx = env.context();

    // proximities recomputed from the item changes with an independent MAD
    let mad: Vec<f64> = (0..ctx.schema.schema.len())
        .map(|f| {
            let v: Vec<f64> = ctx.train.rows().iter().map(|r| r.instance.get(f)).collect();
            let m = sorted_median(&v);
            let d = sorted_median(&v.iter().map(|x| (x - m).abs()).collect::<Vec<_>>());
            if d > 0.0 {
                d
            } else {
                1.0
            }
        })
        .collect();
    let score = |changes: &Value| -> f64 {
        changes
            .as_array()
            .unwrap()
            .iter()
            .map(|c| {
                let f = c["feature"].as_u64().unwrap() as usize;
                let (from, to) = (c["from"].as_f64().unwrap(), c["to"].as_f64().unwrap());
                if ctx.schema.schema.feature(f).is_categorical() {
                    (from != to) as u8 as f64
                } else {
                    (to - from).abs() / mad[f]
                }
            })
            .sum()
    };
    let mut diffs = Vec::new();
    for set in study["item_sets"].as_array().unwrap() {
        for item in set["items"].as_array().unwrap() {
            diffs.push(score(&item["single"]["changes"]) - score(&item["group_changes"]));
        }
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = integrated_p(t, n - 1.0);

    let reported = &study["report"]["t_test"];
    let df = reported["df"].as_u64().unwrap_or(0);
    let t_ok = (reported["t"].as_f64().unwrap_or(f64::NAN) - t).abs() <= 1e-6 * t.abs().max(1.0);
    let p_ok = (reported["p_two_tailed"].as_f64().unwrap_or(f64::NAN) - p).abs() <= 1e-3;
    let matched = study["report"]["matched"].as_bool().unwrap();
    let states = stdout.contains(&format!("p > .05: {}", if matched { "yes" } else { "no" })) && matched == (p > 0.05);
    let summary = stdout.lines().next().unwrap_or_default().to_string();
    verdict(
        df == 39 && t_ok && p_ok && states,
        format!("{summary} (oracle t={t:.4}, p={p:.4}); p > .05: {}", if matched { "yes" } else { "no" }),
    )
}

fn determinism(env: &Env) -> Verdict {
    std::fs::write(env.tmp("ordering.json"), ordering(&read_json(&env.tmp("items.json")))).unwrap();
    let model = env.tmp("model-d.json");
    let with_inputs = |head: &[&str], tail: &[&str]| {
        let mut a = args(head);
        a.extend(env.inputs());
        a.extend(args(tail));
        a
    };
    let out = env.tmp("out.json");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("train", with_inputs(&["train"], &["--model", &model, "--out", &out])),
        ("predict", with_inputs(&["predict"], &["--model", &model, "--split", "all", "--out", &out])),
        ("explain", with_inputs(&["explain"], &["--model", &model, "--row", "3", "--out", &out])),
        (
            "group-explain",
            with_inputs(&["group-explain"], &["--model", &model, "--row", "3", "--trace", "--out", &out]),
        ),
        (
            "group-explain --mode medoids",
            with_inputs(&["group-explain"], &["--model", &model, "--row", "3", "--mode", "medoids", "--out", &out]),
        ),
        ("study-items", with_inputs(&["study-items"], &["--model", &model, "--out", &out])),
        (
            "gap-score",
            args(&["gap-score", "--ordering", &env.tmp("ordering.json"), "--items", &env.tmp("items.json"), "--out", &out]),
        ),
        ("match-check", args(&["match-check", "--items", &env.tmp("items.json"), "--out", &out])),
    ];
    let mut differing = Vec::new();
    for (name, a) in &runs {
        let first = (groupcf(a), std::fs::read(&out).unwrap(), std::fs::read(&model).unwrap());
        let second = (groupcf(a), std::fs::read(&out).unwrap(), std::fs::read(&model).unwrap());
        if first != second {
            differing.push(*name);
        }
    }
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} commands byte-identical across two runs", runs.len())
        } else {
            format!("outputs differ for {}", differing.join(", "))
        },
    )
}

/// Round-robin over sets, so every set is spread out.
fn ordering(items: &Value) -> String {
    let sets: Vec<Vec<String>> = items["study"]["item_sets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["items"].as_array().unwrap().iter().map(|i| i["item_id"].as_str().unwrap().to_string()).collect())
        .collect();
    let longest = sets.iter().map(Vec::len).max().unwrap_or(0);
    let ids: Vec<&String> = (0..longest).flat_map(|k| sets.iter().filter_map(move |s| s.get(k))).collect();
    serde_json::to_string(&ids).unwrap()
}

fn main() -> ExitCode {
    let env = Env::new();
    let criteria: Vec<Check> = vec![
        ("classifier accuracy", Box::new(|| accuracy(&env))),
        ("single counterfactual validity", Box::new(|| single_validity(&env))),
        ("study group counterfactuals", Box::new(|| study_groups(&env))),
        ("group coverage optimality", Box::new(brute_force_coverage)),
        ("nearest like neighbours", Box::new(|| nearest_like_neighbours(&env))),
        ("statistics and MAD", Box::new(statistics)),
        ("matching report", Box::new(|| matching_report(&env))),
        ("CLI determinism", Box::new(|| determinism(&env))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += !v.pass as usize;
        println!("criterion {} {}: {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("criterion 9 N/A: human-study outcomes are not reproducible by software");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
