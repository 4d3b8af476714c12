#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCHEMA: &str = r#"{
  "label_column": "outcome",
  "features": [
    {"name": "age", "kind": "continuous", "actionable": false},
    {"name": "edu", "kind": "categorical", "categories": ["none", "school", "degree", "doctorate"]},
    {"name": "hours", "kind": "continuous"},
    {"name": "sector", "kind": "categorical", "categories": ["public", "private", "self"]}
  ],
  "classes": ["low", "high"]
}"#;

/// Labels depend only on `sex`, which cannot be changed.
pub const FROZEN_SCHEMA: &str = r#"{
  "label_column": "outcome",
  "features": [
    {"name": "sex", "kind": "categorical", "categories": ["f", "m"], "actionable": false},
    {"name": "edu", "kind": "categorical", "categories": ["none", "school", "degree"]}
  ],
  "classes": ["low", "high"]
}"#;

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new(rows: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("schema.json"), SCHEMA).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(42);
        let mut csv = String::from("age,edu,hours,sector,outcome\n");
        let edu = ["none", "school", "degree", "doctorate"];
        let sector = ["public", "private", "self"];
        for _ in 0..rows {
            let age: u32 = r.random_range(18..70);
            let e = r.random_range(0..4);
            let hours: u32 = r.random_range(10..70);
            let s = r.random_range(0..3);
            let score = 0.04 * (age as f64 - 40.0) + 0.9 * e as f64 + 0.05 * (hours as f64 - 40.0) - 1.2
                + r.random_range(-0.8..0.8);
            let label = if score > 0.0 { "high" } else { "low" };
            csv.push_str(&format!("{age},{},{hours},{},{label}\n", edu[e], sector[s]));
        }
        std::fs::write(dir.path().join("data.csv"), csv).unwrap();

        std::fs::write(dir.path().join("frozen.json"), FROZEN_SCHEMA).unwrap();
        let mut frozen = String::from("sex,edu,outcome\n");
        for i in 0..rows {
            let sex = if i % 2 == 0 { "f" } else { "m" };
            let label = if i % 2 == 0 { "low" } else { "high" };
            frozen.push_str(&format!("{sex},{},{label}\n", ["none", "school", "degree"][i % 3]));
        }
        std::fs::write(dir.path().join("frozen.csv"), frozen).unwrap();
        Fixture { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    pub fn train(&self, model: &str) -> Output {
        let out = groupcf(&[
            "train",
            "--schema",
            &self.arg("schema.json"),
            "--data",
            &self.arg("data.csv"),
            "--model",
            &self.arg(model),
            "--trees",
            "30",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out
    }
}

pub fn groupcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groupcf"))
        .args(args)
        .env_remove("GROUPCF_SEED")
        .output()
        .unwrap()
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}
