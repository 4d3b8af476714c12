//! Builds the bundled Adult subsample from the raw UCI `adult.data` file.
//!
//! ```text
//! cargo run -p groupcf --example prepare_adult -- /path/to/adult.data data/adult
//! ```
//!
//! Categories are grouped into the coarser levels commonly used for this
//! dataset; `fnlwgt`, `education-num` and `relationship` are dropped. A seeded
//! draw of 10,000 rows is written in source order as `adult_10k.csv`, next to
//! `schema.json`.

use std::error::Error;
use std::path::PathBuf;

use groupcf::data::SchemaFile;
use groupcf::files::write_json;
use groupcf_core::{FeatureSchema, FeatureSpec};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SUBSAMPLE: usize = 10_000;
const SEED: u64 = 0;

fn workclass(raw: &str) -> &'static str {
    match raw {
        "Federal-gov" | "Local-gov" | "State-gov" => "Government",
        "Private" => "Private",
        "Self-emp-inc" | "Self-emp-not-inc" => "Self-Employed",
        _ => "Other/Unknown",
    }
}

fn education(raw: &str) -> &'static str {
    match raw {
        "HS-grad" | "Some-college" => "High School grad",
        "Assoc-acdm" | "Assoc-voc" => "Associates",
        "Bachelors" => "Bachelors",
        "Masters" => "Masters",
        "Prof-school" => "Prof-School",
        "Doctorate" => "Doctorate",
        _ => "Dropout",
    }
}

fn marital(raw: &str) -> &'static str {
    match raw {
        "Never-married" => "Never-Married",
        "Married-AF-spouse" | "Married-civ-spouse" | "Married-spouse-absent" => "Married",
        "Divorced" | "Separated" => "Separated",
        _ => "Widowed",
    }
}

fn occupation(raw: &str) -> &'static str {
    match raw {
        "Adm-clerical" => "Admin",
        "Armed-Forces" => "Military",
        "Craft-repair" | "Farming-fishing" | "Handlers-cleaners" | "Machine-op-inspct"
        | "Transport-moving" => "Blue-Collar",
        "Exec-managerial" => "White-Collar",
        "Other-service" | "Priv-house-serv" => "Service",
        "Prof-specialty" => "Professional",
        "Sales" => "Sales",
        _ => "Other",
    }
}

fn country(raw: &str) -> &'static str {
    match raw {
        "United-States" => "United-States",
        "Canada" | "England" | "India" | "Ireland" | "Scotland" => "British-Commonwealth",
        "China" | "Hong" | "Taiwan" => "China",
        "France" | "Germany" | "Holand-Netherlands" | "Italy" => "Euro_1",
        "Greece" | "Hungary" | "Poland" | "Portugal" | "Yugoslavia" => "Euro_2",
        "Columbia" | "Ecuador" | "Peru" => "South-America",
        "Cambodia" | "Laos" | "Philippines" | "Thailand" | "Vietnam" => "SE-Asia",
        "Cuba" | "Dominican-Republic" | "El-Salvador" | "Guatemala" | "Haiti" | "Honduras"
        | "Jamaica" | "Mexico" | "Nicaragua" | "Outlying-US(Guam-USVI-etc)" | "Puerto-Rico"
        | "Trinadad&Tobago" => "Latin-America",
        _ => "Other",
    }
}

fn schema() -> Result<SchemaFile, Box<dyn Error>> {
    let features = vec![
        FeatureSpec::continuous("Age").immutable(),
        FeatureSpec::categorical(
            "Workclass",
            ["Other/Unknown", "Government", "Private", "Self-Employed"],
        ),
        FeatureSpec::categorical(
            "Education",
            [
                "Dropout",
                "High School grad",
                "Associates",
                "Bachelors",
                "Masters",
                "Prof-School",
                "Doctorate",
            ],
        ),
        FeatureSpec::categorical(
            "Marital Status",
            ["Never-Married", "Married", "Separated", "Widowed"],
        ),
        FeatureSpec::categorical(
            "Occupation",
            [
                "Admin",
                "Blue-Collar",
                "Military",
                "Other",
                "Professional",
                "Sales",
                "Service",
                "White-Collar",
            ],
        ),
        FeatureSpec::categorical(
            "Race",
            ["Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other", "White"],
        )
        .immutable(),
        FeatureSpec::categorical("Sex", ["Female", "Male"]).immutable(),
        FeatureSpec::continuous("Capital Gain"),
        FeatureSpec::continuous("Capital Loss"),
        FeatureSpec::continuous("Hours per week"),
        FeatureSpec::categorical(
            "Country",
            [
                "British-Commonwealth",
                "China",
                "Euro_1",
                "Euro_2",
                "Latin-America",
                "Other",
                "SE-Asia",
                "South-America",
                "United-States",
            ],
        )
        .immutable(),
    ];
    Ok(SchemaFile {
        label_column: "Income".into(),
        schema: FeatureSchema::new(features, ["Under $50k".into(), "Over $50k".into()])?,
    })
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args_os().skip(1);
    let (Some(raw), Some(out_dir)) = (args.next(), args.next()) else {
        return Err("usage: prepare_adult <adult.data> <output dir>".into());
    };
    let out_dir = PathBuf::from(out_dir);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(&raw)?;
    let mut records = Vec::new();
    for record in reader.records() {
        let r = record?;
        if r.len() == 15 {
            records.push(r);
        }
    }

    let mut chosen = sample(&mut ChaCha8Rng::seed_from_u64(SEED), records.len(), SUBSAMPLE).into_vec();
    chosen.sort_unstable();

    let mut writer = csv::Writer::from_path(out_dir.join("adult_10k.csv"))?;
    writer.write_record([
        "Age",
        "Workclass",
        "Education",
        "Marital Status",
        "Occupation",
        "Race",
        "Sex",
        "Capital Gain",
        "Capital Loss",
        "Hours per week",
        "Country",
        "Income",
    ])?;
    for &i in &chosen {
        let r = &records[i];
        let income = if r[14].starts_with(">50K") { "Over $50k" } else { "Under $50k" };
        writer.write_record([
            &r[0],
            workclass(&r[1]),
            education(&r[3]),
            marital(&r[5]),
            occupation(&r[6]),
            &r[8],
            &r[9],
            &r[10],
            &r[11],
            &r[12],
            country(&r[13]),
            income,
        ])?;
    }
    writer.flush()?;
    write_json(Some(&out_dir.join("schema.json")), &schema()?)?;
    println!("wrote {} of {} rows to {}", chosen.len(), records.len(), out_dir.display());
    Ok(())
}
