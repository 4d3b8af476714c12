//! Schema files and CSV datasets.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use groupcf_core::tabular::{Provenance, SplitTag};
use groupcf_core::{Dataset, FeatureKind, FeatureSchema, Instance, Row};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// A feature schema plus the CSV column holding class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub label_column: String,
    #[serde(flatten)]
    pub schema: FeatureSchema,
}

pub fn load_schema(path: &Path) -> Result<SchemaFile> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })
}

pub fn load_dataset(path: &Path, schema: &SchemaFile) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    read_dataset(file, path, schema)
}

/// Parses CSV with a header row. Columns are matched by name, so order is
/// free and extra columns are ignored. Row ids are 0-based record indices.
pub fn read_dataset(input: impl Read, path: &Path, schema: &SchemaFile) -> Result<Dataset> {
    let csv_err = |source| CliError::Csv {
        path: path.into(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn {
                path: path.into(),
                column: name.into(),
            })
    };
    let features = schema.schema.features();
    let columns = features
        .iter()
        .map(|f| column(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let label_column = column(&schema.label_column)?;

    let mut rows = Vec::new();
    for (id, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(c).unwrap_or("");
        let mut values = Vec::with_capacity(features.len());
        for (f, (spec, &c)) in features.iter().zip(&columns).enumerate() {
            let raw = field(c);
            let value = match spec.kind {
                FeatureKind::Categorical => schema.schema.encode(f, raw).ok_or_else(|| {
                    CliError::UnknownCategory {
                        path: path.into(),
                        line,
                        feature: spec.name.clone(),
                        value: raw.into(),
                    }
                })?,
                FeatureKind::Continuous => raw
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::MalformedNumber {
                        path: path.into(),
                        line,
                        feature: spec.name.clone(),
                        value: raw.into(),
                    })?,
            };
            values.push(value);
        }
        let raw_label = field(label_column);
        let label = schema
            .schema
            .class_by_name(raw_label)
            .ok_or_else(|| CliError::UnknownCategory {
                path: path.into(),
                line,
                feature: schema.label_column.clone(),
                value: raw_label.into(),
            })?;
        rows.push(Row {
            id,
            instance: Instance::new(values),
            label,
        });
    }
    let provenance = Provenance {
        source: path.display().to_string(),
        split: SplitTag::Full,
    };
    Ok(Dataset::new(schema.schema.clone(), rows, provenance)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use groupcf_core::{Class, FeatureSpec};

    fn schema() -> SchemaFile {
        SchemaFile {
            label_column: "income".into(),
            schema: FeatureSchema::new(
                vec![
                    FeatureSpec::continuous("Age"),
                    FeatureSpec::categorical("Country", ["Ireland", "France"]),
                ],
                ["under".into(), "over".into()],
            )
            .unwrap(),
        }
    }

    fn read(text: &str) -> Result<Dataset> {
        read_dataset(text.as_bytes(), Path::new("mem.csv"), &schema())
    }

    #[test]
    fn columns_by_name() {
        let ds = read("income,Country,extra,Age\nover, France ,x,41\nunder,Ireland,y,23.5\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rows()[0].instance.values(), &[41.0, 1.0]);
        assert_eq!(ds.rows()[0].label, Class::SECOND);
        assert_eq!(ds.rows()[1].id, 1);
        assert_eq!(ds.rows()[1].instance.values(), &[23.5, 0.0]);
    }

    #[test]
    fn header_only_gives_empty_dataset() {
        assert!(read("Age,Country,income\n").unwrap().is_empty());
    }

    #[test]
    fn row_level_errors() {
        match read("Age,Country,income\n30,Mars,over\n") {
            Err(CliError::UnknownCategory { line, feature, value, .. }) => {
                assert_eq!((line, feature.as_str(), value.as_str()), (2, "Country", "Mars"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read("Age,Country,income\n30,France,over\nthirty,France,over\n"),
            Err(CliError::MalformedNumber { line: 3, .. })
        ));
        assert!(matches!(
            read("Age,income\n30,over\n"),
            Err(CliError::MissingColumn { column, .. }) if column == "Country"
        ));
        assert!(matches!(
            read("Age,Country,income\n30,France,rich\n"),
            Err(CliError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn schema_file_round_trip() {
        let text = serde_json::to_string(&schema()).unwrap();
        assert!(text.contains("\"label_column\":\"income\""));
        let back: SchemaFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, schema());
    }
}
