use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::run::{CsvRow, Outcome};

pub const CSV_NAME: &str = "results.csv";
pub const SUMMARY_NAME: &str = "summary.json";

/// Writes `bytes` to `dir/name` through a temporary sibling and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, dir.join(name))
}

fn csv_bytes(rows: &[CsvRow]) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["experiment", "scale", "lhs", "rhs", "ratio"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

/// `summary.json`: experiment name, resolved config and the outcome entries.
pub fn summary(name: &str, config: Value, outcome: &Outcome) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("experiment".into(), Value::String(name.into()));
    m.insert("config".into(), config);
    for (k, v) in &outcome.summary {
        m.insert(k.clone(), v.clone());
    }
    m.insert("pass".into(), Value::Bool(outcome.pass));
    Value::Object(m)
}

pub fn write_all(dir: &Path, name: &str, config: Value, outcome: &Outcome) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (file, bytes) in &outcome.files {
        write_atomic(dir, file, bytes)?;
    }
    if !outcome.rows.is_empty() {
        write_atomic(dir, CSV_NAME, &csv_bytes(&outcome.rows)?)?;
    }
    let mut json = serde_json::to_vec_pretty(&summary(name, config, outcome)).expect("summary serializes");
    json.push(b'\n');
    write_atomic(dir, SUMMARY_NAME, &json)
}
