//! Report files. Every number is written with 12 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use rucoord_core::numfmt::g12;

use crate::experiment::{ExperimentReport, ReplicationResult};
use crate::Result;

/// Round every float in `v` to 12 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            let r: f64 = g12(x).parse().unwrap_or(x);
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Compact JSON with rounded floats.
pub fn to_json12<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_json(&mut v);
    v.to_string()
}

/// Indented JSON with rounded floats.
pub fn to_json12_pretty<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_json(&mut v);
    serde_json::to_string_pretty(&v).expect("value serializes")
}

pub fn records_jsonl(records: &[ReplicationResult]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&to_json12(r));
        s.push('\n');
    }
    s
}

fn opt(x: Option<f64>) -> String {
    x.map(g12).unwrap_or_default()
}

/// One row per replication.
pub fn summary_csv(records: &[ReplicationResult]) -> String {
    let mut s = String::from(
        "replication_id,seed,nodes,largest_weighted,largest_unweighted,smallest_weighted,smallest_unweighted,\
         smallest_upper_weighted,smallest_upper_unweighted,equilibria_found,x_star,sandwich_weighted,\
         sandwich_unweighted,x_star_distance,bound_satisfied\n",
    );
    for r in records {
        let ru = r.ru_path.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.replication_id,
            r.seed,
            r.nodes,
            opt(r.largest.map(|a| a.weighted)),
            opt(r.largest.map(|a| a.unweighted)),
            opt(r.smallest.map(|a| a.weighted)),
            opt(r.smallest.map(|a| a.unweighted)),
            opt(r.smallest_upper.map(|a| a.weighted)),
            opt(r.smallest_upper.map(|a| a.unweighted)),
            r.found_averages().len(),
            opt(ru.map(|p| p.x_star)),
            opt(ru.map(|p| p.averages.weighted)),
            opt(ru.map(|p| p.averages.unweighted)),
            opt(ru.map(|p| p.distance)),
            ru.map(|p| p.bound.satisfied.to_string()).unwrap_or_default(),
        );
    }
    s
}

/// `x = replication`, one column per equilibrium average series.
pub fn plot_csv(records: &[ReplicationResult]) -> String {
    let mut s = String::from("replication,largest,smallest,smallest_upper,sandwich\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.replication_id,
            opt(r.largest.map(|a| a.weighted)),
            opt(r.smallest.map(|a| a.weighted)),
            opt(r.smallest_upper.map(|a| a.weighted)),
            opt(r.ru_path.as_ref().map(|p| p.averages.weighted)),
        );
    }
    s
}

/// Write `records.jsonl`, `summary.csv`, `plot.csv` and `report.json` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("records.jsonl"), records_jsonl(&report.records))?;
    fs::write(dir.join("summary.csv"), summary_csv(&report.records))?;
    fs::write(dir.join("plot.csv"), plot_csv(&report.records))?;
    fs::write(dir.join("report.json"), to_json12_pretty(&report.aggregate) + "\n")?;
    Ok(())
}
