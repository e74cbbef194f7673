//! Canonical JSON and CSV rendering. Keys are sorted and every float is
//! rounded to 12 significant digits, so identical inputs give identical bytes.

use autobid::paperlab::ReplicationRow;
use serde_json::{Map, Number, Value};

pub fn round_float(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn canonical(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_float(n.as_f64().expect("f64 number"));
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, canonical(v));
            }
            Value::Object(out)
        }
        other => other,
    }
}

pub fn to_canonical_string<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let v = canonical(serde_json::to_value(value)?);
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}

fn csv_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        Number::from_f64(round_float(x)).expect("finite").to_string()
    }
}

pub fn replication_csv(rows: &[ReplicationRow]) -> Result<String, csv::Error> {
    let timings = rows.iter().any(|r| r.runtime_ms.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "name",
        "group",
        "direction",
        "claimed",
        "measured",
        "tolerance",
        "pass",
        "note",
    ];
    if timings {
        header.push("runtime_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        let direction = serde_json::to_value(r.direction).expect("unit enum serializes");
        let mut record = vec![
            r.name.clone(),
            r.group.clone(),
            direction.as_str().unwrap_or_default().to_string(),
            csv_float(r.claimed),
            csv_float(r.measured),
            csv_float(r.tolerance),
            r.pass.to_string(),
            r.note.clone(),
        ];
        if timings {
            record.push(r.runtime_ms.map(|t| t.to_string()).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(round_float(0.1 + 0.2), 0.3);
        assert_eq!(round_float(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_float(4.0), 4.0);
    }

    #[test]
    fn sorts_keys_and_keeps_integers() {
        let v = serde_json::json!({"b": 1, "a": [0.30000000000000004, "inf"]});
        assert_eq!(
            serde_json::to_string(&canonical(v)).unwrap(),
            r#"{"a":[0.3,"inf"],"b":1}"#
        );
    }
}
