use serde::Serialize;
use serde_json::{Map, Value};

/// Decimal places kept for every float in emitted JSON.
const FLOAT_DECIMALS: usize = 12;

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, canonicalize(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().expect("f64 number");
            let rounded: f64 = format!("{f:.FLOAT_DECIMALS$}").parse().expect("formatted float");
            // -0.0 and 0.0 print differently.
            let rounded = if rounded == 0.0 { 0.0 } else { rounded };
            serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
        }
        other => other,
    }
}

fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> Value {
    canonicalize(serde_json::to_value(value).expect("results serialize to JSON"))
}

/// Pretty JSON with sorted keys and floats rounded to a fixed number of
/// decimals, so identical inputs give byte-identical output.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_canonical_value(value)).expect("value serializes");
    s.push('\n');
    s
}

pub(crate) fn canonical_json_compact<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(&to_canonical_value(value)).expect("value serializes")
}
