//! `key.path=value` overrides applied to a JSON config document.

use serde_json::{Map, Value};

/// Parses `key.path=value`. The value is read as JSON when it parses as
/// JSON and as a plain string otherwise, so `attack.kind=sign_flip` and
/// `optimizer.lr=0.1` both work.
pub fn parse(raw: &str) -> Result<(Vec<String>, Value), String> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| format!("override `{raw}` is not of the form key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(format!("override `{raw}` has an empty key segment"));
    }
    let value = serde_json::from_str(value.trim()).unwrap_or_else(|_| Value::String(value.trim().to_string()));
    Ok((path, value))
}

/// Sets `raw`'s key in `doc`, creating intermediate objects as needed.
pub fn apply(doc: &mut Value, raw: &str) -> Result<(), String> {
    let (path, value) = parse(raw)?;
    let mut node = doc;
    for (i, segment) in path.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("cannot set `{}`: `{}` is not an object", path.join("."), path[..i].join(".")))?;
        if i + 1 == path.len() {
            obj.insert(segment.clone(), value);
            return Ok(());
        }
        node = obj.entry(segment.clone()).or_insert(Value::Null);
    }
    unreachable!("path has at least one segment")
}
