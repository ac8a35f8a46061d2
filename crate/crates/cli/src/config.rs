use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Reads a JSON object of option defaults. Keys match the long flag names
/// with dashes replaced by underscores.
pub fn load(path: &Path) -> Result<Map<String, Value>, Failure> {
    let bytes = std::fs::read(path).map_err(|e| flockeval::Error::io(path, e))?;
    match serde_json::from_slice(&bytes) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::Usage(format!(
            "{}: config must be a JSON object",
            path.display()
        ))),
        Err(e) => Err(Failure::Usage(format!("{}: {e}", path.display()))),
    }
}

fn is_unset(v: &Value) -> bool {
    match v {
        Value::Null | Value::Bool(false) => true,
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Fills options not given on the command line from the config file. Only
/// keys the options struct knows about are taken.
pub fn overlay<T: Serialize + DeserializeOwned>(
    cli: &T,
    file: &Map<String, Value>,
) -> Result<T, Failure> {
    let Value::Object(mut merged) =
        serde_json::to_value(cli).map_err(|e| Failure::Usage(e.to_string()))?
    else {
        unreachable!("options serialize to objects")
    };
    for (k, v) in merged.iter_mut() {
        if is_unset(v) {
            if let Some(c) = file.get(k) {
                *v = c.clone();
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Failure::Usage(format!("config: {e}")))
}
