//! JSON configuration files with command-line overrides.

use std::path::Path;

use fanova_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Resolves a configuration: defaults, then the JSON file, then every flag
/// that was given on the command line.
pub fn resolve<C, F>(file: Option<&Path>, flags: &F) -> Result<C>
where
    C: DeserializeOwned + Serialize + Default,
    F: Serialize,
{
    let mut merged = serde_json::to_value(C::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)?;
        let from_file: Value = serde_json::from_str(&text)?;
        merge(&mut merged, from_file, path)?;
    }
    merge(&mut merged, serde_json::to_value(flags)?, Path::new("<flags>"))?;
    serde_json::from_value(merged).map_err(|e| Error::Argument(format!("invalid configuration: {e}")))
}

fn merge(base: &mut Value, overlay: Value, source: &Path) -> Result<()> {
    let Value::Object(over) = overlay else {
        return Err(Error::Argument(format!("{}: configuration must be a JSON object", source.display())));
    };
    let Value::Object(base) = base else { unreachable!("configurations serialize to objects") };
    for (k, v) in over {
        if v.is_null() {
            continue;
        }
        if !base.contains_key(&k) {
            return Err(Error::Argument(format!("{}: unknown configuration key '{k}'", source.display())));
        }
        base.insert(k, v);
    }
    Ok(())
}
