//! Layered settings: built-in defaults, then a TOML config file section, then flags.
//!
//! A config file holds one table per command; keys are the long flag names
//! (dashes or underscores):
//!
//! ```toml
//! [sim]
//! n = 128
//! delta3 = [1.2, 1.5, 2.0]
//! beta = 1.0
//!
//! [threshold]
//! method = ["analytic", "dmft"]
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPIKED_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "spiked-out";

pub fn load_file(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn normalise_keys(table: &toml::Table) -> toml::Table {
    table
        .iter()
        .map(|(k, v)| (k.replace('-', "_"), v.clone()))
        .collect()
}

/// Defaults of `S`, overlaid with `file[section]`, overlaid with the non-empty `flags`.
pub fn merge<S, F>(file: Option<&toml::Table>, section: &str, flags: &F) -> Result<S>
where
    S: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = match toml::Value::try_from(S::default())? {
        toml::Value::Table(t) => t,
        _ => bail!("settings must serialise to a table"),
    };
    if let Some(file) = file {
        match file.get(section) {
            Some(toml::Value::Table(t)) => merged.extend(normalise_keys(t)),
            Some(_) => bail!("config section [{section}] is not a table"),
            None => {}
        }
    }
    match toml::Value::try_from(flags)? {
        toml::Value::Table(t) => merged.extend(normalise_keys(&t)),
        _ => bail!("flags must serialise to a table"),
    }
    toml::Value::Table(merged)
        .try_into()
        .with_context(|| format!("invalid settings for `{section}`"))
}

/// JSON image of settings for the manifest; non-finite reals become strings.
pub fn to_json(settings: &impl Serialize) -> Result<serde_json::Value> {
    Ok(toml_to_json(toml::Value::try_from(settings)?))
}

fn toml_to_json(v: toml::Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        toml::Value::String(s) => J::String(s),
        toml::Value::Integer(i) => J::from(i),
        toml::Value::Float(f) if f.is_finite() => J::from(f),
        toml::Value::Float(f) => J::String(f.to_string()),
        toml::Value::Boolean(b) => J::Bool(b),
        toml::Value::Datetime(d) => J::String(d.to_string()),
        toml::Value::Array(a) => J::Array(a.into_iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => J::Object(t.into_iter().map(|(k, v)| (k, toml_to_json(v))).collect()),
    }
}

/// Inverse of [`to_json`]: `"inf"`, `"-inf"` and `"NaN"` strings become reals. Nulls are dropped.
pub fn json_to_toml(v: &serde_json::Value) -> Option<toml::Value> {
    use serde_json::Value as J;
    Some(match v {
        J::Null => return None,
        J::Bool(b) => toml::Value::Boolean(*b),
        J::Number(n) => match n.as_i64() {
            Some(i) => toml::Value::Integer(i),
            None => toml::Value::Float(n.as_f64()?),
        },
        J::String(s) => match s.as_str() {
            "inf" => toml::Value::Float(f64::INFINITY),
            "-inf" => toml::Value::Float(f64::NEG_INFINITY),
            "NaN" => toml::Value::Float(f64::NAN),
            _ => toml::Value::String(s.clone()),
        },
        J::Array(a) => toml::Value::Array(a.iter().filter_map(json_to_toml).collect()),
        J::Object(o) => toml::Value::Table(
            o.iter()
                .filter_map(|(k, v)| json_to_toml(v).map(|v| (k.clone(), v)))
                .collect(),
        ),
    })
}

/// Parses `a:b:step` into the inclusive grid `a, a+step, ..., <= b`.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        bail!("range `{s}` must look like start:stop:step");
    };
    let (a, b, step): (f64, f64, f64) = (a.trim().parse()?, b.trim().parse()?, step.trim().parse()?);
    if step.is_nan() || step <= 0.0 || !a.is_finite() || !b.is_finite() {
        bail!("range `{s}` needs finite bounds and a positive step");
    }
    if b < a {
        bail!("range `{s}` is empty");
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    // Rounded to 12 digits so that 0.1 + 2*0.1 prints as 0.3.
    Ok((0..count)
        .map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}
