//! Command-line overrides and parameter sweeps over dotted config keys.

use toml::{Table, Value};

use crate::config::{parse_config, ConfigError, ConfigErrors, RunConfig};

/// A `key=v1,v2,...` sweep over one dotted config key.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<Value>,
}

fn bad(key: &str, message: impl Into<String>) -> ConfigErrors {
    ConfigErrors(vec![ConfigError {
        key: key.into(),
        message: message.into(),
    }])
}

/// Splits on commas outside brackets, braces and quotes.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quoted = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '[' | '{' if !quoted => depth += 1,
            ']' | '}' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn parse_value(key: &str, text: &str) -> Result<Value, ConfigErrors> {
    let doc: Table = toml::from_str(&format!("v = {text}"))
        .or_else(|_| toml::from_str(&format!("v = {:?}", text)))
        .map_err(|e| bad(key, format!("cannot parse value `{text}`: {e}")))?;
    Ok(doc["v"].clone())
}

impl Sweep {
    /// Parses `key=list`; the list may be bracketed: `physics.p=[1.5,2,3]`.
    pub fn parse(spec: &str) -> Result<Self, ConfigErrors> {
        let (key, list) = spec
            .split_once('=')
            .ok_or_else(|| bad("--sweep", format!("expected key=list, got `{spec}`")))?;
        let key = key.trim();
        let mut list = list.trim();
        if list.starts_with('[') && list.ends_with(']') {
            list = &list[1..list.len() - 1];
        }
        let values = split_top_level(list)
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|s| parse_value(key, s))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(bad(key, "sweep list is empty"));
        }
        Ok(Sweep {
            key: key.to_string(),
            values,
        })
    }
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_key(doc: &mut Table, key: &str, value: Value) -> Result<(), ConfigErrors> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| bad(key, format!("`{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `text` after applying `overrides` and validates the result.
pub fn load_with(text: &str, overrides: &[(String, Value)]) -> Result<RunConfig, ConfigErrors> {
    let mut doc: Table = toml::from_str(text).map_err(|e| bad("document", e.to_string().trim()))?;
    for (k, v) in overrides {
        set_key(&mut doc, k, v.clone())?;
    }
    parse_config(&toml::to_string(&doc).map_err(|e| bad("document", e.to_string()))?)
}

/// Every combination of sweep values, first sweep varying slowest.
pub fn expand(sweeps: &[Sweep]) -> Vec<Vec<(String, Value)>> {
    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for s in sweeps {
        let mut next = Vec::with_capacity(combos.len() * s.values.len());
        for c in &combos {
            for v in &s.values {
                let mut c = c.clone();
                c.push((s.key.clone(), v.clone()));
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_aware_split() {
        let s = Sweep::parse("domain.nodes=[[11],[21],[41]]").unwrap();
        assert_eq!(s.values.len(), 3);
        assert_eq!(s.values[1], Value::Array(vec![Value::Integer(21)]));
        let s = Sweep::parse("physics.p=1.5,2.0,3.0").unwrap();
        assert_eq!(s.values, vec![Value::Float(1.5), Value::Float(2.0), Value::Float(3.0)]);
    }

    #[test]
    fn bare_words_become_strings() {
        let s = Sweep::parse("output.solution=csv,binary").unwrap();
        assert_eq!(s.values[1], Value::String("binary".into()));
    }

    #[test]
    fn cartesian_expansion() {
        let a = Sweep::parse("physics.p=1.5,2.0").unwrap();
        let b = Sweep::parse("seed=1,2,3").unwrap();
        let combos = expand(&[a, b]);
        assert_eq!(combos.len(), 6);
        assert_eq!(combos[3][0].1, Value::Float(2.0));
        assert_eq!(combos[3][1].1, Value::Integer(1));
    }

    #[test]
    fn overrides_create_tables() {
        let cfg = load_with(
            "command = \"solve\"",
            &[("physics.p".into(), Value::Float(3.0))],
        )
        .unwrap();
        assert_eq!(cfg.physics.p, 3.0);
    }
}
