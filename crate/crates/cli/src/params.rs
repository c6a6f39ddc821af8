use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::Failure;

/// Parameter lookup with precedence flag > config file > default. Keys are
/// the long flag names.
pub struct Params {
    config: Map<String, Value>,
    used: RefCell<BTreeSet<String>>,
}

impl Params {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let config = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::io(format!("reading config {}: {e}", p.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Failure::validation("config file must be a flat JSON object")),
                    Err(e) => return Err(Failure::validation(format!("config file: {e}"))),
                }
            }
        };
        Ok(Self { config, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure> {
        self.used.borrow_mut().insert(key.to_string());
        if flag.is_some() {
            return Ok(flag);
        }
        match self.config.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Failure::validation(format!("config key '{key}': {e}"))),
        }
    }

    pub fn or<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure> {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    pub fn req<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<T, Failure> {
        self.get(key, flag)?.ok_or_else(|| Failure::validation(format!("missing required parameter --{key}")))
    }

    pub fn flag(&self, key: &str, flag: bool) -> Result<bool, Failure> {
        Ok(flag || self.or(key, None, false)?)
    }

    /// Rejects config keys the subcommand never asked for.
    pub fn finish(&self) -> Result<(), Failure> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.config.keys().map(String::as_str).filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Failure::validation(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

/// Comma separated numbers, for flags like `--x 0.5,-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

impl<'de> serde::Deserialize<'de> for List {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => Ok(List(vec![n.as_f64().unwrap_or(f64::NAN)])),
            Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            v => Vec::<f64>::deserialize(v).map(List).map_err(serde::de::Error::custom),
        }
    }
}
