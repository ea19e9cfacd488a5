//! Machine-readable check reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Outcome of one numerical check: `{check, pass, values, tolerances}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub pass: bool,
    pub values: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(check: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            pass: true,
            values: BTreeMap::new(),
            tolerances: BTreeMap::new(),
        }
    }

    pub fn value(mut self, key: &str, v: impl Serialize) -> Self {
        self.set(key, v);
        self
    }

    pub fn set(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        self.values.insert(key.to_owned(), v);
    }

    pub fn tolerance(mut self, key: &str, tol: f64) -> Self {
        self.tolerances.insert(key.to_owned(), tol);
        self
    }

    pub fn pass_if(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(Value::as_f64)
    }
}
