//! Serializable verification results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub value: f64,
    pub reference: f64,
    pub stderr: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub nodes_expanded: u64,
    pub seed: u64,
    #[serde(default)]
    pub details: BTreeMap<String, Value>,
}

impl VerificationReport {
    pub fn new(check: &str, seed: u64) -> Self {
        Self {
            check: check.to_string(),
            value: 0.0,
            reference: 0.0,
            stderr: None,
            tolerance: 0.0,
            pass: false,
            nodes_expanded: 0,
            seed,
            details: BTreeMap::new(),
        }
    }

    pub fn detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }
}
