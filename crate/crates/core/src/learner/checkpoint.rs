use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::adam::AdamState;
use super::params::{Architecture, Params};

/// Serialized learner state. `extra` carries caller metadata such as the
/// training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub shapes: Vec<(String, Vec<usize>)>,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub seed: u64,
    pub step: u64,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: &Params, adam: &AdamState, seed: u64, step: u64) -> Self {
        Self {
            architecture: params.arch,
            shapes: params.arch.shapes(),
            params: params.data.clone(),
            adam: adam.clone(),
            seed,
            step,
            extra: serde_json::Value::Null,
        }
    }

    pub fn params(&self) -> Result<Params> {
        self.validate()?;
        Ok(Params { arch: self.architecture, data: self.params.clone() })
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.architecture;
        a.validate()?;
        if self.params.len() != a.len() || self.adam.m.len() != a.len() || self.adam.v.len() != a.len() || self.shapes != a.shapes() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {} parameters, architecture needs {}",
                self.params.len(),
                a.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let arch = Architecture { num_observations: 4, num_actions: 3, hidden: 5, heads: 2, reward_scale: 0.1 };
        let p = Params::init(arch, 77).unwrap();
        let mut adam = AdamState::new(arch.len());
        let mut data = p.data.clone();
        adam.update(&mut data, &vec![0.3; arch.len()], 1e-3).unwrap();
        let c = Checkpoint::new(&Params { arch, data }, &adam, 77, 1);
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let mut bad = c.clone();
        bad.params.pop();
        assert!(Checkpoint::from_json(&bad.to_json().unwrap()).is_err());
    }
}
