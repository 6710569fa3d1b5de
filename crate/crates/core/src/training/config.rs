use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::kv;

/// Optimizer and epoch-loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Maximum global gradient norm; `None` disables clipping.
    pub gradient_clip: Option<f64>,
    /// Epochs between validation passes.
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn vehicle() -> Self {
        Self {
            epochs: 40,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            gradient_clip: None,
            eval_every: 1,
        }
    }

    pub fn pedestrian() -> Self {
        Self {
            epochs: 80,
            ..Self::vehicle()
        }
    }

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::VehicleBirdseye => Self::vehicle(),
            Domain::PedestrianBirdseye | Domain::PedestrianHighangle => Self::pedestrian(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("gradient_clip", "must be positive and finite"));
            }
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Overrides fields present in `map`; `gradient_clip = none` disables
    /// clipping.
    pub fn apply_map(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        if map.contains_key("epochs") {
            self.epochs = kv::get(map, "epochs")?;
        }
        if map.contains_key("learning_rate") {
            self.learning_rate = kv::get(map, "learning_rate")?;
        }
        if map.contains_key("beta1") {
            self.beta1 = kv::get(map, "beta1")?;
        }
        if map.contains_key("beta2") {
            self.beta2 = kv::get(map, "beta2")?;
        }
        if map.contains_key("epsilon") {
            self.epsilon = kv::get(map, "epsilon")?;
        }
        if map.contains_key("seed") {
            self.seed = kv::get(map, "seed")?;
        }
        if map.contains_key("eval_every") {
            self.eval_every = kv::get(map, "eval_every")?;
        }
        if let Some(v) = map.get("gradient_clip") {
            self.gradient_clip = match v.as_str() {
                "" | "none" => None,
                _ => Some(kv::get(map, "gradient_clip")?),
            };
        }
        self.validate()
    }
}
