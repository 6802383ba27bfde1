//! Run configuration: a JSON file plus flag overrides, flags winning.
//! Unknown keys are rejected, and every run echoes its fully resolved
//! configuration next to its outputs so any run can be re-executed from
//! its output directory alone.

use serde::{Deserialize, Serialize};

use braid::growth::{ModelDims, OrderHeuristic, TrainConfig};

pub const ABLATIONS: &[&str] = &[
    "disable-prototype-protection",
    "fixed-equal-weights",
    "negatives-only-denominator",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: ModelDims,
    pub train: TrainConfig,
    pub plan_heuristic: OrderHeuristic,
    /// Modalities to align, in heuristic order; empty means every channel
    /// of the topology, in file order.
    pub modalities: Vec<String>,
    /// Active ablation switches (see [`ABLATIONS`]).
    pub ablations: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dims: ModelDims::default(),
            train: TrainConfig::desk(0),
            plan_heuristic: OrderHeuristic::GivenOrder,
            modalities: Vec::new(),
            ablations: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> braid::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> braid::Result<()> {
        for a in &self.ablations {
            if !ABLATIONS.contains(&a.as_str()) {
                return Err(braid::Error::InvalidConfig(format!(
                    "unknown ablation '{a}' (expected one of {ABLATIONS:?})"
                )));
            }
        }
        Ok(())
    }

    /// The training config with seed and ablation switches folded in.
    pub fn resolved_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        for a in &self.ablations {
            match a.as_str() {
                "disable-prototype-protection" => t.protect_prototype = false,
                "fixed-equal-weights" => t.adaptive_weighting = false,
                "negatives-only-denominator" => t.include_positive = false,
                _ => unreachable!("validated"),
            }
        }
        t
    }
}
