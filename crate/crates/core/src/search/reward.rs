use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Accuracy only; the budget is enforced on the action space.
    Constrained,
    /// Accuracy plus latency and energy savings, no budget enforcement.
    AccuracyGuaranteed,
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constrained" => Ok(RewardMode::Constrained),
            "accuracy-guaranteed" | "accuracy_guaranteed" => Ok(RewardMode::AccuracyGuaranteed),
            _ => Err(Error::InvalidArgument(format!("unknown reward mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub mode: RewardMode,
    pub lambda: f64,
    pub lambda_latency: f64,
    pub lambda_energy: f64,
    pub lambda_accuracy: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            mode: RewardMode::Constrained,
            lambda: 0.1,
            lambda_latency: 1.0,
            lambda_energy: 1.0,
            lambda_accuracy: 20.0,
        }
    }
}

/// What a reward is computed from. Latency in seconds, energy in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub accuracy: f64,
    pub latency: f64,
    pub energy: f64,
}

/// Episode reward. Constrained: `lambda (acc_q - acc_o)`. Accuracy-guaranteed:
/// `lambda_acc (acc_q - acc_o) - lambda_lat (lat_q - lat_o)[ms] - lambda_e
/// (E_q - E_o)[mJ]`, so that saved time and energy raise the reward.
pub fn reward(cfg: &RewardConfig, quant: &Measured, origin: &Measured) -> f64 {
    let d_acc = quant.accuracy - origin.accuracy;
    match cfg.mode {
        RewardMode::Constrained => cfg.lambda * d_acc,
        RewardMode::AccuracyGuaranteed => {
            let d_lat_ms = (quant.latency - origin.latency) * 1e3;
            let d_e_mj = (quant.energy - origin.energy) * 1e3;
            cfg.lambda_accuracy * d_acc - cfg.lambda_latency * d_lat_ms - cfg.lambda_energy * d_e_mj
        }
    }
}
