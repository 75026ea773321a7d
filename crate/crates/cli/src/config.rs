use std::path::Path;

use anyhow::{Context, Result};
use bitforge::hwsim::HardwareConfig;
use bitforge::netgraph::{BaselineConfig, SyntheticConfig};
use bitforge::search::{Budget, EnvConfig, Limit, Objective, RewardConfig, SearchConfig};
use serde::{Deserialize, Serialize};

/// Everything a command needs besides its input paths. Loaded from
/// `--config`, then overridden by flags; the resolved value is what the
/// manifest records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub objective: Objective,
    /// `<float><unit>` or a multiple of the all-8-bit cost, e.g. `0.55x`.
    pub limit: String,
    /// Preset name or path to a hardware JSON file.
    pub hw: String,
    /// Resolved hardware. Filled in before a run; when present it wins over
    /// `hw`, so a manifest replays on the exact hardware it was run on.
    pub hardware: Option<HardwareConfig>,
    pub reward: RewardConfig,
    pub search: SearchConfig,
    pub env: EnvConfig,
    pub baseline: BaselineConfig,
    pub data: SyntheticConfig,
    /// Finetune epochs for `apply`.
    pub apply_epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            objective: Objective::Latency,
            limit: "0.55x".into(),
            hw: "edge".into(),
            hardware: None,
            reward: RewardConfig::default(),
            search: SearchConfig::desk(),
            env: EnvConfig::default(),
            baseline: BaselineConfig::default(),
            data: SyntheticConfig::default(),
            apply_epochs: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| bitforge::Error::Schema(format!("{}: {e}", path.display())).into())
    }

    /// Propagates the master seed and resolves the hardware.
    pub fn resolve(mut self) -> Result<Self> {
        self.search.seed = self.seed;
        self.baseline.seed = self.seed;
        if self.hardware.is_none() {
            self.hardware = Some(HardwareConfig::resolve(&self.hw)?);
        }
        Ok(self)
    }

    pub fn hardware(&self) -> HardwareConfig {
        self.hardware.clone().expect("config resolved")
    }

    pub fn budget(&self) -> Result<Budget> {
        Ok(Budget {
            objective: self.objective,
            limit: Limit::parse(&self.limit, self.objective)?,
        })
    }
}
