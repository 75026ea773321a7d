//! The quantization environment and search drivers.
//!
//! An episode walks the unpinned layers, asking for a weight and then an
//! activation bitwidth per layer. The decoded policy is pushed under the
//! resource budget, quantized, finetuned for one epoch and scored on a
//! held-out reward split. DDPG, uniform random sampling and a small genetic
//! algorithm share the same environment.

mod budget;
mod env;
mod logs;
mod observe;
mod optimize;
mod reward;

pub use budget::{enforce_budget, Budget, CostModel, Limit, Objective};
pub use env::{apply_policy, Applied, EnvConfig, Outcome, SearchEnv};
pub use logs::{exploration_csv, kind_name, policy_csv};
pub use observe::{action_to_bits, bits_to_action, ObsNormalizer};
pub use optimize::{run_episode, search, EpisodeRecord, EvoConfig, Optimizer, SearchConfig, SearchResult};
pub use reward::{reward, Measured, RewardConfig, RewardMode};
