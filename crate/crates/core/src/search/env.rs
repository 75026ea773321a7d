use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::budget::{enforce_budget, Budget, CostModel, Objective};
use super::observe::ObsNormalizer;
use super::reward::{reward, Measured, RewardConfig, RewardMode};
use crate::hwsim::{self, HardwareConfig};
use crate::netgraph::{evaluate, finetune, Dataset, FinetuneConfig, LayerSpec, ModelGraph, Split, StepKind};
use crate::quantizer::{model_size, Calibrator, LayerQuantizer};
use crate::{BitwidthPolicy, LayerBits, Result, B_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// The per-episode finetune (one epoch at lr 1e-3 by default).
    pub finetune: FinetuneConfig,
    /// Trailing fraction of the training split held out for the reward.
    pub reward_fraction: f64,
    /// Cap on finetune samples per episode, taken from the front of the
    /// search split; `None` uses all of it.
    pub finetune_samples: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            finetune: FinetuneConfig::default(),
            reward_fraction: 0.2,
            finetune_samples: Some(256),
        }
    }
}

/// Everything measured for one evaluated policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub policy: BitwidthPolicy,
    pub accuracy: f64,
    /// Objective cost in its base unit.
    pub cost: f64,
    pub latency: f64,
    pub energy: f64,
    pub model_size_bits: u64,
    pub bitops: u64,
    pub reward: f64,
    pub infeasible: bool,
}

/// The quantization environment: decodes step actions into policies,
/// enforces the budget, and scores policies by quantize -> finetune ->
/// evaluate on a held-out reward split.
pub struct SearchEnv {
    model: ModelGraph,
    finetune_split: Split,
    reward_split: Split,
    calibrator: Calibrator,
    normalizer: ObsNormalizer,
    costs: CostModel,
    limit: f64,
    reward_cfg: RewardConfig,
    cfg: EnvConfig,
    origin: Measured,
    cache: HashMap<BitwidthPolicy, Outcome>,
}

impl SearchEnv {
    pub fn new(
        model: ModelGraph,
        data: &Dataset,
        hw: HardwareConfig,
        budget: Budget,
        reward_cfg: RewardConfig,
        cfg: EnvConfig,
    ) -> Result<Self> {
        let (search_split, reward_split) = data.train.hold_out(cfg.reward_fraction);
        let finetune_split = match cfg.finetune_samples {
            Some(n) => search_split.slice(0, n.min(search_split.len())),
            None => search_split,
        };
        let calibrator = Calibrator::new(&model, &data.calibration)?;
        let layers = model.layers().to_vec();
        let costs = CostModel::new(layers.clone(), hw, budget.objective);
        let limit = costs.resolve(budget.limit)?;
        let base = BitwidthPolicy::uniform(layers.len(), B_MAX);
        let origin = Measured {
            accuracy: evaluate(&model, &reward_split, None)?,
            latency: hwsim::latency(&layers, &base, &costs.hw)?,
            energy: hwsim::energy(&layers, &base, &costs.hw)?,
        };
        Ok(Self {
            normalizer: ObsNormalizer::new(&layers),
            model,
            finetune_split,
            reward_split,
            calibrator,
            costs,
            limit,
            reward_cfg,
            cfg,
            origin,
            cache: HashMap::new(),
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        self.model.layers()
    }

    pub fn model(&self) -> &ModelGraph {
        &self.model
    }

    pub fn hardware(&self) -> &HardwareConfig {
        &self.costs.hw
    }

    pub fn objective(&self) -> Objective {
        self.costs.objective
    }

    /// Absolute budget in the objective's base unit.
    pub fn limit(&self) -> f64 {
        self.limit
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward_cfg
    }

    /// Float accuracy on the reward split.
    pub fn acc_origin(&self) -> f64 {
        self.origin.accuracy
    }

    pub fn reward_split(&self) -> &Split {
        &self.reward_split
    }

    /// Starting point of every policy: all layers 8/8, first/last pinned.
    pub fn base_policy(&self) -> BitwidthPolicy {
        BitwidthPolicy::uniform(self.layers().len(), B_MAX)
    }

    /// Agent steps in order: for each unpinned layer its weight step, then
    /// its activation step (weights only for the model-size objective).
    pub fn steps(&self) -> Vec<(usize, StepKind)> {
        let acts = self.objective().searches_activations();
        let mut steps = Vec::new();
        for k in self.base_policy().unpinned_layers() {
            steps.push((k, StepKind::Weight));
            if acts {
                steps.push((k, StepKind::Activation));
            }
        }
        steps
    }

    pub fn observe(&self, k: usize, step: StepKind, prev_action: f64) -> Vec<f64> {
        self.normalizer.encode(&self.layers()[k], step, prev_action)
    }

    /// Policy with one bitwidth per step, in [`Self::steps`] order.
    pub fn policy_from_genes(&self, genes: &[u32]) -> BitwidthPolicy {
        let mut p = self.base_policy();
        for (&(k, step), &b) in self.steps().iter().zip(genes) {
            match step {
                StepKind::Weight => p.set_w(k, b),
                StepKind::Activation => p.set_a(k, b),
            }
        }
        p
    }

    pub fn genes_of(&self, policy: &BitwidthPolicy) -> Vec<u32> {
        self.steps()
            .iter()
            .map(|&(k, step)| bits_at(policy, k, step))
            .collect()
    }

    pub fn cost(&self, policy: &BitwidthPolicy) -> Result<f64> {
        self.costs.cost(policy)
    }

    /// Applies the budget (constrained mode only).
    pub fn enforce(&self, policy: &BitwidthPolicy) -> Result<BitwidthPolicy> {
        match self.reward_cfg.mode {
            RewardMode::Constrained => enforce_budget(policy, self.limit, self.objective().searches_activations(), |p| {
                self.costs.cost(p)
            }),
            RewardMode::AccuracyGuaranteed => Ok(policy.clone()),
        }
    }

    /// Fake quantizer for `policy`: codebook weights for the model-size
    /// objective, calibrated linear quantization otherwise.
    pub fn quantizer(&mut self, policy: &BitwidthPolicy) -> Result<LayerQuantizer> {
        if self.objective() == Objective::ModelSize {
            self.calibrator.codebook(policy)
        } else {
            self.calibrator.linear(policy)
        }
    }

    /// Quantize, finetune one epoch and score `policy` (already enforced).
    /// Results are memoised: the pipeline is deterministic per policy.
    pub fn evaluate(&mut self, policy: &BitwidthPolicy) -> Result<Outcome> {
        if let Some(o) = self.cache.get(policy) {
            return Ok(o.clone());
        }
        let hook = self.quantizer(policy)?;
        let mut model = self.model.clone();
        finetune(&mut model, &self.finetune_split, &self.cfg.finetune, Some(&hook))?;
        let accuracy = evaluate(&model, &self.reward_split, Some(&hook))?;
        let layers = self.layers();
        let report = hwsim::cost_report(layers, policy, &self.costs.hw)?;
        let measured = Measured {
            accuracy,
            latency: report.total_latency,
            energy: report.total_energy,
        };
        let outcome = Outcome {
            policy: policy.clone(),
            accuracy,
            cost: self.costs.cost(policy)?,
            latency: report.total_latency,
            energy: report.total_energy,
            model_size_bits: model_size(layers, policy, self.objective() == Objective::ModelSize),
            bitops: report.total_bitops,
            reward: reward(&self.reward_cfg, &measured, &self.origin),
            infeasible: policy.infeasible,
        };
        self.cache.insert(policy.clone(), outcome.clone());
        Ok(outcome)
    }

    /// Policies evaluated so far (distinct).
    pub fn evaluated(&self) -> usize {
        self.cache.len()
    }
}

pub(crate) fn bits_at(policy: &BitwidthPolicy, k: usize, step: StepKind) -> u32 {
    let LayerBits { w_bits, a_bits } = policy.layer(k);
    match step {
        StepKind::Weight => w_bits,
        StepKind::Activation => a_bits,
    }
}

/// Result of applying a policy for deployment.
pub struct Applied {
    pub model: ModelGraph,
    pub quantizer: LayerQuantizer,
    pub accuracy: f64,
}

/// Calibrates `policy` on the float model, finetunes on the whole training
/// split for `epochs` and reports validation accuracy. `codebook` selects
/// k-means weights (model-size policies).
pub fn apply_policy(
    model: &ModelGraph,
    policy: &BitwidthPolicy,
    data: &Dataset,
    epochs: usize,
    codebook: bool,
) -> Result<Applied> {
    policy.validate(model.len())?;
    let mut cal = Calibrator::new(model, &data.calibration)?;
    let quantizer = if codebook { cal.codebook(policy)? } else { cal.linear(policy)? };
    let mut tuned = model.clone();
    if epochs > 0 {
        let cfg = FinetuneConfig {
            epochs,
            ..FinetuneConfig::default()
        };
        finetune(&mut tuned, &data.train, &cfg, Some(&quantizer))?;
    }
    let accuracy = evaluate(&tuned, &data.validation, Some(&quantizer))?;
    Ok(Applied {
        model: tuned,
        quantizer,
        accuracy,
    })
}
