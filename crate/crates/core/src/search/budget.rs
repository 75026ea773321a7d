use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::hwsim::{self, HardwareConfig};
use crate::netgraph::LayerSpec;
use crate::quantizer::model_size;
use crate::{BitwidthPolicy, Error, Result, B_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Latency,
    Energy,
    #[serde(alias = "size")]
    ModelSize,
    Bitops,
}

impl Objective {
    /// Model size is a weights-only objective; everything else searches
    /// both weight and activation bits.
    pub fn searches_activations(self) -> bool {
        self != Objective::ModelSize
    }

    /// Unit of [`CostModel::cost`].
    pub fn base_unit(self) -> &'static str {
        match self {
            Objective::Latency => "s",
            Objective::Energy => "J",
            Objective::ModelSize => "bit",
            Objective::Bitops => "bitops",
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latency" => Ok(Objective::Latency),
            "energy" => Ok(Objective::Energy),
            "size" | "model_size" | "model-size" => Ok(Objective::ModelSize),
            "bitops" => Ok(Objective::Bitops),
            _ => Err(Error::InvalidArgument(format!("unknown objective {s:?}"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Latency => "latency",
            Objective::Energy => "energy",
            Objective::ModelSize => "model_size",
            Objective::Bitops => "bitops",
        })
    }
}

/// A budget bound: absolute in the objective's base unit, or relative to
/// the all-8-bit policy's cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Absolute(f64),
    Relative(f64),
}

impl Limit {
    /// Parses `<float><unit>`. Units: latency `s ms us ns`; energy `J mJ uJ
    /// nJ`; size `bit B KB KiB MB MiB`; bitops none, `K M G`. A trailing `x`
    /// means a multiple of the all-8-bit cost, e.g. `0.55x`.
    pub fn parse(text: &str, objective: Objective) -> Result<Self> {
        let text = text.trim();
        let split = text
            .find(|c: char| c.is_ascii_alphabetic() || c == 'µ')
            .unwrap_or(text.len());
        let (num, unit) = text.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad limit value in {text:?}")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!("limit must be positive, got {text:?}")));
        }
        if unit == "x" {
            return Ok(Limit::Relative(value));
        }
        let scale = match (objective, unit) {
            (Objective::Latency, "s") => 1.0,
            (Objective::Latency, "ms") => 1e-3,
            (Objective::Latency, "us" | "µs") => 1e-6,
            (Objective::Latency, "ns") => 1e-9,
            (Objective::Energy, "J") => 1.0,
            (Objective::Energy, "mJ") => 1e-3,
            (Objective::Energy, "uJ" | "µJ") => 1e-6,
            (Objective::Energy, "nJ") => 1e-9,
            (Objective::ModelSize, "bit" | "b") => 1.0,
            (Objective::ModelSize, "B") => 8.0,
            (Objective::ModelSize, "KB") => 8e3,
            (Objective::ModelSize, "KiB") => 8.0 * 1024.0,
            (Objective::ModelSize, "MB") => 8e6,
            (Objective::ModelSize, "MiB") => 8.0 * 1024.0 * 1024.0,
            (Objective::Bitops, "") => 1.0,
            (Objective::Bitops, "K") => 1e3,
            (Objective::Bitops, "M") => 1e6,
            (Objective::Bitops, "G") => 1e9,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unit {unit:?} does not fit objective {objective}"
                )))
            }
        };
        Ok(Limit::Absolute(value * scale))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub objective: Objective,
    pub limit: Limit,
}

/// Evaluates a policy's resource cost for one objective.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub layers: Vec<LayerSpec>,
    pub hw: HardwareConfig,
    pub objective: Objective,
}

impl CostModel {
    pub fn new(layers: Vec<LayerSpec>, hw: HardwareConfig, objective: Objective) -> Self {
        Self { layers, hw, objective }
    }

    /// Cost in the objective's base unit.
    pub fn cost(&self, policy: &BitwidthPolicy) -> Result<f64> {
        Ok(match self.objective {
            Objective::Latency => hwsim::latency(&self.layers, policy, &self.hw)?,
            Objective::Energy => hwsim::energy(&self.layers, policy, &self.hw)?,
            Objective::ModelSize => model_size(&self.layers, policy, true) as f64,
            Objective::Bitops => hwsim::bitops(&self.layers, policy) as f64,
        })
    }

    /// Resolves a limit to an absolute value. Relative limits scale the
    /// all-8-bit policy's cost.
    pub fn resolve(&self, limit: Limit) -> Result<f64> {
        match limit {
            Limit::Absolute(v) => Ok(v),
            Limit::Relative(f) => Ok(f * self.cost(&BitwidthPolicy::uniform(self.layers.len(), 8))?),
        }
    }
}

/// Brings `policy` under `limit` by walking the unpinned layers from last
/// to first, taking one bit off the activation and then the weight field
/// (weights only when `activations` is false) and re-checking the cost after
/// every decrement. Passes repeat until the limit holds or every searched
/// field sits at the minimum, in which case the result is flagged
/// infeasible. Never raises a bitwidth.
pub fn enforce_budget<F>(policy: &BitwidthPolicy, limit: f64, activations: bool, mut cost: F) -> Result<BitwidthPolicy>
where
    F: FnMut(&BitwidthPolicy) -> Result<f64>,
{
    let mut p = policy.clone();
    p.infeasible = false;
    if cost(&p)? <= limit {
        return Ok(p);
    }
    let order: Vec<usize> = p.unpinned_layers().into_iter().rev().collect();
    loop {
        let mut changed = false;
        for &k in &order {
            if activations && p.layer(k).a_bits > B_MIN {
                p.set_a(k, p.layer(k).a_bits - 1);
                changed = true;
                if cost(&p)? <= limit {
                    return Ok(p);
                }
            }
            if p.layer(k).w_bits > B_MIN {
                p.set_w(k, p.layer(k).w_bits - 1);
                changed = true;
                if cost(&p)? <= limit {
                    return Ok(p);
                }
            }
        }
        if !changed {
            p.infeasible = true;
            return Ok(p);
        }
    }
}
