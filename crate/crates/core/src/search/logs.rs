use crate::netgraph::{LayerKind, LayerSpec};
use crate::{BitwidthPolicy, Result};

use super::optimize::EpisodeRecord;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `episode,reward,accuracy,cost,sigma,infeasible`; sigma is empty for
/// non-DDPG runs and warmup episodes.
pub fn exploration_csv(log: &[EpisodeRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "reward", "accuracy", "cost", "sigma", "infeasible"])?;
    for r in log {
        let sigma = if r.sigma.is_finite() && r.sigma > 0.0 { r.sigma.to_string() } else { String::new() };
        w.write_record([
            r.episode.to_string(),
            r.reward.to_string(),
            r.accuracy.to_string(),
            r.cost.to_string(),
            sigma,
            (r.infeasible as u8).to_string(),
        ])?;
    }
    finish(w)
}

pub fn kind_name(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv => "conv",
        LayerKind::DepthwiseConv => "depthwise_conv",
        LayerKind::Fc => "fc",
    }
}

/// Per-layer bitwidths for bar charts: `layer,kind,w_bits,a_bits,pinned`.
pub fn policy_csv(layers: &[LayerSpec], policy: &BitwidthPolicy) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "kind", "w_bits", "a_bits", "pinned"])?;
    for (k, l) in layers.iter().enumerate() {
        let b = policy.layer(k);
        w.write_record([
            k.to_string(),
            kind_name(l.kind).to_string(),
            b.w_bits.to_string(),
            b.a_bits.to_string(),
            (policy.is_pinned(k) as u8).to_string(),
        ])?;
    }
    finish(w)
}
