//! DDPG agent on a small self-contained MLP.
//!
//! The actor maps a 10-dimensional layer observation to an action in
//! [0, 1]; the critic scores (observation, action). Targets subtract a
//! moving-average reward baseline and bootstrap through slowly tracking
//! target copies of both nets (or the online nets in `online_targets` mode).

mod adam;
mod ddpg;
mod mlp;

pub use adam::Adam;
pub use ddpg::{
    actor_loss_grad, critic_loss_grad, truncated_normal, Agent, AgentConfig, ReplayStore, Transition, UpdateStats,
    OBS_DIM,
};
pub use mlp::{sigmoid, MlpNet, OutputAct, Trace};
