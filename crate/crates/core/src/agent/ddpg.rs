use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::{MlpNet, OutputAct};
use crate::{Error, Result};

pub const OBS_DIM: usize = 10;
const CHECKPOINT_VERSION: u32 = 1;

/// One agent step. Every step of an episode carries the episode reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Ring buffer of whole episodes, oldest evicted first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStore {
    capacity: usize,
    episodes: VecDeque<Vec<Transition>>,
}

impl ReplayStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            episodes: VecDeque::new(),
        }
    }

    pub fn push(&mut self, episode: Vec<Transition>) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, i: usize) -> &[Transition] {
        &self.episodes[i]
    }

    pub fn latest(&self) -> Option<&[Transition]> {
        self.episodes.back().map(|e| e.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub sigma0: f64,
    pub sigma_decay: f64,
    pub baseline_ema: f64,
    pub tau: f64,
    /// Past episodes mixed into each update.
    pub replay_episodes: usize,
    pub replay_capacity: usize,
    /// Gradient steps taken after each finished episode.
    pub updates_per_episode: usize,
    /// Episodes acted uniformly at random before the actor takes over.
    pub warmup_episodes: usize,
    /// Bootstrap from the online nets instead of target copies.
    pub online_targets: bool,
    pub final_init: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![400, 300],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            gamma: 1.0,
            sigma0: 0.5,
            sigma_decay: 0.99,
            baseline_ema: 0.95,
            tau: 0.01,
            replay_episodes: 4,
            replay_capacity: 1000,
            updates_per_episode: 1,
            warmup_episodes: 0,
            online_targets: false,
            final_init: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// DDPG actor-critic with a reward baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub config: AgentConfig,
    pub actor: MlpNet,
    pub critic: MlpNet,
    pub actor_target: MlpNet,
    pub critic_target: MlpNet,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    /// Moving average of past episode rewards.
    pub baseline: f64,
    /// Finished episodes so far.
    pub episodes: u64,
    pub replay: ReplayStore,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    agent: Agent,
}

impl Agent {
    pub fn new(config: AgentConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sizes = vec![OBS_DIM];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let actor = MlpNet::new(&sizes, OutputAct::Sigmoid, config.final_init, &mut rng);
        sizes[0] = OBS_DIM + 1;
        let critic = MlpNet::new(&sizes, OutputAct::Identity, config.final_init, &mut rng);
        Self {
            actor_opt: Adam::new(actor.params.len(), config.actor_lr, config.beta1, config.beta2),
            critic_opt: Adam::new(critic.params.len(), config.critic_lr, config.beta1, config.beta2),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            baseline: 0.0,
            episodes: 0,
            replay: ReplayStore::new(config.replay_capacity),
            rng,
            config,
        }
    }

    /// Deterministic policy output in [0, 1].
    pub fn act(&self, obs: &[f64]) -> f64 {
        self.actor.forward(obs)[0].clamp(0.0, 1.0)
    }

    /// Current exploration width, `sigma0 * decay^episodes`.
    pub fn sigma(&self) -> f64 {
        self.config.sigma0 * self.config.sigma_decay.powi(self.episodes as i32)
    }

    pub fn in_warmup(&self) -> bool {
        self.episodes < self.config.warmup_episodes as u64
    }

    /// Action for a rollout: uniform during warmup, otherwise a truncated
    /// normal around the actor output.
    pub fn explore_act(&mut self, obs: &[f64]) -> f64 {
        if self.in_warmup() {
            return self.rng.random_range(0.0..=1.0);
        }
        let mean = self.act(obs);
        let sigma = self.sigma();
        truncated_normal(&mut self.rng, mean, sigma)
    }

    fn q(&self, critic: &MlpNet, obs: &[f64], action: f64) -> f64 {
        let mut x = obs.to_vec();
        x.push(action);
        critic.forward(&x)[0]
    }

    /// Bellman targets for one episode at baseline `b`:
    /// `R - b + gamma * Q'(O', mu'(O'))`, just `R - b` on the terminal step.
    pub fn compute_targets(&self, episode: &[Transition], b: f64) -> Vec<f64> {
        let (actor, critic) = if self.config.online_targets {
            (&self.actor, &self.critic)
        } else {
            (&self.actor_target, &self.critic_target)
        };
        episode
            .iter()
            .map(|t| {
                let mut y = t.reward - b;
                if !t.terminal {
                    let a = actor.forward(&t.next_obs)[0];
                    y += self.config.gamma * self.q(critic, &t.next_obs, a);
                }
                y
            })
            .collect()
    }

    /// Stores a finished episode and trains on it plus sampled replay.
    /// The baseline moves towards this episode's reward afterwards.
    pub fn observe_episode(&mut self, episode: Vec<Transition>) -> Result<UpdateStats> {
        if episode.is_empty() {
            return Err(Error::InvalidArgument("empty episode".into()));
        }
        let reward = episode[0].reward;
        self.replay.push(episode);
        let mut stats = UpdateStats {
            critic_loss: 0.0,
            actor_loss: 0.0,
        };
        for _ in 0..self.config.updates_per_episode {
            let batch = self.sample_batch();
            stats = self.update(&batch)?;
        }
        let ema = self.config.baseline_ema;
        self.baseline = ema * self.baseline + (1.0 - ema) * reward;
        self.episodes += 1;
        Ok(stats)
    }

    /// Latest episode plus up to `replay_episodes` distinct older ones,
    /// flattened with their targets.
    fn sample_batch(&mut self) -> Vec<(Transition, f64)> {
        let n = self.replay.len();
        let older = n - 1;
        let k = self.config.replay_episodes.min(older);
        let mut picks = vec![n - 1];
        if k > 0 {
            let mut idx = index::sample(&mut self.rng, older, k).into_vec();
            idx.sort_unstable();
            picks.extend(idx);
        }
        let mut batch = Vec::new();
        for i in picks {
            let ep = self.replay.get(i);
            let targets = self.compute_targets(ep, self.baseline);
            batch.extend(ep.iter().cloned().zip(targets));
        }
        batch
    }

    /// One Adam step on the critic towards `targets`, one on the actor up
    /// the critic, then soft target updates.
    pub fn update(&mut self, batch: &[(Transition, f64)]) -> Result<UpdateStats> {
        let inputs: Vec<(Vec<f64>, f64)> = batch.iter().map(|(t, _)| (t.obs.clone(), t.action)).collect();
        let targets: Vec<f64> = batch.iter().map(|(_, y)| *y).collect();
        let (critic_loss, cg) = critic_loss_grad(&self.critic, &inputs, &targets);
        if !critic_loss.is_finite() {
            return Err(Error::Diverged(format!("critic loss {critic_loss}")));
        }
        self.critic_opt.step(&mut self.critic.params, &cg);
        let obs: Vec<Vec<f64>> = inputs.into_iter().map(|(o, _)| o).collect();
        let (actor_loss, ag) = actor_loss_grad(&self.actor, &self.critic, &obs);
        if !actor_loss.is_finite() {
            return Err(Error::Diverged(format!("actor loss {actor_loss}")));
        }
        self.actor_opt.step(&mut self.actor.params, &ag);
        if !self.config.online_targets {
            self.actor_target.soft_update(&self.actor, self.config.tau);
            self.critic_target.soft_update(&self.critic, self.config.tau);
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
        })
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            version: u32,
            agent: &'a Agent,
        }
        serde_json::to_string(&Out {
            version: CHECKPOINT_VERSION,
            agent: self,
        })
        .expect("agent serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!("unsupported agent checkpoint version {}", ck.version)));
        }
        Ok(ck.agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Mean squared Bellman error `1/N sum (y - Q(o, a))^2` and its gradient
/// wrt the critic parameters.
pub fn critic_loss_grad(critic: &MlpNet, inputs: &[(Vec<f64>, f64)], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = inputs.len() as f64;
    let mut grad = vec![0.0; critic.params.len()];
    let mut loss = 0.0;
    for ((obs, a), y) in inputs.iter().zip(targets) {
        let mut x = obs.clone();
        x.push(*a);
        let tr = critic.trace(&x);
        let q = tr.output()[0];
        let r = q - y;
        loss += r * r / n;
        critic.backward(&tr, &[2.0 * r / n], &mut grad);
    }
    (loss, grad)
}

/// `-1/N sum Q(o, mu(o))` and its gradient wrt the actor parameters.
pub fn actor_loss_grad(actor: &MlpNet, critic: &MlpNet, obs: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = obs.len() as f64;
    let mut grad = vec![0.0; actor.params.len()];
    let mut scratch = vec![0.0; critic.params.len()];
    let mut loss = 0.0;
    for o in obs {
        let at = actor.trace(o);
        let a = at.output()[0];
        let mut x = o.clone();
        x.push(a);
        let ct = critic.trace(&x);
        loss -= ct.output()[0] / n;
        let dx = critic.backward(&ct, &[-1.0 / n], &mut scratch);
        actor.backward(&at, &[dx[OBS_DIM]], &mut grad);
    }
    (loss, grad)
}

/// `N(mean, sigma^2)` truncated to [0, 1] by rejection; clamps after 100
/// rejected draws.
pub fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    let d = Normal::new(mean, sigma).expect("finite sigma");
    let mut x = mean;
    for _ in 0..100 {
        x = d.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
    x.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(reward: f64, terminal: bool) -> Transition {
        Transition {
            obs: vec![0.1; OBS_DIM],
            action: 0.4,
            reward,
            next_obs: vec![0.2; OBS_DIM],
            terminal,
        }
    }

    #[test]
    fn single_step_target_is_reward() {
        let agent = Agent::new(AgentConfig::default());
        assert_eq!(agent.compute_targets(&[step(0.3, true)], 0.0), vec![0.3]);
    }

    #[test]
    fn zero_critic_targets_cancel_baseline() {
        let mut agent = Agent::new(AgentConfig::default());
        agent.critic_target.params.fill(0.0);
        let ep = [step(0.1, false), step(0.1, false), step(0.1, true)];
        assert_eq!(agent.compute_targets(&ep, 0.1), vec![0.0; 3]);
    }

    #[test]
    fn sigma_schedule() {
        let mut agent = Agent::new(AgentConfig::default());
        for e in 0..5 {
            let want = 0.5 * 0.99f64.powi(e);
            assert!((agent.sigma() - want).abs() <= 1e-15 * want, "{} vs {want}", agent.sigma());
            agent.observe_episode(vec![step(0.0, true)]).unwrap();
        }
    }

    #[test]
    fn replay_evicts_oldest() {
        let mut r = ReplayStore::new(2);
        for k in 0..3 {
            r.push(vec![step(k as f64, true)]);
        }
        assert_eq!(r.len(), 2);
        assert_eq!(r.get(0)[0].reward, 1.0);
        assert_eq!(r.latest().unwrap()[0].reward, 2.0);
    }
}
