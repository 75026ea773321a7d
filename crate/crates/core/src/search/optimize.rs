use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{bits_at, Outcome, SearchEnv};
use super::observe::{action_to_bits, bits_to_action};
use crate::agent::{Agent, AgentConfig, Transition};
use crate::{BitwidthPolicy, Error, Result, B_MAX, B_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Ddpg,
    Random,
    Evolutionary,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(Optimizer::Ddpg),
            "random" => Ok(Optimizer::Random),
            "evolutionary" | "evo" => Ok(Optimizer::Evolutionary),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer {s:?}"))),
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Ddpg => "ddpg",
            Optimizer::Random => "random",
            Optimizer::Evolutionary => "evolutionary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoConfig {
    pub population: usize,
    pub tournament: usize,
    pub mutation_rate: f64,
    pub elitism: usize,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            population: 20,
            tournament: 4,
            mutation_rate: 0.1,
            elitism: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub optimizer: Optimizer,
    pub episodes: usize,
    /// Master seed; overrides the agent's own seed.
    pub seed: u64,
    pub agent: AgentConfig,
    pub evo: EvoConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Ddpg,
            episodes: 600,
            seed: 0,
            agent: AgentConfig::default(),
            evo: EvoConfig::default(),
        }
    }
}

impl SearchConfig {
    /// Settings sized for the desk-scale network: 150 episodes, a 64/48
    /// actor-critic, 20 uniform-random warmup episodes and 40 minibatch
    /// updates per episode. The full-size 400/300 agent with one update per
    /// episode barely moves from its initial policy within 150 episodes.
    pub fn desk() -> Self {
        Self {
            episodes: 150,
            agent: AgentConfig {
                hidden: vec![64, 48],
                updates_per_episode: 40,
                warmup_episodes: 20,
                ..AgentConfig::default()
            },
            ..Self::default()
        }
    }
}

/// One exploration-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub reward: f64,
    pub accuracy: f64,
    pub cost: f64,
    pub sigma: f64,
    pub infeasible: bool,
    pub policy: BitwidthPolicy,
}

impl EpisodeRecord {
    fn new(episode: usize, sigma: f64, o: &Outcome) -> Self {
        Self {
            episode,
            reward: o.reward,
            accuracy: o.accuracy,
            cost: o.cost,
            sigma,
            infeasible: o.infeasible,
            policy: o.policy.clone(),
        }
    }
}

pub struct SearchResult {
    pub best: EpisodeRecord,
    pub log: Vec<EpisodeRecord>,
    /// Final agent state for DDPG runs.
    pub agent: Option<Agent>,
}

/// One DDPG episode: act on every step, decode, enforce, score. Every
/// transition carries the episode reward. Where enforcement changed a
/// step's bitwidth the stored action is the centre of the enforced
/// bitwidth's action interval, so the critic learns about the policy that
/// was actually scored.
pub fn run_episode(env: &mut SearchEnv, agent: &mut Agent) -> Result<(Vec<Transition>, Outcome)> {
    let steps = env.steps();
    let mut obs = Vec::with_capacity(steps.len());
    let mut actions = Vec::with_capacity(steps.len());
    let mut prev = 0.0;
    for &(k, step) in &steps {
        let o = env.observe(k, step, prev);
        let a = agent.explore_act(&o);
        obs.push(o);
        actions.push(a);
        prev = a;
    }
    let genes: Vec<u32> = actions.iter().map(|&a| action_to_bits(a)).collect();
    let policy = env.enforce(&env.policy_from_genes(&genes))?;
    let outcome = env.evaluate(&policy)?;
    let n = steps.len();
    let transitions = (0..n)
        .map(|i| {
            let (k, step) = steps[i];
            let b = bits_at(&policy, k, step);
            let action = if b == genes[i] { actions[i] } else { bits_to_action(b) };
            Transition {
                obs: obs[i].clone(),
                action,
                reward: outcome.reward,
                next_obs: obs[(i + 1).min(n - 1)].clone(),
                terminal: i + 1 == n,
            }
        })
        .collect();
    Ok((transitions, outcome))
}

pub fn search(env: &mut SearchEnv, cfg: &SearchConfig) -> Result<SearchResult> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidArgument("search needs at least one episode".into()));
    }
    let (log, agent) = match cfg.optimizer {
        Optimizer::Ddpg => {
            let (log, agent) = search_ddpg(env, cfg)?;
            (log, Some(agent))
        }
        Optimizer::Random => (search_random(env, cfg)?, None),
        Optimizer::Evolutionary => (search_evolutionary(env, cfg)?, None),
    };
    // first of the maxima
    let mut best = &log[0];
    for r in &log[1..] {
        if r.reward > best.reward {
            best = r;
        }
    }
    Ok(SearchResult {
        best: best.clone(),
        log,
        agent,
    })
}

fn search_ddpg(env: &mut SearchEnv, cfg: &SearchConfig) -> Result<(Vec<EpisodeRecord>, Agent)> {
    let mut agent = Agent::new(AgentConfig {
        seed: cfg.seed,
        ..cfg.agent.clone()
    });
    let mut log = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let sigma = if agent.in_warmup() { f64::NAN } else { agent.sigma() };
        let (transitions, outcome) = run_episode(env, &mut agent)?;
        log.push(EpisodeRecord::new(e, sigma, &outcome));
        agent.observe_episode(transitions)?;
    }
    Ok((log, agent))
}

fn random_genes(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(B_MIN..=B_MAX)).collect()
}

fn search_random(env: &mut SearchEnv, cfg: &SearchConfig) -> Result<Vec<EpisodeRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = env.steps().len();
    let mut log = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let policy = env.enforce(&env.policy_from_genes(&random_genes(&mut rng, n)))?;
        let outcome = env.evaluate(&policy)?;
        log.push(EpisodeRecord::new(e, 0.0, &outcome));
    }
    Ok(log)
}

/// Generational GA over per-step bitwidth genes: tournament selection,
/// uniform crossover, +-1 bit mutation, elitism. Children are repaired by
/// budget enforcement and keep the repaired genes.
fn search_evolutionary(env: &mut SearchEnv, cfg: &SearchConfig) -> Result<Vec<EpisodeRecord>> {
    let evo = &cfg.evo;
    if evo.population == 0 || evo.tournament == 0 {
        return Err(Error::InvalidArgument("population and tournament must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = env.steps().len();
    let mut log = Vec::with_capacity(cfg.episodes);
    let score = |env: &mut SearchEnv, genes: Vec<u32>, log: &mut Vec<EpisodeRecord>| -> Result<(Vec<u32>, f64)> {
        let policy = env.enforce(&env.policy_from_genes(&genes))?;
        let outcome = env.evaluate(&policy)?;
        log.push(EpisodeRecord::new(log.len(), 0.0, &outcome));
        Ok((env.genes_of(&policy), outcome.reward))
    };
    let mut pop = Vec::with_capacity(evo.population);
    while pop.len() < evo.population && log.len() < cfg.episodes {
        let genes = random_genes(&mut rng, n);
        pop.push(score(env, genes, &mut log)?);
    }
    while log.len() < cfg.episodes {
        // stable: equal rewards keep their earlier order
        pop.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut next: Vec<(Vec<u32>, f64)> = pop.iter().take(evo.elitism).cloned().collect();
        while next.len() < evo.population && log.len() < cfg.episodes {
            let a = tournament(&mut rng, &pop, evo.tournament);
            let b = tournament(&mut rng, &pop, evo.tournament);
            let mut child: Vec<u32> = (0..n)
                .map(|i| if rng.random_bool(0.5) { pop[a].0[i] } else { pop[b].0[i] })
                .collect();
            for g in &mut child {
                if rng.random_bool(evo.mutation_rate) {
                    *g = if rng.random_bool(0.5) { *g + 1 } else { g.saturating_sub(1) };
                    *g = (*g).clamp(B_MIN, B_MAX);
                }
            }
            next.push(score(env, child, &mut log)?);
        }
        pop = next;
    }
    Ok(log)
}

fn tournament(rng: &mut ChaCha8Rng, pop: &[(Vec<u32>, f64)], size: usize) -> usize {
    let picks = index::sample(rng, pop.len(), size.min(pop.len()));
    let mut best = None::<usize>;
    for i in picks {
        if best.is_none_or(|b| pop[i].1 > pop[b].1 || (pop[i].1 == pop[b].1 && i < b)) {
            best = Some(i);
        }
    }
    best.expect("non-empty population")
}
