//! Padded episode records and a FIFO episode buffer.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::env::{DecPomdpSpec, StepResult};
use crate::error::{Error, Result};

/// One episode, padded to `episode_limit` steps.
///
/// Step `t` stores the observation, state and availability seen *before*
/// acting, the joint action, the reward and the terminal flag. Index `len`
/// of the observation arrays holds the observation after the last action.
/// Everything past that is zero padding. Hitting the horizon counts as
/// terminal: observations carry no clock, so bootstrapping past the limit
/// would let an agent that never acts look as good as one that does.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub n_actions: usize,
    pub limit: usize,
    pub len: usize,
    /// `[limit + 1][n_agents][obs_dim]`
    pub obs: Vec<f32>,
    /// `[limit + 1][state_dim]`
    pub state: Vec<f32>,
    /// `[limit + 1][n_agents][n_actions]`
    pub avail: Vec<bool>,
    /// `[limit][n_agents]`
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    /// True only for real terminations, never for a horizon cut.
    pub terminated: Vec<bool>,
    pub filled: Vec<bool>,
    pub collected_alpha: Vec<f32>,
    pub success: bool,
    pub episode_return: f32,
}

impl EpisodeRecord {
    pub fn new(spec: &DecPomdpSpec) -> Self {
        let limit = spec.episode_limit;
        let n = spec.n_agents;
        EpisodeRecord {
            n_agents: n,
            obs_dim: spec.obs_dim,
            state_dim: spec.state_dim,
            n_actions: spec.n_actions,
            limit,
            len: 0,
            obs: vec![0.0; (limit + 1) * n * spec.obs_dim],
            state: vec![0.0; (limit + 1) * spec.state_dim],
            avail: vec![false; (limit + 1) * n * spec.n_actions],
            actions: vec![0; limit * n],
            rewards: vec![0.0; limit],
            terminated: vec![false; limit],
            filled: vec![false; limit],
            collected_alpha: vec![0.0; limit],
            success: false,
            episode_return: 0.0,
        }
    }

    /// Writes the observation part of `r` at slot `t` (0..=limit).
    pub fn set_observation(&mut self, t: usize, r: &StepResult) -> Result<()> {
        let (n, d, a) = (self.n_agents, self.obs_dim, self.n_actions);
        if t > self.limit || r.obs.len() != n || r.state.len() != self.state_dim {
            return Err(Error::Contract(format!("observation slot {t} does not fit the episode shape")));
        }
        for i in 0..n {
            if r.obs[i].len() != d || r.avail[i].len() != a {
                return Err(Error::dim("episode obs", &[r.obs[i].len()], &[d]));
            }
            self.obs[(t * n + i) * d..(t * n + i + 1) * d].copy_from_slice(&r.obs[i]);
            self.avail[(t * n + i) * a..(t * n + i + 1) * a].copy_from_slice(&r.avail[i]);
        }
        self.state[t * self.state_dim..(t + 1) * self.state_dim].copy_from_slice(&r.state);
        Ok(())
    }

    /// Records the transition taken at step `len` and advances `len`.
    pub fn push_step(&mut self, actions: &[usize], alpha: f32, next: &StepResult) -> Result<()> {
        let t = self.len;
        if t >= self.limit {
            return Err(Error::Contract("episode longer than its limit".into()));
        }
        let n = self.n_agents;
        self.actions[t * n..(t + 1) * n].copy_from_slice(actions);
        self.rewards[t] = next.reward;
        self.terminated[t] = next.terminated;
        self.filled[t] = true;
        self.collected_alpha[t] = alpha;
        self.episode_return += next.reward;
        self.success |= next.success;
        self.len += 1;
        self.set_observation(t + 1, next)
    }

    pub fn obs_at(&self, t: usize, agent: usize) -> &[f32] {
        let (n, d) = (self.n_agents, self.obs_dim);
        &self.obs[(t * n + agent) * d..(t * n + agent + 1) * d]
    }

    pub fn state_at(&self, t: usize) -> &[f32] {
        &self.state[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn avail_at(&self, t: usize, agent: usize) -> &[bool] {
        let (n, a) = (self.n_agents, self.n_actions);
        &self.avail[(t * n + agent) * a..(t * n + agent + 1) * a]
    }

    pub fn action_at(&self, t: usize, agent: usize) -> usize {
        self.actions[t * self.n_agents + agent]
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer_size", "must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Inserts at the back, evicting the oldest episode when full.
    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// `batch` distinct episodes chosen uniformly; `None` before warmup.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Option<Vec<&EpisodeRecord>> {
        if batch == 0 || self.episodes.len() < batch {
            return None;
        }
        let picks = sample(rng, self.episodes.len(), batch);
        Some(picks.iter().map(|i| &self.episodes[i]).collect())
    }
}
