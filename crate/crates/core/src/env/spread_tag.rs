//! "spread_tag": cooperative target coverage on a square grid with random
//! starts. The team succeeds when every target cell is occupied by some agent
//! at the end of a step.
//!
//! Actions: `0` no-op, `1` up, `2` down, `3` left, `4` right. Observation:
//! `[out_of_bounds, teammate, target]` per cell of the `(2r+1)^2` patch, then
//! one-hot row and one-hot column of the agent. State: one-hot cell of every
//! agent and every target, then `t / episode_limit`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, one_hot, DecPomdpSpec, Environment, StepResult};
use crate::error::{Error, Result};

const MOVES: [(isize, isize); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Clone, Debug, PartialEq)]
pub struct SpreadTagConfig {
    pub size: usize,
    pub n_agents: usize,
    pub n_targets: usize,
    pub view_radius: usize,
    pub episode_limit: usize,
    pub step_cost: f32,
    pub success_reward: f32,
}

impl Default for SpreadTagConfig {
    fn default() -> Self {
        SpreadTagConfig {
            size: 5,
            n_agents: 2,
            n_targets: 2,
            view_radius: 1,
            episode_limit: 20,
            step_cost: 0.01,
            success_reward: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpreadTag {
    config: SpreadTagConfig,
    spec: DecPomdpSpec,
    rng: ChaCha8Rng,
    agents: Vec<(usize, usize)>,
    targets: Vec<(usize, usize)>,
    t: usize,
    done: bool,
}

impl SpreadTag {
    pub fn new(config: SpreadTagConfig) -> Result<Self> {
        let c = &config;
        let bad = |key: &str, reason: String| Err(Error::config(format!("env.spread_tag.{key}"), reason));
        if c.size < 2 {
            return bad("size", format!("must be >= 2, got {}", c.size));
        }
        if c.n_agents < 2 || c.n_targets == 0 || c.n_targets > c.n_agents {
            return bad("n_targets", "need 2+ agents and 1..=n_agents targets".into());
        }
        if 2 * c.view_radius + 1 >= 2 * c.size - 1 {
            return bad("view_radius", "must be smaller than the map diameter".into());
        }
        // Worst case: Manhattan distance across the map.
        if c.episode_limit < 2 * (c.size - 1) {
            return bad("episode_limit", format!("must be >= {}", 2 * (c.size - 1)));
        }
        let cells = c.size * c.size;
        let patch = (2 * c.view_radius + 1).pow(2);
        let spec = DecPomdpSpec {
            n_agents: c.n_agents,
            obs_dim: patch * 3 + 2 * c.size,
            state_dim: (c.n_agents + c.n_targets) * cells + 1,
            n_actions: MOVES.len(),
            episode_limit: c.episode_limit,
            return_bounds: (-c.step_cost * c.episode_limit as f32, c.success_reward),
        };
        Ok(SpreadTag {
            agents: vec![(0, 0); c.n_agents],
            targets: vec![(0, 0); c.n_targets],
            config,
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
            done: true,
        })
    }

    fn cell(&self, p: (usize, usize)) -> usize {
        p.0 * self.config.size + p.1
    }

    fn shift(&self, p: (usize, usize), m: usize) -> Option<(usize, usize)> {
        let (dr, dc) = MOVES[m];
        let r = p.0 as isize + dr;
        let c = p.1 as isize + dc;
        let n = self.config.size as isize;
        (r >= 0 && r < n && c >= 0 && c < n).then_some((r as usize, c as usize))
    }

    fn observe(&self, i: usize) -> Vec<f32> {
        let c = &self.config;
        let r = c.view_radius as isize;
        let (pr, pc) = (self.agents[i].0 as isize, self.agents[i].1 as isize);
        let mut o = Vec::with_capacity(self.spec.obs_dim);
        for dr in -r..=r {
            for dc in -r..=r {
                let (qr, qc) = (pr + dr, pc + dc);
                let n = c.size as isize;
                if qr < 0 || qr >= n || qc < 0 || qc >= n {
                    o.extend_from_slice(&[1.0, 0.0, 0.0]);
                    continue;
                }
                let q = (qr as usize, qc as usize);
                let mate = self.agents.iter().enumerate().any(|(j, &a)| j != i && a == q);
                o.push(0.0);
                o.push(f32::from(u8::from(mate)));
                o.push(f32::from(u8::from(self.targets.contains(&q))));
            }
        }
        one_hot(&mut o, self.agents[i].0, c.size);
        one_hot(&mut o, self.agents[i].1, c.size);
        o
    }

    fn available(&self, i: usize) -> Vec<bool> {
        (0..MOVES.len()).map(|m| self.shift(self.agents[i], m).is_some()).collect()
    }

    fn state(&self) -> Vec<f32> {
        let cells = self.config.size * self.config.size;
        let mut s = Vec::with_capacity(self.spec.state_dim);
        for &p in self.agents.iter().chain(&self.targets) {
            one_hot(&mut s, self.cell(p), cells);
        }
        s.push(self.t as f32 / self.config.episode_limit as f32);
        s
    }

    fn covered(&self) -> bool {
        self.targets.iter().all(|t| self.agents.contains(t))
    }

    fn result(&self, reward: f32, truncated: bool, success: bool) -> StepResult {
        StepResult {
            obs: (0..self.config.n_agents).map(|i| self.observe(i)).collect(),
            state: self.state(),
            avail: (0..self.config.n_agents).map(|i| self.available(i)).collect(),
            reward,
            terminated: self.done,
            truncated,
            success,
        }
    }
}

impl Environment for SpreadTag {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let size = self.config.size;
        let cells = size * size;
        // Targets on distinct cells, agents anywhere not already covering every target.
        loop {
            let picks = sample(&mut self.rng, cells, self.config.n_targets);
            self.targets = picks.iter().map(|k| (k / size, k % size)).collect();
            for a in self.agents.iter_mut() {
                let k = self.rng.random_range(0..cells);
                *a = (k / size, k % size);
            }
            if !self.covered() {
                break;
            }
        }
        self.t = 0;
        self.done = false;
        self.result(0.0, false, false)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let avail: Vec<_> = (0..self.config.n_agents).map(|i| self.available(i)).collect();
        check_actions(&self.spec, &avail, actions, self.done)?;
        self.t += 1;
        for (i, &a) in actions.iter().enumerate() {
            self.agents[i] = self.shift(self.agents[i], a).expect("checked available");
        }
        if self.covered() {
            self.done = true;
            return Ok(self.result(self.config.success_reward, false, true));
        }
        let truncated = self.t >= self.config.episode_limit;
        self.done = truncated;
        Ok(self.result(-self.config.step_cost, truncated, false))
    }
}
