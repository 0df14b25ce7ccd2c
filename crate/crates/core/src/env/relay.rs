//! "relay": a one-row corridor with a beacon in the middle and a switch bank
//! at each end.
//!
//! Each episode draws a secret code per bank, `(c_left, c_right)`, each in
//! `0..n_codes`. The pair is shown only to agents within `view_radius` of the
//! beacon. Pressing the bank's own switch arms that bank for `latch_steps`
//! steps (the press step included). The team succeeds as soon as both banks
//! are armed; with `latch_steps == 1` the two presses must land in the same
//! step. Any press of a wrong switch ends the episode as a failure.
//!
//! Rewards: the success step pays exactly `success_reward`, a failure step
//! pays 0, every other step costs `step_cost`. The first arming of each bank
//! that does not finish the task also pays `arm_reward`.
//!
//! With `lookout` set, agent 0 is posted at the beacon for the whole episode
//! (its only action is no-op), so it always sees the codes. Movers start on
//! alternating sides of the beacon, one cell out (on it when `view_radius` is
//! 0), and must carry the codes to the banks: either in their own memory or by
//! reading them from the lookout.
//!
//! Actions: `0` no-op, `1` left, `2` right, `3 + k` press switch `k` (only at
//! a bank). Observation per agent:
//!
//! ```text
//! for each cell in [pos - r, pos + r]: [out_of_bounds, teammate, left_bank, right_bank, beacon]
//! one_hot(c_left), one_hot(c_right) if the beacon is in view, zeros otherwise
//! one_hot(pos)
//! ```
//!
//! State: `one_hot(pos_i)` for every agent, both code one-hots, `t / episode_limit`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, one_hot, DecPomdpSpec, Environment, StepResult};
use crate::error::{Error, Result};

pub const NOOP: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const PRESS: usize = 3;

const CELL_FEATURES: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct RelayConfig {
    pub width: usize,
    pub view_radius: usize,
    pub n_agents: usize,
    pub n_codes: usize,
    pub lookout: bool,
    /// Movers start anywhere within view of the beacon instead of on it.
    pub random_start: bool,
    pub episode_limit: usize,
    pub latch_steps: usize,
    pub step_cost: f32,
    pub arm_reward: f32,
    pub success_reward: f32,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            width: 9,
            view_radius: 1,
            n_agents: 3,
            n_codes: 3,
            lookout: true,
            random_start: false,
            episode_limit: 8,
            latch_steps: 3,
            step_cost: 0.01,
            arm_reward: 1.0,
            success_reward: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Relay {
    config: RelayConfig,
    spec: DecPomdpSpec,
    rng: ChaCha8Rng,
    pos: Vec<usize>,
    codes: [usize; 2],
    /// Steps each bank stays armed for (0 = not armed).
    armed: [usize; 2],
    paid: [bool; 2],
    t: usize,
    done: bool,
}

impl Relay {
    pub fn new(config: RelayConfig) -> Result<Self> {
        let c = &config;
        let bad = |key: &str, reason: String| Err(Error::config(format!("env.relay.{key}"), reason));
        if c.width < 5 || c.width % 2 == 0 {
            return bad("width", format!("must be odd and >= 5, got {}", c.width));
        }
        let half = c.width / 2;
        if c.view_radius >= half {
            return bad(
                "view_radius",
                format!("must be < {half} so the banks are out of the beacon's view"),
            );
        }
        let movers = c.n_agents.saturating_sub(usize::from(c.lookout));
        if movers < 2 {
            return bad("n_agents", format!("need at least two movers, got {movers}"));
        }
        if c.n_codes < 2 {
            return bad("n_codes", format!("must be >= 2, got {}", c.n_codes));
        }
        if c.episode_limit < half + 1 {
            return bad(
                "episode_limit",
                format!("{} steps cannot reach a bank ({half} moves) and press", c.episode_limit),
            );
        }
        if c.latch_steps == 0 {
            return bad("latch_steps", "must be >= 1".into());
        }
        if !(c.step_cost >= 0.0) || !(c.arm_reward >= 0.0) || !(c.success_reward > 0.0) {
            return bad(
                "success_reward",
                "need step_cost >= 0, arm_reward >= 0 and success_reward > 0".into(),
            );
        }
        let obs_dim = (2 * c.view_radius + 1) * CELL_FEATURES + 2 * c.n_codes + c.width;
        let spec = DecPomdpSpec {
            n_agents: c.n_agents,
            obs_dim,
            state_dim: c.n_agents * c.width + 2 * c.n_codes + 1,
            n_actions: PRESS + c.n_codes,
            episode_limit: c.episode_limit,
            return_bounds: (
                -c.step_cost * c.episode_limit as f32,
                c.success_reward + 2.0 * c.arm_reward,
            ),
        };
        Ok(Relay {
            pos: vec![half; c.n_agents],
            config,
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            codes: [0; 2],
            armed: [0; 2],
            paid: [false; 2],
            t: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &RelayConfig {
        &self.config
    }

    pub fn center(&self) -> usize {
        self.config.width / 2
    }

    pub fn positions(&self) -> &[usize] {
        &self.pos
    }

    /// `[left, right]` switch codes of the current episode.
    pub fn codes(&self) -> [usize; 2] {
        self.codes
    }

    pub fn is_lookout(&self, agent: usize) -> bool {
        self.config.lookout && agent == 0
    }

    fn beacon_in_view(&self, p: usize) -> bool {
        p.abs_diff(self.center()) <= self.config.view_radius
    }

    fn observe(&self, i: usize) -> Vec<f32> {
        let c = &self.config;
        let p = self.pos[i] as isize;
        let r = c.view_radius as isize;
        let mut o = Vec::with_capacity(self.spec.obs_dim);
        for d in -r..=r {
            let q = p + d;
            if q < 0 || q >= c.width as isize {
                o.extend_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]);
                continue;
            }
            let q = q as usize;
            let mate = (0..c.n_agents).any(|j| j != i && self.pos[j] == q);
            o.push(0.0);
            o.push(f32::from(u8::from(mate)));
            o.push(f32::from(u8::from(q == 0)));
            o.push(f32::from(u8::from(q == c.width - 1)));
            o.push(f32::from(u8::from(q == self.center())));
        }
        if self.beacon_in_view(self.pos[i]) {
            one_hot(&mut o, self.codes[0], c.n_codes);
            one_hot(&mut o, self.codes[1], c.n_codes);
        } else {
            o.resize(o.len() + 2 * c.n_codes, 0.0);
        }
        one_hot(&mut o, self.pos[i], c.width);
        o
    }

    fn available(&self, i: usize) -> Vec<bool> {
        let c = &self.config;
        let mut a = vec![false; self.spec.n_actions];
        a[NOOP] = true;
        if self.is_lookout(i) {
            return a;
        }
        let p = self.pos[i];
        a[LEFT] = p > 0;
        a[RIGHT] = p < c.width - 1;
        if p == 0 || p == c.width - 1 {
            a[PRESS..].iter_mut().for_each(|x| *x = true);
        }
        a
    }

    fn state(&self) -> Vec<f32> {
        let c = &self.config;
        let mut s = Vec::with_capacity(self.spec.state_dim);
        for &p in &self.pos {
            one_hot(&mut s, p, c.width);
        }
        one_hot(&mut s, self.codes[0], c.n_codes);
        one_hot(&mut s, self.codes[1], c.n_codes);
        s.push(self.t as f32 / c.episode_limit as f32);
        s
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

impl Environment for Relay {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.config.n_codes;
        self.codes = [self.rng.random_range(0..k), self.rng.random_range(0..k)];
        let center = self.center();
        let r = self.config.view_radius;
        let step = r.min(1);
        let mut mover = 0;
        for i in 0..self.config.n_agents {
            self.pos[i] = if self.is_lookout(i) {
                center
            } else if self.config.random_start {
                self.rng.random_range(center - r..=center + r)
            } else {
                mover += 1;
                if mover % 2 == 1 {
                    center - step
                } else {
                    center + step
                }
            };
        }
        self.armed = [0; 2];
        self.paid = [false; 2];
        self.t = 0;
        self.done = false;
        self.result(0.0, false, false)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let avail: Vec<_> = (0..self.config.n_agents).map(|i| self.available(i)).collect();
        check_actions(&self.spec, &avail, actions, self.done)?;
        let c = self.config.clone();
        self.t += 1;
        let mut wrong = false;
        let mut reward = -c.step_cost;
        self.armed = self.armed.map(|a| a.saturating_sub(1));
        for (i, &a) in actions.iter().enumerate() {
            if a < PRESS {
                continue;
            }
            let bank = usize::from(self.pos[i] != 0);
            if a - PRESS != self.codes[bank] {
                wrong = true;
                continue;
            }
            self.armed[bank] = c.latch_steps;
            if !self.paid[bank] {
                self.paid[bank] = true;
                reward += c.arm_reward;
            }
        }
        if wrong {
            self.done = true;
            return Ok(self.result(0.0, false, false));
        }
        if self.armed.iter().all(|&a| a > 0) {
            self.done = true;
            return Ok(self.result(c.success_reward, false, true));
        }
        for (i, &a) in actions.iter().enumerate() {
            match a {
                LEFT => self.pos[i] -= 1,
                RIGHT => self.pos[i] += 1,
                _ => {}
            }
        }
        let truncated = self.t >= c.episode_limit;
        self.done = truncated;
        Ok(self.result(reward, truncated, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Relay {
        Relay::new(RelayConfig::default()).unwrap()
    }

    /// Sends mover 1 to the left bank and mover 2 to the right one.
    fn walk_to_banks(e: &mut Relay) {
        while e.positions()[1] > 0 {
            e.step(&[NOOP, LEFT, RIGHT]).unwrap();
        }
        assert_eq!(e.positions()[2], e.config().width - 1);
    }

    #[test]
    fn noop_only_advances_time() {
        let mut e = env();
        let s0 = e.reset(3);
        let s1 = e.step(&[NOOP; 3]).unwrap();
        assert_eq!(s1.reward, -0.01);
        assert_eq!(s0.obs, s1.obs);
        assert_eq!(s0.state[..s0.state.len() - 1], s1.state[..s1.state.len() - 1]);
        assert!(s1.state.last() > s0.state.last());
    }

    #[test]
    fn scripted_paired_press_succeeds() {
        let mut e = env();
        e.reset(11);
        let [l, r] = e.codes();
        walk_to_banks(&mut e);
        let r = e.step(&[NOOP, PRESS + l, PRESS + r]).unwrap();
        assert!(r.success && r.terminated);
        assert_eq!(r.reward, 10.0);
    }

    #[test]
    fn wrong_press_fails() {
        let mut e = env();
        e.reset(11);
        let wrong = (e.codes()[0] + 1) % e.config().n_codes;
        walk_to_banks(&mut e);
        let r = e.step(&[NOOP, PRESS + wrong, NOOP]).unwrap();
        assert!(r.terminated && !r.success && !r.truncated);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn horizon_terminates() {
        let mut e = env();
        e.reset(0);
        let mut last = None;
        for _ in 0..e.config().episode_limit {
            last = Some(e.step(&[NOOP; 3]).unwrap());
        }
        let last = last.unwrap();
        assert!(last.terminated && last.truncated && !last.success);
        assert!(matches!(e.step(&[NOOP; 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn unavailable_action_is_contract_error() {
        let mut e = env();
        e.reset(0);
        assert!(matches!(e.step(&[LEFT, NOOP, NOOP]), Err(Error::Contract(_))));
        assert!(matches!(e.step(&[NOOP, PRESS, NOOP]), Err(Error::Contract(_))));
    }

    #[test]
    fn latched_presses_may_arrive_apart() {
        let mut e = Relay::new(RelayConfig {
            latch_steps: 3,
            ..RelayConfig::default()
        })
        .unwrap();
        e.reset(2);
        let [l, r] = e.codes();
        walk_to_banks(&mut e);
        let first = e.step(&[NOOP, PRESS + l, NOOP]).unwrap();
        assert!(!first.terminated);
        assert_eq!(first.reward, 1.0 - 0.01);
        assert!(!e.step(&[NOOP, NOOP, NOOP]).unwrap().terminated);
        assert!(e.step(&[NOOP, NOOP, PRESS + r]).unwrap().success);

        e.reset(2);
        walk_to_banks(&mut e);
        e.step(&[NOOP, PRESS + l, NOOP]).unwrap();
        e.step(&[NOOP, NOOP, NOOP]).unwrap();
        e.step(&[NOOP, NOOP, NOOP]).unwrap();
        let late = e.step(&[NOOP, NOOP, PRESS + r]).unwrap();
        assert!(!late.terminated);
        assert_eq!(late.reward, 1.0 - 0.01);
        assert_eq!(e.step(&[NOOP, PRESS + l, NOOP]).unwrap().reward, 10.0);
    }

    #[test]
    fn unsolvable_layouts_fail_at_construction() {
        let cfg = RelayConfig {
            episode_limit: 3,
            ..RelayConfig::default()
        };
        assert!(Relay::new(cfg).is_err());
        let cfg = RelayConfig {
            view_radius: 5,
            ..RelayConfig::default()
        };
        assert!(Relay::new(cfg).is_err());
    }
}
