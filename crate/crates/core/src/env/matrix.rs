//! Single-step two-agent matrix game with a shared payoff.
//!
//! Payoff files are plain text: one row per line, entries separated by
//! whitespace, `#` starts a comment. Row index is agent 0's action, column
//! index agent 1's.

use std::path::Path;

use super::{check_actions, DecPomdpSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct MatrixGame {
    payoff: Tensor,
    spec: DecPomdpSpec,
    done: bool,
}

impl MatrixGame {
    pub fn new(payoff: Tensor) -> Result<Self> {
        if payoff.rank() != 2 || payoff.rows() != payoff.cols() {
            return Err(Error::config("env.matrix", format!("payoff must be square, got {:?}", payoff.shape())));
        }
        let lo = payoff.data().iter().copied().fold(f32::INFINITY, f32::min);
        let hi = payoff.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let spec = DecPomdpSpec {
            n_agents: 2,
            obs_dim: 1,
            state_dim: 1,
            n_actions: payoff.cols(),
            episode_limit: 1,
            return_bounds: (lo, hi),
        };
        Ok(MatrixGame {
            payoff,
            spec,
            done: true,
        })
    }

    pub fn payoff(&self) -> &Tensor {
        &self.payoff
    }

    /// Best joint action (lexicographically smallest on ties) and its value.
    pub fn optimum(&self) -> ((usize, usize), f32) {
        let n = self.payoff.cols();
        let mut best = ((0, 0), self.payoff.at(0, 0));
        for a in 0..n {
            for b in 0..n {
                if self.payoff.at(a, b) > best.1 {
                    best = ((a, b), self.payoff.at(a, b));
                }
            }
        }
        best
    }

    fn result(&self, reward: f32, success: bool) -> StepResult {
        StepResult {
            obs: vec![vec![1.0]; 2],
            state: vec![1.0],
            avail: vec![vec![true; self.spec.n_actions]; 2],
            reward,
            terminated: self.done,
            truncated: false,
            success,
        }
    }
}

impl Environment for MatrixGame {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.done = false;
        self.result(0.0, false)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let avail = vec![vec![true; self.spec.n_actions]; 2];
        check_actions(&self.spec, &avail, actions, self.done)?;
        self.done = true;
        let r = self.payoff.at(actions[0], actions[1]);
        Ok(self.result(r, r == self.optimum().1))
    }
}

pub fn parse_payoff(text: &str) -> Result<Tensor> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f32>()
                    .map_err(|e| Error::Format(format!("payoff line {}: `{tok}`: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("payoff file has no rows".into()));
    }
    Tensor::from_rows(&rows).map_err(|e| Error::Format(format!("payoff rows differ in length: {e}")))
}

pub fn load_payoff(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_payoff(&text)
}
