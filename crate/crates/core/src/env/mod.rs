//! Cooperative Dec-POMDP interface and the built-in toy environments.

mod matrix;
mod relay;
mod spread_tag;

pub use matrix::{load_payoff, parse_payoff, MatrixGame};
pub use relay::{Relay, RelayConfig};
pub use spread_tag::{SpreadTag, SpreadTagConfig};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DecPomdpSpec {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub n_actions: usize,
    pub episode_limit: usize,
    /// Inclusive bounds on the undiscounted episode return.
    pub return_bounds: (f32, f32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<Vec<f32>>,
    pub state: Vec<f32>,
    pub avail: Vec<Vec<bool>>,
    pub reward: f32,
    /// True when the episode is over for any reason, including the horizon.
    pub terminated: bool,
    /// True when the episode ended only because the horizon was reached.
    pub truncated: bool,
    pub success: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &DecPomdpSpec;
    fn reset(&mut self, seed: u64) -> StepResult;
    /// Errors with [`Error::Contract`] on an unavailable action or a step
    /// after termination.
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
}

/// Settings for every registered environment; only the selected one is used.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvSettings {
    pub relay: RelayConfig,
    pub spread_tag: SpreadTagConfig,
}

/// Builds an environment by registry name: `relay`, `spread_tag` or
/// `matrix:<payoff file>`.
pub fn make_env(name: &str, settings: &EnvSettings) -> Result<Box<dyn Environment>> {
    match name {
        "relay" => Ok(Box::new(Relay::new(settings.relay.clone())?)),
        "spread_tag" => Ok(Box::new(SpreadTag::new(settings.spread_tag.clone())?)),
        other => match other.strip_prefix("matrix:") {
            Some(path) => {
                let payoff = load_payoff(std::path::Path::new(path))?;
                Ok(Box::new(MatrixGame::new(payoff)?))
            }
            None => Err(Error::config(
                "env",
                format!("unknown environment `{other}` (expected relay, spread_tag or matrix:<file>)"),
            )),
        },
    }
}

pub(crate) fn check_actions(spec: &DecPomdpSpec, avail: &[Vec<bool>], actions: &[usize], done: bool) -> Result<()> {
    if done {
        return Err(Error::Contract("step called on a finished episode".into()));
    }
    if actions.len() != spec.n_agents {
        return Err(Error::Contract(format!(
            "expected {} actions, got {}",
            spec.n_agents,
            actions.len()
        )));
    }
    for (i, &a) in actions.iter().enumerate() {
        if !avail[i].get(a).copied().unwrap_or(false) {
            return Err(Error::Contract(format!("agent {i}: action {a} is not available")));
        }
    }
    Ok(())
}

pub(crate) fn one_hot(out: &mut Vec<f32>, index: usize, size: usize) {
    let start = out.len();
    out.resize(start + size, 0.0);
    out[start + index] = 1.0;
}
