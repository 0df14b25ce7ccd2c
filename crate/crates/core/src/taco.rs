//! Mixing-ratio schedule and the composite loss `L_TD + beta * L_Rec`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// `alpha = min(alpha_init + t * delta_alpha, alpha_max)`.
    Linear,
    /// `alpha_init` for the whole of training, `alpha_max` at evaluation.
    Leap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Training,
    Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSchedule {
    pub alpha_init: f64,
    pub alpha_max: f64,
    pub delta_alpha: f64,
    pub mode: AlphaMode,
}

impl AlphaSchedule {
    pub fn new(alpha_init: f64, alpha_max: f64, delta_alpha: f64, mode: AlphaMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_init) || !(alpha_init..=1.0).contains(&alpha_max) {
            return Err(Error::config(
                "alpha",
                format!("need 0 <= alpha_init ({alpha_init}) <= alpha_max ({alpha_max}) <= 1"),
            ));
        }
        if delta_alpha.is_nan() || delta_alpha < 0.0 {
            return Err(Error::config("alpha.delta", format!("must be >= 0, got {delta_alpha}")));
        }
        Ok(AlphaSchedule {
            alpha_init,
            alpha_max,
            delta_alpha,
            mode,
        })
    }

    /// Linear ramp from 0 to 1 over `t_max` environment steps. With
    /// `t_max == 0` the schedule starts at 1.
    pub fn linear(t_max: u64) -> Self {
        let delta_alpha = if t_max == 0 { f64::INFINITY } else { 1.0 / t_max as f64 };
        AlphaSchedule {
            alpha_init: 0.0,
            alpha_max: 1.0,
            delta_alpha,
            mode: AlphaMode::Linear,
        }
    }

    pub fn leap() -> Self {
        AlphaSchedule {
            alpha_init: 0.0,
            alpha_max: 1.0,
            delta_alpha: 0.0,
            mode: AlphaMode::Leap,
        }
    }

    /// Always `alpha`, in both phases.
    pub fn pinned(alpha: f64) -> Self {
        AlphaSchedule {
            alpha_init: alpha,
            alpha_max: alpha,
            delta_alpha: 0.0,
            mode: AlphaMode::Linear,
        }
    }

    pub fn alpha_at(&self, t: u64, phase: Phase) -> f32 {
        let a = match (self.mode, phase) {
            (AlphaMode::Leap, Phase::Training) => self.alpha_init,
            (AlphaMode::Leap, Phase::Evaluation) => self.alpha_max,
            (AlphaMode::Linear, _) => {
                if t == 0 {
                    self.alpha_init
                } else {
                    (self.alpha_init + t as f64 * self.delta_alpha).min(self.alpha_max)
                }
            }
        };
        a as f32
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub beta: f32,
    pub gamma: f32,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::config("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", format!("must be in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopGradient {
    /// The reconstruction loss trains both the attention and the TRM.
    BothLive,
    /// `v` is a constant target; only the TRM sees the reconstruction loss.
    DetachTarget,
}

pub fn stop_gradient_policy(g: &mut Graph, v: Var, v_hat: Var, mode: StopGradient) -> (Var, Var) {
    match mode {
        StopGradient::BothLive => (v, v_hat),
        StopGradient::DetachTarget => (g.detach(v), v_hat),
    }
}

/// Mean over rows and dims of `(v_hat - v)^2`. Rows are the filled
/// (episode, step, agent) triples, each step contributing all agents, so this
/// equals the mean over steps of the per-agent-averaged MSE.
pub fn reconstruction_loss(g: &mut Graph, v: Var, v_hat: Var) -> Result<Var> {
    let d = g.sub(v_hat, v)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// `y = r` on terminal steps, `r + gamma * next` otherwise.
pub fn td_targets(rewards: &[f32], terminated: &[bool], next_q_tot: &[f32], gamma: f32) -> Result<Vec<f32>> {
    if rewards.len() != terminated.len() || rewards.len() != next_q_tot.len() {
        return Err(Error::dim("td_targets", &[rewards.len()], &[next_q_tot.len()]));
    }
    Ok(rewards
        .iter()
        .zip(terminated)
        .zip(next_q_tot)
        .map(|((&r, &done), &next)| if done { r } else { r + gamma * next })
        .collect())
}

/// Mean of `(q_tot - y)^2` over filled steps; `y` is treated as a constant.
pub fn td_loss(g: &mut Graph, q_tot: Var, targets: &[f32]) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let y = g.constant(Tensor::new(g.shape(q_tot).to_vec(), targets.to_vec())?);
    let d = g.sub(q_tot, y)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

pub fn total_loss(g: &mut Graph, td: Var, rec: Var, beta: f32) -> Result<Var> {
    let weighted = g.scale(rec, beta);
    g.add(td, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_endpoints() {
        for t_max in [1u64, 3, 7, 49, 1000, 200_000, 1_000_003] {
            let s = AlphaSchedule::linear(t_max);
            assert_eq!(s.alpha_at(0, Phase::Training), 0.0);
            assert_eq!(s.alpha_at(t_max, Phase::Training), 1.0, "t_max={t_max}");
            assert_eq!(s.alpha_at(t_max * 3, Phase::Training), 1.0);
        }
        let s = AlphaSchedule::linear(1000);
        assert!((s.alpha_at(500, Phase::Training) - 0.5).abs() < 1e-7);
        assert_eq!(AlphaSchedule::linear(0).alpha_at(0, Phase::Training), 0.0);
        assert_eq!(AlphaSchedule::linear(0).alpha_at(1, Phase::Training), 1.0);
    }

    #[test]
    fn leap_switches_on_phase() {
        let s = AlphaSchedule::leap();
        assert_eq!(s.alpha_at(10_000, Phase::Training), 0.0);
        assert_eq!(s.alpha_at(0, Phase::Evaluation), 1.0);
    }

    #[test]
    fn schedule_bounds_are_validated() {
        assert!(AlphaSchedule::new(0.5, 0.2, 0.1, AlphaMode::Linear).is_err());
        assert!(AlphaSchedule::new(0.0, 1.5, 0.1, AlphaMode::Linear).is_err());
        assert!(AlphaSchedule::new(0.0, 1.0, -0.1, AlphaMode::Linear).is_err());
    }

    #[test]
    fn rec_loss_hand_case() {
        let mut g = Graph::new();
        let v = g.variable(Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap());
        let vh = g.variable(Tensor::zeros(vec![2, 2]));
        let l = reconstruction_loss(&mut g, v, vh).unwrap();
        assert_eq!(g.value(l).item(), 0.5);
    }

    #[test]
    fn total_combines_linearly() {
        let mut g = Graph::new();
        let td = g.constant(Tensor::scalar(1.0));
        let rec = g.constant(Tensor::scalar(0.5));
        let t = total_loss(&mut g, td, rec, 3.0).unwrap();
        assert_eq!(g.value(t).item(), 2.5);
        let t0 = total_loss(&mut g, td, rec, 0.0).unwrap();
        assert_eq!(g.value(t0).item(), 1.0);
    }

    #[test]
    fn terminal_target_is_reward() {
        let y = td_targets(&[1.0, 2.0], &[true, false], &[100.0, 10.0], 0.5).unwrap();
        assert_eq!(y, vec![1.0, 7.0]);
    }

    #[test]
    fn detach_blocks_target_gradient() {
        let mut g = Graph::new();
        let v = g.variable(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let vh = g.variable(Tensor::new(vec![1, 2], vec![0.0, 0.5]).unwrap());
        let (dv, dvh) = stop_gradient_policy(&mut g, v, vh, StopGradient::DetachTarget);
        let l = reconstruction_loss(&mut g, dv, dvh).unwrap();
        let grads = g.gradients(l).unwrap();
        assert!(grads.get(v).is_none_or(|d| d.iter().all(|&x| x == 0.0)));
        assert_eq!(grads.get(vh).unwrap(), &[-1.0, -1.5]);
    }
}
