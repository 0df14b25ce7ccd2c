//! Shared per-agent network: observation-action encoder (MLP + GRU), the
//! communication module (attention over teammates), the reconstruction
//! module (own hidden state only), the mixed information and the Q head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Attention, AttentionSpec, GruCell, GruCellSpec, Mlp, MlpSpec};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// Value used for unavailable actions when taking an argmax.
pub const UNAVAILABLE_Q: f32 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentNetConfig {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden_dim: usize,
    pub append_agent_id: bool,
    /// `None` disables both the communication and the reconstruction module.
    pub cam: Option<CamConfig>,
    pub trm_hidden: usize,
    pub q_hidden: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CamConfig {
    pub att_dim: usize,
    pub n_heads: usize,
    pub project_values: bool,
}

impl AgentNetConfig {
    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.n_actions + if self.append_agent_id { self.n_agents } else { 0 }
    }

    pub fn attention_spec(&self) -> Option<AttentionSpec> {
        self.cam.map(|c| AttentionSpec {
            hidden_dim: self.hidden_dim,
            att_dim: c.att_dim,
            n_heads: c.n_heads,
            project_values: c.project_values,
        })
    }

    /// Width of `v`, `v_hat` and `v_bar` (0 when communication is off).
    pub fn info_dim(&self) -> usize {
        self.attention_spec().map_or(0, |s| s.out_dim())
    }
}

#[derive(Clone, Debug)]
pub struct AgentNetwork {
    pub config: AgentNetConfig,
    pub encoder: Mlp,
    pub gru: GruCell,
    pub cam: Option<Attention>,
    pub trm: Option<Mlp>,
    pub q_head: Mlp,
}

/// The information triple of one forward step, `[rows, info_dim]` each.
#[derive(Clone, Copy, Debug)]
pub struct InfoVectors {
    pub v: Option<Var>,
    pub v_hat: Var,
    pub v_bar: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub h: Var,
    pub info: Option<InfoVectors>,
    pub q: Var,
}

/// Per-agent recurrent state during a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub h: Tensor,
    pub last_action: Option<usize>,
}

impl AgentNetwork {
    pub fn new<R: Rng>(store: &mut ParamStore, config: AgentNetConfig, rng: &mut R) -> Result<Self> {
        let h = config.hidden_dim;
        let encoder = Mlp::new(
            store,
            "agent.encoder.mlp",
            &MlpSpec {
                layer_sizes: vec![config.input_dim(), h],
                activation: Activation::Relu,
            },
            rng,
        )?;
        let gru = GruCell::new(
            store,
            "agent.encoder.gru",
            GruCellSpec {
                input_dim: h,
                hidden_dim: h,
            },
            rng,
        )?;
        let (cam, trm) = match config.attention_spec() {
            Some(spec) => {
                let cam = Attention::new(store, "agent.cam", spec, rng)?;
                let trm = Mlp::new(
                    store,
                    "agent.trm",
                    &MlpSpec {
                        layer_sizes: vec![h, config.trm_hidden, spec.out_dim()],
                        activation: Activation::Relu,
                    },
                    rng,
                )?;
                (Some(cam), Some(trm))
            }
            None => (None, None),
        };
        let q_head = Mlp::new(
            store,
            "agent.q",
            &MlpSpec {
                layer_sizes: vec![h + config.info_dim(), config.q_hidden, config.n_actions],
                activation: Activation::Relu,
            },
            rng,
        )?;
        Ok(AgentNetwork {
            config,
            encoder,
            gru,
            cam,
            trm,
            q_head,
        })
    }

    pub fn has_cam(&self) -> bool {
        self.cam.is_some()
    }

    pub fn initial_states(&self) -> Vec<AgentState> {
        (0..self.config.n_agents)
            .map(|_| AgentState {
                h: Tensor::zeros(vec![self.config.hidden_dim]),
                last_action: None,
            })
            .collect()
    }

    /// One input row: `obs | one_hot(last_action) | one_hot(agent_id)`.
    /// A missing last action (episode start) encodes as all zeros.
    pub fn input_row(&self, obs: &[f32], last_action: Option<usize>, agent: usize) -> Result<Vec<f32>> {
        let c = &self.config;
        if obs.len() != c.obs_dim {
            return Err(Error::dim("agent input", &[obs.len()], &[c.obs_dim]));
        }
        let mut row = Vec::with_capacity(c.input_dim());
        row.extend_from_slice(obs);
        let start = row.len();
        row.resize(start + c.n_actions, 0.0);
        if let Some(a) = last_action {
            if a >= c.n_actions {
                return Err(Error::Contract(format!("action {a} out of range")));
            }
            row[start + a] = 1.0;
        }
        if c.append_agent_id {
            let start = row.len();
            row.resize(start + c.n_agents, 0.0);
            row[start + agent] = 1.0;
        }
        Ok(row)
    }

    /// `h = gru(relu(mlp(input)), h_prev)`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, input: Var, h_prev: Var) -> Result<Var> {
        let e = self.encoder.forward(g, store, input)?;
        let e = g.relu(e);
        self.gru.step(g, store, e, h_prev)
    }

    /// Reconstructed information from each row's own hidden state.
    pub fn reconstruct(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let trm = self
            .trm
            .as_ref()
            .ok_or(Error::Unsupported("reconstruct", "no communication module".into()))?;
        trm.forward(g, store, h)
    }

    /// True attention information; rows are `[groups * n_agents]`.
    pub fn communicate(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let cam = self
            .cam
            .as_ref()
            .ok_or(Error::Unsupported("communicate", "no communication module".into()))?;
        cam.forward(g, store, h, self.config.n_agents)
    }

    pub fn q_values(&self, g: &mut Graph, store: &ParamStore, h: Var, v_bar: Option<Var>) -> Result<Var> {
        let input = match v_bar {
            Some(v) => g.concat_cols(&[h, v])?,
            None => h,
        };
        self.q_head.forward(g, store, input)
    }

    /// Full forward step for `[groups * n_agents]` rows.
    ///
    /// With `alpha == 1` and `need_v == false` the communication module is
    /// skipped entirely, so no row reads another agent's state.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: Var,
        h_prev: Var,
        alpha: f32,
        need_v: bool,
    ) -> Result<StepOutput> {
        let h = self.encode(g, store, input, h_prev)?;
        let info = if self.has_cam() {
            let v_hat = self.reconstruct(g, store, h)?;
            let v = if need_v || alpha < 1.0 {
                Some(self.communicate(g, store, h)?)
            } else {
                None
            };
            let v_bar = match v {
                Some(v) => mix_information(g, v, v_hat, alpha)?,
                None => v_hat,
            };
            Some(InfoVectors { v, v_hat, v_bar })
        } else {
            None
        };
        let q = self.q_values(g, store, h, info.map(|i| i.v_bar))?;
        Ok(StepOutput { h, info, q })
    }

    /// One decentralised-execution step for a single group of agents.
    /// Returns per-agent Q rows and updates the recurrent states in place.
    pub fn act_step(
        &self,
        store: &ParamStore,
        obs: &[Vec<f32>],
        states: &mut [AgentState],
        alpha: f32,
    ) -> Result<Vec<Vec<f32>>> {
        let n = self.config.n_agents;
        if obs.len() != n || states.len() != n {
            return Err(Error::dim("act_step", &[obs.len()], &[n]));
        }
        let mut rows = Vec::with_capacity(n);
        let mut h_rows = Vec::with_capacity(n);
        for (i, (o, s)) in obs.iter().zip(states.iter()).enumerate() {
            rows.push(self.input_row(o, s.last_action, i)?);
            h_rows.push(s.h.data().to_vec());
        }
        let mut g = Graph::new();
        let input = g.constant(Tensor::from_rows(&rows)?);
        let h_prev = g.constant(Tensor::from_rows(&h_rows)?);
        let out = self.step(&mut g, store, input, h_prev, alpha, false)?;
        let h = g.value(out.h);
        let q = g.value(out.q);
        for (i, s) in states.iter_mut().enumerate() {
            s.h = Tensor::new(vec![self.config.hidden_dim], h.row(i).to_vec())?;
        }
        Ok((0..n).map(|i| q.row(i).to_vec()).collect())
    }
}

/// `v_bar = alpha * v_hat + (1 - alpha) * v`; exact at both endpoints and
/// differentiable in both branches.
pub fn mix_information(g: &mut Graph, v: Var, v_hat: Var, alpha: f32) -> Result<Var> {
    g.lerp(v, v_hat, alpha)
}

/// Q values of one agent together with its availability mask.
#[derive(Clone, Debug, PartialEq)]
pub struct QOutput {
    pub q: Vec<f32>,
    pub avail: Vec<bool>,
}

impl QOutput {
    pub fn new(q: Vec<f32>, avail: Vec<bool>) -> Result<Self> {
        if q.len() != avail.len() {
            return Err(Error::dim("q_output", &[q.len()], &[avail.len()]));
        }
        Ok(QOutput { q, avail })
    }

    /// Q values with unavailable entries replaced by [`UNAVAILABLE_Q`].
    pub fn masked(&self) -> Vec<f32> {
        self.q
            .iter()
            .zip(&self.avail)
            .map(|(&q, &ok)| if ok { q } else { UNAVAILABLE_Q })
            .collect()
    }

    /// Argmax over available actions; ties go to the lowest index.
    pub fn greedy(&self) -> Result<usize> {
        greedy_action(&self.q, &self.avail)
    }
}

pub fn greedy_action(q: &[f32], avail: &[bool]) -> Result<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (a, (&v, &ok)) in q.iter().zip(avail).enumerate() {
        if ok && best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| Error::Contract("no available action".into()))
}

/// Epsilon-greedy over the available actions.
pub fn select_action<R: Rng>(q: &QOutput, epsilon: f32, rng: &mut R) -> Result<usize> {
    let available: Vec<usize> = (0..q.avail.len()).filter(|&a| q.avail[a]).collect();
    if available.is_empty() {
        return Err(Error::Contract("no available action".into()));
    }
    if epsilon > 0.0 && rng.random::<f32>() < epsilon {
        return Ok(available[rng.random_range(0..available.len())]);
    }
    q.greedy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(cam: bool) -> AgentNetConfig {
        AgentNetConfig {
            n_agents: 3,
            obs_dim: 4,
            n_actions: 5,
            hidden_dim: 8,
            append_agent_id: true,
            cam: cam.then_some(CamConfig {
                att_dim: 2,
                n_heads: 4,
                project_values: true,
            }),
            trm_hidden: 6,
            q_hidden: 7,
        }
    }

    fn net(cam: bool) -> (ParamStore, AgentNetwork) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = AgentNetwork::new(&mut store, config(cam), &mut rng).unwrap();
        (store, net)
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let (mut store, net) = net(true);
        for p in store.iter_mut() {
            p.value.fill(0.0);
        }
        let mut states = net.initial_states();
        let obs = vec![vec![1.0, -2.0, 0.5, 3.0]; 3];
        let q = net.act_step(&store, &obs, &mut states, 0.3).unwrap();
        assert!(states.iter().all(|s| s.h.data().iter().all(|&x| x == 0.0)));
        assert!(q.iter().flatten().all(|&x| x == 0.0));
        let out = QOutput::new(q[0].clone(), vec![false, true, true, true, true]).unwrap();
        assert_eq!(out.greedy().unwrap(), 1);
    }

    #[test]
    fn reconstruct_width_tracks_heads_and_att_dim() {
        for (att, expect) in [(8, 32), (32, 128)] {
            let mut c = config(true);
            c.cam = Some(CamConfig {
                att_dim: att,
                n_heads: 4,
                project_values: true,
            });
            let mut store = ParamStore::new();
            let net = AgentNetwork::new(&mut store, c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let mut g = Graph::new();
            let h = g.constant(Tensor::full(vec![3, 8], 0.2));
            let v_hat = net.reconstruct(&mut g, &store, h).unwrap();
            assert_eq!(g.shape(v_hat), &[3, expect]);
        }
    }

    #[test]
    fn mix_midpoint() {
        let mut g = Graph::new();
        let v = g.constant(Tensor::new(vec![2], vec![2.0, 0.0]).unwrap());
        let vh = g.constant(Tensor::new(vec![2], vec![0.0, 2.0]).unwrap());
        let m = mix_information(&mut g, v, vh, 0.5).unwrap();
        assert_eq!(g.value(m).data(), &[1.0, 1.0]);
        assert!(mix_information(&mut g, v, vh, -0.1).is_err());
    }

    #[test]
    fn masking_argmax_moves_to_runner_up() {
        let q = vec![0.1, 0.9, 0.5, -1.0];
        let all = QOutput::new(q.clone(), vec![true; 4]).unwrap();
        assert_eq!(all.greedy().unwrap(), 1);
        let masked = QOutput::new(q, vec![true, false, true, true]).unwrap();
        assert_eq!(masked.greedy().unwrap(), 2);
        assert_eq!(masked.masked()[1], UNAVAILABLE_Q);
    }

    #[test]
    fn no_available_action_is_contract_error() {
        let q = QOutput::new(vec![0.0, 1.0], vec![false, false]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(select_action(&q, 0.5, &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn epsilon_zero_is_greedy_and_mask_is_respected() {
        let q = QOutput::new(vec![3.0, 1.0, 2.0], vec![false, true, true]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(select_action(&q, 0.0, &mut rng).unwrap(), 2);
        }
        for eps in [0.3, 1.0] {
            for _ in 0..1000 {
                assert_ne!(select_action(&q, eps, &mut rng).unwrap(), 0);
            }
        }
    }

    #[test]
    fn reconstruction_ignores_other_agents() {
        let (store, net) = net(true);
        let base = Tensor::from_rows(&[vec![0.1; 8], vec![-0.3; 8], vec![0.7; 8]]).unwrap();
        let mut other = base.clone();
        other.data_mut()[8..].iter_mut().for_each(|x| *x = 5.0);
        let run = |h: &Tensor| {
            let mut g = Graph::new();
            let hv = g.constant(h.clone());
            let v_hat = net.reconstruct(&mut g, &store, hv).unwrap();
            g.value(v_hat).row(0).to_vec()
        };
        assert_eq!(run(&base), run(&other));
    }
}
