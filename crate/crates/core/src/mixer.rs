//! Joint-value factorizations and an exhaustive IGM check.

use rand::Rng;

use crate::agent::greedy_action;
use crate::error::{Error, Result};
use crate::nn::{Activation, Linear, Mlp, MlpSpec};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// Largest instance `verify_igm` will enumerate.
pub const IGM_MAX_AGENTS: usize = 4;
pub const IGM_MAX_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixActivation {
    Elu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QmixSpec {
    pub n_agents: usize,
    pub state_dim: usize,
    pub embed_dim: usize,
    pub activation: MixActivation,
}

/// QMIX mixing network. Every mixing weight is produced from the state by a
/// hypernetwork and passed through `abs`:
///
/// ```text
/// hidden = act(q |W1(s)| + b1(s))      W1: s -> n*E, b1: s -> E
/// Q_tot  = hidden |W2(s)| + b2(s)      W2: s -> E,   b2: s -> E -> 1
/// ```
#[derive(Clone, Debug)]
pub struct Qmix {
    pub spec: QmixSpec,
    pub hyper_w1: Linear,
    pub hyper_b1: Linear,
    pub hyper_w2: Linear,
    pub hyper_b2: Mlp,
}

impl Qmix {
    pub fn new<R: Rng>(store: &mut ParamStore, spec: QmixSpec, rng: &mut R) -> Result<Self> {
        let (s, e) = (spec.state_dim, spec.embed_dim);
        if spec.n_agents == 0 || s == 0 || e == 0 {
            return Err(Error::config("mixer", format!("bad qmix dims {spec:?}")));
        }
        Ok(Qmix {
            spec,
            hyper_w1: Linear::new(store, "mixer.hyper_w1", s, spec.n_agents * e, true, rng)?,
            hyper_b1: Linear::new(store, "mixer.hyper_b1", s, e, true, rng)?,
            hyper_w2: Linear::new(store, "mixer.hyper_w2", s, e, true, rng)?,
            hyper_b2: Mlp::new(
                store,
                "mixer.hyper_b2",
                &MlpSpec {
                    layer_sizes: vec![s, e, 1],
                    activation: Activation::Relu,
                },
                rng,
            )?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, q: Var, state: Var) -> Result<Var> {
        let (n, e) = (self.spec.n_agents, self.spec.embed_dim);
        let b = g.value(q).rows();
        if g.value(q).cols() != n {
            return Err(Error::dim("qmix q", g.shape(q), &[b, n]));
        }
        if g.value(state).cols() != self.spec.state_dim || g.value(state).rows() != b {
            return Err(Error::dim("qmix state", g.shape(state), &[b, self.spec.state_dim]));
        }
        let w1 = self.hyper_w1.forward(g, store, state)?;
        let w1 = g.abs(w1);
        let w1 = g.reshape(w1, &[b, n, e])?;
        let q3 = g.reshape(q, &[b, 1, n])?;
        let hidden = g.bmm(q3, w1, false)?;
        let hidden = g.reshape(hidden, &[b, e])?;
        let b1 = self.hyper_b1.forward(g, store, state)?;
        let hidden = g.add(hidden, b1)?;
        let hidden = match self.spec.activation {
            MixActivation::Elu => g.elu(hidden),
            MixActivation::Identity => hidden,
        };
        let w2 = self.hyper_w2.forward(g, store, state)?;
        let w2 = g.abs(w2);
        let w2 = g.reshape(w2, &[b, e, 1])?;
        let hidden = g.reshape(hidden, &[b, 1, e])?;
        let out = g.bmm(hidden, w2, false)?;
        let out = g.reshape(out, &[b, 1])?;
        let b2 = self.hyper_b2.forward(g, store, state)?;
        let out = g.add(out, b2)?;
        g.reshape(out, &[b])
    }
}

#[derive(Clone, Debug)]
pub enum Mixer {
    Vdn { n_agents: usize },
    Qmix(Qmix),
}

impl Mixer {
    pub fn n_agents(&self) -> usize {
        match self {
            Mixer::Vdn { n_agents } => *n_agents,
            Mixer::Qmix(m) => m.spec.n_agents,
        }
    }

    /// `q: [B, n]` chosen-action values, `state: [B, state_dim]` -> `[B]`.
    /// VDN ignores the state.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, q: Var, state: Var) -> Result<Var> {
        match self {
            Mixer::Vdn { n_agents } => vdn_mix(g, q, *n_agents),
            Mixer::Qmix(m) => m.forward(g, store, q, state),
        }
    }

    /// Plain evaluation without gradient bookkeeping.
    pub fn eval(&self, store: &ParamStore, q: &Tensor, state: &Tensor) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let qv = g.constant(q.clone());
        let sv = g.constant(state.clone());
        let out = self.forward(&mut g, store, qv, sv)?;
        Ok(g.value(out).data().to_vec())
    }
}

/// `Q_tot = sum_i Q_i` per row.
pub fn vdn_mix(g: &mut Graph, q: Var, n_agents: usize) -> Result<Var> {
    let b = g.value(q).rows();
    if g.value(q).cols() != n_agents {
        return Err(Error::dim("vdn q", g.shape(q), &[b, n_agents]));
    }
    let ones = g.constant(Tensor::ones(vec![n_agents, 1]));
    let q2 = g.reshape(q, &[b, n_agents])?;
    let out = g.matmul(q2, ones)?;
    g.reshape(out, &[b])
}

/// Joint actions in lexicographic order (agent 0 most significant).
fn joint_actions(n: usize, a: usize) -> Vec<Vec<usize>> {
    let total = a.pow(n as u32);
    (0..total)
        .map(|mut k| {
            let mut u = vec![0; n];
            for slot in u.iter_mut().rev() {
                *slot = k % a;
                k /= a;
            }
            u
        })
        .collect()
}

/// Exhaustive IGM check against an arbitrary joint evaluator. `q_tot` maps a
/// `[J, n]` matrix of chosen-action values to `J` joint values.
pub fn verify_igm_with<F>(agent_qs: &Tensor, q_tot: F) -> Result<bool>
where
    F: FnOnce(&Tensor) -> Result<Vec<f32>>,
{
    if agent_qs.rank() != 2 {
        return Err(Error::Rank {
            op: "verify_igm",
            shape: agent_qs.shape().to_vec(),
        });
    }
    let (n, a) = (agent_qs.rows(), agent_qs.cols());
    if n > IGM_MAX_AGENTS || a > IGM_MAX_ACTIONS {
        return Err(Error::Capacity { agents: n, actions: a });
    }
    let joints = joint_actions(n, a);
    let rows: Vec<Vec<f32>> = joints
        .iter()
        .map(|u| u.iter().enumerate().map(|(i, &ui)| agent_qs.at(i, ui)).collect())
        .collect();
    let values = q_tot(&Tensor::from_rows(&rows)?)?;
    if values.len() != joints.len() {
        return Err(Error::dim("verify_igm", &[values.len()], &[joints.len()]));
    }
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    let all = vec![true; a];
    let per_agent = (0..n)
        .map(|i| greedy_action(agent_qs.row(i), &all))
        .collect::<Result<Vec<_>>>()?;
    Ok(joints[best] == per_agent)
}

/// Exhaustive IGM check of `mixer` at a single state.
pub fn verify_igm(mixer: &Mixer, store: &ParamStore, agent_qs: &Tensor, state: &[f32]) -> Result<bool> {
    verify_igm_with(agent_qs, |q| {
        let j = q.rows();
        let mut states = Vec::with_capacity(j * state.len());
        for _ in 0..j {
            states.extend_from_slice(state);
        }
        let states = Tensor::new(vec![j, state.len()], states)?;
        mixer.eval(store, q, &states)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qmix(activation: MixActivation) -> (ParamStore, Qmix) {
        let mut store = ParamStore::new();
        let spec = QmixSpec {
            n_agents: 3,
            state_dim: 5,
            embed_dim: 4,
            activation,
        };
        let m = Qmix::new(&mut store, spec, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        (store, m)
    }

    #[test]
    fn vdn_sums() {
        let mixer = Mixer::Vdn { n_agents: 3 };
        let store = ParamStore::new();
        let q = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0; 3]]).unwrap();
        let s = Tensor::zeros(vec![2, 1]);
        assert_eq!(mixer.eval(&store, &q, &s).unwrap(), vec![6.0, 0.0]);
    }

    #[test]
    fn zero_weight_hypernets_leave_only_b2() {
        let (mut store, m) = qmix(MixActivation::Elu);
        for name in ["mixer.hyper_w1.w", "mixer.hyper_w1.b", "mixer.hyper_w2.w", "mixer.hyper_w2.b"] {
            store.value_mut(store.id(name).unwrap()).fill(0.0);
        }
        let mixer = Mixer::Qmix(m);
        let s = Tensor::new(vec![1, 5], vec![0.3, -1.0, 2.0, 0.0, 0.5]).unwrap();
        let a = mixer.eval(&store, &Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap(), &s).unwrap();
        let b = mixer.eval(&store, &Tensor::new(vec![1, 3], vec![-9.0, 0.0, 4.0]).unwrap(), &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_identity_qmix_is_vdn() {
        let (mut store, m) = qmix(MixActivation::Identity);
        for p in store.iter_mut() {
            p.value.fill(0.0);
        }
        store.value_mut(store.id("mixer.hyper_w1.b").unwrap()).fill(1.0);
        store.value_mut(store.id("mixer.hyper_w2.b").unwrap()).fill(0.25);
        let qmix = Mixer::Qmix(m);
        let vdn = Mixer::Vdn { n_agents: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let q = Tensor::new(vec![1, 3], (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let s = Tensor::new(vec![1, 5], (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let a = qmix.eval(&store, &q, &s).unwrap()[0];
            let b = vdn.eval(&store, &q, &s).unwrap()[0];
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn joint_order_is_lexicographic() {
        assert_eq!(joint_actions(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn capacity_is_enforced() {
        let mixer = Mixer::Vdn { n_agents: 5 };
        let q = Tensor::zeros(vec![5, 2]);
        let err = verify_igm(&mixer, &ParamStore::new(), &q, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Capacity { agents: 5, actions: 2 }));
    }

    #[test]
    fn vdn_distinct_maxima_satisfy_igm() {
        let mixer = Mixer::Vdn { n_agents: 2 };
        let q = Tensor::from_rows(&[vec![0.0, 3.0, 1.0], vec![2.0, 0.0, -1.0]]).unwrap();
        assert!(verify_igm(&mixer, &ParamStore::new(), &q, &[0.0]).unwrap());
    }

    #[test]
    fn identity_payoff_ties_resolve_to_zero() {
        let q = Tensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(verify_igm(&Mixer::Vdn { n_agents: 2 }, &ParamStore::new(), &q, &[0.0]).unwrap());
    }

    #[test]
    fn negated_weight_breaks_igm() {
        // Q_tot = q0 - q1: agent 1's own argmax is the joint argmin.
        let q = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let ok = verify_igm_with(&q, |j| Ok((0..j.rows()).map(|r| j.at(r, 0) - j.at(r, 1)).collect())).unwrap();
        assert!(!ok);
    }
}
