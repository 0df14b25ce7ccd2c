//! Layers: affine maps, MLP stacks, a GRU cell and bilinear multi-head
//! attention over a group of agents.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register_weight(format!("{name}.w"), in_dim, out_dim, rng)?;
        let bias = if bias {
            Some(store.register_bias(format!("{name}.b"), out_dim)?)
        } else {
            None
        };
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

/// Affine layers with `activation` between them and none after the last.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        if spec.layer_sizes.len() < 2 || spec.layer_sizes.contains(&0) {
            return Err(Error::config(name, format!("bad layer sizes {:?}", spec.layer_sizes)));
        }
        let layers = spec
            .layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.l{i}"), w[0], w[1], true, rng))
            .collect::<Result<_>>()?;
        Ok(Mlp {
            layers,
            activation: spec.activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.value(x).cols() != self.input_dim() {
            return Err(Error::dim("mlp", g.shape(x), &[self.input_dim()]));
        }
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            if i + 1 < self.layers.len() {
                h = self.activation.apply(g, h);
            }
        }
        Ok(h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruCellSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(x W_z + h U_z + b_z)
/// r  = sigmoid(x W_r + h U_r + b_r)
/// n  = tanh(x W_n + r * (h U_n) + b_n)
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub spec: GruCellSpec,
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_n: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_n: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_n: ParamId,
}

impl GruCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: GruCellSpec, rng: &mut R) -> Result<Self> {
        let GruCellSpec {
            input_dim: i,
            hidden_dim: h,
        } = spec;
        if i == 0 || h == 0 {
            return Err(Error::config(name, "GRU dims must be positive"));
        }
        Ok(GruCell {
            spec,
            w_z: store.register_weight(format!("{name}.w_z"), i, h, rng)?,
            w_r: store.register_weight(format!("{name}.w_r"), i, h, rng)?,
            w_n: store.register_weight(format!("{name}.w_n"), i, h, rng)?,
            u_z: store.register_weight(format!("{name}.u_z"), h, h, rng)?,
            u_r: store.register_weight(format!("{name}.u_r"), h, h, rng)?,
            u_n: store.register_weight(format!("{name}.u_n"), h, h, rng)?,
            b_z: store.register_bias(format!("{name}.b_z"), h)?,
            b_r: store.register_bias(format!("{name}.b_r"), h)?,
            b_n: store.register_bias(format!("{name}.b_n"), h)?,
        })
    }

    fn gate(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        h: Var,
        (w, u, b): (ParamId, ParamId, ParamId),
    ) -> Result<Var> {
        let (w, u, b) = (g.param(store, w), g.param(store, u), g.param(store, b));
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        let s = g.add_row(s, b)?;
        Ok(g.sigmoid(s))
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h_prev: Var) -> Result<Var> {
        let GruCellSpec {
            input_dim,
            hidden_dim,
        } = self.spec;
        if g.value(x).cols() != input_dim
            || g.value(h_prev).cols() != hidden_dim
            || g.value(x).rows() != g.value(h_prev).rows()
        {
            return Err(Error::dim("gru_step", g.shape(x), g.shape(h_prev)));
        }
        let z = self.gate(g, store, x, h_prev, (self.w_z, self.u_z, self.b_z))?;
        let r = self.gate(g, store, x, h_prev, (self.w_r, self.u_r, self.b_r))?;

        let (w_n, u_n, b_n) = (
            g.param(store, self.w_n),
            g.param(store, self.u_n),
            g.param(store, self.b_n),
        );
        let xw = g.matmul(x, w_n)?;
        let hu = g.matmul(h_prev, u_n)?;
        let rhu = g.mul(r, hu)?;
        let pre = g.add(xw, rhu)?;
        let pre = g.add_row(pre, b_n)?;
        let cand = g.tanh(pre);

        let one = g.constant(Tensor::scalar(1.0));
        let keep_new = g.sub(one, z)?;
        let new_part = g.mul(keep_new, cand)?;
        let old_part = g.mul(z, h_prev)?;
        g.add(new_part, old_part)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionSpec {
    pub hidden_dim: usize,
    pub att_dim: usize,
    pub n_heads: usize,
    /// Aggregate `W_v h_j` (true) or the raw hidden states `h_j` (false).
    pub project_values: bool,
}

impl AttentionSpec {
    pub fn head_dim(&self) -> usize {
        if self.project_values {
            self.att_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn out_dim(&self) -> usize {
        self.n_heads * self.head_dim()
    }
}

#[derive(Clone, Debug)]
pub struct AttentionHead {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: Option<ParamId>,
}

/// Bilinear multi-head attention across the agents of a group.
///
/// For agent `i` and head `k`, the logit towards `j` is
/// `(W_k^k h_j) . (W_q^k h_i)`; the self entry is masked before the softmax
/// and the head output is the weighted sum of `W_v^k h_j` over `j != i`.
/// Head outputs are concatenated. No `1/sqrt(d)` scaling is applied.
#[derive(Clone, Debug)]
pub struct Attention {
    pub spec: AttentionSpec,
    pub heads: Vec<AttentionHead>,
}

fn self_mask(groups: usize, n: usize) -> Vec<bool> {
    let mut mask = vec![false; groups * n * n];
    for grp in 0..groups {
        for i in 0..n {
            mask[grp * n * n + i * n + i] = true;
        }
    }
    mask
}

impl Attention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: AttentionSpec, rng: &mut R) -> Result<Self> {
        if spec.n_heads == 0 || spec.att_dim == 0 || spec.hidden_dim == 0 {
            return Err(Error::config(name, "attention dims and heads must be positive"));
        }
        let heads = (0..spec.n_heads)
            .map(|k| {
                Ok(AttentionHead {
                    w_q: store.register_weight(format!("{name}.h{k}.w_q"), spec.hidden_dim, spec.att_dim, rng)?,
                    w_k: store.register_weight(format!("{name}.h{k}.w_k"), spec.hidden_dim, spec.att_dim, rng)?,
                    w_v: if spec.project_values {
                        Some(store.register_weight(
                            format!("{name}.h{k}.w_v"),
                            spec.hidden_dim,
                            spec.att_dim,
                            rng,
                        )?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Attention { spec, heads })
    }

    fn check(&self, g: &Graph, h: Var, n_agents: usize) -> Result<usize> {
        if n_agents < 2 {
            return Err(Error::SingleAgent(n_agents));
        }
        let t = g.value(h);
        if t.rank() != 2 || t.cols() != self.spec.hidden_dim || t.rows() % n_agents != 0 {
            return Err(Error::dim("attention", t.shape(), &[n_agents, self.spec.hidden_dim]));
        }
        Ok(t.rows() / n_agents)
    }

    /// Per-head attention weights `[groups, n, n]` for hidden states laid
    /// out as `[groups * n, hidden]` (agents of a group contiguous).
    pub fn weights(&self, g: &mut Graph, store: &ParamStore, h: Var, n_agents: usize) -> Result<Vec<Var>> {
        let groups = self.check(g, h, n_agents)?;
        let mask = self_mask(groups, n_agents);
        let d = self.spec.att_dim;
        self.heads
            .iter()
            .map(|head| {
                let wq = g.param(store, head.w_q);
                let wk = g.param(store, head.w_k);
                let q = g.matmul(h, wq)?;
                let k = g.matmul(h, wk)?;
                let q = g.reshape(q, &[groups, n_agents, d])?;
                let k = g.reshape(k, &[groups, n_agents, d])?;
                let logits = g.bmm(q, k, true)?;
                g.softmax(logits, Some(&mask))
            })
            .collect()
    }

    /// Weighted sums of per-head values, concatenated: `[groups * n, out_dim]`.
    pub fn aggregate(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        weights: &[Var],
        n_agents: usize,
    ) -> Result<Var> {
        let groups = self.check(g, h, n_agents)?;
        let d = self.spec.head_dim();
        let mut outs = Vec::with_capacity(self.heads.len());
        for (head, &w) in self.heads.iter().zip(weights) {
            let values = match head.w_v {
                Some(wv) => {
                    let wv = g.param(store, wv);
                    g.matmul(h, wv)?
                }
                None => h,
            };
            let values = g.reshape(values, &[groups, n_agents, d])?;
            let out = g.bmm(w, values, false)?;
            outs.push(g.reshape(out, &[groups * n_agents, d])?);
        }
        g.concat_cols(&outs)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var, n_agents: usize) -> Result<Var> {
        let w = self.weights(g, store, h, n_agents)?;
        self.aggregate(g, store, h, &w, n_agents)
    }

    /// Attention weights of agent `i` over all agents: `[n_heads, n]`.
    pub fn weights_for_agent(&self, store: &ParamStore, h_all: &Tensor, i: usize) -> Result<Tensor> {
        let n = h_all.rows();
        if n < 2 {
            return Err(Error::SingleAgent(n));
        }
        let mut g = Graph::new();
        let h = g.constant(h_all.clone());
        let heads = self.weights(&mut g, store, h, n)?;
        let mut data = Vec::with_capacity(heads.len() * n);
        for w in heads {
            data.extend_from_slice(g.value(w).row(i));
        }
        Tensor::new(vec![self.heads.len(), n], data)
    }

    /// Aggregated information of agent `i` given explicit weights `[n_heads, n]`.
    pub fn aggregate_for_agent(
        &self,
        store: &ParamStore,
        h_all: &Tensor,
        w: &Tensor,
        i: usize,
    ) -> Result<Tensor> {
        let n = h_all.rows();
        if w.shape() != [self.heads.len(), n] || i >= n {
            return Err(Error::dim("aggregate", w.shape(), &[self.heads.len(), n]));
        }
        let mut g = Graph::new();
        let h = g.constant(h_all.clone());
        let mut outs = Vec::new();
        for (k, head) in self.heads.iter().enumerate() {
            let values = match head.w_v {
                Some(wv) => {
                    let wv = g.param(store, wv);
                    g.matmul(h, wv)?
                }
                None => h,
            };
            let row = g.constant(Tensor::new(vec![1, n], w.row(k).to_vec())?);
            outs.push(g.matmul(row, values)?);
        }
        let out = g.concat_cols(&outs)?;
        let t = g.value(out).clone();
        t.reshape(vec![self.spec.out_dim()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn zero_all(store: &mut ParamStore) {
        for p in store.iter_mut() {
            p.value.fill(0.0);
        }
    }

    #[test]
    fn zero_mlp_gives_zero() {
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            layer_sizes: vec![3, 5, 2],
            activation: Activation::Relu,
        };
        let mlp = Mlp::new(&mut store, "m", &spec, &mut rng()).unwrap();
        zero_all(&mut store);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![4, 3], 1.3));
        let y = mlp.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).shape(), &[4, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_is_affine() {
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            layer_sizes: vec![2, 2],
            activation: Activation::Tanh,
        };
        let mlp = Mlp::new(&mut store, "m", &spec, &mut rng()).unwrap();
        let b = mlp.layers[0].bias.unwrap();
        store.value_mut(b).data_mut().copy_from_slice(&[0.5, -1.0]);
        let w = store.value(mlp.layers[0].weight).clone();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 2], vec![2.0, 3.0]).unwrap());
        let y = mlp.forward(&mut g, &store, x).unwrap();
        let expect0 = 2.0 * w.at(0, 0) + 3.0 * w.at(1, 0) + 0.5;
        let expect1 = 2.0 * w.at(0, 1) + 3.0 * w.at(1, 1) - 1.0;
        assert_eq!(g.value(y).data(), &[expect0, expect1]);
    }

    #[test]
    fn mlp_rejects_wrong_input_width() {
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            layer_sizes: vec![3, 2],
            activation: Activation::Relu,
        };
        let mlp = Mlp::new(&mut store, "m", &spec, &mut rng()).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(vec![1, 4]));
        assert!(mlp.forward(&mut g, &store, x).is_err());
    }

    #[test]
    fn gru_zero_everything_stays_zero() {
        let mut store = ParamStore::new();
        let spec = GruCellSpec {
            input_dim: 3,
            hidden_dim: 4,
        };
        let gru = GruCell::new(&mut store, "g", spec, &mut rng()).unwrap();
        zero_all(&mut store);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(vec![2, 3]));
        let h = g.constant(Tensor::zeros(vec![2, 4]));
        let out = gru.step(&mut g, &store, x, h).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_copies_previous_state() {
        let mut store = ParamStore::new();
        let spec = GruCellSpec {
            input_dim: 3,
            hidden_dim: 4,
        };
        let gru = GruCell::new(&mut store, "g", spec, &mut rng()).unwrap();
        store.value_mut(gru.b_z).fill(100.0);
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 3], vec![0.3, -0.5, 0.9]).unwrap());
        let prev = Tensor::new(vec![1, 4], vec![0.1, -0.7, 0.4, 0.0]).unwrap();
        let h = g.constant(prev.clone());
        let out = gru.step(&mut g, &store, x, h).unwrap();
        assert_eq!(g.value(out), &prev);
    }

    #[test]
    fn gru_output_bounded_after_first_step() {
        let mut store = ParamStore::new();
        let spec = GruCellSpec {
            input_dim: 3,
            hidden_dim: 5,
        };
        let gru = GruCell::new(&mut store, "g", spec, &mut rng()).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![2, 3], 1.5));
        let h = g.constant(Tensor::zeros(vec![2, 5]));
        let out = gru.step(&mut g, &store, x, h).unwrap();
        assert!(g.value(out).data().iter().all(|v| v.abs() < 1.0));
    }

    fn attention(n_heads: usize, project: bool) -> (ParamStore, Attention) {
        let mut store = ParamStore::new();
        let spec = AttentionSpec {
            hidden_dim: 6,
            att_dim: 3,
            n_heads,
            project_values: project,
        };
        let att = Attention::new(&mut store, "cam", spec, &mut rng()).unwrap();
        (store, att)
    }

    #[test]
    fn identical_states_give_uniform_weights() {
        let (store, att) = attention(4, true);
        let h = Tensor::from_rows(&vec![vec![0.3, -0.2, 0.9, 0.1, 0.0, -0.4]; 4]).unwrap();
        let w = att.weights_for_agent(&store, &h, 2).unwrap();
        for k in 0..4 {
            for j in 0..4 {
                let expect = if j == 2 { 0.0 } else { 1.0 / 3.0 };
                assert!((w.at(k, j) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_agents_put_all_weight_on_the_other() {
        let (store, att) = attention(2, true);
        let h = Tensor::from_rows(&[vec![0.1; 6], vec![-0.8; 6]]).unwrap();
        let w = att.weights_for_agent(&store, &h, 0).unwrap();
        for k in 0..2 {
            assert_eq!(w.row(k), &[0.0, 1.0]);
        }
    }

    #[test]
    fn single_agent_is_rejected() {
        let (store, att) = attention(1, true);
        let h = Tensor::zeros(vec![1, 6]);
        assert!(matches!(
            att.weights_for_agent(&store, &h, 0),
            Err(Error::SingleAgent(1))
        ));
    }

    #[test]
    fn one_hot_weights_select_that_value() {
        let (store, att) = attention(2, true);
        let h = Tensor::from_rows(&[
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![-0.5, 0.4, -0.3, 0.2, -0.1, 0.0],
            vec![0.9, -0.9, 0.8, -0.8, 0.7, -0.7],
        ])
        .unwrap();
        let w = Tensor::new(vec![2, 3], vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = att.aggregate_for_agent(&store, &h, &w, 0).unwrap();
        for (k, head) in att.heads.iter().enumerate() {
            let wv = store.value(head.w_v.unwrap());
            for c in 0..3 {
                let expect: f32 = (0..6).map(|r| h.at(2, r) * wv.at(r, c)).sum();
                assert!((v.data()[k * 3 + c] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn raw_values_keep_hidden_width() {
        let (store, att) = attention(2, false);
        assert_eq!(att.spec.out_dim(), 12);
        let h = Tensor::from_rows(&vec![vec![0.25; 6]; 3]).unwrap();
        let w = att.weights_for_agent(&store, &h, 1).unwrap();
        let v = att.aggregate_for_agent(&store, &h, &w, 1).unwrap();
        for &x in v.data() {
            assert!((x - 0.25).abs() < 1e-6);
        }
    }
}
