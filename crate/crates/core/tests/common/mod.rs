//! Independent 64-bit reference implementations used as test oracles.
//!
//! Nothing here touches the tape: every network is re-derived from its
//! written formula over plain `f64` matrices, reading parameters by name.

#![allow(dead_code)]

use std::cell::Cell;
use std::collections::BTreeMap;

use taco::tensor::{ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct M {
    pub r: usize,
    pub c: usize,
    pub d: Vec<f64>,
}

impl M {
    pub fn zeros(r: usize, c: usize) -> M {
        M { r, c, d: vec![0.0; r * c] }
    }

    pub fn from_tensor(t: &Tensor) -> M {
        let (r, c) = match t.shape() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        };
        M {
            r,
            c,
            d: t.data().iter().map(|&x| f64::from(x)).collect(),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.c + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.c..(i + 1) * self.c]
    }

    pub fn matmul(&self, b: &M) -> M {
        assert_eq!(self.c, b.r);
        let mut out = M::zeros(self.r, b.c);
        for i in 0..self.r {
            for j in 0..b.c {
                let mut s = 0.0;
                for p in 0..self.c {
                    s += self.at(i, p) * b.at(p, j);
                }
                out.d[i * b.c + j] = s;
            }
        }
        out
    }

    pub fn add_row(&self, b: &M) -> M {
        assert_eq!(b.d.len(), self.c);
        let mut out = self.clone();
        for i in 0..self.r {
            for j in 0..self.c {
                out.d[i * self.c + j] += b.d[j];
            }
        }
        out
    }

    pub fn zip(&self, b: &M, f: impl Fn(f64, f64) -> f64) -> M {
        assert_eq!(self.d.len(), b.d.len());
        M {
            r: self.r,
            c: self.c,
            d: self.d.iter().zip(&b.d).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> M {
        M {
            r: self.r,
            c: self.c,
            d: self.d.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn hcat(parts: &[M]) -> M {
        let r = parts[0].r;
        let c = parts.iter().map(|p| p.c).sum();
        let mut out = M::zeros(r, c);
        for i in 0..r {
            let mut off = 0;
            for p in parts {
                out.d[i * c + off..i * c + off + p.c].copy_from_slice(p.row(i));
                off += p.c;
            }
        }
        out
    }
}

/// Named `f64` copies of every parameter, plus a record of how close any
/// non-smooth point (relu, abs) came to being crossed.
pub struct Shadow {
    pub params: BTreeMap<String, M>,
    pub min_kink: Cell<f64>,
}

impl Shadow {
    pub fn new(store: &ParamStore) -> Shadow {
        Shadow {
            params: store
                .iter()
                .map(|p| (p.name.clone(), M::from_tensor(&p.value)))
                .collect(),
            min_kink: Cell::new(f64::INFINITY),
        }
    }

    pub fn p(&self, name: &str) -> &M {
        self.params.get(name).unwrap_or_else(|| panic!("no parameter {name}"))
    }

    fn kink(&self, x: f64) {
        self.min_kink.set(self.min_kink.get().min(x.abs()));
    }

    pub fn relu(&self, x: &M) -> M {
        x.d.iter().for_each(|&v| self.kink(v));
        x.map(|v| v.max(0.0))
    }

    pub fn abs(&self, x: &M) -> M {
        x.d.iter().for_each(|&v| self.kink(v));
        x.map(f64::abs)
    }

    pub fn linear(&self, x: &M, name: &str) -> M {
        x.matmul(self.p(&format!("{name}.w"))).add_row(self.p(&format!("{name}.b")))
    }

    /// Relu between layers, none after the last.
    pub fn mlp(&self, x: &M, name: &str, layers: usize) -> M {
        let mut h = x.clone();
        for i in 0..layers {
            h = self.linear(&h, &format!("{name}.l{i}"));
            if i + 1 < layers {
                h = self.relu(&h);
            }
        }
        h
    }

    pub fn gru(&self, x: &M, h: &M, name: &str) -> M {
        let p = |s: &str| self.p(&format!("{name}.{s}"));
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let gate = |w: &str, u: &str, b: &str| {
            x.matmul(p(w)).zip(&h.matmul(p(u)), |a, b| a + b).add_row(p(b)).map(sig)
        };
        let z = gate("w_z", "u_z", "b_z");
        let r = gate("w_r", "u_r", "b_r");
        let hu = h.matmul(p("u_n"));
        let n = x.matmul(p("w_n")).zip(&r.zip(&hu, |a, b| a * b), |a, b| a + b).add_row(p("b_n")).map(f64::tanh);
        let keep = z.zip(h, |z, h| z * h);
        z.zip(&n, |z, n| (1.0 - z) * n).zip(&keep, |a, b| a + b)
    }

    /// Attention weights `[n, n]` of one head for one group of agents.
    pub fn attention_weights(&self, h: &M, name: &str, head: usize) -> M {
        let q = h.matmul(self.p(&format!("{name}.h{head}.w_q")));
        let k = h.matmul(self.p(&format!("{name}.h{head}.w_k")));
        let n = h.r;
        let mut w = M::zeros(n, n);
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    if j == i {
                        f64::NEG_INFINITY
                    } else {
                        (0..q.c).map(|d| q.at(i, d) * k.at(j, d)).sum()
                    }
                })
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..n {
                w.d[i * n + j] = e[j] / s;
            }
        }
        w
    }

    /// Concatenated head outputs `[n, heads * d]` for one group.
    pub fn attention(&self, h: &M, name: &str, heads: usize, project_values: bool) -> M {
        let outs: Vec<M> = (0..heads)
            .map(|k| {
                let w = self.attention_weights(h, name, k);
                let v = if project_values {
                    h.matmul(self.p(&format!("{name}.h{k}.w_v")))
                } else {
                    h.clone()
                };
                w.matmul(&v)
            })
            .collect();
        M::hcat(&outs)
    }

    /// Attention applied to consecutive groups of `n` rows.
    pub fn attention_groups(&self, h: &M, n: usize, name: &str, heads: usize, project_values: bool) -> M {
        let groups: Vec<M> = (0..h.r / n)
            .map(|g| {
                let rows = M {
                    r: n,
                    c: h.c,
                    d: h.d[g * n * h.c..(g + 1) * n * h.c].to_vec(),
                };
                self.attention(&rows, name, heads, project_values)
            })
            .collect();
        M {
            r: h.r,
            c: groups[0].c,
            d: groups.into_iter().flat_map(|m| m.d).collect(),
        }
    }

    /// Monotonic mixer: `q [B, n]`, `s [B, S]` -> `[B]`.
    pub fn qmix(&self, q: &M, s: &M, embed: usize, elu: bool) -> Vec<f64> {
        let n = q.c;
        let w1 = self.abs(&self.linear(s, "mixer.hyper_w1"));
        let b1 = self.linear(s, "mixer.hyper_b1");
        let w2 = self.abs(&self.linear(s, "mixer.hyper_w2"));
        let b2 = self.mlp(s, "mixer.hyper_b2", 2);
        (0..q.r)
            .map(|b| {
                let hidden: Vec<f64> = (0..embed)
                    .map(|e| {
                        let x = (0..n).map(|i| q.at(b, i) * w1.at(b, i * embed + e)).sum::<f64>() + b1.at(b, e);
                        if elu {
                            if x > 0.0 {
                                x
                            } else {
                                x.exp_m1()
                            }
                        } else {
                            x
                        }
                    })
                    .collect();
                hidden.iter().enumerate().map(|(e, h)| h * w2.at(b, e)).sum::<f64>() + b2.at(b, 0)
            })
            .collect()
    }
}

/// Relative error with a floor on the denominator.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `f` with respect to every entry of every named
/// parameter; `f` reads the (perturbed) shadow.
pub fn fd_param_grads(sh: &mut Shadow, h: f64, f: impl Fn(&Shadow) -> f64) -> BTreeMap<String, Vec<f64>> {
    let names: Vec<String> = sh.params.keys().cloned().collect();
    let mut out = BTreeMap::new();
    for name in names {
        let len = sh.params[&name].d.len();
        let mut g = vec![0.0; len];
        for k in 0..len {
            let orig = sh.params[&name].d[k];
            sh.params.get_mut(&name).unwrap().d[k] = orig + h;
            let up = f(sh);
            sh.params.get_mut(&name).unwrap().d[k] = orig - h;
            let down = f(sh);
            sh.params.get_mut(&name).unwrap().d[k] = orig;
            g[k] = (up - down) / (2.0 * h);
        }
        out.insert(name, g);
    }
    out
}

/// Central differences with respect to an input matrix.
pub fn fd_input_grads(x: &M, h: f64, f: impl Fn(&M) -> f64) -> Vec<f64> {
    let mut x = x.clone();
    (0..x.d.len())
        .map(|k| {
            let orig = x.d[k];
            x.d[k] = orig + h;
            let up = f(&x);
            x.d[k] = orig - h;
            let down = f(&x);
            x.d[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn dot(a: &M, c: &M) -> f64 {
    a.d.iter().zip(&c.d).map(|(x, y)| x * y).sum()
}
