//! Rollouts, the learner update and the outer training loop.
//!
//! Losses are computed with select semantics: after unrolling the padded
//! batch, only rows belonging to filled steps are gathered into the losses,
//! and padded steps are never read from the episode records at all.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{greedy_action, select_action, AgentNetwork, QOutput};
use crate::config::{ExperimentConfig, MixerKind, ReplayAlpha};
use crate::env::{make_env, DecPomdpSpec, Environment};
use crate::error::{Error, Result};
use crate::mixer::{MixActivation, Mixer, Qmix, QmixSpec};
use crate::replay::{EpisodeRecord, ReplayBuffer};
use crate::taco::{
    reconstruction_loss, stop_gradient_policy, td_loss, td_targets, total_loss, AlphaSchedule, LossConfig, Phase,
    StopGradient,
};
use crate::tensor::{
    clip_global_norm, global_grad_norm, store_records, write_checkpoint, Adam, Graph, ParamStore, Tensor, Var,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_HEADER: &str = "step,episode,alpha,epsilon,td_loss,rec_loss,total_loss,grad_norm,\
eval_success_mixed,eval_success_tacit,eval_return_mixed,eval_return_tacit";

/// Independent random streams derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 0,
    EnvSeeds = 1,
    EvalSeeds = 2,
    Sampling = 3,
    Actions = 4,
    Probe = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    stream_rng_indexed(seed, stream, 0)
}

/// Stream `stream` for worker `index` (rollout workers each get their own).
pub fn stream_rng_indexed(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream as u64) << 32 | index);
    rng
}

/// Environment seeds for the fixed evaluation set of a run.
pub fn eval_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = stream_rng(seed, Stream::EvalSeeds);
    (0..n).map(|_| rng.random()).collect()
}

/// Builds a mixer's parameters in `store`.
pub fn build_mixer<R: Rng>(
    kind: MixerKind,
    spec: &DecPomdpSpec,
    embed_dim: usize,
    store: &mut ParamStore,
    rng: &mut R,
) -> Result<Mixer> {
    Ok(match kind {
        MixerKind::Vdn => Mixer::Vdn {
            n_agents: spec.n_agents,
        },
        MixerKind::Qmix => Mixer::Qmix(Qmix::new(
            store,
            QmixSpec {
                n_agents: spec.n_agents,
                state_dim: spec.state_dim,
                embed_dim,
                activation: MixActivation::Elu,
            },
            rng,
        )?),
    })
}

/// Agent network plus mixer, with online and target parameters.
#[derive(Clone, Debug)]
pub struct Learner {
    pub agent: AgentNetwork,
    pub mixer: Mixer,
    pub store: ParamStore,
    pub target: ParamStore,
    pub adam: Adam,
    pub loss: LossConfig,
    pub grad_clip: f32,
    pub stop_gradient: StopGradient,
    pub replay_alpha: ReplayAlpha,
    pub state_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainMetrics {
    pub td_loss: f32,
    pub rec_loss: Option<f32>,
    pub total_loss: f32,
    /// Global gradient norm after clipping.
    pub grad_norm: f32,
    pub grad_norm_raw: f32,
    pub alpha: f32,
}

/// Loss values of a batch without touching any parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub td_loss: f32,
    pub rec_loss: Option<f32>,
    pub total_loss: f32,
}

struct LossGraph {
    td: Var,
    rec: Option<Var>,
    total: Var,
}

struct Unroll {
    q: Vec<Var>,
    v: Vec<Option<Var>>,
    v_hat: Vec<Option<Var>>,
}

impl Learner {
    pub fn new(cfg: &ExperimentConfig, spec: &DecPomdpSpec) -> Result<Self> {
        let mut rng = stream_rng(cfg.seed, Stream::Init);
        let mut store = ParamStore::new();
        let agent = AgentNetwork::new(&mut store, cfg.agent_config(spec), &mut rng)?;
        let mixer = build_mixer(cfg.mixer, spec, cfg.embed_dim, &mut store, &mut rng)?;
        Ok(Learner {
            agent,
            mixer,
            target: store.clone(),
            adam: Adam::new(cfg.adam_config(), &store),
            store,
            loss: cfg.loss_config(),
            grad_clip: cfg.grad_clip,
            stop_gradient: cfg.stop_gradient,
            replay_alpha: cfg.replay_alpha,
            state_dim: spec.state_dim,
        })
    }

    /// Hard copy of every online parameter into the target set.
    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_values_from(&self.store)
    }

    fn n_agents(&self) -> usize {
        self.agent.config.n_agents
    }

    /// Input rows for step `t` of every episode, `[B * n, input_dim]`.
    /// Rows past an episode's last observation are zeros.
    fn inputs_at(&self, batch: &[&EpisodeRecord], t: usize) -> Result<Tensor> {
        let n = self.n_agents();
        let width = self.agent.config.input_dim();
        let mut data = Vec::with_capacity(batch.len() * n * width);
        for ep in batch {
            for i in 0..n {
                if t <= ep.len {
                    let last = (t > 0).then(|| ep.action_at(t - 1, i));
                    data.extend(self.agent.input_row(ep.obs_at(t, i), last, i)?);
                } else {
                    data.resize(data.len() + width, 0.0);
                }
            }
        }
        Tensor::new(vec![batch.len() * n, width], data)
    }

    fn states_at(&self, batch: &[&EpisodeRecord], t: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(batch.len() * self.state_dim);
        for ep in batch {
            if t <= ep.len {
                data.extend_from_slice(ep.state_at(t));
            } else {
                data.resize(data.len() + self.state_dim, 0.0);
            }
        }
        Tensor::new(vec![batch.len(), self.state_dim], data)
    }

    /// Per-row alpha at step `t` (one value per `(episode, agent)` row).
    fn alphas_at(&self, batch: &[&EpisodeRecord], t: usize, alpha: f32) -> Vec<f32> {
        let n = self.n_agents();
        let mut out = Vec::with_capacity(batch.len() * n);
        for ep in batch {
            let a = match self.replay_alpha {
                ReplayAlpha::Current => alpha,
                ReplayAlpha::Collected if ep.len == 0 => 0.0,
                ReplayAlpha::Collected => ep.collected_alpha[t.min(ep.len - 1)],
            };
            out.extend(std::iter::repeat_n(a, n));
        }
        out
    }

    fn unroll(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &[&EpisodeRecord],
        steps: usize,
        alpha: f32,
        need_v: bool,
    ) -> Result<Unroll> {
        let rows = batch.len() * self.n_agents();
        let mut h = g.constant(Tensor::zeros(vec![rows, self.agent.config.hidden_dim]));
        let mut out = Unroll {
            q: Vec::with_capacity(steps),
            v: Vec::with_capacity(steps),
            v_hat: Vec::with_capacity(steps),
        };
        for t in 0..steps {
            let x = g.constant(self.inputs_at(batch, t)?);
            h = self.agent.encode(g, store, x, h)?;
            let (v, v_hat, v_bar) = if self.agent.has_cam() {
                let alphas = self.alphas_at(batch, t, alpha);
                let v_hat = self.agent.reconstruct(g, store, h)?;
                let all_one = alphas.iter().all(|&a| a == 1.0);
                let v = if need_v || !all_one {
                    Some(self.agent.communicate(g, store, h)?)
                } else {
                    None
                };
                let v_bar = match v {
                    None => v_hat,
                    Some(v) => mix_rows(g, v, v_hat, &alphas)?,
                };
                (v, Some(v_hat), Some(v_bar))
            } else {
                (None, None, None)
            };
            out.q.push(self.agent.q_values(g, store, h, v_bar)?);
            out.v.push(v);
            out.v_hat.push(v_hat);
        }
        Ok(out)
    }

    /// Bootstrap values `Q_tot^-(s_{t+1}, argmax_i Q_i^-)` for every filled
    /// step, in `(t, episode)` order matching [`filled_index`].
    fn bootstrap(&self, batch: &[&EpisodeRecord], t_len: usize, alpha: f32) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let n = self.n_agents();
        let need_v = false;
        let un = self.unroll(&mut g, &self.target, batch, t_len + 1, alpha, need_v)?;
        let mut next = vec![vec![0.0f32; batch.len()]; t_len + 1];
        for (t, slot) in next.iter_mut().enumerate().skip(1) {
            let q = g.value(un.q[t]).clone();
            let mut chosen = Vec::with_capacity(batch.len() * n);
            for (b, ep) in batch.iter().enumerate() {
                let live = t <= ep.len && !ep.terminated[t - 1];
                for i in 0..n {
                    let row = q.row(b * n + i);
                    let a = if live { greedy_action(row, ep.avail_at(t, i))? } else { 0 };
                    chosen.push(row[a]);
                }
            }
            let chosen = Tensor::new(vec![batch.len(), n], chosen)?;
            let states = self.states_at(batch, t)?;
            *slot = self.mixer.eval(&self.target, &chosen, &states)?;
        }
        let mut out = Vec::new();
        for (t, row) in next.iter().enumerate().take(t_len + 1).skip(1) {
            for (b, ep) in batch.iter().enumerate() {
                if ep.filled.get(t - 1).copied().unwrap_or(false) {
                    out.push(row[b]);
                }
            }
        }
        Ok(out)
    }

    fn build_losses(&self, g: &mut Graph, batch: &[&EpisodeRecord], alpha: f32) -> Result<LossGraph> {
        if batch.is_empty() || batch.iter().all(|e| e.len == 0) {
            return Err(Error::EmptyBatch);
        }
        let n = self.n_agents();
        let bsz = batch.len();
        let t_len = batch.iter().map(|e| e.len).max().unwrap_or(0);
        let has_cam = self.agent.has_cam();
        let un = self.unroll(g, &self.store, batch, t_len, alpha, has_cam)?;

        let mut q_tot = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let actions: Vec<usize> = batch
                .iter()
                .flat_map(|ep| (0..n).map(move |i| if t < ep.len { ep.action_at(t, i) } else { 0 }))
                .collect();
            let chosen = g.pick(un.q[t], &actions)?;
            let chosen = g.reshape(chosen, &[bsz, n])?;
            let state = g.constant(self.states_at(batch, t)?);
            let qt = self.mixer.forward(g, &self.store, chosen, state)?;
            q_tot.push(g.reshape(qt, &[bsz, 1])?);
        }
        let q_tot = g.concat_rows(&q_tot)?;
        let rows = filled_index(batch);
        let q_tot = g.gather_rows(q_tot, &rows)?;
        let q_tot = g.reshape(q_tot, &[rows.len()])?;

        let mut rewards = Vec::with_capacity(rows.len());
        let mut terminal = Vec::with_capacity(rows.len());
        for t in 0..t_len {
            for ep in batch {
                if t < ep.len {
                    rewards.push(ep.rewards[t]);
                    terminal.push(ep.terminated[t]);
                }
            }
        }
        let next = self.bootstrap(batch, t_len, alpha)?;
        let y = td_targets(&rewards, &terminal, &next, self.loss.gamma)?;
        let td = td_loss(g, q_tot, &y)?;

        let rec = if has_cam {
            let v: Vec<Var> = un.v.iter().map(|v| v.expect("v computed")).collect();
            let v_hat: Vec<Var> = un.v_hat.iter().map(|v| v.expect("v_hat computed")).collect();
            let v = g.concat_rows(&v)?;
            let v_hat = g.concat_rows(&v_hat)?;
            let agent_rows: Vec<usize> = rows.iter().flat_map(|&r| (0..n).map(move |i| r * n + i)).collect();
            let v = g.gather_rows(v, &agent_rows)?;
            let v_hat = g.gather_rows(v_hat, &agent_rows)?;
            let (v, v_hat) = stop_gradient_policy(g, v, v_hat, self.stop_gradient);
            Some(reconstruction_loss(g, v, v_hat)?)
        } else {
            None
        };
        let total = match rec {
            Some(rec) => total_loss(g, td, rec, self.loss.beta)?,
            None => td,
        };
        Ok(LossGraph { td, rec, total })
    }

    pub fn loss_values(&self, batch: &[&EpisodeRecord], alpha: f32) -> Result<LossValues> {
        let mut g = Graph::new();
        let l = self.build_losses(&mut g, batch, alpha)?;
        Ok(LossValues {
            td_loss: g.value(l.td).item(),
            rec_loss: l.rec.map(|r| g.value(r).item()),
            total_loss: g.value(l.total).item(),
        })
    }

    /// Gradients of the total loss, accumulated into freshly zeroed grads.
    pub fn compute_gradients(&mut self, batch: &[&EpisodeRecord], alpha: f32) -> Result<LossValues> {
        let mut g = Graph::new();
        let l = self.build_losses(&mut g, batch, alpha)?;
        self.store.zero_grad();
        g.backward(l.total, &mut self.store)?;
        Ok(LossValues {
            td_loss: g.value(l.td).item(),
            rec_loss: l.rec.map(|r| g.value(r).item()),
            total_loss: g.value(l.total).item(),
        })
    }

    /// One optimizer step on `batch`.
    pub fn train_step(&mut self, batch: &[&EpisodeRecord], alpha: f32) -> Result<TrainMetrics> {
        let values = self.compute_gradients(batch, alpha)?;
        let raw = global_grad_norm(&self.store);
        clip_global_norm(&mut self.store, self.grad_clip);
        let clipped = global_grad_norm(&self.store);
        self.adam.step(&mut self.store);
        Ok(TrainMetrics {
            td_loss: values.td_loss,
            rec_loss: values.rec_loss,
            total_loss: values.total_loss,
            grad_norm: clipped,
            grad_norm_raw: raw,
            alpha,
        })
    }
}

/// `(1 - a) * v + a * v_hat` with a per-row `a`; exact at 0 and 1.
fn mix_rows(g: &mut Graph, v: Var, v_hat: Var, alphas: &[f32]) -> Result<Var> {
    if let Some(&a) = alphas.first() {
        if alphas.iter().all(|&x| x == a) {
            return g.lerp(v, v_hat, a);
        }
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Schedule(alphas.iter().copied().fold(0.0, f32::max)));
    }
    let shape = g.shape(v).to_vec();
    let d = *shape.last().expect("rank >= 1");
    let wa: Vec<f32> = alphas.iter().flat_map(|&a| std::iter::repeat_n(a, d)).collect();
    let wv: Vec<f32> = alphas.iter().flat_map(|&a| std::iter::repeat_n(1.0 - a, d)).collect();
    let wa = g.constant(Tensor::new(shape.clone(), wa)?);
    let wv = g.constant(Tensor::new(shape, wv)?);
    let left = g.mul(v, wv)?;
    let right = g.mul(v_hat, wa)?;
    g.add(left, right)
}

/// Row indices `t * B + b` of every filled step, `t`-major.
pub fn filled_index(batch: &[&EpisodeRecord]) -> Vec<usize> {
    let t_len = batch.iter().map(|e| e.len).max().unwrap_or(0);
    let mut rows = Vec::new();
    for t in 0..t_len {
        for (b, ep) in batch.iter().enumerate() {
            if t < ep.len {
                rows.push(t * batch.len() + b);
            }
        }
    }
    rows
}

/// Rolls out one full episode. `alpha(t)` and `epsilon(t)` are queried with
/// the global environment step `t_start + k` of each step `k`.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<R: Rng>(
    env: &mut dyn Environment,
    agent: &AgentNetwork,
    store: &ParamStore,
    env_seed: u64,
    t_start: u64,
    alpha: &dyn Fn(u64) -> f32,
    epsilon: &dyn Fn(u64) -> f32,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let spec = env.spec().clone();
    if spec.n_agents != agent.config.n_agents || spec.obs_dim != agent.config.obs_dim {
        return Err(Error::Architecture(format!(
            "network expects {} agents with obs_dim {}, environment has {} with {}",
            agent.config.n_agents, agent.config.obs_dim, spec.n_agents, spec.obs_dim
        )));
    }
    let mut record = EpisodeRecord::new(&spec);
    let mut step = env.reset(env_seed);
    record.set_observation(0, &step)?;
    let mut states = agent.initial_states();
    let mut k = 0u64;
    while !step.terminated {
        let t = t_start + k;
        let a = alpha(t);
        let q = agent.act_step(store, &step.obs, &mut states, a)?;
        let eps = epsilon(t);
        let mut actions = Vec::with_capacity(spec.n_agents);
        for (i, qi) in q.into_iter().enumerate() {
            let out = QOutput::new(qi, step.avail[i].clone())?;
            actions.push(select_action(&out, eps, rng)?);
        }
        for (s, &u) in states.iter_mut().zip(&actions) {
            s.last_action = Some(u);
        }
        step = env.step(&actions)?;
        record.push_step(&actions, a, &step)?;
        k += 1;
    }
    Ok(record)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f32,
    pub mean_return: f32,
    pub episodes: usize,
}

/// Greedy rollouts at a fixed alpha, one per seed.
pub fn evaluate(
    env: &mut dyn Environment,
    agent: &AgentNetwork,
    store: &ParamStore,
    seeds: &[u64],
    alpha: f32,
) -> Result<EvalResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut wins, mut ret) = (0usize, 0.0f64);
    for &s in seeds {
        let ep = run_episode(env, agent, store, s, 0, &|_| alpha, &|_| 0.0, &mut rng)?;
        wins += usize::from(ep.success);
        ret += f64::from(ep.episode_return);
    }
    let n = seeds.len().max(1);
    Ok(EvalResult {
        success_rate: wins as f32 / n as f32,
        mean_return: (ret / n as f64) as f32,
        episodes: seeds.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u64,
    pub alpha: f32,
    pub epsilon: f32,
    pub train: Option<TrainMetrics>,
    pub eval_mixed: EvalResult,
    pub eval_tacit: EvalResult,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f32>| x.map_or(String::new(), |v| v.to_string());
        let t = self.train;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episode,
            self.alpha,
            self.epsilon,
            opt(t.map(|m| m.td_loss)),
            opt(t.and_then(|m| m.rec_loss)),
            opt(t.map(|m| m.total_loss)),
            opt(t.map(|m| m.grad_norm)),
            self.eval_mixed.success_rate,
            self.eval_tacit.success_rate,
            self.eval_mixed.mean_return,
            self.eval_tacit.mean_return,
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub config_path: PathBuf,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub learner: Learner,
}

impl RunArtifacts {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

struct CsvLog {
    path: PathBuf,
    file: std::io::BufWriter<std::fs::File>,
}

impl CsvLog {
    fn create(path: PathBuf) -> Result<Self> {
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut log = CsvLog {
            file: std::io::BufWriter::new(f),
            path,
        };
        log.line(METRICS_HEADER)?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.file, "{s}")
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Evaluates at the schedule's current alpha and at alpha = 1.
fn eval_pair(
    env: &mut dyn Environment,
    learner: &Learner,
    seeds: &[u64],
    mixed_alpha: f32,
) -> Result<(EvalResult, EvalResult)> {
    let mixed = evaluate(env, &learner.agent, &learner.store, seeds, mixed_alpha)?;
    let tacit = if learner.agent.has_cam() && mixed_alpha != 1.0 {
        evaluate(env, &learner.agent, &learner.store, seeds, 1.0)?
    } else {
        mixed
    };
    Ok((mixed, tacit))
}

/// Full training run as configured. Writes `config`, `metrics.csv` and
/// `model.ckpt` into the resolved output directory.
pub fn train(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    train_with(cfg, |_| {})
}

/// [`train`] with a callback invoked after every metrics row.
pub fn train_with(cfg: &ExperimentConfig, mut on_row: impl FnMut(&MetricsRow)) -> Result<RunArtifacts> {
    cfg.validate()?;
    let out = cfg.resolved_output_dir();
    let workers = cfg.rollout_workers;
    let mut envs = (0..workers)
        .map(|_| make_env(&cfg.env, &cfg.env_settings))
        .collect::<Result<Vec<_>>>()?;
    let mut eval_env = make_env(&cfg.env, &cfg.env_settings)?;
    let spec = eval_env.spec().clone();
    let schedule: AlphaSchedule = cfg.schedule()?;
    let mut learner = Learner::new(cfg, &spec)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_size)?;

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let config_path = cfg.write(&out)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut log = CsvLog::create(metrics_path.clone())?;

    let mut seed_rng = stream_rng(cfg.seed, Stream::EnvSeeds);
    let mut sample_rng = stream_rng(cfg.seed, Stream::Sampling);
    let mut action_rngs: Vec<_> = (0..workers as u64)
        .map(|k| stream_rng_indexed(cfg.seed, Stream::Actions, k))
        .collect();
    let seeds = eval_seeds(cfg.seed, cfg.eval_episodes);

    let mut t_env = 0u64;
    let mut episode = 0u64;
    let mut last: Option<TrainMetrics> = None;
    let mut next_eval = cfg.eval_interval;
    let mut rows = Vec::new();
    let alpha_fn = |t: u64| schedule.alpha_at(t, Phase::Training);
    let eps_fn = |t: u64| cfg.epsilon_at(t);

    while t_env < cfg.t_max {
        let env_seeds: Vec<u64> = (0..workers).map(|_| seed_rng.random()).collect();
        let records = if workers == 1 {
            vec![run_episode(
                envs[0].as_mut(),
                &learner.agent,
                &learner.store,
                env_seeds[0],
                t_env,
                &alpha_fn,
                &eps_fn,
                &mut action_rngs[0],
            )?]
        } else {
            let (agent, store) = (&learner.agent, &learner.store);
            let t0 = t_env;
            std::thread::scope(|scope| {
                let handles: Vec<_> = envs
                    .iter_mut()
                    .zip(action_rngs.iter_mut())
                    .zip(&env_seeds)
                    .map(|((env, rng), &s)| {
                        scope.spawn(move || run_episode(env.as_mut(), agent, store, s, t0, &alpha_fn, &eps_fn, rng))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect::<Result<Vec<_>>>()
            })?
        };
        for record in records {
            t_env += record.len as u64;
            episode += 1;
            buffer.push(record);
            for _ in 0..cfg.updates_per_episode {
                let Some(batch) = buffer.sample(cfg.batch_size, &mut sample_rng) else {
                    break;
                };
                last = Some(learner.train_step(&batch, alpha_fn(t_env))?);
            }
            if episode % cfg.target_update_interval as u64 == 0 {
                learner.sync_target()?;
            }
        }
        if t_env >= next_eval || t_env >= cfg.t_max {
            while next_eval <= t_env {
                next_eval += cfg.eval_interval;
            }
            let (mixed, tacit) = eval_pair(eval_env.as_mut(), &learner, &seeds, alpha_fn(t_env))?;
            let row = MetricsRow {
                step: t_env,
                episode,
                alpha: alpha_fn(t_env),
                epsilon: eps_fn(t_env),
                train: last,
                eval_mixed: mixed,
                eval_tacit: tacit,
            };
            log.line(&row.to_csv())?;
            on_row(&row);
            rows.push(row);
        }
    }

    let checkpoint_path = out.join(CHECKPOINT_FILE);
    write_checkpoint(&checkpoint_path, &store_records(&learner.store, Some(&learner.adam)))?;
    Ok(RunArtifacts {
        output_dir: out,
        config_path,
        metrics_path,
        checkpoint_path,
        rows,
        learner,
    })
}

/// Rebuilds the network of a finished run and loads its checkpoint.
pub fn load_learner(cfg: &ExperimentConfig, spec: &DecPomdpSpec, checkpoint: &Path) -> Result<Learner> {
    let mut learner = Learner::new(cfg, spec)?;
    let records = crate::tensor::read_checkpoint(checkpoint)?;
    crate::tensor::load_store(&mut learner.store, Some(&mut learner.adam), &records)?;
    learner.sync_target()?;
    Ok(learner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, Algo};

    fn cfg(algo: Algo) -> ExperimentConfig {
        let pairs: Vec<(String, String)> = [
            ("algo", algo.name()),
            ("t_max", "300"),
            ("batch_size", "4"),
            ("eval_interval", "100"),
            ("eval_episodes", "4"),
            ("agent.hidden_dim", "8"),
            ("agent.q_hidden", "8"),
            ("trm.hidden_dim", "8"),
            ("mixer.embed_dim", "4"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        resolve(&pairs).unwrap()
    }

    fn episodes(c: &ExperimentConfig, learner: &Learner, n: usize) -> Vec<EpisodeRecord> {
        let mut env = make_env(&c.env, &c.env_settings).unwrap();
        let mut rng = stream_rng(1, Stream::Actions);
        (0..n)
            .map(|k| {
                run_episode(env.as_mut(), &learner.agent, &learner.store, k as u64, 0, &|_| 0.3, &|_| 0.5, &mut rng)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn episode_padding_contract() {
        let c = cfg(Algo::TacoQmix);
        let env = make_env(&c.env, &c.env_settings).unwrap();
        let learner = Learner::new(&c, env.spec()).unwrap();
        for ep in episodes(&c, &learner, 8) {
            assert!(ep.len >= 1 && ep.len <= ep.limit);
            assert!(ep.filled.iter().take(ep.len).all(|&f| f));
            assert!(ep.filled.iter().skip(ep.len).all(|&f| !f));
        }
    }

    #[test]
    fn clipped_norm_is_bounded() {
        let mut c = cfg(Algo::TacoQmix);
        c.grad_clip = 1e-3;
        let env = make_env(&c.env, &c.env_settings).unwrap();
        let mut learner = Learner::new(&c, env.spec()).unwrap();
        let eps = episodes(&c, &learner, 4);
        let batch: Vec<_> = eps.iter().collect();
        let m = learner.train_step(&batch, 0.3).unwrap();
        assert!(m.grad_norm <= 1e-3 + 1e-7, "{m:?}");
        assert!(m.grad_norm_raw > m.grad_norm);
    }

    #[test]
    fn target_sync_copies_exactly() {
        let c = cfg(Algo::Qmix);
        let env = make_env(&c.env, &c.env_settings).unwrap();
        let mut learner = Learner::new(&c, env.spec()).unwrap();
        let eps = episodes(&c, &learner, 4);
        let batch: Vec<_> = eps.iter().collect();
        learner.train_step(&batch, 0.0).unwrap();
        assert!(learner.store.iter().zip(learner.target.iter()).any(|(a, b)| a.value != b.value));
        learner.sync_target().unwrap();
        assert!(learner.store.iter().zip(learner.target.iter()).all(|(a, b)| a.value == b.value));
    }

    #[test]
    fn qmix_has_no_rec_loss() {
        let c = cfg(Algo::Qmix);
        let env = make_env(&c.env, &c.env_settings).unwrap();
        let learner = Learner::new(&c, env.spec()).unwrap();
        let eps = episodes(&c, &learner, 3);
        let batch: Vec<_> = eps.iter().collect();
        let l = learner.loss_values(&batch, 0.0).unwrap();
        assert!(l.rec_loss.is_none());
        assert_eq!(l.td_loss, l.total_loss);
    }
}
