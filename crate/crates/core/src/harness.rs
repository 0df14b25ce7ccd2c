//! The experiment commands behind the `taco` binary.
//!
//! A run directory holds `config`, `metrics.csv` and `model.ckpt`. Commands
//! that read a run accept either the directory or the checkpoint file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentNetwork;
use crate::config::{output_root, parse_pairs, resolve, ExperimentConfig, CONFIG_FILE};
use crate::env::{make_env, Environment};
use crate::error::{Error, Result};
use crate::nn::{Activation, Attention, Mlp, MlpSpec};
use crate::replay::EpisodeRecord;
use crate::tensor::{Adam, AdamConfig, Graph, ParamStore, Tensor};
use crate::trainer::{
    eval_seeds, evaluate, load_learner, run_episode, stream_rng_indexed, train_with, Learner, MetricsRow,
    RunArtifacts, Stream, CHECKPOINT_FILE, METRICS_FILE,
};

/// A finished run: its resolved config and checkpoint location.
#[derive(Clone, Debug)]
pub struct RunHandle {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunHandle {
    /// Opens a run directory (or a checkpoint inside one). `overrides` are
    /// applied on top of the stored config, e.g. to point it at another env.
    pub fn open(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let (dir, checkpoint) = if path.is_dir() {
            (path.to_path_buf(), path.join(CHECKPOINT_FILE))
        } else {
            let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (dir, path.to_path_buf())
        };
        let config_path = dir.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend(overrides.iter().cloned());
        Ok(RunHandle {
            config: resolve(&pairs)?,
            dir,
            checkpoint,
        })
    }

    /// Builds the environment and loads the trained networks into it.
    pub fn load(&self) -> Result<(Box<dyn Environment>, Learner)> {
        let env = make_env(&self.config.env, &self.config.env_settings)?;
        let learner = load_learner(&self.config, env.spec(), &self.checkpoint)?;
        Ok((env, learner))
    }
}

pub fn cmd_train(pairs: &[(String, String)], on_row: impl FnMut(&MetricsRow)) -> Result<RunArtifacts> {
    let cfg = resolve(pairs)?;
    train_with(&cfg, on_row)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algo: String,
    pub env: String,
    pub checkpoint: PathBuf,
    pub alpha: f32,
    pub episodes: usize,
    pub seed: u64,
    pub success_rate: f32,
    pub mean_return: f32,
}

/// Greedy evaluation of a checkpoint at a fixed alpha. Episode seeds are the
/// run's own evaluation set unless `seed` is given.
pub fn cmd_eval(run: &RunHandle, episodes: usize, alpha: f32, seed: Option<u64>) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Schedule(alpha));
    }
    let (mut env, learner) = run.load()?;
    let seed = seed.unwrap_or(run.config.seed);
    let r = evaluate(env.as_mut(), &learner.agent, &learner.store, &eval_seeds(seed, episodes), alpha)?;
    Ok(EvalReport {
        algo: run.config.algo.to_string(),
        env: run.config.env.clone(),
        checkpoint: run.checkpoint.clone(),
        alpha,
        episodes,
        seed,
        success_rate: r.success_rate,
        mean_return: r.mean_return,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Sweeps

/// Base overrides crossed with axes of values, each cell run once per seed.
///
/// Text form, one `key=value` per line:
///
/// ```text
/// sweep.seeds=0,1,2,3
/// sweep.budget=32
/// sweep.axis.beta=1,3,5,10
/// algo=taco_qmix
/// t_max=20000
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: Vec<(String, String)>,
    pub axes: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
    /// Upper bound on `cells * seeds`.
    pub budget: usize,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SweepSpec {
            base: Vec::new(),
            axes: Vec::new(),
            seeds: vec![0, 1, 2, 3],
            budget: 64,
        };
        fn list(v: &str) -> impl Iterator<Item = String> + '_ {
            v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty())
        }
        for (k, v) in parse_pairs(text)? {
            if k == "sweep.seeds" {
                spec.seeds = list(&v)
                    .map(|s| s.parse().map_err(|e| Error::config("sweep.seeds", format!("`{s}`: {e}"))))
                    .collect::<Result<_>>()?;
            } else if k == "sweep.budget" {
                spec.budget = v.parse().map_err(|e| Error::config("sweep.budget", format!("`{v}`: {e}")))?;
            } else if let Some(axis) = k.strip_prefix("sweep.axis.") {
                let values: Vec<String> = list(&v).collect();
                if values.is_empty() {
                    return Err(Error::config(k.clone(), "axis has no values"));
                }
                spec.axes.push((axis.to_string(), values));
            } else if k.starts_with("sweep.") {
                return Err(Error::config(k, "unknown sweep key"));
            } else {
                spec.base.push((k, v));
            }
        }
        if spec.seeds.is_empty() {
            return Err(Error::config("sweep.seeds", "no seeds"));
        }
        if spec.n_runs() > spec.budget {
            return Err(Error::config(
                "sweep.budget",
                format!("{} runs exceed the budget of {}", spec.n_runs(), spec.budget),
            ));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepSpec::parse(&text)
    }

    /// Axis assignments in row-major order (last axis fastest).
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells = vec![Vec::new()];
        for (key, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }

    pub fn n_runs(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product::<usize>() * self.seeds.len()
    }
}

/// Final evaluation numbers of one run, in [`SWEEP_METRICS`] order.
pub const SWEEP_METRICS: [&str; 4] = [
    "eval_success_mixed",
    "eval_success_tacit",
    "eval_return_mixed",
    "eval_return_tacit",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub cell: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub outcome: std::result::Result<[f32; 4], String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell: usize,
    pub assignment: Vec<(String, String)>,
    pub ok: usize,
    pub failed: usize,
    /// `(median, q25, q75)` per entry of [`SWEEP_METRICS`]; `None` when no
    /// seed of the cell finished.
    pub stats: Vec<Option<(f64, f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub cells: Vec<CellSummary>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// Linear-interpolation quantile of unsorted data (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn final_metrics(row: &MetricsRow) -> [f32; 4] {
    [
        row.eval_mixed.success_rate,
        row.eval_tacit.success_rate,
        row.eval_mixed.mean_return,
        row.eval_tacit.mean_return,
    ]
}

fn sweep_one(spec: &SweepSpec, cell: &[(String, String)], seed: u64, dir: &Path) -> std::result::Result<[f32; 4], String> {
    let mut pairs = spec.base.clone();
    pairs.extend(cell.iter().cloned());
    pairs.push(("seed".into(), seed.to_string()));
    pairs.push(("output_dir".into(), dir.display().to_string()));
    let run = || -> Result<[f32; 4]> {
        let art = train_with(&resolve(&pairs)?, |_| {})?;
        let row = art.final_row().ok_or(Error::EmptyBatch)?;
        Ok(final_metrics(row))
    };
    run().map_err(|e| e.to_string())
}

/// Runs every `(cell, seed)` pair and aggregates final metrics per cell.
/// Failed runs are recorded and skipped. With `parallel_cells > 1`, that
/// many runs execute at once; each run's output is unaffected.
pub fn cmd_sweep(spec: &SweepSpec, out_root: &Path, parallel_cells: usize) -> Result<SweepReport> {
    if spec.n_runs() > spec.budget {
        return Err(Error::config("sweep.budget", format!("{} runs exceed {}", spec.n_runs(), spec.budget)));
    }
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let cells = spec.cells();
    let jobs: Vec<(usize, u64, PathBuf)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, _)| spec.seeds.iter().map(move |&s| (c, s, out_root.join(format!("cell{c}_s{s}")))))
        .collect();
    let mut runs = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(parallel_cells.max(1)) {
        let outcomes: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(c, s, dir)| {
                    let cell = &cells[*c];
                    scope.spawn(move || sweep_one(spec, cell, *s, dir))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("run panicked".into())))
                .collect()
        });
        for ((c, s, dir), outcome) in chunk.iter().zip(outcomes) {
            runs.push(SweepRun {
                cell: *c,
                seed: *s,
                output_dir: dir.clone(),
                outcome,
            });
        }
    }

    let summaries: Vec<CellSummary> = cells
        .iter()
        .enumerate()
        .map(|(c, assignment)| {
            let done: Vec<[f32; 4]> = runs
                .iter()
                .filter(|r| r.cell == c)
                .filter_map(|r| r.outcome.as_ref().ok().copied())
                .collect();
            let failed = runs.iter().filter(|r| r.cell == c && r.outcome.is_err()).count();
            let stats = (0..SWEEP_METRICS.len())
                .map(|m| {
                    if done.is_empty() {
                        return None;
                    }
                    let v: Vec<f64> = done.iter().map(|x| f64::from(x[m])).collect();
                    Some((quantile(&v, 0.5), quantile(&v, 0.25), quantile(&v, 0.75)))
                })
                .collect();
            CellSummary {
                cell: c,
                assignment: assignment.clone(),
                ok: done.len(),
                failed,
                stats,
            }
        })
        .collect();

    let axis_names: Vec<&str> = spec.axes.iter().map(|(k, _)| k.as_str()).collect();
    let runs_csv = out_root.join("runs.csv");
    let mut w = csv::Writer::from_path(&runs_csv).map_err(|e| Error::Format(e.to_string()))?;
    let mut header = vec!["cell".to_string(), "seed".into()];
    header.extend(axis_names.iter().map(|s| s.to_string()));
    header.extend(["status".to_string(), "output_dir".into()]);
    header.extend(SWEEP_METRICS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for r in &runs {
        let mut rec = vec![r.cell.to_string(), r.seed.to_string()];
        rec.extend(cells[r.cell].iter().map(|(_, v)| v.clone()));
        match &r.outcome {
            Ok(m) => {
                rec.push("ok".into());
                rec.push(r.output_dir.display().to_string());
                rec.extend(m.iter().map(f32::to_string));
            }
            Err(e) => {
                rec.push(format!("error: {e}"));
                rec.push(r.output_dir.display().to_string());
                rec.extend(std::iter::repeat_n(String::new(), SWEEP_METRICS.len()));
            }
        }
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&runs_csv, e))?;

    let summary_csv = out_root.join("sweep.csv");
    let mut w = csv::Writer::from_path(&summary_csv).map_err(|e| Error::Format(e.to_string()))?;
    let mut header = vec!["cell".to_string()];
    header.extend(axis_names.iter().map(|s| s.to_string()));
    header.extend(["runs_ok".to_string(), "runs_failed".into()]);
    for m in SWEEP_METRICS {
        header.extend([format!("{m}_median"), format!("{m}_q25"), format!("{m}_q75")]);
    }
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for s in &summaries {
        let mut rec = vec![s.cell.to_string()];
        rec.extend(s.assignment.iter().map(|(_, v)| v.clone()));
        rec.extend([s.ok.to_string(), s.failed.to_string()]);
        for st in &s.stats {
            match st {
                Some((m, lo, hi)) => rec.extend([m.to_string(), lo.to_string(), hi.to_string()]),
                None => rec.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&summary_csv, e))?;

    Ok(SweepReport {
        runs,
        cells: summaries,
        runs_csv,
        summary_csv,
    })
}

/// Default sweep output directory for a spec file.
pub fn sweep_output_dir(spec_path: &Path) -> PathBuf {
    let stem = spec_path.file_stem().map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    output_root().join(format!("sweep_{stem}"))
}

// ---------------------------------------------------------------------------
// Traces of a frozen policy

/// Per-step quantities of one episode, `[n_agents, dim]` each.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub h: Tensor,
    pub v: Tensor,
    pub v_hat: Option<Tensor>,
    pub state: Vec<f32>,
}

/// Source of the attention information `v`: the run's own communication
/// module, or a freshly initialised one for runs trained without it.
pub struct InfoSource {
    fresh: Option<(Attention, ParamStore)>,
}

impl InfoSource {
    pub fn for_agent<R: Rng>(agent: &AgentNetwork, rng: &mut R) -> Result<Self> {
        if agent.has_cam() {
            return Ok(InfoSource { fresh: None });
        }
        let spec = crate::nn::AttentionSpec {
            hidden_dim: agent.config.hidden_dim,
            ..agent
                .config
                .attention_spec()
                .unwrap_or(crate::nn::AttentionSpec {
                    hidden_dim: agent.config.hidden_dim,
                    att_dim: 8,
                    n_heads: 4,
                    project_values: true,
                })
        };
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "probe.cam", spec, rng)?;
        Ok(InfoSource {
            fresh: Some((att, store)),
        })
    }

    pub fn is_fresh(&self) -> bool {
        self.fresh.is_some()
    }
}

/// Replays a recorded episode through the frozen networks.
pub fn trace_episode(
    agent: &AgentNetwork,
    store: &ParamStore,
    info: &InfoSource,
    record: &EpisodeRecord,
) -> Result<Vec<StepTrace>> {
    let n = agent.config.n_agents;
    let mut h_prev = Tensor::zeros(vec![n, agent.config.hidden_dim]);
    let mut out = Vec::with_capacity(record.len);
    for t in 0..record.len {
        let rows = (0..n)
            .map(|i| {
                let last = (t > 0).then(|| record.action_at(t - 1, i));
                agent.input_row(record.obs_at(t, i), last, i)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&rows)?);
        let hp = g.constant(h_prev);
        let h = agent.encode(&mut g, store, x, hp)?;
        let v = match &info.fresh {
            None => agent.communicate(&mut g, store, h)?,
            Some((att, s)) => {
                // A graph caches parameters by id, so the second store gets
                // its own graph.
                let mut g2 = Graph::new();
                let h2 = g2.constant(g.value(h).clone());
                let v = att.forward(&mut g2, s, h2, n)?;
                g.constant(g2.value(v).clone())
            }
        };
        let v_hat = if agent.trm.is_some() {
            Some(agent.reconstruct(&mut g, store, h)?)
        } else {
            None
        };
        h_prev = g.value(h).clone();
        out.push(StepTrace {
            h: h_prev.clone(),
            v: g.value(v).clone(),
            v_hat: v_hat.map(|x| g.value(x).clone()),
            state: record.state_at(t).to_vec(),
        });
    }
    Ok(out)
}

/// Rolls out `episodes` episodes with the frozen policy at `alpha`.
pub fn collect_episodes(
    env: &mut dyn Environment,
    learner: &Learner,
    seed: u64,
    episodes: usize,
    alpha: f32,
    epsilon: f32,
) -> Result<Vec<EpisodeRecord>> {
    let mut seeds = stream_rng_indexed(seed, Stream::Probe, 0);
    let mut actions = stream_rng_indexed(seed, Stream::Probe, 1);
    (0..episodes)
        .map(|_| {
            let s: u64 = seeds.random();
            run_episode(env, &learner.agent, &learner.store, s, 0, &|_| alpha, &|_| epsilon, &mut actions)
        })
        .collect()
}

/// The alpha a checkpoint acts at by default: 1 for TACO runs (no
/// communication), 0 for everything else.
pub fn default_policy_alpha(cfg: &ExperimentConfig) -> f32 {
    if cfg.algo.is_taco() {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Reconstruction probes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbeTarget {
    /// The attention aggregate `v_i`.
    Attention,
    /// Mean hidden state of the other agents.
    MeanHidden,
    /// The global state.
    GlobalState,
}

impl ProbeTarget {
    pub const ALL: [ProbeTarget; 3] = [ProbeTarget::Attention, ProbeTarget::MeanHidden, ProbeTarget::GlobalState];

    pub fn name(self) -> &'static str {
        match self {
            ProbeTarget::Attention => "attention",
            ProbeTarget::MeanHidden => "mean_hidden",
            ProbeTarget::GlobalState => "global_state",
        }
    }
}

impl std::str::FromStr for ProbeTarget {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProbeTarget::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown probe target `{s}` (attention, mean_hidden, global_state)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub episodes: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub holdout: f64,
    /// Policy alpha while collecting; `None` uses [`default_policy_alpha`].
    pub alpha: Option<f32>,
    /// Exploration while collecting; `None` uses the run's final epsilon.
    pub epsilon: Option<f32>,
    pub targets: Vec<ProbeTarget>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            episodes: 200,
            epochs: 60,
            hidden: 64,
            lr: 1e-3,
            batch_size: 64,
            holdout: 0.2,
            alpha: None,
            epsilon: None,
            targets: ProbeTarget::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub target: ProbeTarget,
    pub dim: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub mse: f64,
    /// Mean per-dimension variance of the held-out targets.
    pub target_variance: f64,
    /// `mse / target_variance`; `None` for constant targets.
    pub normalized_mse: Option<f64>,
}

/// Probe inputs `h_i` and targets for every (step, agent) of a trace.
pub fn probe_rows(traces: &[StepTrace], target: ProbeTarget) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for st in traces {
        let n = st.h.rows();
        for i in 0..n {
            xs.push(st.h.row(i).to_vec());
            ys.push(match target {
                ProbeTarget::Attention => st.v.row(i).to_vec(),
                ProbeTarget::GlobalState => st.state.clone(),
                ProbeTarget::MeanHidden => {
                    let mut m = vec![0.0f32; st.h.cols()];
                    for j in (0..n).filter(|&j| j != i) {
                        for (a, b) in m.iter_mut().zip(st.h.row(j)) {
                            *a += b;
                        }
                    }
                    m.iter_mut().for_each(|a| *a /= (n - 1) as f32);
                    m
                }
            });
        }
    }
    (xs, ys)
}

/// Fits a fresh MLP from `train` inputs to targets and returns the held-out
/// mean squared error (averaged over rows and target dimensions).
pub fn fit_probe<R: Rng>(
    train: (&[Vec<f32>], &[Vec<f32>]),
    test: (&[Vec<f32>], &[Vec<f32>]),
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<f64> {
    let (in_dim, out_dim) = (train.0[0].len(), train.1[0].len());
    let mut store = ParamStore::new();
    let spec = MlpSpec {
        layer_sizes: vec![in_dim, cfg.hidden, out_dim],
        activation: Activation::Relu,
    };
    let mlp = Mlp::new(&mut store, "probe", &spec, rng)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &store,
    );
    let mut order: Vec<usize> = (0..train.0.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x: Vec<Vec<f32>> = chunk.iter().map(|&r| train.0[r].clone()).collect();
            let y: Vec<Vec<f32>> = chunk.iter().map(|&r| train.1[r].clone()).collect();
            let mut g = Graph::new();
            let xv = g.constant(Tensor::from_rows(&x)?);
            let yv = g.constant(Tensor::from_rows(&y)?);
            let pred = mlp.forward(&mut g, &store, xv)?;
            let d = g.sub(pred, yv)?;
            let sq = g.square(d);
            let loss = g.mean(sq);
            store.zero_grad();
            g.backward(loss, &mut store)?;
            adam.step(&mut store);
        }
    }
    let mut g = Graph::new();
    let xv = g.constant(Tensor::from_rows(test.0)?);
    let pred = mlp.forward(&mut g, &store, xv)?;
    let p = g.value(pred);
    let mut sum = 0.0f64;
    for (r, y) in test.1.iter().enumerate() {
        for (a, b) in p.row(r).iter().zip(y) {
            sum += f64::from(a - b).powi(2);
        }
    }
    Ok(sum / (test.1.len() * out_dim) as f64)
}

fn mean_variance(ys: &[Vec<f32>]) -> f64 {
    let (n, d) = (ys.len() as f64, ys[0].len());
    let mut total = 0.0;
    for c in 0..d {
        let mean = ys.iter().map(|y| f64::from(y[c])).sum::<f64>() / n;
        total += ys.iter().map(|y| (f64::from(y[c]) - mean).powi(2)).sum::<f64>() / n;
    }
    total / d as f64
}

/// Freezes the run's policy, records trajectories and trains one probe per
/// target from `h_i`. Episodes are split into train and held-out sets, so no
/// held-out step shares an episode with a training step.
pub fn cmd_probe_reconstruction(run: &RunHandle, cfg: &ProbeConfig) -> Result<Vec<ProbeResult>> {
    let (mut env, learner) = run.load()?;
    let alpha = cfg.alpha.unwrap_or_else(|| default_policy_alpha(&run.config));
    let epsilon = cfg.epsilon.unwrap_or(run.config.epsilon_finish);
    let seed = run.config.seed;
    let episodes = collect_episodes(env.as_mut(), &learner, seed, cfg.episodes, alpha, epsilon)?;
    let mut rng = stream_rng_indexed(seed, Stream::Probe, 2);
    let info = InfoSource::for_agent(&learner.agent, &mut rng)?;
    let traces = episodes
        .iter()
        .map(|e| trace_episode(&learner.agent, &learner.store, &info, e))
        .collect::<Result<Vec<_>>>()?;

    let mut ids: Vec<usize> = (0..traces.len()).collect();
    ids.shuffle(&mut rng);
    let n_test = ((traces.len() as f64 * cfg.holdout).round() as usize).clamp(1, traces.len().saturating_sub(1));
    let (test_ids, train_ids) = ids.split_at(n_test);
    let gather = |ids: &[usize]| -> Vec<StepTrace> { ids.iter().flat_map(|&e| traces[e].iter().cloned()).collect() };
    let (train_steps, test_steps) = (gather(train_ids), gather(test_ids));
    if train_steps.is_empty() || test_steps.is_empty() {
        return Err(Error::EmptyBatch);
    }

    cfg.targets
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            let (tx, ty) = probe_rows(&train_steps, target);
            let (vx, vy) = probe_rows(&test_steps, target);
            let mut prng = stream_rng_indexed(seed, Stream::Probe, 16 + k as u64);
            let mse = fit_probe((&tx, &ty), (&vx, &vy), cfg, &mut prng)?;
            let var = mean_variance(&vy);
            Ok(ProbeResult {
                target,
                dim: ty[0].len(),
                train_rows: tx.len(),
                test_rows: vx.len(),
                mse,
                target_variance: var,
                normalized_mse: (var > 0.0).then(|| mse / var),
            })
        })
        .collect()
}

pub const PROBE_HEADER: &str = "target,dim,train_rows,test_rows,mse,normalized_mse,target_variance";

pub fn write_probe_csv(path: &Path, results: &[ProbeResult]) -> Result<()> {
    let mut s = String::from(PROBE_HEADER);
    s.push('\n');
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.target.name(),
            r.dim,
            r.train_rows,
            r.test_rows,
            r.mse,
            r.normalized_mse.map_or(String::new(), |x| x.to_string()),
            r.target_variance
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Embedding export

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingExport {
    pub path: PathBuf,
    pub rows: usize,
    pub info_dim: usize,
}

/// Writes one CSV row per (episode, step, agent):
/// `episode,step,agent,v_0..v_{d-1},v_hat_0..v_hat_{d-1}`.
pub fn cmd_export_embeddings(run: &RunHandle, episodes: usize, alpha: Option<f32>, out: &Path) -> Result<EmbeddingExport> {
    if !run.config.algo.is_taco() {
        return Err(Error::Unsupported("export-emb", run.config.algo.to_string()));
    }
    let (mut env, learner) = run.load()?;
    let alpha = alpha.unwrap_or_else(|| default_policy_alpha(&run.config));
    let records = collect_episodes(
        env.as_mut(),
        &learner,
        run.config.seed,
        episodes,
        alpha,
        run.config.epsilon_finish,
    )?;
    let info = InfoSource { fresh: None };
    let d = learner.agent.config.info_dim();
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::Format(e.to_string()))?;
    let mut header = vec!["episode".to_string(), "step".into(), "agent".into()];
    header.extend((0..d).map(|k| format!("v_{k}")));
    header.extend((0..d).map(|k| format!("v_hat_{k}")));
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut rows = 0;
    for (e, record) in records.iter().enumerate() {
        for (t, st) in trace_episode(&learner.agent, &learner.store, &info, record)?.iter().enumerate() {
            let v_hat = st.v_hat.as_ref().expect("TACO runs have a reconstruction module");
            for i in 0..st.v.rows() {
                let mut rec = vec![e.to_string(), t.to_string(), i.to_string()];
                rec.extend(st.v.row(i).iter().map(f32::to_string));
                rec.extend(v_hat.row(i).iter().map(f32::to_string));
                w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
                rows += 1;
            }
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(EmbeddingExport {
        path: out.to_path_buf(),
        rows,
        info_dim: d,
    })
}

/// Reads the final row of a run's metrics file as `(header, values)`.
pub fn read_final_metrics(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join(METRICS_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let last = r
        .records()
        .last()
        .ok_or_else(|| Error::Format(format!("{}: no rows", path.display())))?
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(header.iter().map(str::to_string).zip(last.iter().map(str::to_string)).collect())
}
