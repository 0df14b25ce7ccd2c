//! Experiment configuration as flat `key=value` text with dotted keys.
//!
//! Resolution order: built-in defaults for the chosen `preset` and `algo`,
//! then the config file, then command-line overrides. Unknown keys and
//! malformed values are rejected with the offending key in the message.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::{AgentNetConfig, CamConfig};
use crate::env::{DecPomdpSpec, EnvSettings};
use crate::error::{Error, Result};
use crate::taco::{AlphaMode, AlphaSchedule, LossConfig, StopGradient};
use crate::tensor::AdamConfig;

pub const OUTPUT_ROOT_VAR: &str = "TACO_OUTPUT_ROOT";
pub const CONFIG_FILE: &str = "config";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Vdn,
    Qmix,
    VdnAttn,
    QmixAttn,
    TacoVdn,
    TacoQmix,
    TacoLeap,
}

impl Algo {
    pub const ALL: [Algo; 7] = [
        Algo::Vdn,
        Algo::Qmix,
        Algo::VdnAttn,
        Algo::QmixAttn,
        Algo::TacoVdn,
        Algo::TacoQmix,
        Algo::TacoLeap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Vdn => "vdn",
            Algo::Qmix => "qmix",
            Algo::VdnAttn => "vdn_attn",
            Algo::QmixAttn => "qmix_attn",
            Algo::TacoVdn => "taco_vdn",
            Algo::TacoQmix => "taco_qmix",
            Algo::TacoLeap => "taco_leap",
        }
    }

    pub fn uses_cam(self) -> bool {
        !matches!(self, Algo::Vdn | Algo::Qmix)
    }

    pub fn is_taco(self) -> bool {
        matches!(self, Algo::TacoVdn | Algo::TacoQmix | Algo::TacoLeap)
    }

    pub fn mixer(self) -> MixerKind {
        match self {
            Algo::Vdn | Algo::VdnAttn | Algo::TacoVdn => MixerKind::Vdn,
            _ => MixerKind::Qmix,
        }
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algo `{s}`"))
    }
}

impl Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixerKind {
    Vdn,
    Qmix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplayAlpha {
    /// Replay every stored episode at the schedule's current alpha.
    Current,
    /// Replay each step at the alpha it was collected with.
    Collected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Small networks and budgets; a relay run takes a few minutes on one
    /// CPU core.
    Desk,
    /// Full-size networks and budgets of the original method.
    Full,
}

macro_rules! named_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("expected one of {}", [$($name),+].join(", "))),
                }
            }
        }
        impl Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($variant => $name,)+ })
            }
        }
    };
}

named_enum!(MixerKind { MixerKind::Vdn => "vdn", MixerKind::Qmix => "qmix" });
named_enum!(ReplayAlpha { ReplayAlpha::Current => "current", ReplayAlpha::Collected => "collected" });
named_enum!(Preset { Preset::Desk => "desk", Preset::Full => "full" });
named_enum!(AlphaMode { AlphaMode::Linear => "linear", AlphaMode::Leap => "leap" });
named_enum!(StopGradient { StopGradient::BothLive => "both_live", StopGradient::DetachTarget => "detach_target" });

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    /// Empty means `$TACO_OUTPUT_ROOT/<algo>_<env>_s<seed>`.
    pub output_dir: PathBuf,

    pub t_max: u64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub updates_per_episode: usize,
    pub target_update_interval: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub rollout_workers: usize,

    pub lr: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub grad_clip: f32,
    pub gamma: f32,

    pub epsilon_start: f32,
    pub epsilon_finish: f32,
    pub epsilon_anneal_steps: u64,

    pub hidden_dim: usize,
    pub q_hidden: usize,
    pub trm_hidden: usize,
    pub append_agent_id: bool,

    pub cam_enabled: bool,
    pub att_dim: usize,
    pub n_heads: usize,
    pub project_values: bool,

    pub mixer: MixerKind,
    pub embed_dim: usize,

    pub alpha_init: f64,
    pub alpha_max: f64,
    /// `None` means `1 / t_max`.
    pub alpha_delta: Option<f64>,
    pub alpha_mode: AlphaMode,
    pub beta: f32,
    pub stop_gradient: StopGradient,
    pub replay_alpha: ReplayAlpha,

    pub env_settings: EnvSettings,
}

impl ExperimentConfig {
    pub fn new(preset: Preset, algo: Algo) -> Self {
        let mut c = ExperimentConfig {
            preset,
            algo,
            env: "relay".into(),
            seed: 0,
            output_dir: PathBuf::new(),
            t_max: 40_000,
            batch_size: 32,
            buffer_size: 2000,
            updates_per_episode: 1,
            target_update_interval: 200,
            eval_interval: 4000,
            eval_episodes: 64,
            rollout_workers: 1,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 10.0,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_finish: 0.05,
            epsilon_anneal_steps: 10_000,
            hidden_dim: 32,
            q_hidden: 32,
            trm_hidden: 32,
            append_agent_id: true,
            cam_enabled: true,
            att_dim: 8,
            n_heads: 4,
            project_values: true,
            mixer: MixerKind::Qmix,
            embed_dim: 16,
            alpha_init: 0.0,
            alpha_max: 1.0,
            alpha_delta: None,
            alpha_mode: AlphaMode::Linear,
            beta: 3.0,
            stop_gradient: StopGradient::BothLive,
            replay_alpha: ReplayAlpha::Current,
            env_settings: EnvSettings::default(),
        };
        if preset == Preset::Full {
            c.t_max = 2_000_000;
            c.batch_size = 128;
            c.buffer_size = 5000;
            c.updates_per_episode = 10;
            c.eval_interval = 20_000;
            c.epsilon_anneal_steps = 50_000;
            c.hidden_dim = 64;
            c.q_hidden = 64;
            c.trm_hidden = 64;
            c.embed_dim = 32;
        }
        c.apply_algo(algo);
        c
    }

    fn apply_algo(&mut self, algo: Algo) {
        self.algo = algo;
        self.cam_enabled = algo.uses_cam();
        self.mixer = algo.mixer();
        match algo {
            Algo::Vdn | Algo::Qmix | Algo::VdnAttn | Algo::QmixAttn => {
                self.alpha_init = 0.0;
                self.alpha_max = 0.0;
                self.alpha_delta = Some(0.0);
                self.alpha_mode = AlphaMode::Linear;
                self.beta = 0.0;
            }
            Algo::TacoVdn | Algo::TacoQmix => {
                self.alpha_init = 0.0;
                self.alpha_max = 1.0;
                self.alpha_delta = None;
                self.alpha_mode = AlphaMode::Linear;
            }
            Algo::TacoLeap => {
                self.alpha_init = 0.0;
                self.alpha_max = 1.0;
                self.alpha_delta = Some(0.0);
                self.alpha_mode = AlphaMode::Leap;
            }
        }
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let r = &self.env_settings.relay;
        let s = &self.env_settings.spread_tag;
        vec![
            ("preset", self.preset.to_string()),
            ("algo", self.algo.to_string()),
            ("env", self.env.clone()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("t_max", self.t_max.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("buffer_size", self.buffer_size.to_string()),
            ("updates_per_episode", self.updates_per_episode.to_string()),
            ("target_update_interval", self.target_update_interval.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("rollout_workers", self.rollout_workers.to_string()),
            ("lr", self.lr.to_string()),
            ("adam.beta1", self.adam_beta1.to_string()),
            ("adam.beta2", self.adam_beta2.to_string()),
            ("adam.eps", self.adam_eps.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("gamma", self.gamma.to_string()),
            ("epsilon.start", self.epsilon_start.to_string()),
            ("epsilon.finish", self.epsilon_finish.to_string()),
            ("epsilon.anneal_steps", self.epsilon_anneal_steps.to_string()),
            ("agent.hidden_dim", self.hidden_dim.to_string()),
            ("agent.q_hidden", self.q_hidden.to_string()),
            ("agent.append_agent_id", self.append_agent_id.to_string()),
            ("trm.hidden_dim", self.trm_hidden.to_string()),
            ("cam.enabled", self.cam_enabled.to_string()),
            ("cam.att_dim", self.att_dim.to_string()),
            ("cam.n_heads", self.n_heads.to_string()),
            ("cam.project_values", self.project_values.to_string()),
            ("mixer", self.mixer.to_string()),
            ("mixer.embed_dim", self.embed_dim.to_string()),
            ("alpha.init", self.alpha_init.to_string()),
            ("alpha.max", self.alpha_max.to_string()),
            ("alpha.delta", self.alpha_delta.map_or("auto".into(), |d| d.to_string())),
            ("alpha.mode", self.alpha_mode.to_string()),
            ("beta", self.beta.to_string()),
            ("stop_gradient", self.stop_gradient.to_string()),
            ("replay_alpha", self.replay_alpha.to_string()),
            ("init", "uniform_fan_in".into()),
            ("env.relay.width", r.width.to_string()),
            ("env.relay.view_radius", r.view_radius.to_string()),
            ("env.relay.n_agents", r.n_agents.to_string()),
            ("env.relay.n_codes", r.n_codes.to_string()),
            ("env.relay.lookout", r.lookout.to_string()),
            ("env.relay.random_start", r.random_start.to_string()),
            ("env.relay.episode_limit", r.episode_limit.to_string()),
            ("env.relay.latch_steps", r.latch_steps.to_string()),
            ("env.relay.step_cost", r.step_cost.to_string()),
            ("env.relay.arm_reward", r.arm_reward.to_string()),
            ("env.relay.success_reward", r.success_reward.to_string()),
            ("env.spread_tag.size", s.size.to_string()),
            ("env.spread_tag.n_agents", s.n_agents.to_string()),
            ("env.spread_tag.n_targets", s.n_targets.to_string()),
            ("env.spread_tag.view_radius", s.view_radius.to_string()),
            ("env.spread_tag.episode_limit", s.episode_limit.to_string()),
            ("env.spread_tag.step_cost", s.step_cost.to_string()),
            ("env.spread_tag.success_reward", s.success_reward.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        ExperimentConfig::new(Preset::Desk, Algo::TacoQmix)
            .entries()
            .into_iter()
            .map(|(k, _)| k)
            .collect()
    }

    /// Sets one key. `preset` and `algo` reset the defaults they control, so
    /// [`resolve`] applies them before everything else.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: Display,
        {
            value
                .trim()
                .parse::<T>()
                .map_err(|e| Error::config(key, format!("invalid value `{value}`: {e}")))
        }
        let v = value;
        let r = &mut self.env_settings.relay;
        let s = &mut self.env_settings.spread_tag;
        match key {
            "preset" => self.preset = p(key, v)?,
            "algo" => self.apply_algo(p(key, v)?),
            "env" => self.env = v.trim().to_string(),
            "seed" => self.seed = p(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v.trim()),
            "t_max" => self.t_max = p(key, v)?,
            "batch_size" => self.batch_size = p(key, v)?,
            "buffer_size" => self.buffer_size = p(key, v)?,
            "updates_per_episode" => self.updates_per_episode = p(key, v)?,
            "target_update_interval" => self.target_update_interval = p(key, v)?,
            "eval_interval" => self.eval_interval = p(key, v)?,
            "eval_episodes" => self.eval_episodes = p(key, v)?,
            "rollout_workers" => self.rollout_workers = p(key, v)?,
            "lr" => self.lr = p(key, v)?,
            "adam.beta1" => self.adam_beta1 = p(key, v)?,
            "adam.beta2" => self.adam_beta2 = p(key, v)?,
            "adam.eps" => self.adam_eps = p(key, v)?,
            "grad_clip" => self.grad_clip = p(key, v)?,
            "gamma" => self.gamma = p(key, v)?,
            "epsilon.start" => self.epsilon_start = p(key, v)?,
            "epsilon.finish" => self.epsilon_finish = p(key, v)?,
            "epsilon.anneal_steps" => self.epsilon_anneal_steps = p(key, v)?,
            "agent.hidden_dim" => self.hidden_dim = p(key, v)?,
            "agent.q_hidden" => self.q_hidden = p(key, v)?,
            "agent.append_agent_id" => self.append_agent_id = p(key, v)?,
            "trm.hidden_dim" => self.trm_hidden = p(key, v)?,
            "cam.enabled" => self.cam_enabled = p(key, v)?,
            "cam.att_dim" => self.att_dim = p(key, v)?,
            "cam.n_heads" => self.n_heads = p(key, v)?,
            "cam.project_values" => self.project_values = p(key, v)?,
            "mixer" => self.mixer = p(key, v)?,
            "mixer.embed_dim" => self.embed_dim = p(key, v)?,
            "alpha.init" => self.alpha_init = p(key, v)?,
            "alpha.max" => self.alpha_max = p(key, v)?,
            "alpha.delta" => {
                self.alpha_delta = if v.trim() == "auto" { None } else { Some(p(key, v)?) }
            }
            "alpha.mode" => self.alpha_mode = p(key, v)?,
            "beta" => self.beta = p(key, v)?,
            "stop_gradient" => self.stop_gradient = p(key, v)?,
            "replay_alpha" => self.replay_alpha = p(key, v)?,
            "init" => {
                if v.trim() != "uniform_fan_in" {
                    return Err(Error::config(key, format!("only `uniform_fan_in` is supported, got `{v}`")));
                }
            }
            "env.relay.width" => r.width = p(key, v)?,
            "env.relay.view_radius" => r.view_radius = p(key, v)?,
            "env.relay.n_agents" => r.n_agents = p(key, v)?,
            "env.relay.n_codes" => r.n_codes = p(key, v)?,
            "env.relay.lookout" => r.lookout = p(key, v)?,
            "env.relay.random_start" => r.random_start = p(key, v)?,
            "env.relay.episode_limit" => r.episode_limit = p(key, v)?,
            "env.relay.latch_steps" => r.latch_steps = p(key, v)?,
            "env.relay.step_cost" => r.step_cost = p(key, v)?,
            "env.relay.arm_reward" => r.arm_reward = p(key, v)?,
            "env.relay.success_reward" => r.success_reward = p(key, v)?,
            "env.spread_tag.size" => s.size = p(key, v)?,
            "env.spread_tag.n_agents" => s.n_agents = p(key, v)?,
            "env.spread_tag.n_targets" => s.n_targets = p(key, v)?,
            "env.spread_tag.view_radius" => s.view_radius = p(key, v)?,
            "env.spread_tag.episode_limit" => s.episode_limit = p(key, v)?,
            "env.spread_tag.step_cost" => s.step_cost = p(key, v)?,
            "env.spread_tag.success_reward" => s.success_reward = p(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Cross-field checks; run before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("buffer_size", self.buffer_size),
            ("target_update_interval", self.target_update_interval),
            ("eval_episodes", self.eval_episodes),
            ("rollout_workers", self.rollout_workers),
            ("agent.hidden_dim", self.hidden_dim),
            ("agent.q_hidden", self.q_hidden),
            ("trm.hidden_dim", self.trm_hidden),
            ("cam.att_dim", self.att_dim),
            ("cam.n_heads", self.n_heads),
            ("mixer.embed_dim", self.embed_dim),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.batch_size > self.buffer_size {
            return Err(Error::config("batch_size", "must not exceed buffer_size"));
        }
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval", "must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::config("grad_clip", "must be positive"));
        }
        for (key, e) in [("epsilon.start", self.epsilon_start), ("epsilon.finish", self.epsilon_finish)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config(key, "must be in [0, 1]"));
            }
        }
        self.loss_config().validate()?;
        self.schedule()?;
        if !self.cam_enabled && self.beta != 0.0 {
            return Err(Error::config("beta", "must be 0 when cam.enabled=false"));
        }
        if !self.env.starts_with("matrix:") && !["relay", "spread_tag"].contains(&self.env.as_str()) {
            return Err(Error::config(
                "env",
                format!("unknown environment `{}` (expected relay, spread_tag or matrix:<file>)", self.env),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<AlphaSchedule> {
        if !self.cam_enabled {
            return Ok(AlphaSchedule::pinned(0.0));
        }
        let delta = match self.alpha_delta {
            Some(d) => d,
            None if self.t_max == 0 => f64::INFINITY,
            None => (self.alpha_max - self.alpha_init) / self.t_max as f64,
        };
        AlphaSchedule::new(self.alpha_init, self.alpha_max, delta, self.alpha_mode)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn agent_config(&self, spec: &DecPomdpSpec) -> AgentNetConfig {
        AgentNetConfig {
            n_agents: spec.n_agents,
            obs_dim: spec.obs_dim,
            n_actions: spec.n_actions,
            hidden_dim: self.hidden_dim,
            append_agent_id: self.append_agent_id,
            cam: self.cam_enabled.then_some(CamConfig {
                att_dim: self.att_dim,
                n_heads: self.n_heads,
                project_values: self.project_values,
            }),
            trm_hidden: self.trm_hidden,
            q_hidden: self.q_hidden,
        }
    }

    /// `epsilon` after `t` environment steps.
    pub fn epsilon_at(&self, t: u64) -> f32 {
        if self.epsilon_anneal_steps == 0 || t >= self.epsilon_anneal_steps {
            return self.epsilon_finish;
        }
        let frac = t as f64 / self.epsilon_anneal_steps as f64;
        (f64::from(self.epsilon_start) + frac * f64::from(self.epsilon_finish - self.epsilon_start)) as f32
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        if !self.output_dir.as_os_str().is_empty() {
            return self.output_dir.clone();
        }
        let root = output_root();
        let env = self.env.replace(['/', '\\', ':'], "_");
        root.join(format!("{}_{}_s{}", self.algo, env, self.seed))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        resolve(&parse_pairs(&text)?)
    }
}

/// `$TACO_OUTPUT_ROOT`, or `runs` when unset.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", lineno + 1), format!("expected key=value, got `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Builds a validated config from ordered overrides (later pairs win).
pub fn resolve(pairs: &[(String, String)]) -> Result<ExperimentConfig> {
    let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let parse = |key: &str, default: &str| -> Result<String> { Ok(last(key).unwrap_or(default).to_string()) };
    let preset: Preset = parse("preset", "desk")?
        .parse()
        .map_err(|e| Error::config("preset", e))?;
    let algo: Algo = parse("algo", "taco_qmix")?
        .parse()
        .map_err(|e: String| Error::config("algo", e))?;
    let mut cfg = ExperimentConfig::new(preset, algo);
    for (k, v) in pairs {
        if k != "preset" && k != "algo" {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn round_trip_through_text() {
        let cfg = resolve(&pairs(&[("algo", "taco_leap"), ("seed", "7"), ("cam.att_dim", "32")])).unwrap();
        let again = resolve(&parse_pairs(&cfg.to_text()).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = resolve(&pairs(&[("cam.att_dimm", "8")])).unwrap_err().to_string();
        assert!(err.contains("cam.att_dimm"), "{err}");
    }

    #[test]
    fn malformed_value_is_named() {
        let err = resolve(&pairs(&[("batch_size", "many")])).unwrap_err().to_string();
        assert!(err.contains("batch_size") && err.contains("many"), "{err}");
    }

    #[test]
    fn qmix_preset_has_no_communication() {
        let cfg = resolve(&pairs(&[("algo", "qmix")])).unwrap();
        assert!(!cfg.cam_enabled);
        assert_eq!(cfg.beta, 0.0);
        assert_eq!(cfg.schedule().unwrap().alpha_at(1_000_000, crate::taco::Phase::Training), 0.0);
    }

    #[test]
    fn attention_baseline_pins_alpha_to_zero() {
        let cfg = resolve(&pairs(&[("algo", "qmix_attn")])).unwrap();
        assert!(cfg.cam_enabled);
        assert_eq!(cfg.beta, 0.0);
        let s = cfg.schedule().unwrap();
        assert_eq!(s.alpha_at(cfg.t_max, crate::taco::Phase::Evaluation), 0.0);
    }

    #[test]
    fn taco_reaches_one_at_t_max() {
        let cfg = resolve(&pairs(&[("algo", "taco_qmix"), ("t_max", "777")])).unwrap();
        assert_eq!(cfg.schedule().unwrap().alpha_at(777, crate::taco::Phase::Training), 1.0);
    }

    #[test]
    fn epsilon_anneals_linearly() {
        let cfg = resolve(&pairs(&[("epsilon.anneal_steps", "100")])).unwrap();
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(50) - 0.525).abs() < 1e-6);
        assert_eq!(cfg.epsilon_at(100), 0.05);
    }
}
