//! Run configuration.
//!
//! Every tunable constant used by the parser, the simulator, the reward
//! function, the trainer and the evaluation harness lives here. Files are
//! TOML with five sections (`env`, `rewards`, `train`, `affect`, `eval`);
//! missing keys take their defaults and unknown keys are rejected.
//! The full key table is in `docs/config.md`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub env: EnvConfig,
    pub rewards: RewardConfig,
    pub train: TrainConfig,
    pub affect: AffectConfig,
    pub eval: EvalConfig,
}

/// World geometry, detection, population and episode limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub rows: usize,
    pub cols: usize,
    /// Gateway spacing in meters.
    pub cell_size: f64,
    pub corridor_width: f64,
    pub world_seed: u64,
    pub human_radius: f64,
    pub gateway_radius: f64,
    pub robot_speed: f64,
    /// Simulated seconds consumed by one interaction.
    pub interaction_cost: f64,
    /// Seconds the robot waits when it faces a wall at a gateway.
    pub dead_end_wait: f64,
    /// Integration step for human motion and detection checks.
    pub sim_dt: f64,
    pub l_max: usize,
    pub episode_cap: usize,
    pub h_min: usize,
    pub h_max: usize,
    /// Trust field spread in meters; `None` means one third of the world diagonal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub human_speed_min: f64,
    pub human_speed_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            cell_size: 5.0,
            corridor_width: 1.0,
            world_seed: 7,
            human_radius: 2.0,
            gateway_radius: 0.5,
            robot_speed: 1.0,
            interaction_cost: 10.0,
            dead_end_wait: 1.0,
            sim_dt: 0.1,
            l_max: 5,
            episode_cap: 15,
            h_min: 2,
            h_max: 6,
            sigma: None,
            human_speed_min: 0.8,
            human_speed_max: 1.2,
        }
    }
}

impl EnvConfig {
    pub fn world_diagonal(&self) -> f64 {
        let w = (self.cols.saturating_sub(1)) as f64 * self.cell_size;
        let h = (self.rows.saturating_sub(1)) as f64 * self.cell_size;
        w.hypot(h)
    }

    pub fn effective_sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.world_diagonal() / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub r_nointer: f64,
    pub r_wronginter: f64,
    pub r_reached: f64,
    pub r_gmin: f64,
    pub w_n: f64,
    pub r_follow: f64,
    pub w_o: f64,
    pub r_optimal: f64,
    pub i_min: u32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_nointer: -10.0,
            r_wronginter: -5.0,
            r_reached: 100.0,
            r_gmin: 20.0,
            w_n: 5.0,
            r_follow: 5.0,
            w_o: 10.0,
            r_optimal: 10.0,
            i_min: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub horizon: usize,
    pub total_steps: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Rewards are multiplied by this before value targets and advantages
    /// are computed; logged rewards are unscaled.
    pub reward_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden: Vec<usize>,
    /// Write a checkpoint every this many updates (the final one is always written).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs_per_update: 4,
            minibatch_size: 64,
            horizon: 256,
            total_steps: 10_000,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden: vec![64, 64],
            checkpoint_every: 10,
            seed: 0,
        }
    }
}

/// Disfluency factors and the fixed cue lexicons of the guidance parser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffectConfig {
    pub a_rep: f64,
    pub a_hes: f64,
    pub a_unc: f64,
    /// Number of `U` symbols emitted for "end of the corridor".
    pub corridor_run: usize,
    pub fillers: Vec<String>,
    pub hedges: Vec<String>,
    pub repair_cues: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for AffectConfig {
    fn default() -> Self {
        Self {
            a_rep: 0.75,
            a_hes: 0.5,
            a_unc: 0.5,
            corridor_run: 2,
            fillers: words(&["uhh", "umm", "err", "er", "uh", "hmm", "ah"]),
            hedges: words(&[
                "probably", "maybe", "may", "might", "perhaps", "i think", "i guess", "not sure",
            ]),
            repair_cues: words(&["i mean", "no", "no-no", "sorry", "wait", "actually"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Minimum symbol confidence the skeptical robot will act on.
    pub skeptical_threshold: f64,
    /// Sigma of the high-trust regime as a multiple of the world diagonal.
    pub high_trust_sigma_factor: f64,
    /// Sigma of the low-trust regime as a multiple of the world diagonal.
    pub low_trust_sigma_factor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed: 1_000,
            skeptical_threshold: 0.9,
            high_trust_sigma_factor: 1.0,
            low_trust_sigma_factor: 0.15,
        }
    }
}

/// Every key a config file may contain, as `section.key`.
pub const DOCUMENTED_KEYS: &[&str] = &[
    "env.rows",
    "env.cols",
    "env.cell_size",
    "env.corridor_width",
    "env.world_seed",
    "env.human_radius",
    "env.gateway_radius",
    "env.robot_speed",
    "env.interaction_cost",
    "env.dead_end_wait",
    "env.sim_dt",
    "env.l_max",
    "env.episode_cap",
    "env.h_min",
    "env.h_max",
    "env.sigma",
    "env.human_speed_min",
    "env.human_speed_max",
    "rewards.r_nointer",
    "rewards.r_wronginter",
    "rewards.r_reached",
    "rewards.r_gmin",
    "rewards.w_n",
    "rewards.r_follow",
    "rewards.w_o",
    "rewards.r_optimal",
    "rewards.i_min",
    "train.learning_rate",
    "train.clip_epsilon",
    "train.gamma",
    "train.gae_lambda",
    "train.epochs_per_update",
    "train.minibatch_size",
    "train.horizon",
    "train.total_steps",
    "train.entropy_coef",
    "train.value_coef",
    "train.max_grad_norm",
    "train.reward_scale",
    "train.adam_beta1",
    "train.adam_beta2",
    "train.adam_eps",
    "train.hidden",
    "train.checkpoint_every",
    "train.seed",
    "affect.a_rep",
    "affect.a_hes",
    "affect.a_unc",
    "affect.corridor_run",
    "affect.fillers",
    "affect.hedges",
    "affect.repair_cues",
    "eval.episodes",
    "eval.seed",
    "eval.skeptical_threshold",
    "eval.high_trust_sigma_factor",
    "eval.low_trust_sigma_factor",
];

impl Config {
    /// Parses and validates TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.env;
        if e.rows < 2 {
            return Err(invalid("env.rows", "must be at least 2"));
        }
        if e.cols < 2 {
            return Err(invalid("env.cols", "must be at least 2"));
        }
        positive("env.cell_size", e.cell_size)?;
        positive("env.corridor_width", e.corridor_width)?;
        positive("env.human_radius", e.human_radius)?;
        positive("env.gateway_radius", e.gateway_radius)?;
        positive("env.robot_speed", e.robot_speed)?;
        positive("env.interaction_cost", e.interaction_cost)?;
        positive("env.dead_end_wait", e.dead_end_wait)?;
        positive("env.sim_dt", e.sim_dt)?;
        if e.gateway_radius * 2.0 >= e.cell_size {
            return Err(invalid(
                "env.gateway_radius",
                "must be below half the cell size",
            ));
        }
        if e.corridor_width >= e.cell_size {
            return Err(invalid("env.corridor_width", "must be below the cell size"));
        }
        if e.l_max == 0 || e.l_max > crate::env::SYMBOL_SLOTS {
            return Err(invalid(
                "env.l_max",
                format!("must be between 1 and {}", crate::env::SYMBOL_SLOTS),
            ));
        }
        if e.episode_cap == 0 {
            return Err(invalid("env.episode_cap", "must be positive"));
        }
        if e.h_min > e.h_max {
            return Err(invalid("env.h_min", "must not exceed env.h_max"));
        }
        if let Some(sigma) = e.sigma {
            positive("env.sigma", sigma)?;
        }
        positive("env.human_speed_min", e.human_speed_min)?;
        if e.human_speed_max < e.human_speed_min {
            return Err(invalid(
                "env.human_speed_max",
                "must not be below env.human_speed_min",
            ));
        }

        let r = &self.rewards;
        for (key, v) in [
            ("rewards.r_nointer", r.r_nointer),
            ("rewards.r_wronginter", r.r_wronginter),
            ("rewards.r_reached", r.r_reached),
            ("rewards.r_gmin", r.r_gmin),
            ("rewards.r_follow", r.r_follow),
            ("rewards.r_optimal", r.r_optimal),
        ] {
            finite(key, v)?;
        }
        non_negative("rewards.w_n", r.w_n)?;
        non_negative("rewards.w_o", r.w_o)?;

        let t = &self.train;
        positive("train.learning_rate", t.learning_rate)?;
        open_unit("train.clip_epsilon", t.clip_epsilon)?;
        half_open_unit("train.gamma", t.gamma)?;
        half_open_unit("train.gae_lambda", t.gae_lambda)?;
        if t.epochs_per_update == 0 {
            return Err(invalid("train.epochs_per_update", "must be positive"));
        }
        if t.minibatch_size == 0 {
            return Err(invalid("train.minibatch_size", "must be positive"));
        }
        if t.horizon == 0 {
            return Err(invalid("train.horizon", "must be positive"));
        }
        if t.total_steps < t.horizon {
            return Err(invalid(
                "train.total_steps",
                "must be at least train.horizon",
            ));
        }
        non_negative("train.entropy_coef", t.entropy_coef)?;
        non_negative("train.value_coef", t.value_coef)?;
        positive("train.max_grad_norm", t.max_grad_norm)?;
        positive("train.reward_scale", t.reward_scale)?;
        open_unit("train.adam_beta1", t.adam_beta1)?;
        open_unit("train.adam_beta2", t.adam_beta2)?;
        positive("train.adam_eps", t.adam_eps)?;
        if t.hidden.is_empty() || t.hidden.contains(&0) {
            return Err(invalid(
                "train.hidden",
                "needs at least one layer, all sizes positive",
            ));
        }
        if t.checkpoint_every == 0 {
            return Err(invalid("train.checkpoint_every", "must be positive"));
        }

        let a = &self.affect;
        probability("affect.a_rep", a.a_rep)?;
        probability("affect.a_hes", a.a_hes)?;
        probability("affect.a_unc", a.a_unc)?;
        for (key, v) in [
            ("affect.a_rep", a.a_rep),
            ("affect.a_hes", a.a_hes),
            ("affect.a_unc", a.a_unc),
        ] {
            if v == 0.0 {
                return Err(invalid(key, "must be strictly positive"));
            }
        }
        for (key, list) in [
            ("affect.fillers", &a.fillers),
            ("affect.hedges", &a.hedges),
            ("affect.repair_cues", &a.repair_cues),
        ] {
            if list.iter().any(|w| w.trim().is_empty()) {
                return Err(invalid(key, "lexicon entries must be non-empty"));
            }
        }

        let v = &self.eval;
        if v.episodes == 0 {
            return Err(invalid("eval.episodes", "must be at least 1"));
        }
        probability("eval.skeptical_threshold", v.skeptical_threshold)?;
        positive("eval.high_trust_sigma_factor", v.high_trust_sigma_factor)?;
        positive("eval.low_trust_sigma_factor", v.low_trust_sigma_factor)?;
        Ok(())
    }
}

fn finite(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be >= 0, got {v}")))
    }
}

fn probability(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(key, format!("must lie in [0, 1], got {v}")))
    }
}

fn open_unit(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must lie in (0, 1), got {v}")))
    }
}

fn half_open_unit(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must lie in (0, 1], got {v}")))
    }
}

/// A validated configuration together with the exact text it was loaded from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub source_text: String,
}

impl LoadedConfig {
    pub fn from_defaults() -> Self {
        let config = Config::default();
        let source_text = config.to_toml_string();
        Self {
            config,
            source_text,
        }
    }

    /// Writes the source text verbatim as `config.toml` inside `dir`.
    pub fn echo_into(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join("config.toml"), &self.source_text)
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = Config::from_toml_str(&text)?;
    Ok(LoadedConfig {
        config,
        source_text: text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn flatten(value: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
        if let toml::Value::Table(table) = value {
            for (k, v) in table {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                if prefix.is_empty() {
                    flatten(v, &key, out);
                } else {
                    out.insert(key);
                }
            }
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.env.l_max, 5);
        assert_eq!(c.env.episode_cap, 15);
        assert_eq!(c.affect.a_rep, 0.75);
        assert_eq!(c.affect.a_hes, 0.5);
        assert_eq!(c.affect.a_unc, 0.5);
    }

    #[test]
    fn explicit_l_max() {
        let c = Config::from_toml_str("[env]\nl_max = 5\n").unwrap();
        assert_eq!(c.env.l_max, 5);
    }

    #[test]
    fn negative_sigma_names_key() {
        let err = Config::from_toml_str("[env]\nsigma = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("env.sigma"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = Config::from_toml_str("[env]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(Config::from_toml_str("[nope]\nx = 1\n").is_err());
    }

    #[test]
    fn out_of_range_probability() {
        let err = Config::from_toml_str("[affect]\na_hes = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("affect.a_hes"));
        let err = Config::from_toml_str("[train]\nclip_epsilon = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("train.clip_epsilon"));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_config(Path::new("/nonexistent/trustnav.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }

    #[test]
    fn round_trip_is_identical() {
        let mut c = Config::default();
        c.env.sigma = Some(4.25);
        c.train.hidden = vec![32, 16];
        c.affect.hedges.push("kind of".into());
        let text = c.to_toml_string();
        let back = Config::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn documented_keys_cover_every_field() {
        let mut c = Config::default();
        c.env.sigma = Some(1.0);
        let value: toml::Value = toml::from_str(&c.to_toml_string()).unwrap();
        let mut keys = BTreeSet::new();
        flatten(&value, "", &mut keys);
        let documented: BTreeSet<String> = DOCUMENTED_KEYS.iter().map(|s| s.to_string()).collect();
        assert_eq!(keys, documented);
    }

    #[test]
    fn documented_keys_appear_in_docs() {
        let doc = include_str!("../../../docs/config.md");
        for key in DOCUMENTED_KEYS {
            let short = key.split('.').nth(1).unwrap();
            assert!(
                doc.contains(&format!("`{short}`")),
                "docs/config.md is missing {key}"
            );
        }
    }

    #[test]
    fn default_sigma_is_third_of_diagonal() {
        let e = EnvConfig::default();
        let diag = (10.0f64).hypot(10.0);
        assert!((e.effective_sigma() - diag / 3.0).abs() < 1e-12);
    }
}
