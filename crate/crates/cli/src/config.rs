//! Flat `key: value` run configuration.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! `env` and `method` are required, every other key falls back to the
//! library defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mep_core::envs::EnvKind;
use mep_core::replay::HerStrategy;
use mep_core::trainer::{Method, TrainConfig};
use mep_core::MepError;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key: value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { key: String, line: usize },
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Invalid(#[from] MepError),
}

/// Every accepted key, in the order [`render_config`] writes them.
pub const KEYS: [&str; 31] = [
    "env",
    "method",
    "epochs",
    "episodes_per_epoch",
    "optimization_steps",
    "target_update_interval",
    "batch_size",
    "seed",
    "buffer_capacity",
    "eval_episodes",
    "density_components",
    "density_max_iters",
    "density_tol",
    "density_fit_samples",
    "her_strategy",
    "relabel_prob",
    "per_alpha",
    "per_beta_start",
    "per_beta_end",
    "per_priority_floor",
    "hidden",
    "gamma",
    "polyak",
    "noise_sigma",
    "random_eps",
    "action_l2",
    "norm_clip",
    "actor_lr",
    "critic_lr",
    "entropy_resolution",
    "pearson_interval",
];

/// Parses `key: value` lines into a map, rejecting unknown and repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line: i + 1,
            });
        }
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn apply(cfg: &mut TrainConfig, key: &str, v: &str) -> Result<(), ConfigError> {
    const INT: &str = "a non-negative integer";
    const REAL: &str = "a number";
    match key {
        "env" => cfg.env = parse::<EnvKind>(key, v, "an environment name")?,
        "method" => cfg.method = parse::<Method>(key, v, "a method name")?,
        "epochs" => cfg.epochs = parse(key, v, INT)?,
        "episodes_per_epoch" => cfg.episodes_per_epoch = parse(key, v, INT)?,
        "optimization_steps" => cfg.optimization_steps = parse(key, v, INT)?,
        "target_update_interval" => cfg.target_update_interval = parse(key, v, INT)?,
        "batch_size" => cfg.batch_size = parse(key, v, INT)?,
        "seed" => cfg.seed = parse(key, v, INT)?,
        "buffer_capacity" => cfg.buffer_capacity = parse(key, v, INT)?,
        "eval_episodes" => cfg.eval_episodes = parse(key, v, INT)?,
        "density_components" => cfg.density.components = parse(key, v, INT)?,
        "density_max_iters" => cfg.density.max_iters = parse(key, v, INT)?,
        "density_tol" => cfg.density.tol = parse(key, v, REAL)?,
        "density_fit_samples" => cfg.density_fit_samples = parse(key, v, INT)?,
        "her_strategy" => cfg.her.strategy = parse::<HerStrategy>(key, v, "`future` or `final`")?,
        "relabel_prob" => cfg.her.relabel_prob = parse(key, v, REAL)?,
        "per_alpha" => cfg.per.alpha = parse(key, v, REAL)?,
        "per_beta_start" => cfg.per.beta_start = parse(key, v, REAL)?,
        "per_beta_end" => cfg.per.beta_end = parse(key, v, REAL)?,
        "per_priority_floor" => cfg.per.priority_floor = parse(key, v, REAL)?,
        "hidden" => {
            cfg.agent.hidden = v
                .split(',')
                .map(|h| parse(key, h.trim(), "a comma-separated list of layer sizes"))
                .collect::<Result<_, _>>()?
        }
        "gamma" => cfg.agent.gamma = parse(key, v, REAL)?,
        "polyak" => cfg.agent.polyak = parse(key, v, REAL)?,
        "noise_sigma" => cfg.agent.noise_sigma = parse(key, v, REAL)?,
        "random_eps" => cfg.agent.random_eps = parse(key, v, REAL)?,
        "action_l2" => cfg.agent.action_l2 = parse(key, v, REAL)?,
        "norm_clip" => cfg.agent.norm_clip = parse(key, v, REAL)?,
        "actor_lr" => cfg.agent.actor_lr = parse(key, v, REAL)?,
        "critic_lr" => cfg.agent.critic_lr = parse(key, v, REAL)?,
        "entropy_resolution" => cfg.entropy_resolution = parse(key, v, INT)?,
        "pearson_interval" => cfg.pearson_interval = parse(key, v, INT)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

/// Builds a config from an optional file and flag overrides, which win over
/// file values.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(&str, String)],
) -> Result<TrainConfig, ConfigError> {
    let mut pairs = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            parse_pairs(&text)?
        }
        None => BTreeMap::new(),
    };
    for (k, v) in overrides {
        if !KEYS.contains(k) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        pairs.insert(k.to_string(), v.clone());
    }
    let env = pairs.get("env").ok_or(ConfigError::Missing("env"))?;
    let method = pairs.get("method").ok_or(ConfigError::Missing("method"))?;
    let mut cfg = TrainConfig::new(
        parse("env", env, "an environment name")?,
        parse("method", method, "a method name")?,
    );
    for (k, v) in &pairs {
        apply(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The full config as `key: value` lines in [`KEYS`] order; parsing the
/// result gives back the same config.
pub fn render_config(cfg: &TrainConfig) -> String {
    let hidden: Vec<String> = cfg.agent.hidden.iter().map(|h| h.to_string()).collect();
    let her = match cfg.her.strategy {
        HerStrategy::Future => "future",
        HerStrategy::Final => "final",
    };
    let values: [String; 31] = [
        cfg.env.to_string(),
        cfg.method.to_string(),
        cfg.epochs.to_string(),
        cfg.episodes_per_epoch.to_string(),
        cfg.optimization_steps.to_string(),
        cfg.target_update_interval.to_string(),
        cfg.batch_size.to_string(),
        cfg.seed.to_string(),
        cfg.buffer_capacity.to_string(),
        cfg.eval_episodes.to_string(),
        cfg.density.components.to_string(),
        cfg.density.max_iters.to_string(),
        cfg.density.tol.to_string(),
        cfg.density_fit_samples.to_string(),
        her.to_string(),
        cfg.her.relabel_prob.to_string(),
        cfg.per.alpha.to_string(),
        cfg.per.beta_start.to_string(),
        cfg.per.beta_end.to_string(),
        cfg.per.priority_floor.to_string(),
        hidden.join(","),
        cfg.agent.gamma.to_string(),
        cfg.agent.polyak.to_string(),
        cfg.agent.noise_sigma.to_string(),
        cfg.agent.random_eps.to_string(),
        cfg.agent.action_l2.to_string(),
        cfg.agent.norm_clip.to_string(),
        cfg.agent.actor_lr.to_string(),
        cfg.agent.critic_lr.to_string(),
        cfg.entropy_resolution.to_string(),
        cfg.pearson_interval.to_string(),
    ];
    KEYS.iter()
        .zip(values)
        .map(|(k, v)| format!("{k}: {v}\n"))
        .collect()
}
