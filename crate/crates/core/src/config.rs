//! Plain `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! repeated keys are errors so typos never pass silently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::reward::Component;
use crate::toy::{Difficulty, ToyTrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {message}")]
    BadValue { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ordered key/value pairs as written in the file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(syntax("empty key".into()));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(syntax(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Applies every key to `cfg`. Values already set by the caller are
    /// overwritten, so apply command-line overrides afterwards.
    pub fn apply(&self, cfg: &mut ToyTrainConfig) -> Result<(), ConfigError> {
        for (k, v) in self.iter() {
            apply_key(cfg, k, v)?;
        }
        Ok(())
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn component(key: &str, name: &str) -> Result<Component, ConfigError> {
    name.trim()
        .parse()
        .map_err(|e: crate::reward::RewardError| ConfigError::BadValue {
            key: key.to_string(),
            message: e.to_string(),
        })
}

pub fn apply_key(cfg: &mut ToyTrainConfig, key: &str, v: &str) -> Result<(), ConfigError> {
    match key {
        "group_size" => cfg.grpo.group_size = value(key, v)?,
        "clip_epsilon" => cfg.grpo.clip_epsilon = value(key, v)?,
        "kl_beta" => cfg.grpo.kl_beta = value(key, v)?,
        "learning_rate" => cfg.grpo.learning_rate = value(key, v)?,
        "steps" => cfg.grpo.steps = value(key, v)?,
        "seed" => cfg.grpo.seed = value(key, v)?,
        "iou_threshold" => cfg.reward.iou_threshold = value(key, v)?,
        "l1_threshold" => cfg.reward.l1_threshold = value(key, v)?,
        "similarity_threshold" => cfg.reward.similarity_threshold = value(key, v)?,
        "difficulty" => cfg.difficulty = value::<Difficulty>(key, v)?,
        "batch_size" => cfg.batch_size = value(key, v)?,
        "train_scenes" => cfg.train_scenes = value(key, v)?,
        "eval_scenes" => cfg.eval_scenes = value(key, v)?,
        "min_targets" => cfg.min_targets = value(key, v)?,
        "enabled" => {
            let comps = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| component(key, s))
                .collect::<Result<Vec<_>, _>>()?;
            cfg.reward.set_enabled_exactly(comps);
        }
        _ => match key.strip_prefix("weight.") {
            Some(name) => {
                let c = component(key, name)?;
                cfg.reward.set_weight(c, value(key, v)?);
            }
            None => return Err(ConfigError::UnknownKey(key.to_string())),
        },
    }
    Ok(())
}

/// Renders `cfg` in the same format [`ConfigMap::parse`] accepts; parsing
/// and applying the snapshot reproduces `cfg` exactly.
pub fn snapshot(cfg: &ToyTrainConfig) -> String {
    let mut s = String::new();
    let g = &cfg.grpo;
    let r = &cfg.reward;
    let _ = writeln!(s, "difficulty = {}", cfg.difficulty.as_str());
    let _ = writeln!(s, "group_size = {}", g.group_size);
    let _ = writeln!(s, "clip_epsilon = {:?}", g.clip_epsilon);
    let _ = writeln!(s, "kl_beta = {:?}", g.kl_beta);
    let _ = writeln!(s, "learning_rate = {:?}", g.learning_rate);
    let _ = writeln!(s, "steps = {}", g.steps);
    let _ = writeln!(s, "seed = {}", g.seed);
    let _ = writeln!(s, "batch_size = {}", cfg.batch_size);
    let _ = writeln!(s, "train_scenes = {}", cfg.train_scenes);
    let _ = writeln!(s, "eval_scenes = {}", cfg.eval_scenes);
    let _ = writeln!(s, "min_targets = {}", cfg.min_targets);
    let _ = writeln!(s, "iou_threshold = {:?}", r.iou_threshold);
    let _ = writeln!(s, "l1_threshold = {:?}", r.l1_threshold);
    let _ = writeln!(s, "similarity_threshold = {:?}", r.similarity_threshold);
    let enabled: Vec<&str> = r.enabled().map(|c| c.as_str()).collect();
    let _ = writeln!(s, "enabled = {}", enabled.join(","));
    for c in Component::ALL {
        let _ = writeln!(s, "weight.{} = {:?}", c.as_str(), r.weight(c));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_apply() {
        let text = "# comment\n\nsteps = 12\nlearning_rate=0.5\nweight.box_num = 2\nenabled = format_think, iou\n";
        let mut cfg = ToyTrainConfig::for_difficulty(Difficulty::Easy);
        ConfigMap::parse(text).unwrap().apply(&mut cfg).unwrap();
        assert_eq!(cfg.grpo.steps, 12);
        assert_eq!(cfg.grpo.learning_rate, 0.5);
        assert_eq!(cfg.reward.weight(Component::BoxNum), 2.0);
        assert_eq!(
            cfg.reward.enabled().collect::<Vec<_>>(),
            vec![Component::FormatThink, Component::Iou]
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ConfigMap::parse("steps"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            ConfigMap::parse("a=1\na=2"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        let mut cfg = ToyTrainConfig::for_difficulty(Difficulty::Easy);
        let m = ConfigMap::parse("stepz = 3").unwrap();
        assert!(matches!(m.apply(&mut cfg), Err(ConfigError::UnknownKey(_))));
        let m = ConfigMap::parse("steps = many").unwrap();
        assert!(matches!(
            m.apply(&mut cfg),
            Err(ConfigError::BadValue { .. })
        ));
        let m = ConfigMap::parse("weight.shape = 1").unwrap();
        assert!(matches!(
            m.apply(&mut cfg),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ToyTrainConfig::for_difficulty(Difficulty::Hard);
        cfg.grpo.kl_beta = 0.04;
        cfg.grpo.learning_rate = 0.1 + 0.2;
        cfg.reward.set_enabled(Component::Recognition, false);
        cfg.reward.set_weight(Component::L1, 0.25);
        let mut back = ToyTrainConfig::for_difficulty(Difficulty::Easy);
        ConfigMap::parse(&snapshot(&cfg))
            .unwrap()
            .apply(&mut back)
            .unwrap();
        assert_eq!(back, cfg);
    }
}
