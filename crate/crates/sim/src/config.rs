//! Scenario configuration files.
//!
//! See `docs/config.md` for the schema; the files under `scenarios/` are
//! the reference examples.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snow_core::protocol::{ColoringPolicy, NodeConfig};
use snow_core::Millis;

use crate::latency::{LatencyParams, ProcDelayMode};
use crate::metrics::Scope;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] serde_json::Error),
    #[error("field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Snow,
    SnowColored,
    Flood,
    Gossip,
    Plumtree,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Snow,
        Algorithm::SnowColored,
        Algorithm::Flood,
        Algorithm::Gossip,
        Algorithm::Plumtree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Snow => "snow",
            Algorithm::SnowColored => "snow_colored",
            Algorithm::Flood => "flood",
            Algorithm::Gossip => "gossip",
            Algorithm::Plumtree => "plumtree",
        }
    }

    pub fn is_snow(self) -> bool {
        matches!(self, Algorithm::Snow | Algorithm::SnowColored)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginChoice {
    /// A seeded-random fixed node per message.
    #[default]
    Random,
    /// Always the first node.
    Fixed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColoringChoice {
    #[default]
    Auto,
    Always,
    Never,
}

impl From<ColoringChoice> for ColoringPolicy {
    fn from(c: ColoringChoice) -> Self {
        match c {
            ColoringChoice::Auto => ColoringPolicy::Auto,
            ColoringChoice::Always => ColoringPolicy::Always,
            ColoringChoice::Never => ColoringPolicy::Never,
        }
    }
}

/// A scripted action. Node numbers index the initial population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Broadcast {
        at: Millis,
        origin: usize,
        #[serde(default)]
        size: Option<u32>,
        #[serde(default)]
        reliable: Option<bool>,
    },
    Crash {
        at: Millis,
        node: usize,
    },
    /// Adds a fresh node.
    Join {
        at: Millis,
    },
    /// Graceful departure. `node` indexes the initial population, or the
    /// joiners when `joiner` is set.
    Leave {
        at: Millis,
        node: usize,
        #[serde(default)]
        joiner: bool,
    },
}

impl Action {
    pub fn at(&self) -> Millis {
        match self {
            Action::Broadcast { at, .. } | Action::Crash { at, .. } | Action::Join { at } | Action::Leave { at, .. } => *at,
        }
    }
}

/// Join one node, broadcast `messages` while it settles in, then remove it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Churn {
    pub cycles: usize,
}

/// Crash a node of the broadcast tree when it delivers message `msg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashPlan {
    pub msg: usize,
    #[serde(default = "one")]
    pub depth: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub k: Option<Vec<usize>>,
}

/// Protocol timer overrides, all in ms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timers {
    pub probe_period_ms: Option<Millis>,
    pub probe_timeout_ms: Option<Millis>,
    pub suspect_timeout_ms: Option<Millis>,
    pub sync_period_ms: Option<Millis>,
    pub linger_ms: Option<Millis>,
    pub tombstone_ttl_ms: Option<Millis>,
    pub root_timeout_ms: Option<Millis>,
    pub max_hop_delay_ms: Option<Millis>,
    pub max_attempts: Option<u32>,
    pub stability_window_ms: Option<Millis>,
    pub failure_detector: Option<bool>,
    pub anti_entropy: Option<bool>,
    /// Plumtree: wait after an IHAVE before grafting.
    pub missing_ms: Option<Millis>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub algorithm: OneOrMany<Algorithm>,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Seeds to run; `seed` alone when empty.
    #[serde(default)]
    pub replications: Vec<u64>,
    /// Messages per run, or per cycle when `churn` is set.
    #[serde(default = "one_usize")]
    pub messages: usize,
    #[serde(default = "default_size")]
    pub message_size_bytes: u32,
    #[serde(default = "default_interval")]
    pub message_interval_ms: Millis,
    #[serde(default = "default_interval")]
    pub start_ms: Millis,
    #[serde(default = "default_straggler_fraction")]
    pub straggler_fraction: f64,
    #[serde(default = "default_straggler_delay")]
    pub straggler_delay_ms: Millis,
    #[serde(default = "default_proc")]
    pub proc_delay_ms: [Millis; 2],
    #[serde(default)]
    pub proc_delay_mode: ProcDelayMode,
    #[serde(default)]
    pub net_delay_ms: Millis,
    #[serde(default)]
    pub reliable: bool,
    /// Ask for colored broadcasts with any Snow algorithm.
    #[serde(default)]
    pub colored: bool,
    #[serde(default)]
    pub origin: OriginChoice,
    #[serde(default)]
    pub script: Vec<Action>,
    #[serde(default)]
    pub churn: Option<Churn>,
    #[serde(default)]
    pub crash: Option<CrashPlan>,
    #[serde(default)]
    pub timers: Timers,
    #[serde(default)]
    pub coloring: ColoringChoice,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default = "default_drain")]
    pub drain_ms: Millis,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_size() -> u32 {
    100
}
fn default_interval() -> Millis {
    1000
}
fn default_straggler_fraction() -> f64 {
    0.05
}
fn default_straggler_delay() -> Millis {
    1000
}
fn default_proc() -> [Millis; 2] {
    [10, 200]
}
fn default_drain() -> Millis {
    30_000
}

impl ScenarioConfig {
    /// Defaults for everything but the essentials.
    pub fn new(algorithm: Algorithm, n: usize, k: usize) -> Self {
        ScenarioConfig {
            name: None,
            algorithm: OneOrMany::One(algorithm),
            n,
            k,
            seed: default_seed(),
            replications: Vec::new(),
            messages: 1,
            message_size_bytes: default_size(),
            message_interval_ms: default_interval(),
            start_ms: default_interval(),
            straggler_fraction: default_straggler_fraction(),
            straggler_delay_ms: default_straggler_delay(),
            proc_delay_ms: default_proc(),
            proc_delay_mode: ProcDelayMode::default(),
            net_delay_ms: 0,
            reliable: false,
            colored: false,
            origin: OriginChoice::default(),
            script: Vec::new(),
            churn: None,
            crash: None,
            timers: Timers::default(),
            coloring: ColoringChoice::default(),
            scope: Scope::default(),
            drain_ms: default_drain(),
            sweep: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a file. The scenario name defaults to the file
    /// stem.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.algorithm.to_vec()
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.replications.is_empty() {
            vec![self.seed]
        } else {
            self.replications.clone()
        }
    }

    /// `(n, k)` cells to run: the sweep grid, or just `(n, k)`.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let sweep = self.sweep.clone().unwrap_or_default();
        let ns = sweep.n.unwrap_or_else(|| vec![self.n]);
        let ks = sweep.k.unwrap_or_else(|| vec![self.k]);
        ns.iter().flat_map(|&n| ks.iter().map(move |&k| (n, k))).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.algorithms().is_empty() {
            return Err(invalid("algorithm", "no algorithm given"));
        }
        for (n, k) in self.cells() {
            if n < 1 {
                return Err(invalid("n", "must be at least 1"));
            }
            if k < 2 || k % 2 != 0 {
                return Err(invalid("k", format!("must be even and at least 2, got {k}")));
            }
        }
        if self.messages < 1 {
            return Err(invalid("messages", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.straggler_fraction) {
            return Err(invalid("straggler_fraction", "must lie in [0, 1)"));
        }
        if self.proc_delay_ms[0] > self.proc_delay_ms[1] {
            return Err(invalid("proc_delay_ms", "min exceeds max"));
        }
        if self.message_interval_ms == 0 {
            return Err(invalid("message_interval_ms", "must be positive"));
        }
        if matches!(self.churn, Some(Churn { cycles: 0 })) {
            return Err(invalid("churn", "cycles must be at least 1"));
        }
        if let Some(c) = self.crash {
            if c.msg >= self.messages {
                return Err(invalid("crash", "msg is beyond the last message"));
            }
            if c.depth < 1 {
                return Err(invalid("crash", "depth must be at least 1"));
            }
        }
        if self.timers.max_attempts == Some(0) {
            return Err(invalid("timers", "max_attempts must be at least 1"));
        }
        let min_n = self.cells().iter().map(|c| c.0).min().unwrap_or(self.n);
        let joins = self.script.iter().filter(|a| matches!(a, Action::Join { .. })).count();
        for a in &self.script {
            match *a {
                Action::Broadcast { origin: i, .. } | Action::Crash { node: i, .. } if i >= min_n => {
                    return Err(invalid("script", format!("unknown node {i}")));
                }
                Action::Leave { node, joiner, .. } if (!joiner && node >= min_n) || (joiner && node >= joins) => {
                    return Err(invalid("script", format!("unknown node {node}")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn latency(&self) -> LatencyParams {
        LatencyParams {
            proc_min: self.proc_delay_ms[0],
            proc_max: self.proc_delay_ms[1],
            straggler_fraction: self.straggler_fraction,
            straggler_delay: self.straggler_delay_ms,
            net_delay: self.net_delay_ms,
            mode: self.proc_delay_mode,
        }
    }

    pub fn node_config(&self, k: usize) -> NodeConfig {
        let t = &self.timers;
        let mut c = NodeConfig::new(snow_core::Fanout::new(k).expect("validated"));
        c.probe_period = t.probe_period_ms.unwrap_or(c.probe_period);
        c.probe_timeout = t.probe_timeout_ms.unwrap_or(c.probe_timeout);
        c.suspect_timeout = t.suspect_timeout_ms.unwrap_or(c.suspect_timeout);
        c.sync_period = t.sync_period_ms.unwrap_or(c.sync_period);
        c.linger = t.linger_ms.unwrap_or(c.linger);
        c.tombstone_ttl = t.tombstone_ttl_ms.unwrap_or(c.tombstone_ttl);
        c.root_timeout = t.root_timeout_ms.or(c.root_timeout);
        c.max_hop_delay = t.max_hop_delay_ms.unwrap_or(c.max_hop_delay);
        c.max_attempts = t.max_attempts.unwrap_or(c.max_attempts);
        c.stability_window = t.stability_window_ms.unwrap_or(c.stability_window);
        c.failure_detector = t.failure_detector.unwrap_or(c.failure_detector);
        c.anti_entropy = t.anti_entropy.unwrap_or(c.anti_entropy);
        c.coloring = self.coloring.into();
        c
    }

    pub fn missing_timeout(&self) -> Millis {
        self.timers.missing_ms.unwrap_or(1000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ScenarioConfig::from_json(r#"{"algorithm":"snow","n":10,"k":4}"#).unwrap();
        assert_eq!(c.algorithms(), vec![Algorithm::Snow]);
        assert_eq!(c.proc_delay_ms, [10, 200]);
        assert_eq!(c.seeds(), vec![1]);
        assert_eq!(c.drain_ms, 30_000);
    }

    #[test]
    fn rejects_odd_k_and_unknown_fields() {
        let e = ScenarioConfig::from_json(r#"{"algorithm":"snow","n":10,"k":3}"#).unwrap_err();
        assert!(e.to_string().contains("`k`"), "{e}");
        assert!(ScenarioConfig::from_json(r#"{"algorithm":"snow","n":10,"k":4,"fanout":4}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"algorithm":"snow","n":10,"k":4,"straggler_fraction":1.0}"#).is_err());
    }

    #[test]
    fn script_and_lists_parse() {
        let c = ScenarioConfig::from_json(
            r#"{"algorithm":["snow","gossip"],"n":8,"k":2,
                "script":[{"action":"crash","at":5,"node":3},{"action":"join","at":9}],
                "sweep":{"n":[4,8]}}"#,
        )
        .unwrap();
        assert_eq!(c.algorithms().len(), 2);
        assert_eq!(c.script[0], Action::Crash { at: 5, node: 3 });
        assert_eq!(c.cells(), vec![(4, 2), (8, 2)]);
        assert!(ScenarioConfig::from_json(r#"{"algorithm":"snow","n":4,"k":2,"script":[{"action":"crash","at":5,"node":4}]}"#).is_err());
    }
}
