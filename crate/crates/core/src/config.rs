//! Run configuration, read from TOML.
//!
//! ```toml
//! sensors = 4
//! walk_length = 2
//! support_size = 64
//! epsilon = 0.1
//! budget = 960
//! seeds = [0, 1, 2]
//! algorithms = ["d2fas", "full-gp-centralized"]
//! output = "metrics.csv"
//!
//! [network]
//! kind = "random"      # grid | ring | random, or `path = "net.csv"`
//! size = 775
//! seed = 1
//!
//! [kernel]
//! signal_variance = 420.25
//! length_scale = 3.0   # or length_scales = [..], one per embedding axis
//! noise_variance = 1.0
//!
//! [phenomenon]
//! mean = 48.8
//! std = 20.5
//! match_moments = true # or `file = "truth.csv"`
//! seed = 0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALGORITHMS: [&str; 3] = ["d2fas", "full-gp-centralized", "sod-centralized"];
pub const NETWORK_KINDS: [&str; 3] = ["grid", "ring", "random"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub signal_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    /// One per embedding axis; takes precedence over `length_scale`.
    pub length_scales: Option<Vec<f64>>,
    pub noise_variance: f64,
    /// Embedding dimension; chosen from the eigenvalue mass when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dimension: Option<usize>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            signal_variance: 420.25,
            length_scale: Some(3.0),
            length_scales: None,
            noise_variance: 1.0,
            embedding_dimension: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhenomenonConfig {
    pub mean: f64,
    pub std: f64,
    /// Rescale each sample to exactly `mean` and `std`.
    #[serde(default)]
    pub match_moments: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Seed of the sampled ground truth; the run seeds only move sensors
    /// and draw noise.
    #[serde(default)]
    pub seed: u64,
}

impl Default for PhenomenonConfig {
    fn default() -> Self {
        Self { mean: 48.8, std: 20.5, match_moments: true, file: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sensor_counts: Vec<usize>,
    pub observations: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { sensor_counts: vec![2, 4, 8], observations: 960, repetitions: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sensors: usize,
    pub walk_length: usize,
    pub support_size: usize,
    pub epsilon: f64,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Probability that a local summary broadcast is lost (0 = reliable).
    #[serde(default)]
    pub drop_probability: f64,
    /// Record wall-clock columns; zeros otherwise, which makes tables
    /// bit-reproducible.
    #[serde(default = "yes")]
    pub record_timing: bool,
    pub network: NetworkSource,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub phenomenon: PhenomenonConfig,
    #[serde(default)]
    pub bench: BenchConfig,
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sensors: 4,
            walk_length: 2,
            support_size: 64,
            epsilon: 0.1,
            budget: 960,
            seeds: (0..10).collect(),
            algorithms: vec!["d2fas".into(), "full-gp-centralized".into()],
            output: None,
            drop_probability: 0.0,
            record_timing: true,
            network: NetworkSource { path: None, kind: Some("random".into()), size: Some(775), seed: 1 },
            kernel: KernelConfig::default(),
            phenomenon: PhenomenonConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

const TOP_KEYS: [&str; 14] = [
    "sensors",
    "walk_length",
    "support_size",
    "epsilon",
    "budget",
    "seeds",
    "algorithms",
    "output",
    "drop_probability",
    "record_timing",
    "network",
    "kernel",
    "phenomenon",
    "bench",
];
const NETWORK_KEYS: [&str; 4] = ["path", "kind", "size", "seed"];
const KERNEL_KEYS: [&str; 5] = ["signal_variance", "length_scale", "length_scales", "noise_variance", "embedding_dimension"];
const PHENOMENON_KEYS: [&str; 5] = ["mean", "std", "match_moments", "file", "seed"];
const BENCH_KEYS: [&str; 3] = ["sensor_counts", "observations", "repetitions"];

impl RunConfig {
    /// Parses and validates, reporting every problem found.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        let mut errors = Vec::new();
        unknown_keys(&table, "", &TOP_KEYS, &mut errors);
        for (section, keys) in [
            ("network", &NETWORK_KEYS[..]),
            ("kernel", &KERNEL_KEYS[..]),
            ("phenomenon", &PHENOMENON_KEYS[..]),
            ("bench", &BENCH_KEYS[..]),
        ] {
            if let Some(toml::Value::Table(t)) = table.get(section) {
                unknown_keys(t, section, keys, &mut errors);
            }
        }
        if let Some(toml::Value::Array(algos)) = table.get("algorithms") {
            for a in algos {
                if let Some(name) = a.as_str() {
                    if !ALGORITHMS.contains(&name) {
                        errors.push(format!(
                            "unknown algorithm `{name}`; valid names are {}",
                            ALGORITHMS.join(", ")
                        ));
                    }
                }
            }
        }
        if !errors.is_empty() {
            // still report value problems alongside key problems
            if let Ok(cfg) = toml::from_str::<RunConfig>(&strip(&table)) {
                errors.extend(cfg.problems().into_iter().filter(|p| !p.starts_with("unknown algorithm")));
            }
            return Err(Error::Config(errors));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative file paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.network.path);
        fix(&mut self.phenomenon.file);
        fix(&mut self.output);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Every violated constraint, in a fixed order.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.sensors < 1 {
            p.push("sensors must be at least 1".into());
        }
        if self.walk_length < 1 {
            p.push("walk_length must be at least 1".into());
        }
        if self.support_size < 1 {
            p.push("support_size must be at least 1".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            p.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.seeds.is_empty() {
            p.push("seeds must not be empty".into());
        }
        let seeds = self.seeds.iter().chain([&self.network.seed, &self.phenomenon.seed]);
        if seeds.into_iter().any(|&s| s > i64::MAX as u64) {
            p.push(format!("seeds must be at most {}", i64::MAX));
        }
        if self.algorithms.is_empty() {
            p.push("algorithms must not be empty".into());
        }
        for a in &self.algorithms {
            if !ALGORITHMS.contains(&a.as_str()) {
                p.push(format!("unknown algorithm `{a}`; valid names are {}", ALGORITHMS.join(", ")));
            }
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            p.push(format!("drop_probability must lie in [0, 1), got {}", self.drop_probability));
        }
        match (&self.network.path, &self.network.kind) {
            (Some(_), Some(_)) => p.push("network: give either `path` or `kind`, not both".into()),
            (None, None) => p.push("network: one of `path` or `kind` is required".into()),
            (None, Some(kind)) => {
                if !NETWORK_KINDS.contains(&kind.as_str()) {
                    p.push(format!("network kind `{kind}` is not one of {}", NETWORK_KINDS.join(", ")));
                }
                if self.network.size.is_none_or(|s| s < 1) {
                    p.push("network size must be at least 1".into());
                }
            }
            (Some(_), None) => {}
        }
        let k = &self.kernel;
        if !(k.signal_variance > 0.0) {
            p.push(format!("kernel signal_variance must be positive, got {}", k.signal_variance));
        }
        if !(k.noise_variance >= 0.0) {
            p.push(format!("kernel noise_variance must be nonnegative, got {}", k.noise_variance));
        }
        match (k.length_scale, &k.length_scales) {
            (None, None) => p.push("kernel: a length-scale is required".into()),
            (Some(l), None) if !(l > 0.0) => p.push(format!("kernel length_scale must be positive, got {l}")),
            (_, Some(ls)) if ls.is_empty() || ls.iter().any(|l| !(*l > 0.0)) => {
                p.push("kernel length_scales must all be positive".into())
            }
            _ => {}
        }
        if k.embedding_dimension == Some(0) {
            p.push("kernel embedding_dimension must be at least 1".into());
        }
        if !(self.phenomenon.std > 0.0) {
            p.push(format!("phenomenon std must be positive, got {}", self.phenomenon.std));
        }
        if self.bench.sensor_counts.iter().any(|&k| k < 1) {
            p.push("bench sensor_counts must be at least 1".into());
        }
        if self.bench.repetitions < 1 {
            p.push("bench repetitions must be at least 1".into());
        }
        p
    }
}

fn unknown_keys(table: &toml::Table, section: &str, known: &[&str], errors: &mut Vec<String>) {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            let name = if section.is_empty() { key.clone() } else { format!("{section}.{key}") };
            errors.push(format!("unknown key `{name}`"));
        }
    }
}

/// Serializes `table` with unknown keys removed.
fn strip(table: &toml::Table) -> String {
    let mut t = table.clone();
    t.retain(|k, _| TOP_KEYS.iter().any(|x| *x == k));
    for (section, keys) in [
        ("network", &NETWORK_KEYS[..]),
        ("kernel", &KERNEL_KEYS[..]),
        ("phenomenon", &PHENOMENON_KEYS[..]),
        ("bench", &BENCH_KEYS[..]),
    ] {
        if let Some(toml::Value::Table(s)) = t.get_mut(section) {
            s.retain(|k, _| keys.iter().any(|x| *x == k));
        }
    }
    toml::to_string(&t).unwrap_or_default()
}
