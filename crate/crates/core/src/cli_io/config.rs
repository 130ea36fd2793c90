//! JSON run configuration.
//!
//! ```json
//! {
//!   "problem":     { "generator": { "m": 100, "n": 50, ... }, "k": 4 },
//!   "confinement": { "lambda": 0.01, "kappa_fraction": 0.5, "alpha": 1.0, "epsilon": 0.25 },
//!   "schedule":    { "mode": "adaptive" },
//!   "run":         { "iterations": 10000, "eval_every": 10, "seed": 1 },
//!   "output":      { "metrics": "run.csv", "plot": "run.svg" }
//! }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::confinement::{max_squared_entry, ConfinementParams};
use crate::error::{Error, Result};
use crate::optimizer::{Schedule, X0Init, DEFAULT_EVAL_EVERY};
use crate::wlra::SparseWeightedMatrix;

use super::data::{generate_synthetic, ingest_csv, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Legend label; defaults to the metrics file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub problem: ProblemConfig,
    pub confinement: ConfinementConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub run: RunSection,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SyntheticSpec>,
    pub k: usize,
    #[serde(default)]
    pub x0: X0Init,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfinementConfig {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// `κ` as a fraction of `λ / (4k + 2λ²)`; exclusive with `kappa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_fraction: Option<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    #[default]
    Adaptive,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub mode: ScheduleMode,
    /// Decay constant of the deterministic schedule `κ·K/(K + t)`.
    #[serde(rename = "K", default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1e4
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: ScheduleMode::Adaptive,
            decay: default_decay(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub iterations: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval_every() -> u64 {
    DEFAULT_EVAL_EVERY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub metrics: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_fraction: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub mode: Option<ScheduleMode>,
    pub decay: Option<f64>,
    pub iterations: Option<u64>,
    pub eval_every: Option<u64>,
    pub seed: Option<u64>,
    pub metrics: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub label: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(d) = self.problem.data.as_mut() {
            fix(d);
        }
        fix(&mut self.output.metrics);
        if let Some(p) = self.output.plot.as_mut() {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.data {
            self.problem.data = Some(d.clone());
            self.problem.generator = None;
        }
        if let Some(k) = o.k {
            self.problem.k = k;
        }
        let c = &mut self.confinement;
        if let Some(v) = o.lambda {
            c.lambda = v;
        }
        if let Some(v) = o.kappa {
            c.kappa = Some(v);
            c.kappa_fraction = None;
        }
        if let Some(v) = o.kappa_fraction {
            c.kappa_fraction = Some(v);
            c.kappa = None;
        }
        if let Some(v) = o.alpha {
            c.alpha = v;
        }
        if let Some(v) = o.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = o.mode {
            self.schedule.mode = v;
        }
        if let Some(v) = o.decay {
            self.schedule.decay = v;
        }
        if let Some(v) = o.iterations {
            self.run.iterations = v;
        }
        if let Some(v) = o.eval_every {
            self.run.eval_every = v;
        }
        if let Some(v) = o.seed {
            self.run.seed = v;
        }
        if let Some(v) = &o.metrics {
            self.output.metrics = v.clone();
        }
        if let Some(v) = &o.plot {
            self.output.plot = Some(v.clone());
        }
        if let Some(v) = &o.label {
            self.label = Some(v.clone());
        }
    }

    /// Legend label for this run.
    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            self.output
                .metrics
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into())
        })
    }

    /// Structural checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        match (&self.problem.data, &self.problem.generator) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "problem: give either `data` or `generator`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "problem: one of `data` or `generator` is required".into(),
                ))
            }
            (None, Some(spec)) => spec.validate()?,
            (Some(_), None) => {}
        }
        if self.confinement.kappa.is_some() && self.confinement.kappa_fraction.is_some() {
            return Err(Error::Config(
                "confinement: give either `kappa` or `kappa_fraction`, not both".into(),
            ));
        }
        if let Some(f) = self.confinement.kappa_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Parameter(format!(
                    "0 < kappa_fraction < 1 violated: kappa_fraction = {f}"
                )));
            }
        }
        if self.run.iterations == 0 {
            return Err(Error::Config("run.iterations must be at least 1".into()));
        }
        if self.run.eval_every == 0 {
            return Err(Error::Config("run.eval_every must be at least 1".into()));
        }
        if self.schedule.mode == ScheduleMode::Deterministic && !(self.schedule.decay > 0.0) {
            return Err(Error::Parameter(format!(
                "schedule.K must be positive, got {}",
                self.schedule.decay
            )));
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<SparseWeightedMatrix> {
        match (&self.problem.data, &self.problem.generator) {
            (Some(path), None) => ingest_csv(path),
            (None, Some(spec)) => generate_synthetic(spec),
            _ => Err(Error::Config(
                "problem: exactly one of `data` or `generator` is required".into(),
            )),
        }
    }

    /// Derives the confinement bundle for `data` with initial `‖x0‖²`.
    pub fn derive_params(&self, data: &SparseWeightedMatrix, x0_norm_sq: f64) -> Result<ConfinementParams> {
        let c = &self.confinement;
        let k = self.problem.k;
        let kappa = match c.kappa_fraction {
            Some(f) => Some(f * crate::confinement::kappa_upper_bound(c.lambda, k)?),
            None => c.kappa,
        };
        let a = max_squared_entry(data)?;
        ConfinementParams::derive(c.lambda, k, a, kappa, c.alpha, c.epsilon, x0_norm_sq)?.with_overrides(c.rho0, c.rho1)
    }

    pub fn schedule(&self, params: &ConfinementParams) -> Schedule {
        match self.schedule.mode {
            ScheduleMode::Adaptive => Schedule::adaptive(params),
            ScheduleMode::Deterministic => Schedule::deterministic(params, self.schedule.decay),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "problem": { "generator": { "m": 10, "n": 8, "true_rank": 2, "observed_fraction": 0.5,
                                    "noise_std": 0.0, "seed": 3 }, "k": 2 },
        "confinement": { "lambda": 0.01, "alpha": 1.0, "epsilon": 0.25 },
        "run": { "iterations": 100, "seed": 4 },
        "output": { "metrics": "out/m.csv" }
    }"#;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.schedule.mode, ScheduleMode::Adaptive);
        assert_eq!(cfg.schedule.decay, 1e4);
        assert_eq!(cfg.run.eval_every, DEFAULT_EVAL_EVERY);
        assert_eq!(cfg.problem.x0, X0Init::Matched);
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn omitted_kappa_defaults_to_tenth_of_bound() {
        let cfg = RunConfig::from_json(SAMPLE).unwrap();
        let data = cfg.load_data().unwrap();
        let p = cfg.derive_params(&data, 0.0).unwrap();
        assert!((p.kappa - 0.1 * p.kappa_bound()).abs() <= 1e-15 * p.kappa);
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::from_json(SAMPLE).unwrap();
        cfg.apply(&Overrides {
            lambda: Some(0.5),
            kappa_fraction: Some(0.3),
            iterations: Some(7),
            mode: Some(ScheduleMode::Deterministic),
            ..Default::default()
        });
        assert_eq!(cfg.confinement.lambda, 0.5);
        assert_eq!(cfg.confinement.kappa_fraction, Some(0.3));
        assert_eq!(cfg.run.iterations, 7);
        assert_eq!(cfg.schedule.mode, ScheduleMode::Deterministic);
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut cfg = RunConfig::from_json(SAMPLE).unwrap();
        cfg.resolve_paths(Path::new("/tmp/cfg"));
        assert_eq!(cfg.output.metrics, PathBuf::from("/tmp/cfg/out/m.csv"));
    }

    #[test]
    fn malformed_and_ambiguous_configs() {
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Parse { .. })));
        assert!(RunConfig::from_json(&SAMPLE.replace("\"k\": 2", "\"k\": 2, \"extra\": 1")).is_err());
        let mut cfg = RunConfig::from_json(SAMPLE).unwrap();
        cfg.problem.data = Some("x.csv".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::from_json(SAMPLE).unwrap();
        cfg.confinement.kappa = Some(1e-3);
        cfg.confinement.kappa_fraction = Some(0.5);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn kappa_above_bound_names_inequality() {
        let mut cfg = RunConfig::from_json(SAMPLE).unwrap();
        cfg.confinement.kappa = Some(1.0);
        let data = cfg.load_data().unwrap();
        let err = cfg.derive_params(&data, 0.0).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("0 < κ < λ/(4k+2λ²)"), "{err}");
    }
}
