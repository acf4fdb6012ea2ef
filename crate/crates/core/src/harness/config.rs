//! Run configuration: built-in defaults, then a named preset, then the user's
//! TOML file, merged key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::env::SimConfig;
use crate::error::{Error, Result};
use crate::harness::metrics::MetricWindow;
use crate::learning::distill::DistillConfig;
use crate::learning::teacher::HandcraftedParams;
use crate::learning::train::TrainConfig;
use crate::scenarios::ScenarioSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageSpec {
    pub name: String,
    /// Scenario preset the stage trains on.
    pub scenario: String,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub stages: Vec<StageSpec>,
}

impl Default for StageSpec {
    fn default() -> Self {
        Self { name: "flat6".into(), scenario: "flat6".into(), epochs: 100 }
    }
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        let stage = |s: &str, epochs| StageSpec { name: s.into(), scenario: s.into(), epochs };
        Self { stages: vec![stage("step1cm", 900), stage("step2cm", 700)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Episodes per evaluation, seeded from the run seed.
    pub episodes: usize,
    pub window: MetricWindow,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 3, window: MetricWindow::Sliding }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Low, middle and high action level, shared by both adapted axes.
    pub levels: Vec<f64>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { levels: vec![0.25, 0.5, 0.999], repeats: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Scenario preset this config was derived from.
    pub preset: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Run independent episodes on the rayon pool.
    pub parallel: bool,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    pub teacher: HandcraftedParams,
    pub curriculum: CurriculumConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "flat6".into(),
            seed: 1,
            out_dir: PathBuf::from("out"),
            parallel: false,
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            distill: DistillConfig::default(),
            teacher: HandcraftedParams::default(),
            curriculum: CurriculumConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Overrides a preset applies on top of the defaults.
pub fn preset_table(name: &str) -> Result<Table> {
    let scenario = ScenarioSpec::preset(name)?;
    let window = match name {
        "wsw" => MetricWindow::Arc { from: 1.5, to: 2.5 },
        "step1cm" | "step2cm" => MetricWindow::AfterArc { s: 1.5, duration: 2.0 },
        _ => MetricWindow::Sliding,
    };
    let mut t = Table::new();
    t.insert("preset".into(), Value::String(name.into()));
    let mut sim = Table::new();
    sim.insert("scenario".into(), to_value(&scenario)?);
    t.insert("sim".into(), Value::Table(sim));
    let mut eval = Table::new();
    eval.insert("window".into(), to_value(&window)?);
    t.insert("eval".into(), Value::Table(eval));
    Ok(t)
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Value::try_from(x).map_err(|e| Error::Config(e.to_string()))
}

/// Recursively merges `over` into `base`; tables merge, everything else replaces.
pub fn deep_merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Keys in `user` with no counterpart in `reference`. Tagged enums are
/// skipped since their fields depend on the variant.
fn unknown_keys(user: &Table, reference: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (reference.get(k), v) {
            (None, _) => out.push(path),
            (Some(Value::Table(r)), Value::Table(u)) if !r.contains_key("type") => unknown_keys(u, r, &path, out),
            _ => {}
        }
    }
}

impl RunConfig {
    /// Parses `text` as the user layer. `preset` overrides the file's own
    /// `preset` key.
    pub fn from_toml_str(text: &str, preset: Option<&str>) -> Result<Self> {
        let user: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let name = match (preset, user.get("preset")) {
            (Some(p), _) => p.to_string(),
            (None, Some(Value::String(p))) => p.clone(),
            (None, Some(_)) => return Err(Error::Config("preset must be a string".into())),
            (None, None) => RunConfig::default().preset,
        };
        let mut merged = match to_value(&RunConfig::default())? {
            Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        deep_merge(&mut merged, &preset_table(&name)?);
        let mut bad = Vec::new();
        unknown_keys(&user, &merged, "", &mut bad);
        if !bad.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", bad.join(", "))));
        }
        deep_merge(&mut merged, &user);
        merged.insert("preset".into(), Value::String(name));
        let cfg: RunConfig = Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_str(&text, preset)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.train.validate()?;
        for st in &self.curriculum.stages {
            ScenarioSpec::preset(&st.scenario)?;
        }
        if self.sweep.levels.len() != 3 || self.sweep.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config("sweep needs three levels inside (0, 1)".into()));
        }
        if self.sweep.repeats == 0 || self.eval.episodes == 0 {
            return Err(Error::Config("sweep repeats and eval episodes must be positive".into()));
        }
        Ok(())
    }

    /// The simulation config of a named preset with this run's other settings.
    pub fn sim_for(&self, preset: &str) -> Result<SimConfig> {
        Ok(SimConfig { scenario: ScenarioSpec::preset(preset)?, ..self.sim.clone() })
    }
}
