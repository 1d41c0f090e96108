//! Run configuration: a TOML document with units spelled out in field names.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{EePoseConfig, FixSeqConfig};
use crate::env::EpisodeConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::ppo::PpoConfig;
use crate::primitives::{CatalogConfig, ExecConfig};
use crate::sim::{CrossSection, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hybrid,
    Discrete,
    EePose,
    FixSeq,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::Discrete => "discrete",
            Method::EePose => "ee-pose",
            Method::FixSeq => "fix-seq",
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, Method::FixSeq)
    }

    pub fn uses_primitives(&self) -> bool {
        !matches!(self, Method::EePose)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Material {
    Aluminum,
    Plastic,
}

impl Material {
    /// Coulomb coefficient used for this material pairing.
    pub fn friction(&self) -> f64 {
        match self {
            Material::Aluminum => 0.3,
            Material::Plastic => 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Round,
    Square,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Round,
    RoundHard,
    Square,
    SquareHard,
    Triangle,
    TriangleHard,
}

/// A named peg/hole pair. Sizes are diameters (round) or side lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetSpec {
    pub name: &'static str,
    pub shape: Shape,
    pub hole_mm: f64,
    pub peg_mm: f64,
    pub material: Material,
}

pub const PRESETS: [PresetSpec; 6] = [
    PresetSpec { name: "round", shape: Shape::Round, hole_mm: 30.03, peg_mm: 29.9, material: Material::Aluminum },
    PresetSpec { name: "round-hard", shape: Shape::Round, hole_mm: 30.03, peg_mm: 29.96, material: Material::Aluminum },
    PresetSpec { name: "square", shape: Shape::Square, hole_mm: 19.98, peg_mm: 19.72, material: Material::Plastic },
    PresetSpec { name: "square-hard", shape: Shape::Square, hole_mm: 19.98, peg_mm: 19.96, material: Material::Aluminum },
    PresetSpec { name: "triangle", shape: Shape::Triangle, hole_mm: 25.0, peg_mm: 24.2, material: Material::Plastic },
    PresetSpec { name: "triangle-hard", shape: Shape::Triangle, hole_mm: 25.0, peg_mm: 24.9, material: Material::Aluminum },
];

impl Preset {
    pub fn spec(&self) -> PresetSpec {
        let i = match self {
            Preset::Round => 0,
            Preset::RoundHard => 1,
            Preset::Square => 2,
            Preset::SquareHard => 3,
            Preset::Triangle => 4,
            Preset::TriangleHard => 5,
        };
        PRESETS[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub preset: Preset,
    /// Multiplies the nominal clearance; the hole stays fixed and the peg
    /// shrinks.
    pub clearance_scale: f64,
    /// Overrides the material's friction coefficient.
    pub friction: Option<f64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Round,
            clearance_scale: 1.0,
            friction: None,
        }
    }
}

/// Resolved geometry of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub peg: CrossSection,
    pub hole: CrossSection,
    pub peg_mm: f64,
    pub hole_mm: f64,
    pub clearance_scale: f64,
    pub friction: f64,
}

fn section(shape: Shape, size_mm: f64) -> CrossSection {
    let m = size_mm * 1e-3;
    match shape {
        Shape::Round => CrossSection::Round { radius: m / 2.0 },
        Shape::Square => CrossSection::Square { side: m },
        Shape::Triangle => CrossSection::Triangle { side: m },
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clearance_scale.is_finite() && self.clearance_scale > 0.0) {
            return Err(Error::config("task.clearance_scale", format!("must be > 0, got {}", self.clearance_scale)));
        }
        let s = self.preset.spec();
        let peg = s.hole_mm - self.clearance_scale * (s.hole_mm - s.peg_mm);
        if peg <= 0.0 {
            return Err(Error::config("task.clearance_scale", format!("leaves no peg ({peg} mm)")));
        }
        if let Some(mu) = self.friction {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(Error::config("task.friction", format!("must be >= 0, got {mu}")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Task> {
        self.validate()?;
        let s = self.preset.spec();
        let peg_mm = s.hole_mm - self.clearance_scale * (s.hole_mm - s.peg_mm);
        Ok(Task {
            name: s.name.to_string(),
            peg: section(s.shape, peg_mm),
            hole: section(s.shape, s.hole_mm),
            peg_mm,
            hole_mm: s.hole_mm,
            clearance_scale: self.clearance_scale,
            friction: self.friction.unwrap_or(s.material.friction()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteConfig {
    pub values_per_param: usize,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self { values_per_param: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixSeqSearchConfig {
    pub trials_per_eval: usize,
    pub generations: usize,
    pub sigma0: f64,
}

impl Default for FixSeqSearchConfig {
    fn default() -> Self {
        Self {
            trials_per_eval: 10,
            generations: 30,
            sigma0: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 1_000_000,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub budget_sim_steps: u64,
    pub output_dir: PathBuf,
    pub rolling_window: usize,
    /// 0 keeps only the initial and final checkpoints.
    pub checkpoint_every: usize,
    pub task: TaskConfig,
    /// `friction` here is ignored; it comes from the task.
    pub sim: SimConfig,
    pub episode: EpisodeConfig,
    pub catalog: CatalogConfig,
    pub exec: ExecConfig,
    pub policy: PolicyConfig,
    /// `seed` here is replaced by each entry of `seeds`.
    pub ppo: PpoConfig,
    pub discrete: DiscreteConfig,
    pub ee_pose: EePoseConfig,
    pub fix_seq: FixSeqConfig,
    pub fix_seq_search: FixSeqSearchConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Hybrid,
            seeds: vec![0, 1, 2],
            budget_sim_steps: 2_000_000,
            output_dir: PathBuf::from("runs/default"),
            rolling_window: 50,
            checkpoint_every: 0,
            task: TaskConfig::default(),
            sim: SimConfig::default(),
            episode: EpisodeConfig::default(),
            catalog: CatalogConfig::default(),
            exec: ExecConfig::default(),
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
            discrete: DiscreteConfig::default(),
            ee_pose: EePoseConfig::default(),
            fix_seq: FixSeqConfig::default(),
            fix_seq_search: FixSeqSearchConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Keys the user may not set because another field owns them.
const OWNED_KEYS: [(&str, &str, &str); 2] = [
    ("sim", "friction", "set task.friction or pick a preset material"),
    ("ppo", "seed", "list training seeds in `seeds`"),
];

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let s = serde_json::to_string(value).expect("config serializes");
    hex(&Sha256::digest(s.as_bytes()))
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        for (table, key, hint) in OWNED_KEYS {
            if value.get(table).and_then(|t| t.get(key)).is_some() {
                return Err(Error::config(format!("{table}.{key}"), format!("not settable here; {hint}")));
            }
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Serialized copy that parses back to an equal config (owned keys
    /// are left out).
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes to TOML");
        for (t, k, _) in OWNED_KEYS {
            if let Some(toml::Value::Table(sub)) = table.get_mut(t) {
                sub.remove(k);
            }
        }
        toml::to_string(&table).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.rolling_window == 0 {
            return Err(Error::config("rolling_window", "must be >= 1"));
        }
        if self.discrete.values_per_param == 0 {
            return Err(Error::config("discrete.values_per_param", "must be >= 1"));
        }
        if self.fix_seq_search.trials_per_eval == 0 {
            return Err(Error::config("fix_seq_search.trials_per_eval", "must be >= 1"));
        }
        if self.fix_seq_search.generations == 0 {
            return Err(Error::config("fix_seq_search.generations", "must be >= 1"));
        }
        if !(self.fix_seq_search.sigma0.is_finite() && self.fix_seq_search.sigma0 > 0.0) {
            return Err(Error::config("fix_seq_search.sigma0", "must be > 0"));
        }
        if self.eval.trials == 0 {
            return Err(Error::config("eval.trials", "must be >= 1"));
        }
        if self.eval.workers == 0 {
            return Err(Error::config("eval.workers", "must be >= 1"));
        }
        if !(self.catalog.insert_tolerance_mm.is_finite() && self.catalog.insert_tolerance_mm > 0.0) {
            return Err(Error::config("catalog.insert_tolerance_mm", "must be > 0"));
        }
        if !(self.exec.max_duration_s.is_finite() && self.exec.max_duration_s > 0.0) {
            return Err(Error::config("exec.max_duration_s", "must be > 0"));
        }
        self.task.validate()?;
        self.sim.validate()?;
        self.episode.validate()?;
        self.policy.validate()?;
        self.ppo.validate()?;
        self.ee_pose.validate()?;
        let task = self.task.resolve()?;
        crate::sim::geometry::centred_clearance(&task.peg, &task.hole)
            .gt(&0.0)
            .then_some(())
            .ok_or_else(|| Error::config("task", "peg does not fit the hole"))?;
        Ok(())
    }

    /// Simulator settings with the task's friction applied.
    pub fn effective_sim(&self) -> Result<SimConfig> {
        let task = self.task.resolve()?;
        Ok(SimConfig {
            friction: task.friction,
            ..self.sim.clone()
        })
    }

    /// Hash of everything that determines a run's results (the output
    /// directory is excluded).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.sim.friction = 0.0;
        c.ppo.seed = 0;
        sha256_json(&c)
    }

    /// Hash of the evaluation environment only; runs are comparable when
    /// these match.
    pub fn env_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct EnvPart<'a> {
            task: &'a TaskConfig,
            sim: SimConfig,
            episode: &'a EpisodeConfig,
            catalog: &'a CatalogConfig,
            exec: &'a ExecConfig,
        }
        Ok(sha256_json(&EnvPart {
            task: &self.task,
            sim: self.effective_sim()?,
            episode: &self.episode,
            catalog: &self.catalog,
            exec: &self.exec,
        }))
    }
}
