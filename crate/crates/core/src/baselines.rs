//! Comparison methods: a non-parameterized primitive set, direct
//! end-effector displacement control, and a fixed primitive sequence tuned
//! by CMA-ES.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cma::{minimize_batch, CmaOptions, CmaResult};
use crate::env::{in_contact, EpisodeConfig, HybridAction, Observation, Scene};
use crate::error::{Error, Result};
use crate::policy::{ActionSpace, PolicyInput};
use crate::ppo::{EnvStep, PpoEnv};
use crate::primitives::{
    execute, Axis, ExecConfig, Family, Kind, ManipulationPrimitive, MpStatus, ParamName, TaskView,
};
use crate::se3::{Twist, Vec3, Wrench};
use crate::sim::{CrossSection, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEntry {
    pub base_id: usize,
    pub base_name: String,
    pub values: Vec<(ParamName, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCatalog {
    pub primitives: Vec<ManipulationPrimitive>,
    pub provenance: Vec<DiscreteEntry>,
}

impl DiscreteCatalog {
    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

/// Instantiates every learnable parameter at `values_per_param` evenly
/// spaced interior points (`(i + 1/2) / n` of the range) and takes the
/// Cartesian product per primitive.
pub fn discretize_catalog(catalog: &[ManipulationPrimitive], values_per_param: usize) -> Result<DiscreteCatalog> {
    if values_per_param == 0 {
        return Err(Error::InvalidArgument("values_per_param must be >= 1".into()));
    }
    let n = values_per_param;
    let mut primitives = Vec::new();
    let mut provenance = Vec::new();
    for base in catalog {
        let grids: Vec<Vec<f64>> = base
            .learnable
            .iter()
            .map(|b| (0..n).map(|i| b.low + (i as f64 + 0.5) / n as f64 * (b.high - b.low)).collect())
            .collect();
        let combos = grids.iter().map(|g| g.len()).product::<usize>();
        for c in 0..combos {
            let mut rest = c;
            let mut fixed: BTreeMap<ParamName, f64> = base.fixed.clone();
            let mut values = Vec::new();
            for (b, g) in base.learnable.iter().zip(&grids).rev() {
                let v = g[rest % g.len()];
                rest /= g.len();
                fixed.insert(b.name, v);
                values.push((b.name, v));
            }
            values.reverse();
            let label: Vec<String> = values.iter().map(|(k, v)| format!("{}={v}", k.as_str())).collect();
            let id = primitives.len();
            primitives.push(ManipulationPrimitive {
                id,
                name: if values.is_empty() {
                    base.name.clone()
                } else {
                    format!("{}[{}]", base.name, label.join(","))
                },
                family: base.family,
                kind: base.kind,
                axis: base.axis,
                fixed,
                learnable: vec![],
            });
            provenance.push(DiscreteEntry {
                base_id: base.id,
                base_name: base.name.clone(),
                values,
            });
        }
    }
    Ok(DiscreteCatalog { primitives, provenance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EePoseConfig {
    pub max_linear_m: f64,
    pub max_angular_rad: f64,
    pub policy_rate_hz: f64,
    pub max_steps: usize,
}

impl Default for EePoseConfig {
    fn default() -> Self {
        Self {
            max_linear_m: 0.001,
            max_angular_rad: 0.02,
            policy_rate_hz: 40.0,
            max_steps: 600,
        }
    }
}

impl EePoseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_linear_m", self.max_linear_m),
            ("max_angular_rad", self.max_angular_rad),
            ("policy_rate_hz", self.policy_rate_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("ee_pose.{name}"), format!("must be > 0, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("ee_pose.max_steps", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EePoseInfo {
    pub ticks: u64,
    pub success: bool,
    pub steps: usize,
    pub true_distance_m: f64,
}

/// Direct displacement control: each decision is a bounded 6-D task-frame
/// displacement spread uniformly over one policy period.
#[derive(Debug, Clone)]
pub struct EePoseEnv {
    scene: Scene,
    cfg: EePoseConfig,
    steps: usize,
    done: bool,
}

impl EePoseEnv {
    pub fn new(sim: SimConfig, peg: CrossSection, hole: CrossSection, episode: EpisodeConfig, cfg: EePoseConfig) -> Result<Self> {
        cfg.validate()?;
        let ticks_per_s = 1.0 / sim.dt_s;
        if (ticks_per_s - ticks_per_s.round()).abs() > 1e-9 {
            return Err(Error::config("sim.dt_s", "displacement control needs an integer tick rate"));
        }
        Ok(Self {
            scene: Scene::new(sim, peg, hole, episode)?,
            cfg,
            steps: 0,
            done: true,
        })
    }

    pub fn action_space() -> ActionSpace {
        ActionSpace {
            free: vec![0],
            contact: vec![0],
            dims: vec![6],
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Control ticks spent on decision `i` (0-based): the integer schedule
    /// whose running total is `floor((i + 1) · rate_ratio)`.
    pub fn ticks_for(&self, i: usize) -> u64 {
        let per_s = (1.0 / self.scene.sim.config().dt_s).round();
        let r = per_s / self.cfg.policy_rate_hz;
        ((i + 1) as f64 * r + 1e-9).floor() as u64 - (i as f64 * r + 1e-9).floor() as u64
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.steps = 0;
        self.done = false;
        self.scene.reset(seed)
    }

    /// `action` holds normalized displacements (clipped to `[-1, 1]`).
    pub fn step(&mut self, action: &[f64]) -> Result<(Observation, f64, bool, EePoseInfo)> {
        if self.done {
            return Err(Error::InvalidArgument("step called on a finished episode".into()));
        }
        if action.len() != 6 || action.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("displacement must be 6 finite values".into()));
        }
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let lin = Vec3::new(a[0], a[1], a[2]) * self.cfg.max_linear_m;
        let ang = Vec3::new(a[3], a[4], a[5]) * self.cfg.max_angular_rad;
        let n = self.ticks_for(self.steps);
        let span = n as f64 * self.scene.sim.config().dt_s;
        let twist = Twist::new(lin / span, ang / span).rotated(&self.scene.task.orientation);
        for _ in 0..n {
            self.scene.state = self.scene.sim.step(&self.scene.state, &twist, &Wrench::zero())?;
        }
        self.steps += 1;
        let success = self.scene.is_success();
        let mut reward = self.scene.cfg.shaped_reward(&self.scene.reward_error(), MpStatus::Success);
        if success {
            reward += self.scene.cfg.termination_bonus;
        }
        self.done = success || self.steps >= self.cfg.max_steps;
        let info = EePoseInfo {
            ticks: n,
            success,
            steps: self.steps,
            true_distance_m: self.scene.true_distance(),
        };
        Ok((self.scene.observation(), reward, self.done, info))
    }
}

impl PpoEnv for EePoseEnv {
    fn reset(&mut self, seed: u64) -> Result<PolicyInput> {
        let obs = EePoseEnv::reset(self, seed)?;
        Ok(PolicyInput::new(&obs, in_contact(&obs, self.scene.cfg.contact_threshold_n)))
    }

    fn step(&mut self, action: &HybridAction) -> Result<EnvStep> {
        let (obs, reward, done, info) = EePoseEnv::step(self, &action.params)?;
        Ok(EnvStep {
            next: PolicyInput::new(&obs, in_contact(&obs, self.scene.cfg.contact_threshold_n)),
            reward,
            done,
            success: info.success,
            sim_steps: info.ticks,
        })
    }
}

/// The four tuned scalars of the fixed sequence, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixSeqParams {
    pub lateral_speed: f64,
    pub lateral_distance: f64,
    pub align_angle: f64,
    pub insert_force: f64,
}

pub const FIX_SEQ_BOUNDS: [(f64, f64); 4] = [(0.005, 0.010), (-0.010, 0.010), (-0.1, 0.1), (6.0, 15.0)];

impl FixSeqParams {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.lateral_speed, self.lateral_distance, self.align_angle, self.insert_force]
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != 4 {
            return Err(Error::InvalidArgument(format!("fixed sequence takes 4 parameters, got {}", x.len())));
        }
        for (i, (v, (lo, hi))) in x.iter().zip(FIX_SEQ_BOUNDS).enumerate() {
            if !(v.is_finite() && *v >= lo && *v <= hi) {
                return Err(Error::InvalidArgument(format!("parameter {i} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            lateral_speed: x[0],
            lateral_distance: x[1],
            align_angle: x[2],
            insert_force: x[3],
        })
    }

    /// From `[-1, 1]^4` coordinates (clipped).
    pub fn from_normalized(z: &[f64]) -> Result<Self> {
        let x: Vec<f64> = z
            .iter()
            .zip(FIX_SEQ_BOUNDS)
            .map(|(v, (lo, hi))| lo + 0.5 * (v.clamp(-1.0, 1.0) + 1.0) * (hi - lo))
            .collect();
        Self::from_slice(&x)
    }

    pub fn to_normalized(&self) -> Vec<f64> {
        self.to_vec()
            .iter()
            .zip(FIX_SEQ_BOUNDS)
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }
}

impl Default for FixSeqParams {
    fn default() -> Self {
        Self {
            lateral_speed: 0.005,
            lateral_distance: 0.0005,
            align_angle: 0.0,
            insert_force: 12.0,
        }
    }
}

/// Constants of the sequence that are not tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixSeqConfig {
    pub press_speed_m_per_s: f64,
    pub press_force_n: f64,
    pub press_threshold_n: f64,
    pub press_timeout_s: f64,
    pub insert_k: f64,
    pub insert_timeout_s: f64,
    pub time_weight: f64,
}

impl Default for FixSeqConfig {
    fn default() -> Self {
        Self {
            press_speed_m_per_s: 0.001,
            press_force_n: 8.0,
            press_threshold_n: 7.0,
            press_timeout_s: 1.0,
            insert_k: 0.1,
            insert_timeout_s: 2.0,
            time_weight: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixSeqTrial {
    pub seed: u64,
    pub success: bool,
    pub execution_time_s: f64,
    pub mps_attempted: usize,
    pub sequence: Vec<String>,
    pub statuses: Vec<MpStatus>,
    pub durations_s: Vec<f64>,
    pub pose_errors_m: Vec<f64>,
    pub rewards: Vec<f64>,
}

/// Approach, press, fit, align, insert.
#[derive(Debug, Clone)]
pub struct FixSeq {
    scene: Scene,
    exec: ExecConfig,
    cfg: FixSeqConfig,
    catalog: Vec<ManipulationPrimitive>,
    press: ManipulationPrimitive,
}

impl FixSeq {
    pub fn new(
        catalog: Vec<ManipulationPrimitive>,
        sim: SimConfig,
        peg: CrossSection,
        hole: CrossSection,
        episode: EpisodeConfig,
        exec: ExecConfig,
        cfg: FixSeqConfig,
    ) -> Result<Self> {
        if catalog.len() != crate::primitives::CATALOG_SIZE {
            return Err(Error::InvalidArgument("fixed sequence needs the 13-primitive catalog".into()));
        }
        let press = ManipulationPrimitive {
            id: usize::MAX,
            name: "contact-Tc(-z) press".into(),
            family: Family::InContact,
            kind: Kind::TranslateUntilContact,
            axis: Axis::NEG_Z,
            fixed: [
                (ParamName::V, cfg.press_speed_m_per_s),
                (ParamName::FThr, cfg.press_threshold_n),
                (ParamName::T, cfg.press_timeout_s),
                (ParamName::Fd, cfg.press_force_n),
            ]
            .into_iter()
            .collect(),
            learnable: vec![],
        };
        Ok(Self {
            scene: Scene::new(sim, peg, hole, episode)?,
            exec,
            cfg,
            catalog,
            press,
        })
    }

    pub fn config(&self) -> &FixSeqConfig {
        &self.cfg
    }

    pub fn run(&mut self, params: &FixSeqParams, seed: u64) -> Result<FixSeqTrial> {
        FixSeqParams::from_slice(&params.to_vec())?;
        self.scene.reset(seed)?;
        let steps: Vec<(ManipulationPrimitive, Vec<f64>)> = vec![
            (self.catalog[0].clone(), vec![]),
            (self.press.clone(), vec![]),
            (self.catalog[7].clone(), vec![params.lateral_speed, params.lateral_distance]),
            (self.catalog[10].clone(), vec![params.align_angle]),
            (
                self.catalog[12].clone(),
                vec![self.cfg.insert_k, params.insert_force, self.cfg.insert_timeout_s],
            ),
        ];
        let goal = self.scene.goal().position;
        let mut time = 0.0;
        let mut sequence = Vec::new();
        let mut statuses = Vec::new();
        let mut durations_s = Vec::new();
        let mut pose_errors_m = Vec::new();
        let mut rewards = Vec::new();
        let mut success = false;
        for (mp, theta) in &steps {
            if mp.family == Family::InContact {
                let view = TaskView::of(&self.scene.state, &self.scene.task);
                if view.wrench.force.z.abs() < self.scene.cfg.contact_threshold_n {
                    break;
                }
            }
            let p = mp.resolve(theta)?;
            let out = execute(mp, &p, &mut self.scene.sim, self.scene.state.clone(), &self.scene.task, &goal, &self.exec)?;
            self.scene.state = out.end_state;
            time += out.duration;
            sequence.push(mp.name.clone());
            statuses.push(out.status);
            durations_s.push(out.duration);
            pose_errors_m.push(self.scene.true_distance());
            rewards.push(self.scene.cfg.shaped_reward(&self.scene.reward_error(), out.status));
            // the task counts as done the moment the peg reaches the goal
            if self.scene.is_success() {
                success = true;
                break;
            }
            if out.status == MpStatus::Failure {
                break;
            }
        }
        Ok(FixSeqTrial {
            seed,
            success,
            execution_time_s: time,
            mps_attempted: sequence.len(),
            sequence,
            statuses,
            durations_s,
            pose_errors_m,
            rewards,
        })
    }

    /// `(1 - success rate) + time_weight · mean execution time` over the
    /// given trial seeds.
    pub fn objective(&mut self, params: &FixSeqParams, seeds: &[u64]) -> Result<f64> {
        let mut succ = 0usize;
        let mut time = 0.0;
        for &s in seeds {
            let t = self.run(params, s)?;
            succ += t.success as usize;
            time += t.execution_time_s;
        }
        let n = seeds.len().max(1) as f64;
        Ok((1.0 - succ as f64 / n) + self.cfg.time_weight * time / n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixSeqOptimization {
    pub best: FixSeqParams,
    pub result: CmaResult,
}

/// CMA-ES over the normalized parameter box. Each generation draws fresh
/// trial seeds shared by all its candidates.
pub fn optimize_fix_seq(
    seq: &mut FixSeq,
    x0: &FixSeqParams,
    trials_per_eval: usize,
    generations: usize,
    sigma0: f64,
    seed: u64,
) -> Result<FixSeqOptimization> {
    if trials_per_eval == 0 {
        return Err(Error::InvalidArgument("trials_per_eval must be >= 1".into()));
    }
    let mut seeds_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c5);
    let mut err = None;
    let opts = CmaOptions {
        sigma0,
        bounds: Some(vec![(-1.0, 1.0); 4]),
        max_generations: generations,
        population: None,
        target: None,
        seed,
    };
    let result = minimize_batch(
        |_, xs| {
            let seeds: Vec<u64> = (0..trials_per_eval).map(|_| seeds_rng.random()).collect();
            xs.iter()
                .map(|z| match FixSeqParams::from_normalized(z).and_then(|p| seq.objective(&p, &seeds)) {
                    Ok(f) => f,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                })
                .collect()
        },
        &x0.to_normalized(),
        &opts,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(FixSeqOptimization {
        best: FixSeqParams::from_normalized(&result.best_x)?,
        result,
    })
}
