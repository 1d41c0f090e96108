//! Episodic parameterized-action environment over a primitive set.
//!
//! One step runs one whole primitive. Observations and rewards are computed in
//! the estimated task frame (true hole frame perturbed by a sampled perception
//! error); task success is judged against the true hole.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{execute, ExecConfig, Family, ManipulationPrimitive, MpStatus, TaskFrame, TaskView};
use crate::se3::{axis_angle_rotation, pose_error, weighted_norm_sq, Pose, Vec3, Vec6};
use crate::sim::{CrossSection, SimConfig, SimState, Simulator};

pub const OBS_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_mps: usize,
    pub termination_bonus: f64,
    pub success_tol_m: f64,
    pub goal_depth_m: f64,
    pub start_height_m: f64,
    pub c1: f64,
    pub c2: f64,
    pub k1: f64,
    /// Weight of the rotation-vector block inside the reward distance.
    pub rotation_weight: f64,
    pub noise_position_m: f64,
    pub noise_rotation_deg: f64,
    /// `|f_ext,z|` at or above this selects the in-contact primitives.
    pub contact_threshold_n: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_mps: 15,
            termination_bonus: 5.0,
            success_tol_m: 0.002,
            goal_depth_m: 0.010,
            start_height_m: 0.010,
            c1: 1.0,
            c2: 0.2,
            k1: 1e-4,
            rotation_weight: 1.0,
            noise_position_m: 0.001,
            noise_rotation_deg: 1.0,
            contact_threshold_n: 0.5,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("k1", self.k1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("env.{name}"), format!("must be > 0, got {v}")));
            }
        }
        if self.max_mps == 0 {
            return Err(Error::config("env.max_mps", "must be >= 1"));
        }
        for (name, v) in [
            ("noise_position_m", self.noise_position_m),
            ("noise_rotation_deg", self.noise_rotation_deg),
            ("success_tol_m", self.success_tol_m),
            ("contact_threshold_n", self.contact_threshold_n),
            ("rotation_weight", self.rotation_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("env.{name}"), format!("must be >= 0, got {v}")));
            }
        }
        if !(self.start_height_m > 0.0) {
            return Err(Error::config("env.start_height_m", "must be > 0"));
        }
        Ok(())
    }

    /// Shaped reward for landing at pose error `err` with primitive status
    /// `status`, before any success bonus.
    pub fn shaped_reward(&self, err: &Vec6, status: MpStatus) -> f64 {
        let d2 = weighted_norm_sq(err, self.rotation_weight);
        let s = match status {
            MpStatus::Failure => -1.0,
            _ => 0.0,
        };
        self.c1 * ((-d2 / self.k1).exp() - 1.0) + self.c2 * s
    }
}

/// `[p (position m, rotation vector rad), f_ext (N, N·m)]` in the estimated
/// task frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p: Vec6,
    pub f_ext: Vec6,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[..6].copy_from_slice(self.p.as_slice());
        out[6..].copy_from_slice(self.f_ext.as_slice());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn from_view(view: &TaskView) -> Self {
        let p = crate::se3::stack(&view.pose.position, &crate::se3::rotation_vector(&view.pose.orientation));
        Self {
            p,
            f_ext: view.wrench.to_vec6(),
        }
    }
}

/// A discrete primitive choice plus its normalized (`[-1, 1]`) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub mp_index: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepInfo {
    pub mp_index: usize,
    pub status: MpStatus,
    pub duration_s: f64,
    pub control_steps: u64,
    /// Physical parameters the primitive ran with.
    pub params: Vec<f64>,
    /// Peg pose in the true hole frame after the step.
    pub true_pose: Pose,
    pub true_distance_m: f64,
    pub success: bool,
    pub mp_count: usize,
}

/// Contact-state split of a primitive set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPartition {
    pub free: Vec<usize>,
    pub contact: Vec<usize>,
}

impl ActionPartition {
    pub fn of(catalog: &[ManipulationPrimitive]) -> Self {
        let pick = |f: Family| catalog.iter().filter(|m| m.family == f).map(|m| m.id).collect();
        Self {
            free: pick(Family::FreeSpace),
            contact: pick(Family::InContact),
        }
    }
}

pub fn in_contact(obs: &Observation, threshold: f64) -> bool {
    obs.f_ext[2].abs() >= threshold
}

/// Sampled perception error: estimated hole frame relative to the true one.
pub fn sample_perception_error(rng: &mut impl Rng, position_m: f64, rotation_deg: f64) -> Pose {
    let mut offset = Vec3::zeros();
    if position_m > 0.0 {
        for i in 0..3 {
            offset[i] = rng.random_range(-position_m..=position_m);
        }
    }
    let mut orientation = nalgebra::UnitQuaternion::identity();
    if rotation_deg > 0.0 {
        let axis = loop {
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            if v.norm() > 1e-9 {
                break v.normalize();
            }
        };
        let angle = rng.random_range(-rotation_deg..=rotation_deg).to_radians();
        orientation = axis_angle_rotation(&axis, angle).expect("normalized axis");
    }
    Pose::new(offset, orientation)
}

/// Peg/hole scene with perception error: shared by the primitive environment
/// and the displacement-control baseline.
#[derive(Debug, Clone)]
pub struct Scene {
    pub sim: Simulator,
    pub cfg: EpisodeConfig,
    pub state: SimState,
    /// Estimated task frame in world (= true hole frame) coordinates.
    pub task: TaskFrame,
}

impl Scene {
    pub fn new(sim_cfg: SimConfig, peg: CrossSection, hole: CrossSection, cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        let sim = Simulator::new(sim_cfg, peg, hole, Pose::identity(), 0)?;
        let start = Pose::from_translation(0.0, 0.0, cfg.start_height_m);
        let state = sim.reset(&start)?;
        Ok(Self {
            sim,
            cfg,
            state,
            task: Pose::identity(),
        })
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.task = sample_perception_error(&mut rng, self.cfg.noise_position_m, self.cfg.noise_rotation_deg);
        self.sim.reseed(rng.random());
        let start = self
            .task
            .compose(&Pose::from_translation(0.0, 0.0, self.cfg.start_height_m));
        self.state = self.sim.reset(&start)?;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        Observation::from_view(&TaskView::of(&self.state, &self.task))
    }

    /// Goal pose in the task frame.
    pub fn goal(&self) -> Pose {
        Pose::from_translation(0.0, 0.0, -self.cfg.goal_depth_m)
    }

    pub fn true_pose(&self) -> Pose {
        self.sim.relative_pose(&self.state.ee_pose)
    }

    pub fn true_distance(&self) -> f64 {
        (self.true_pose().position - self.goal().position).norm()
    }

    pub fn is_success(&self) -> bool {
        is_success(self.true_distance(), self.cfg.success_tol_m)
    }

    pub fn reward_error(&self) -> Vec6 {
        let view = TaskView::of(&self.state, &self.task);
        pose_error(&view.pose, &self.goal())
    }
}

pub fn is_success(true_distance_m: f64, tol_m: f64) -> bool {
    true_distance_m <= tol_m
}

#[derive(Debug, Clone)]
pub struct PamdpEnv {
    scene: Scene,
    catalog: Vec<ManipulationPrimitive>,
    partition: ActionPartition,
    exec: ExecConfig,
    mp_count: usize,
    done: bool,
}

impl PamdpEnv {
    pub fn new(
        catalog: Vec<ManipulationPrimitive>,
        sim_cfg: SimConfig,
        peg: CrossSection,
        hole: CrossSection,
        cfg: EpisodeConfig,
        exec: ExecConfig,
    ) -> Result<Self> {
        for (i, mp) in catalog.iter().enumerate() {
            if mp.id != i {
                return Err(Error::InvalidArgument(format!("primitive {} has id {}", i, mp.id)));
            }
        }
        let partition = ActionPartition::of(&catalog);
        Ok(Self {
            scene: Scene::new(sim_cfg, peg, hole, cfg)?,
            catalog,
            partition,
            exec,
            mp_count: 0,
            done: true,
        })
    }

    pub fn catalog(&self) -> &[ManipulationPrimitive] {
        &self.catalog
    }

    pub fn partition(&self) -> &ActionPartition {
        &self.partition
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.scene.cfg
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.mp_count = 0;
        self.done = false;
        self.scene.reset(seed)
    }

    pub fn observation(&self) -> Observation {
        self.scene.observation()
    }

    pub fn is_contact(&self, obs: &Observation) -> bool {
        in_contact(obs, self.scene.cfg.contact_threshold_n)
    }

    pub fn feasible_set(&self, obs: &Observation) -> &[usize] {
        if self.is_contact(obs) {
            &self.partition.contact
        } else {
            &self.partition.free
        }
    }

    pub fn step(&mut self, action: &HybridAction) -> Result<(Observation, f64, bool, StepInfo)> {
        if self.done {
            return Err(Error::InvalidArgument("step called on a finished episode".into()));
        }
        let obs = self.observation();
        if !self.feasible_set(&obs).contains(&action.mp_index) {
            return Err(Error::InfeasibleAction(format!(
                "primitive {} with f_ext,z = {:.3} N",
                action.mp_index, obs.f_ext[2]
            )));
        }
        let mp = &self.catalog[action.mp_index];
        if action.params.len() != mp.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} parameters, got {}",
                mp.name,
                mp.dim(),
                action.params.len()
            )));
        }
        let theta = mp.denormalize(&action.params);
        let params = mp.resolve(&theta)?;
        let goal = self.scene.goal().position;
        let out = execute(
            mp,
            &params,
            &mut self.scene.sim,
            self.scene.state.clone(),
            &self.scene.task,
            &goal,
            &self.exec,
        )?;
        self.scene.state = out.end_state;
        self.mp_count += 1;

        let mut reward = self.scene.cfg.shaped_reward(&self.scene.reward_error(), out.status);
        let success = self.scene.is_success();
        if success {
            reward += self.scene.cfg.termination_bonus;
        }
        self.done = success || self.mp_count >= self.scene.cfg.max_mps;
        let info = StepInfo {
            mp_index: action.mp_index,
            status: out.status,
            duration_s: out.duration,
            control_steps: out.control_steps,
            params: theta,
            true_pose: self.scene.true_pose(),
            true_distance_m: self.scene.true_distance(),
            success,
            mp_count: self.mp_count,
        };
        Ok((self.observation(), reward, self.done, info))
    }
}
