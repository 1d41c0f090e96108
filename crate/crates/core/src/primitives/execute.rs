use serde::{Deserialize, Serialize};

use super::{Kind, ManipulationPrimitive, MpParams, MpStatus};
use crate::error::Result;
use crate::se3::{Pose, Vec3, Wrench};
use crate::sim::{SimState, Simulator};

pub type TaskFrame = Pose;

/// What a primitive sees: end-effector pose and measured wrench, both in the
/// task frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskView {
    pub pose: Pose,
    pub wrench: Wrench,
}

impl TaskView {
    pub fn of(state: &SimState, task: &TaskFrame) -> Self {
        let inv = task.inverse();
        Self {
            pose: inv.compose(&state.ee_pose),
            wrench: state.f_measured.rotated(&inv.orientation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecConfig {
    /// Consecutive ticks an until-contact threshold must hold.
    pub debounce_steps: u32,
    /// Absolute cap on one primitive's execution time, s.
    pub max_duration_s: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            debounce_steps: 3,
            max_duration_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpOutcome {
    pub status: MpStatus,
    pub duration: f64,
    pub end_state: SimState,
    pub control_steps: u64,
    pub clamped: bool,
}

/// Whether the until-contact force/torque condition holds right now.
pub fn threshold_exceeded(mp: &ManipulationPrimitive, p: &MpParams, view: &TaskView) -> bool {
    let dir = mp.motion_direction(p);
    match mp.kind {
        Kind::TranslateUntilContact => view.wrench.force.dot(&dir) > p.f_thr,
        Kind::RotateUntilContact => view.wrench.torque.dot(&dir) > p.f_thr,
        _ => false,
    }
}

/// Runs `mp` in closed loop at the simulator rate until its stopping rule
/// fires. `goal` is the insertion goal position in the task frame.
pub fn execute(
    mp: &ManipulationPrimitive,
    p: &MpParams,
    sim: &mut Simulator,
    state: SimState,
    task: &TaskFrame,
    goal: &Vec3,
    cfg: &ExecConfig,
) -> Result<MpOutcome> {
    let dt = sim.config().dt_s;
    let cap = (cfg.max_duration_s / dt).ceil() as u64;
    let start = TaskView::of(&state, task);
    let mut state = state;
    let mut streak = 0u32;
    let mut steps = 0u64;
    let mut clamped = false;
    let status = loop {
        let t = steps as f64 * dt;
        let view = TaskView::of(&state, task);
        let status = mp.stopping(p, t, &view, &start, streak, cfg.debounce_steps, goal);
        if status != MpStatus::Continue {
            break status;
        }
        if state.clamped {
            clamped = true;
            break MpStatus::Failure;
        }
        if steps >= cap {
            break MpStatus::Failure;
        }
        streak = if threshold_exceeded(mp, p, &view) { streak + 1 } else { 0 };
        let (twist, wrench) = mp.desired_commands(p, t, &view);
        state = sim.step(
            &state,
            &twist.rotated(&task.orientation),
            &wrench.rotated(&task.orientation),
        )?;
        steps += 1;
    };
    Ok(MpOutcome {
        status,
        duration: steps as f64 * dt,
        end_state: state,
        control_steps: steps,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{build_catalog, CatalogConfig};
    use crate::sim::{CrossSection, SimConfig};

    fn sim() -> Simulator {
        Simulator::new(
            SimConfig {
                force_noise_std_n: 0.0,
                torque_noise_std_nm: 0.0,
                ..SimConfig::default()
            },
            CrossSection::Round { radius: 0.014_98 },
            CrossSection::Round { radius: 0.015_015 },
            Pose::identity(),
            1,
        )
        .unwrap()
    }

    fn goal() -> Vec3 {
        Vec3::new(0.0, 0.0, -0.01)
    }

    #[test]
    fn approach_lands_on_plate_after_time_of_flight() {
        let cat = build_catalog(&CatalogConfig::default());
        let mut s = sim();
        let start = s.reset(&Pose::from_translation(0.04, 0.0, 0.010)).unwrap();
        let p = cat[0].resolve(&[]).unwrap();
        let out = execute(&cat[0], &p, &mut s, start, &Pose::identity(), &goal(), &ExecConfig::default()).unwrap();
        assert_eq!(out.status, MpStatus::Success);
        // 10 mm at 10 mm/s, plus a few ticks to build 5 N and debounce
        let flight = 0.010 / 0.010;
        assert!(out.duration >= flight && out.duration < flight + 0.05, "{}", out.duration);
        assert!(out.end_state.f_ext.force.z <= -5.0);
        assert!((out.duration - out.control_steps as f64 * 0.002).abs() < 1e-12);
    }

    #[test]
    fn approach_from_too_high_times_out() {
        let cat = build_catalog(&CatalogConfig::default());
        let mut s = sim();
        let start = s.reset(&Pose::from_translation(0.04, 0.0, 0.030)).unwrap();
        let p = cat[0].resolve(&[]).unwrap();
        let out = execute(&cat[0], &p, &mut s, start, &Pose::identity(), &goal(), &ExecConfig::default()).unwrap();
        assert_eq!(out.status, MpStatus::Failure);
        assert!((out.duration - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rotation_succeeds_immediately() {
        let cat = build_catalog(&CatalogConfig::default());
        let mut s = sim();
        let start = s.reset(&Pose::from_translation(0.0, 0.0, 0.010)).unwrap();
        let p = cat[3].resolve(&[0.0]).unwrap();
        let out = execute(&cat[3], &p, &mut s, start, &Pose::identity(), &goal(), &ExecConfig::default()).unwrap();
        assert_eq!(out.status, MpStatus::Success);
        assert_eq!(out.control_steps, 0);
    }

    #[test]
    fn fixed_translate_reaches_distance() {
        let cat = build_catalog(&CatalogConfig::default());
        let mut s = sim();
        let start = s.reset(&Pose::from_translation(0.0, 0.0, 0.010)).unwrap();
        let p = cat[1].resolve(&[-0.004]).unwrap();
        let out = execute(&cat[1], &p, &mut s, start, &Pose::identity(), &goal(), &ExecConfig::default()).unwrap();
        assert_eq!(out.status, MpStatus::Success);
        assert!((out.end_state.ee_pose.position.x + 0.004).abs() < 2.1e-5);
    }

    #[test]
    fn execution_is_deterministic() {
        let cat = build_catalog(&CatalogConfig::default());
        let run = || {
            let mut s = Simulator::new(
                SimConfig::default(),
                CrossSection::Round { radius: 0.014_98 },
                CrossSection::Round { radius: 0.015_015 },
                Pose::identity(),
                9,
            )
            .unwrap();
            let start = s.reset(&Pose::from_translation(0.0003, 0.0, 0.010)).unwrap();
            let p = cat[0].resolve(&[]).unwrap();
            let a = execute(&cat[0], &p, &mut s, start, &Pose::identity(), &goal(), &ExecConfig::default()).unwrap();
            let p = cat[12].resolve(&[0.1, 10.0, 1.0]).unwrap();
            execute(&cat[12], &p, &mut s, a.end_state, &Pose::identity(), &goal(), &ExecConfig::default()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
