//! Quasi-static peg-in-hole simulation with an admittance-style hybrid
//! motion/force controller.
//!
//! The end-effector frame `E` sits at the centre of the peg's bottom face.
//! Commands, poses and measured wrenches are all expressed in the world
//! frame; the hole may be placed anywhere in that frame.

pub mod contact;
pub mod geometry;

use nalgebra::Matrix6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use contact::{contact_wrench, Contact, ContactLaw, ContactModel, Geometry, Sampling};
pub use geometry::CrossSection;

use crate::error::{Error, Result};
use crate::se3::{exp_so3, Pose, Twist, Vec3, Vec6, Wrench};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_s: f64,
    pub peg_length_m: f64,
    pub hole_depth_m: f64,
    pub plate_thickness_m: f64,
    pub stiffness_n_per_m: f64,
    pub damping_n_s_per_m: f64,
    pub friction: f64,
    pub slip_velocity_eps_m_per_s: f64,
    /// Translational admittance, (m/s)/N.
    pub compliance_linear: f64,
    /// Rotational admittance, (rad/s)/(N·m).
    pub compliance_angular: f64,
    pub force_noise_std_n: f64,
    pub torque_noise_std_nm: f64,
    pub max_penetration_m: f64,
    pub sampling: Sampling,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.002,
            peg_length_m: 0.05,
            hole_depth_m: 0.02,
            plate_thickness_m: 0.03,
            stiffness_n_per_m: 5e4,
            damping_n_s_per_m: 50.0,
            friction: 0.3,
            slip_velocity_eps_m_per_s: 5e-4,
            compliance_linear: 1e-3,
            compliance_angular: 1e-2,
            force_noise_std_n: 0.05,
            torque_noise_std_nm: 0.001,
            max_penetration_m: 0.002,
            sampling: Sampling::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_s", self.dt_s),
            ("peg_length_m", self.peg_length_m),
            ("hole_depth_m", self.hole_depth_m),
            ("plate_thickness_m", self.plate_thickness_m),
            ("stiffness_n_per_m", self.stiffness_n_per_m),
            ("slip_velocity_eps_m_per_s", self.slip_velocity_eps_m_per_s),
            ("compliance_linear", self.compliance_linear),
            ("compliance_angular", self.compliance_angular),
            ("max_penetration_m", self.max_penetration_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("sim.{name}"), format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("damping_n_s_per_m", self.damping_n_s_per_m),
            ("friction", self.friction),
            ("force_noise_std_n", self.force_noise_std_n),
            ("torque_noise_std_nm", self.torque_noise_std_nm),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("sim.{name}"), format!("must be >= 0, got {v}")));
            }
        }
        if self.sampling.rim_points < 64 || self.sampling.face_points < 64 || self.sampling.edge_points < 64 {
            return Err(Error::config("sim.sampling", "every sample count must be >= 64"));
        }
        Ok(())
    }

    pub fn contact_law(&self) -> ContactLaw {
        ContactLaw {
            stiffness: self.stiffness_n_per_m,
            damping: self.damping_n_s_per_m,
            friction: self.friction,
            slip_velocity_eps: self.slip_velocity_eps_m_per_s,
        }
    }

    fn compliance(&self) -> Vec6 {
        let (l, a) = (self.compliance_linear, self.compliance_angular);
        Vec6::new(l, l, l, a, a, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// World pose of the end-effector frame `E` (the peg tip).
    pub ee_pose: Pose,
    /// Achieved twist over the last step.
    pub twist: Twist,
    /// Noise-free external wrench: what the peg exerts on the environment,
    /// about `E`, in world axes. Exactly zero when nothing touches.
    pub f_ext: Wrench,
    /// `f_ext` plus sensor noise.
    pub f_measured: Wrench,
    pub sim_time: f64,
    pub steps: u64,
    pub contacts: usize,
    /// Set when the last step was rejected for excessive penetration.
    pub clamped: bool,
}

/// One peg/hole scene: geometry, physical constants, hole placement and the
/// sensor-noise stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    model: ContactModel,
    hole_pose: Pose,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(cfg: SimConfig, peg: CrossSection, hole: CrossSection, hole_pose: Pose, seed: u64) -> Result<Self> {
        cfg.validate()?;
        peg.validate()?;
        hole.validate()?;
        if geometry::centred_clearance(&peg, &hole) <= 0.0 {
            return Err(Error::InvalidArgument(
                "peg does not fit the hole at zero offset".into(),
            ));
        }
        let geometry = Geometry {
            peg,
            hole,
            peg_length: cfg.peg_length_m,
            hole_depth: cfg.hole_depth_m,
            plate_thickness: cfg.plate_thickness_m,
        };
        let model = ContactModel::new(geometry, &cfg.sampling);
        Ok(Self {
            cfg,
            model,
            hole_pose,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn hole_pose(&self) -> &Pose {
        &self.hole_pose
    }

    pub fn model(&self) -> &ContactModel {
        &self.model
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Peg pose in the hole frame.
    pub fn relative_pose(&self, ee_pose: &Pose) -> Pose {
        self.hole_pose.inverse().compose(ee_pose)
    }

    pub fn contacts_at(&self, ee_pose: &Pose) -> Vec<Contact> {
        self.model.contact_set(&self.relative_pose(ee_pose))
    }

    pub fn reset(&self, start_pose: &Pose) -> Result<SimState> {
        if !start_pose.is_finite() {
            return Err(Error::InvalidArgument("start pose is not finite".into()));
        }
        let contacts = self.contacts_at(start_pose).len();
        if contacts > 0 {
            return Err(Error::StartInCollision { contacts });
        }
        Ok(SimState {
            ee_pose: *start_pose,
            twist: Twist::zero(),
            f_ext: Wrench::zero(),
            f_measured: Wrench::zero(),
            sim_time: 0.0,
            steps: 0,
            contacts: 0,
            clamped: false,
        })
    }

    /// One control tick. The achieved twist is
    /// `v_des + C·(f_des − f_ext)`, solved implicitly against the contact
    /// stiffness so that stiff penalty contacts stay stable at the 2 ms step.
    pub fn step(&mut self, state: &SimState, v_des: &Twist, f_des: &Wrench) -> Result<SimState> {
        if !v_des.is_finite() || !f_des.is_finite() {
            return Err(Error::NonFinite("control command".into()));
        }
        let dt = self.cfg.dt_s;
        let law = self.cfg.contact_law();
        let to_hole = self.hole_pose.orientation.inverse();
        let rel = self.relative_pose(&state.ee_pose);
        let origin = rel.position;
        let v = v_des.rotated(&to_hole).to_vec6();
        let f = f_des.rotated(&to_hole).to_vec6();
        let previous = state.twist.rotated(&to_hole);
        let compliance = self.cfg.compliance();

        let contacts = self.model.contact_set(&rel);
        let mut active = vec![true; contacts.len()];
        let mut xi = Vec6::zeros();
        for _ in 0..4 {
            let lin = contact::linearize(&contacts, &active, &origin, &previous, &law, dt);
            let rhs = v + compliance.component_mul(&(f + lin.spring));
            let mut a = Matrix6::identity();
            for i in 0..6 {
                for j in 0..6 {
                    a[(i, j)] += compliance[i] * lin.stiffness[(i, j)];
                }
            }
            xi = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NonFinite("admittance solve".into()))?;
            // drop contacts that would pull
            let mut changed = false;
            let ximg = Twist::from_vec6(&xi);
            for (c, act) in contacts.iter().zip(active.iter_mut()) {
                if !*act {
                    continue;
                }
                let r = c.point - origin;
                let approach = -c.normal.dot(&(ximg.linear + ximg.angular.cross(&r)));
                let predicted = law.stiffness * (c.depth + dt * approach) + law.damping * approach;
                if predicted < 0.0 {
                    *act = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let twist = Twist::from_vec6(&xi);
        let mut next_rel = Pose::new(
            origin + twist.linear * dt,
            exp_so3(&(twist.angular * dt)) * rel.orientation,
        );
        next_rel.orientation = nalgebra::UnitQuaternion::new_normalize(next_rel.orientation.into_inner());

        let mut next_contacts = self.model.contact_set(&next_rel);
        let max_depth = next_contacts.iter().map(|c| c.depth).fold(0.0, f64::max);
        let mut clamped = false;
        let mut achieved = twist;
        if max_depth > self.cfg.max_penetration_m || next_rel.position.z < -self.cfg.peg_length_m {
            next_rel = rel;
            next_contacts = contacts;
            achieved = Twist::zero();
            clamped = true;
        }
        let on_peg = contact_wrench(&next_contacts, &next_rel.position, &achieved, &law);
        let f_ext = (-on_peg).rotated(&self.hole_pose.orientation);
        let f_measured = self.noisy(&f_ext);
        Ok(SimState {
            ee_pose: self.hole_pose.compose(&next_rel),
            twist: achieved.rotated(&self.hole_pose.orientation),
            f_ext,
            f_measured,
            sim_time: state.sim_time + dt,
            steps: state.steps + 1,
            contacts: next_contacts.len(),
            clamped,
        })
    }

    fn noisy(&mut self, w: &Wrench) -> Wrench {
        let (sf, st) = (self.cfg.force_noise_std_n, self.cfg.torque_noise_std_nm);
        if sf == 0.0 && st == 0.0 {
            return *w;
        }
        let mut draw = |s: f64| -> Vec3 {
            if s == 0.0 {
                return Vec3::zeros();
            }
            let d = Normal::new(0.0, s).expect("std validated");
            Vec3::new(d.sample(&mut self.rng), d.sample(&mut self.rng), d.sample(&mut self.rng))
        };
        let df = draw(sf);
        let dt = draw(st);
        Wrench::new(w.force + df, w.torque + dt)
    }
}

/// Free-function form of [`Simulator::step`].
pub fn hybrid_control_step(sim: &mut Simulator, state: &SimState, v_des: &Twist, f_des: &Wrench) -> Result<SimState> {
    sim.step(state, v_des, f_des)
}

/// Free-function form of [`Simulator::reset`].
pub fn reset_sim(sim: &Simulator, start_pose: &Pose) -> Result<SimState> {
    sim.reset(start_pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::axis_angle_rotation;
    use rand::Rng;

    fn quiet() -> SimConfig {
        SimConfig {
            force_noise_std_n: 0.0,
            torque_noise_std_nm: 0.0,
            ..SimConfig::default()
        }
    }

    fn round_sim(cfg: SimConfig, hole_pose: Pose) -> Simulator {
        Simulator::new(
            cfg,
            CrossSection::Round { radius: 0.029_96 / 2.0 },
            CrossSection::Round { radius: 0.030_03 / 2.0 },
            hole_pose,
            7,
        )
        .unwrap()
    }

    #[test]
    fn free_space_kinematics() {
        let mut sim = round_sim(quiet(), Pose::identity());
        let s0 = sim.reset(&Pose::from_translation(0.0, 0.0, 0.010)).unwrap();
        let v = Twist::new(Vec3::new(0.0, 0.0, -0.010), Vec3::zeros());
        let s1 = sim.step(&s0, &v, &Wrench::zero()).unwrap();
        assert!((s1.ee_pose.position.z - (0.010 - 0.000_02)).abs() < 1e-15);
        assert!(s1.f_ext.is_zero());
        assert!((s1.sim_time - 0.002).abs() < 1e-15);
    }

    #[test]
    fn reset_rejects_collision() {
        let sim = round_sim(quiet(), Pose::identity());
        let s = sim.reset(&Pose::from_translation(0.0, 0.0, 0.020)).unwrap();
        assert!(s.f_ext.is_zero() && s.sim_time == 0.0);
        assert!(matches!(
            sim.reset(&Pose::from_translation(0.02, 0.0, -0.001)),
            Err(Error::StartInCollision { .. })
        ));
    }

    fn press(sim: &mut Simulator, start: Pose, seconds: f64, fd: f64) -> SimState {
        let mut s = sim.reset(&start).unwrap();
        let f = Wrench::new(Vec3::new(0.0, 0.0, -fd), Vec3::zeros());
        let n = (seconds / sim.config().dt_s).round() as usize;
        for _ in 0..n {
            s = sim.step(&s, &Twist::zero(), &f).unwrap();
        }
        s
    }

    #[test]
    fn pressing_settles_to_desired_force() {
        let mut sim = round_sim(quiet(), Pose::identity());
        // resting on the plate far from the hole
        let s = press(&mut sim, Pose::from_translation(0.04, 0.0, 0.0001), 0.5, 8.0);
        assert!(s.contacts > 0);
        assert!((s.f_ext.force.z + 8.0).abs() < 0.03 * 8.0, "{:?}", s.f_ext);
    }

    #[test]
    fn relaxes_to_equilibrium_without_commands() {
        let mut sim = round_sim(quiet(), Pose::identity());
        let mut s = press(&mut sim, Pose::from_translation(0.04, 0.0, 0.0001), 0.5, 8.0);
        for _ in 0..500 {
            s = sim.step(&s, &Twist::zero(), &Wrench::zero()).unwrap();
        }
        // with nothing commanded the only equilibrium is a force-free one
        assert!(s.f_ext.force.norm() < 0.1);
    }

    #[test]
    fn random_separated_poses_have_zero_wrench() {
        let mut sim = round_sim(SimConfig::default(), Pose::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0).normalize();
            let q = axis_angle_rotation(&axis, rng.random_range(-0.3..0.3)).unwrap();
            let p = Vec3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(0.006..0.05),
            );
            let pose = Pose::new(p, q);
            if !sim.contacts_at(&pose).is_empty() {
                continue;
            }
            let s = sim.reset(&pose).unwrap();
            let s = sim.step(&s, &Twist::zero(), &Wrench::zero()).unwrap();
            assert!(s.f_ext.is_zero());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut sim = round_sim(SimConfig::default(), Pose::identity());
            let mut s = sim.reset(&Pose::from_translation(0.001, 0.0, 0.002)).unwrap();
            let v = Twist::new(Vec3::new(0.002, 0.0, -0.01), Vec3::zeros());
            let f = Wrench::new(Vec3::new(0.0, 0.0, -8.0), Vec3::zeros());
            let mut out = Vec::new();
            for _ in 0..400 {
                s = sim.step(&s, &v, &f).unwrap();
                out.push(s.clone());
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rotating_the_scene_leaves_relative_motion_unchanged() {
        let rot = Pose::new(
            Vec3::new(0.3, -0.1, 0.2),
            axis_angle_rotation(&Vec3::new(1.0, 2.0, 2.0).normalize(), 0.7).unwrap(),
        );
        let start_rel = Pose::from_translation(0.0005, -0.0003, 0.002);
        let v = Twist::new(Vec3::new(0.003, 0.001, -0.01), Vec3::new(0.0, 0.02, 0.0));
        let f = Wrench::new(Vec3::new(0.0, 0.0, -8.0), Vec3::zeros());
        let mut a = round_sim(quiet(), Pose::identity());
        let mut b = round_sim(quiet(), rot);
        let mut sa = a.reset(&start_rel).unwrap();
        let mut sb = b.reset(&rot.compose(&start_rel)).unwrap();
        for _ in 0..600 {
            sa = a.step(&sa, &v, &f).unwrap();
            sb = b
                .step(&sb, &v.rotated(&rot.orientation), &f.rotated(&rot.orientation))
                .unwrap();
            let rel_b = b.relative_pose(&sb.ee_pose);
            assert!((rel_b.position - sa.ee_pose.position).norm() < 1e-9);
            assert!(rel_b.orientation.angle_to(&sa.ee_pose.orientation) < 1e-9);
        }
        assert!(sa.contacts > 0);
    }
}
