//! Manipulation primitives: a velocity command, a force command and a
//! stopping rule, each parameterized by a small vector of scalars.

mod catalog;
mod execute;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use catalog::{build_catalog, catalog_table, CatalogConfig, CATALOG_SIZE};
pub use execute::{execute, threshold_exceeded, ExecConfig, MpOutcome, TaskFrame, TaskView};

use crate::error::{Error, Result};
use crate::se3::{rotation_vector, Twist, Vec3, Wrench};

/// Slack allowed when checking a parameter vector against its bounds.
const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MpStatus {
    Success,
    Failure,
    Continue,
}

impl fmt::Display for MpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MpStatus::Success => "SUCCESS",
            MpStatus::Failure => "FAILURE",
            MpStatus::Continue => "CONTINUE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FreeSpace,
    InContact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    TranslateUntilContact,
    TranslateFixed,
    RotateFixed,
    RotateUntilContact,
    Insert,
}

impl Kind {
    pub fn symbol(&self) -> &'static str {
        match self {
            Kind::TranslateUntilContact => "Tc",
            Kind::TranslateFixed => "T",
            Kind::RotateFixed => "R",
            Kind::RotateUntilContact => "Rc",
            Kind::Insert => "I",
        }
    }
}

/// Signed elementary axis of the task frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Axis {
    pub index: u8,
    pub negative: bool,
}

impl Axis {
    pub const X: Axis = Axis { index: 0, negative: false };
    pub const Y: Axis = Axis { index: 1, negative: false };
    pub const Z: Axis = Axis { index: 2, negative: false };
    pub const NEG_Z: Axis = Axis { index: 2, negative: true };

    pub fn unit(&self) -> Vec3 {
        let mut v = Vec3::zeros();
        v[self.index as usize] = if self.negative { -1.0 } else { 1.0 };
        v
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = ["x", "y", "z"][self.index as usize];
        if self.negative {
            write!(f, "-{name}")
        } else {
            f.write_str(name)
        }
    }
}

/// Names of every scalar a primitive may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    /// Speed along/about the axis, m/s or rad/s.
    V,
    /// Force (N) or torque (N·m) threshold.
    FThr,
    /// Timeout, s.
    T,
    /// Distance (m) or angle (rad).
    D,
    /// Magnitude of the pressing force along -z, N.
    Fd,
    /// Torque-regulation gain, (rad/s)/(N·m).
    K,
    /// Goal tolerance, m.
    Eps,
}

impl ParamName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::V => "v",
            ParamName::FThr => "f_thr",
            ParamName::T => "T",
            ParamName::D => "d",
            ParamName::Fd => "f_d",
            ParamName::K => "k",
            ParamName::Eps => "eps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: ParamName,
    pub low: f64,
    pub high: f64,
    pub unit: String,
}

impl ParamBound {
    /// Maps `x ∈ [-1, 1]` affinely onto `[low, high]`, clipping first.
    pub fn denormalize(&self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        self.low + 0.5 * (x + 1.0) * (self.high - self.low)
    }

    pub fn normalize(&self, value: f64) -> f64 {
        2.0 * (value - self.low) / (self.high - self.low) - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationPrimitive {
    pub id: usize,
    pub name: String,
    pub family: Family,
    pub kind: Kind,
    pub axis: Axis,
    pub fixed: BTreeMap<ParamName, f64>,
    pub learnable: Vec<ParamBound>,
}

/// Every scalar of a primitive after merging fixed values with a learnable
/// parameter vector. Units are SI.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpParams {
    pub v: f64,
    pub f_thr: f64,
    pub t_max: f64,
    pub d: f64,
    pub f_d: f64,
    pub k: f64,
    pub eps: f64,
}

impl MpParams {
    fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::V => self.v = value,
            ParamName::FThr => self.f_thr = value,
            ParamName::T => self.t_max = value,
            ParamName::D => self.d = value,
            ParamName::Fd => self.f_d = value,
            ParamName::K => self.k = value,
            ParamName::Eps => self.eps = value,
        }
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::V => self.v,
            ParamName::FThr => self.f_thr,
            ParamName::T => self.t_max,
            ParamName::D => self.d,
            ParamName::Fd => self.f_d,
            ParamName::K => self.k,
            ParamName::Eps => self.eps,
        }
    }
}

impl ManipulationPrimitive {
    pub fn dim(&self) -> usize {
        self.learnable.len()
    }

    /// Merges fixed values with `theta` (physical units), rejecting vectors of
    /// the wrong length or outside the learnable bounds.
    pub fn resolve(&self, theta: &[f64]) -> Result<MpParams> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} parameters, got {}",
                self.name,
                self.dim(),
                theta.len()
            )));
        }
        let mut p = MpParams::default();
        for (name, value) in &self.fixed {
            p.set(*name, *value);
        }
        for (b, &x) in self.learnable.iter().zip(theta) {
            let slack = BOUND_TOL * (1.0 + b.low.abs().max(b.high.abs()));
            if !x.is_finite() || x < b.low - slack || x > b.high + slack {
                return Err(Error::InvalidArgument(format!(
                    "{}: {} = {x} outside [{}, {}]",
                    self.name,
                    b.name.as_str(),
                    b.low,
                    b.high
                )));
            }
            p.set(b.name, x);
        }
        Ok(p)
    }

    /// Physical parameters from a normalized vector in `[-1, 1]` (clipped).
    pub fn denormalize(&self, normalized: &[f64]) -> Vec<f64> {
        self.learnable
            .iter()
            .zip(normalized)
            .map(|(b, &x)| b.denormalize(x))
            .collect()
    }

    fn pressing_force(&self, p: &MpParams) -> Wrench {
        match self.family {
            Family::FreeSpace => Wrench::zero(),
            Family::InContact => Wrench::new(Vec3::new(0.0, 0.0, -p.f_d), Vec3::zeros()),
        }
    }

    /// Velocity and force commands in the task frame, given the measured
    /// wrench in task axes.
    pub fn desired_commands(&self, p: &MpParams, _t: f64, view: &TaskView) -> (Twist, Wrench) {
        let u = self.axis.unit();
        let twist = match self.kind {
            Kind::TranslateUntilContact => Twist::new(u * p.v, Vec3::zeros()),
            Kind::TranslateFixed => Twist::new(u * (p.v * sign(p.d)), Vec3::zeros()),
            Kind::RotateFixed => Twist::new(Vec3::zeros(), u * (p.v * sign(p.d))),
            Kind::RotateUntilContact => Twist::new(Vec3::zeros(), u * p.v),
            Kind::Insert => Twist::new(Vec3::zeros(), -view.wrench.torque * p.k),
        };
        let force = match self.kind {
            Kind::Insert => Wrench::new(Vec3::new(0.0, 0.0, -p.f_d), Vec3::zeros()),
            _ => self.pressing_force(p),
        };
        (twist, force)
    }

    fn motion_direction(&self, p: &MpParams) -> Vec3 {
        let s = if p.v < 0.0 { -1.0 } else { 1.0 };
        self.axis.unit() * s
    }

    /// Stopping rule. `streak` counts immediately preceding control ticks on
    /// which the until-contact threshold already held; `debounce` is how many
    /// consecutive ticks are needed.
    pub fn stopping(&self, p: &MpParams, t: f64, view: &TaskView, start: &TaskView, streak: u32, debounce: u32, goal: &Vec3) -> MpStatus {
        let u = self.axis.unit();
        match self.kind {
            Kind::TranslateUntilContact | Kind::RotateUntilContact => {
                if threshold_exceeded(self, p, view) && streak + 1 >= debounce.max(1) {
                    MpStatus::Success
                } else if t >= p.t_max - 1e-12 {
                    MpStatus::Failure
                } else {
                    MpStatus::Continue
                }
            }
            Kind::TranslateFixed | Kind::RotateFixed => {
                let (progress, load) = if self.kind == Kind::TranslateFixed {
                    ((view.pose.position - start.pose.position).dot(&u), view.wrench.force.norm())
                } else {
                    let rel = view.pose.orientation * start.pose.orientation.inverse();
                    (rotation_vector(&rel).dot(&u), view.wrench.torque.norm())
                };
                let target = p.d.abs();
                if progress * sign(p.d) >= target - 1e-12 {
                    MpStatus::Success
                } else if load > p.f_thr {
                    MpStatus::Failure
                } else if t >= 2.0 * target / p.v.abs() - 1e-12 {
                    MpStatus::Failure
                } else {
                    MpStatus::Continue
                }
            }
            Kind::Insert => {
                if (view.pose.position - goal).norm() <= p.eps {
                    MpStatus::Success
                } else if t >= p.t_max - 1e-12 {
                    MpStatus::Failure
                } else {
                    MpStatus::Continue
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}
