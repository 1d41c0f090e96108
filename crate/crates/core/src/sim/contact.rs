//! Point-sampled penalty contacts between a prismatic peg and a plate with a
//! blind hole.
//!
//! All quantities here live in the hole frame: the plate top is `z = 0`, the
//! hole opens along `-z`. The peg frame has its origin at the centre of the
//! peg's bottom face with the peg extending along its own `+z`.

use nalgebra::{Matrix6, SMatrix};
use serde::{Deserialize, Serialize};

use super::geometry::{CrossSection, Vec2};
use crate::se3::{skew, stack, Pose, Twist, Vec3, Vec6, Wrench};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub peg: CrossSection,
    pub hole: CrossSection,
    pub peg_length: f64,
    pub hole_depth: f64,
    pub plate_thickness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub rim_points: usize,
    pub face_points: usize,
    pub wall_rings: usize,
    pub ring_spacing_m: f64,
    pub edge_points: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            rim_points: 128,
            face_points: 64,
            wall_rings: 4,
            ring_spacing_m: 0.0025,
            edge_points: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub point: Vec3,
    /// Direction of the environment's push on the peg.
    pub normal: Vec3,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactLaw {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub slip_velocity_eps: f64,
}

impl ContactLaw {
    pub fn normal_force(&self, depth: f64, approach_speed: f64) -> f64 {
        (self.stiffness * depth + self.damping * approach_speed).max(0.0)
    }
}

/// Precomputed sample sets for one peg/hole pair.
#[derive(Debug, Clone)]
pub struct ContactModel {
    geometry: Geometry,
    peg_samples: Vec<Vec3>,
    edge_samples: Vec<Vec3>,
}

impl ContactModel {
    pub fn new(geometry: Geometry, sampling: &Sampling) -> Self {
        let peg = geometry.peg;
        let lift = |p: Vec2, z: f64| Vec3::new(p.x, p.y, z);
        let mut peg_samples: Vec<Vec3> = peg
            .perimeter_points(sampling.rim_points)
            .into_iter()
            .map(|p| lift(p, 0.0))
            .collect();
        peg_samples.extend(
            peg.interior_points(sampling.face_points)
                .into_iter()
                .map(|p| lift(p, 0.0)),
        );
        let rim = peg.perimeter_points(sampling.rim_points);
        for k in 1..=sampling.wall_rings {
            let z = k as f64 * sampling.ring_spacing_m;
            if z < geometry.peg_length {
                peg_samples.extend(rim.iter().map(|p| lift(*p, z)));
            }
        }
        let edge_samples = geometry
            .hole
            .perimeter_points(sampling.edge_points)
            .into_iter()
            .map(|p| lift(p, 0.0))
            .collect();
        Self {
            geometry,
            peg_samples,
            edge_samples,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn peg_samples(&self) -> &[Vec3] {
        &self.peg_samples
    }

    /// Penetration of a hole-frame point into the plate, with the direction
    /// that pushes it back out.
    pub fn environment_penetration(&self, q: &Vec3) -> Option<(f64, Vec3)> {
        let g = &self.geometry;
        if q.z >= 0.0 || q.z <= -g.plate_thickness {
            return None;
        }
        let (sd, n_out) = g.hole.signed_distance(&Vec2::new(q.x, q.y));
        let below = q.z + g.plate_thickness;
        if sd < 0.0 {
            // inside the hole footprint: only the floor of a blind hole
            if g.hole_depth >= g.plate_thickness || q.z >= -g.hole_depth {
                return None;
            }
            let floor = -g.hole_depth - q.z;
            return Some(if floor <= below {
                (floor, Vec3::z())
            } else {
                (below, -Vec3::z())
            });
        }
        let mut best = (-q.z, Vec3::z());
        if sd < best.0 {
            best = (sd, Vec3::new(-n_out.x, -n_out.y, 0.0));
        }
        if below < best.0 {
            best = (below, -Vec3::z());
        }
        Some(best)
    }

    /// Contacts for the peg at `peg_pose` (hole frame). Every entry has a
    /// strictly positive depth.
    pub fn contact_set(&self, peg_pose: &Pose) -> Vec<Contact> {
        let mut out = Vec::new();
        for s in &self.peg_samples {
            let q = peg_pose.transform_point(s);
            if let Some((depth, normal)) = self.environment_penetration(&q) {
                if depth > 0.0 {
                    out.push(Contact {
                        point: q,
                        normal,
                        depth,
                    });
                }
            }
        }
        // hole mouth edge pressing into the peg's side wall
        let inv = peg_pose.inverse();
        let g = &self.geometry;
        for e in &self.edge_samples {
            let q = inv.transform_point(e);
            if q.z <= 0.0 || q.z >= g.peg_length {
                continue;
            }
            let (sd, n_out) = g.peg.signed_distance(&Vec2::new(q.x, q.y));
            let depth = -sd;
            if depth <= 0.0 || depth > q.z {
                continue;
            }
            let normal = peg_pose.transform_vector(&Vec3::new(-n_out.x, -n_out.y, 0.0));
            out.push(Contact {
                point: *e,
                normal,
                depth,
            });
        }
        out
    }
}

/// Wrench exerted by the environment on the peg, about `origin`, for a peg
/// moving with `twist` (linear velocity of `origin` and angular velocity).
pub fn contact_wrench(contacts: &[Contact], origin: &Vec3, twist: &Twist, law: &ContactLaw) -> Wrench {
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for c in contacts {
        let r = c.point - origin;
        let vp = twist.linear + twist.angular.cross(&r);
        let vn = c.normal.dot(&vp);
        let fn_ = law.normal_force(c.depth, -vn);
        let vt = vp - c.normal * vn;
        let speed = vt.norm();
        let ft = if speed > 0.0 {
            -vt * (law.friction * fn_ / speed.max(law.slip_velocity_eps))
        } else {
            Vec3::zeros()
        };
        let f = c.normal * fn_ + ft;
        force += f;
        torque += r.cross(&f);
    }
    Wrench::new(force, torque)
}

/// Linearisation of the contact wrench around the current pose for an
/// implicit step of length `dt`: the wrench on the peg after applying twist
/// `ξ` for `dt` is approximately `spring - stiffness · ξ`.
pub(crate) struct Linearized {
    pub spring: Vec6,
    pub stiffness: Matrix6<f64>,
}

pub(crate) fn linearize(
    contacts: &[Contact],
    active: &[bool],
    origin: &Vec3,
    previous: &Twist,
    law: &ContactLaw,
    dt: f64,
) -> Linearized {
    let mut spring = Vec6::zeros();
    let mut stiffness = Matrix6::zeros();
    let kn = law.stiffness * dt + law.damping;
    for (c, _) in contacts.iter().zip(active).filter(|(_, a)| **a) {
        let r = c.point - origin;
        let g = stack(&c.normal, &r.cross(&c.normal));
        let fs = law.stiffness * c.depth;
        spring += g * fs;
        stiffness += g * g.transpose() * kn;
        if law.friction > 0.0 {
            // point velocity = A ξ with A = [I, -[r]x]
            let mut a = SMatrix::<f64, 3, 6>::zeros();
            a.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
            a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&r)));
            let vp = previous.linear + previous.angular.cross(&r);
            let vt = vp - c.normal * c.normal.dot(&vp);
            let eta = law.friction * fs / vt.norm().max(law.slip_velocity_eps);
            let proj = nalgebra::Matrix3::identity() - c.normal * c.normal.transpose();
            stiffness += a.transpose() * proj * a * eta;
        }
    }
    Linearized { spring, stiffness }
}
