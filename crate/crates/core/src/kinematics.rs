//! Direct and inverse kinematics of the two-axis equatorial mount.
//!
//! Link 1 (length `l1`) turns about the hour-angle axis by `theta1`; link 2
//! (length `l2`) is orthogonal to it at the declination node and turns by
//! `theta2`. The whole mount is tilted by `alpha` about the x axis. Angles
//! are radians here; the file and CLI boundary speaks degrees.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance on the reachability tests of [`inverse`].
pub const REACH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountGeometry {
    pub l1: f64,
    pub l2: f64,
    pub alpha: f64,
}

impl Default for MountGeometry {
    fn default() -> Self {
        MountGeometry {
            l1: 1.0,
            l2: 0.5,
            alpha: 4.6_f64.to_radians(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    l1: f64,
    l2: f64,
    alpha_deg: f64,
}

impl Serialize for MountGeometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GeometryFile {
            l1: self.l1,
            l2: self.l2,
            alpha_deg: self.alpha.to_degrees(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MountGeometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = GeometryFile::deserialize(d)?;
        MountGeometry::new(f.l1, f.l2, f.alpha_deg.to_radians()).map_err(serde::de::Error::custom)
    }
}

impl MountGeometry {
    pub fn new(l1: f64, l2: f64, alpha: f64) -> Result<Self> {
        let g = MountGeometry { l1, l2, alpha };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1 > 0.0 && self.l1.is_finite() && self.l2 > 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!(
                "link lengths must be positive and finite (l1 = {}, l2 = {})",
                self.l1, self.l2
            )));
        }
        if !(self.alpha.abs() < PI / 2.0) {
            return Err(Error::invalid(format!(
                "tilt angle must lie in (-90, 90) degrees, got {}",
                self.alpha.to_degrees()
            )));
        }
        Ok(())
    }

    /// Radius of the sphere every effector position lies on.
    pub fn reach(&self) -> f64 {
        self.l1.hypot(self.l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub theta1: f64,
    pub theta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorPos {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EffectorPos {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

pub fn direct(geom: &MountGeometry, joints: JointAngles) -> EffectorPos {
    let (s1, c1) = joints.theta1.sin_cos();
    let (s2, c2) = joints.theta2.sin_cos();
    let (sa, ca) = geom.alpha.sin_cos();
    let w = geom.l1 * s1 - geom.l2 * s2 * c1;
    EffectorPos {
        x: geom.l1 * c1 + geom.l2 * s2 * s1,
        y: sa * geom.l2 * c2 + w * ca,
        z: ca * geom.l2 * c2 - w * sa,
    }
}

fn wrap_pi(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Joint angles reaching `pos`, with `theta2` in `[0, pi]` (non-negative
/// sine branch) and `theta1` in `(-pi, pi]`.
///
/// Rejects positions off the reach sphere or with an elbow cosine beyond
/// one, each by more than [`REACH_TOL`] relative.
pub fn inverse(geom: &MountGeometry, pos: EffectorPos) -> Result<JointAngles> {
    geom.validate()?;
    if ![pos.x, pos.y, pos.z].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("effector position".into()));
    }
    let (sa, ca) = geom.alpha.sin_cos();
    let reach = geom.reach();
    let radial = pos.norm() - reach;
    let c2_raw = (sa * pos.y + ca * pos.z) / geom.l2;
    let elbow = (c2_raw.abs() - 1.0).max(0.0);
    if radial.abs() > REACH_TOL * reach || elbow > REACH_TOL {
        return Err(Error::Unreachable { radial, elbow });
    }
    let c2 = c2_raw.clamp(-1.0, 1.0);
    let s2 = (1.0 - c2 * c2).sqrt();
    let theta2 = s2.atan2(c2);
    // Rotating the tilt back out leaves the pair (X, W) = R (cos, sin)(theta1 - phi).
    let w = ca * pos.y - sa * pos.z;
    let phi = (geom.l2 * s2).atan2(geom.l1);
    let theta1 = wrap_pi(w.atan2(pos.x) + phi);
    Ok(JointAngles { theta1, theta2 })
}

/// Closed joint-angle rectangle, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub theta1: (f64, f64),
    pub theta2: (f64, f64),
}

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits {
            theta1: (-PI, PI),
            theta2: (-PI, PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkspacePoint {
    pub joints: JointAngles,
    pub pos: EffectorPos,
}

fn grid(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k == n - 1 {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Direct kinematics on an `n_theta1 x n_theta2` grid spanning the limits
/// (endpoints included), theta1-major.
pub fn workspace(
    geom: &MountGeometry,
    n_theta1: usize,
    n_theta2: usize,
    limits: &JointLimits,
) -> Result<Vec<WorkspacePoint>> {
    geom.validate()?;
    if n_theta1 < 2 || n_theta2 < 2 {
        return Err(Error::invalid("workspace grid needs at least 2 points per axis"));
    }
    for (name, (lo, hi)) in [("theta1", limits.theta1), ("theta2", limits.theta2)] {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("{name} limits must be finite and ordered")));
        }
    }
    Ok((0..n_theta1 * n_theta2)
        .into_par_iter()
        .map(|idx| {
            let joints = JointAngles {
                theta1: grid(limits.theta1.0, limits.theta1.1, n_theta1, idx / n_theta2),
                theta2: grid(limits.theta2.0, limits.theta2.1, n_theta2, idx % n_theta2),
            };
            WorkspacePoint {
                joints,
                pos: direct(geom, joints),
            }
        })
        .collect())
}

pub const WORKSPACE_HEADER: &str = "theta1_deg,theta2_deg,x,y,z";

pub fn workspace_csv(points: &[WorkspacePoint]) -> String {
    let mut out = String::with_capacity(points.len() * 64 + 32);
    out.push_str(WORKSPACE_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.joints.theta1.to_degrees(),
            p.joints.theta2.to_degrees(),
            p.pos.x,
            p.pos.y,
            p.pos.z
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(alpha: f64) -> MountGeometry {
        MountGeometry::new(1.0, 0.5, alpha).unwrap()
    }

    fn close(a: EffectorPos, b: (f64, f64, f64)) -> bool {
        (a.x - b.0).abs() < 1e-12 && (a.y - b.1).abs() < 1e-12 && (a.z - b.2).abs() < 1e-12
    }

    #[test]
    fn direct_examples() {
        let g = geom(0.0);
        let p = direct(&g, JointAngles { theta1: 0.0, theta2: 0.0 });
        assert!(close(p, (1.0, 0.0, 0.5)), "{p:?}");
        let p = direct(&g, JointAngles { theta1: PI / 2.0, theta2: PI / 2.0 });
        assert!(close(p, (0.5, 1.0, 0.0)), "{p:?}");
    }

    #[test]
    fn inverse_examples() {
        let g = geom(0.0);
        let j = inverse(&g, EffectorPos { x: 1.0, y: 0.0, z: 0.5 }).unwrap();
        assert!(j.theta1.abs() < 1e-12 && j.theta2.abs() < 1e-12, "{j:?}");

        let g = geom(0.2);
        let p = direct(&g, JointAngles { theta1: 0.3, theta2: 0.5 });
        let j = inverse(&g, p).unwrap();
        assert!((j.theta1 - 0.3).abs() < 1e-9 && (j.theta2 - 0.5).abs() < 1e-9, "{j:?}");
    }

    #[test]
    fn elbow_boundary_gives_zero_theta2() {
        let g = geom(0.2);
        let p = direct(&g, JointAngles { theta1: -0.7, theta2: 0.0 });
        let (sa, ca) = g.alpha.sin_cos();
        assert!((sa * p.y + ca * p.z - g.l2).abs() < 1e-15);
        assert_eq!(inverse(&g, p).unwrap().theta2, 0.0);
    }

    #[test]
    fn x_zero_uses_quadrant_aware_angle() {
        let g = geom(0.0);
        // theta1 = pi/2, theta2 = 0 puts the effector at X = 0.
        let p = direct(&g, JointAngles { theta1: PI / 2.0, theta2: 0.0 });
        assert!(p.x.abs() < 1e-15);
        let j = inverse(&g, p).unwrap();
        assert!((j.theta1 - PI / 2.0).abs() < 1e-12, "{j:?}");
    }

    #[test]
    fn unreachable_positions() {
        let g = geom(0.1);
        match inverse(&g, EffectorPos { x: 2.0, y: 0.0, z: 0.0 }) {
            Err(Error::Unreachable { radial, .. }) => assert!((radial - (2.0 - g.reach())).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        // On the sphere but with the elbow cosine beyond one.
        let r = g.reach();
        let (sa, ca) = g.alpha.sin_cos();
        let p = EffectorPos { x: 0.0, y: r * sa, z: r * ca };
        assert!(matches!(inverse(&g, p), Err(Error::Unreachable { elbow, .. }) if elbow > 0.0));
    }

    #[test]
    fn geometry_validation_and_json() {
        assert!(MountGeometry::new(0.0, 1.0, 0.0).is_err());
        assert!(MountGeometry::new(1.0, 1.0, PI / 2.0).is_err());
        let g: MountGeometry = serde_json::from_str(r#"{"l1":2,"l2":1,"alpha_deg":30}"#).unwrap();
        assert!((g.alpha - PI / 6.0).abs() < 1e-15);
        let back: MountGeometry = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert!((back.alpha - g.alpha).abs() < 1e-15 && back.l1 == 2.0);
        assert!(serde_json::from_str::<MountGeometry>(r#"{"l1":-1,"l2":1,"alpha_deg":0}"#).is_err());
    }

    #[test]
    fn two_by_two_grid_is_the_corner_points() {
        let g = geom(0.0);
        let lim = JointLimits {
            theta1: (0.0, PI / 2.0),
            theta2: (0.0, PI / 2.0),
        };
        let pts = workspace(&g, 2, 2, &lim).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(close(pts[0].pos, (1.0, 0.0, 0.5)));
        assert!(close(pts[3].pos, (0.5, 1.0, 0.0)));
        assert_eq!(pts[1].joints, JointAngles { theta1: 0.0, theta2: PI / 2.0 });
        assert_eq!(pts[2].joints, JointAngles { theta1: PI / 2.0, theta2: 0.0 });
        assert!(workspace(&g, 1, 2, &lim).is_err());
    }

    #[test]
    fn restricted_grid_is_a_subset() {
        let g = MountGeometry::default();
        let full = workspace(&g, 9, 9, &JointLimits { theta1: (-PI, PI), theta2: (-PI, PI) }).unwrap();
        let part = workspace(&g, 5, 5, &JointLimits { theta1: (0.0, PI), theta2: (0.0, PI) }).unwrap();
        for p in &part {
            assert!(full.iter().any(|q| (q.joints.theta1 - p.joints.theta1).abs() < 1e-12
                && (q.joints.theta2 - p.joints.theta2).abs() < 1e-12
                && close(q.pos, (p.pos.x, p.pos.y, p.pos.z))));
        }
    }

    #[test]
    fn csv_layout() {
        let g = geom(0.0);
        let pts = workspace(&g, 2, 2, &JointLimits { theta1: (0.0, PI / 2.0), theta2: (0.0, PI / 2.0) }).unwrap();
        let s = workspace_csv(&pts);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some(WORKSPACE_HEADER));
        assert_eq!(lines.next(), Some("0,0,1,0,0.5"));
        assert_eq!(s.lines().count(), 5);
    }
}
