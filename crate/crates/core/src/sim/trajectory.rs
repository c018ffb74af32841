use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::TcpPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub position: [f64; 3],
    pub dwell_s: f64,
}

/// Periodic scripted TCP path in the camera frame.
///
/// Each cycle dwells at every waypoint in turn and moves to the next one
/// along a straight line with a trapezoidal speed profile, closing the loop
/// back to the first waypoint. Time left over in `cycle_period_s` is spent
/// at the first waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotTrajectory {
    pub waypoints: Vec<Waypoint>,
    pub cycle_period_s: f64,
    pub speed_mps: f64,
    /// `None` moves at constant speed.
    pub accel_mps2: Option<f64>,
}

impl Default for RobotTrajectory {
    fn default() -> Self {
        let wp = |x, y, z, dwell_s| Waypoint { position: [x, y, z], dwell_s };
        Self {
            waypoints: vec![
                wp(0.15, 0.00, 1.10, 1.0),
                wp(0.05, 0.05, 1.00, 0.5),
                wp(0.05, 0.05, 0.92, 2.0),
                wp(0.15, -0.05, 1.00, 0.5),
            ],
            cycle_period_s: 10.0,
            speed_mps: 0.25,
            accel_mps2: Some(0.5),
        }
    }
}

impl RobotTrajectory {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m| Err(SimError::InvalidTrajectory(m));
        if self.waypoints.len() < 2 {
            return bad("at least two waypoints required");
        }
        if self
            .waypoints
            .iter()
            .any(|w| !w.dwell_s.is_finite() || w.dwell_s < 0.0 || w.position.iter().any(|c| !c.is_finite()))
        {
            return bad("waypoints must be finite with non-negative dwell");
        }
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return bad("speed must be positive");
        }
        if let Some(a) = self.accel_mps2 {
            if !(a > 0.0 && a.is_finite()) {
                return bad("acceleration must be positive");
            }
        }
        if !(self.cycle_period_s > 0.0 && self.cycle_period_s.is_finite()) {
            return bad("cycle period must be positive");
        }
        if self.cycle_period_s + 1e-9 < self.min_cycle_s() {
            return bad("cycle period shorter than motion plus dwell time");
        }
        Ok(())
    }

    fn point(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.waypoints[i % self.waypoints.len()].position)
    }

    fn segment_time(&self, len: f64) -> f64 {
        let v = self.speed_mps;
        match self.accel_mps2 {
            None => len / v,
            Some(a) if len >= v * v / a => len / v + v / a,
            Some(a) => 2.0 * (len / a).sqrt(),
        }
    }

    /// Distance covered `tau` seconds into a segment of length `len`.
    fn segment_progress(&self, len: f64, tau: f64) -> f64 {
        let v = self.speed_mps;
        let Some(a) = self.accel_mps2 else {
            return (v * tau).min(len);
        };
        let total = self.segment_time(len);
        let t_acc = (v / a).min(0.5 * total);
        let v_peak = a * t_acc;
        let s = if tau < t_acc {
            0.5 * a * tau * tau
        } else if tau < total - t_acc {
            0.5 * a * t_acc * t_acc + v_peak * (tau - t_acc)
        } else {
            let r = (total - tau).max(0.0);
            len - 0.5 * a * r * r
        };
        s.clamp(0.0, len)
    }

    pub fn min_cycle_s(&self) -> f64 {
        (0..self.waypoints.len())
            .map(|i| self.waypoints[i].dwell_s + self.segment_time((self.point(i + 1) - self.point(i)).norm()))
            .sum()
    }

    pub fn position_at(&self, t_s: f64) -> Vector3<f64> {
        let mut tau = t_s.rem_euclid(self.cycle_period_s);
        for i in 0..self.waypoints.len() {
            let dwell = self.waypoints[i].dwell_s;
            if tau < dwell {
                return self.point(i);
            }
            tau -= dwell;
            let (a, b) = (self.point(i), self.point(i + 1));
            let len = (b - a).norm();
            let dur = self.segment_time(len);
            if tau < dur {
                if len == 0.0 {
                    return a;
                }
                return a + (b - a) * (self.segment_progress(len, tau) / len);
            }
            tau -= dur;
        }
        self.point(0)
    }
}

pub fn robot_tcp_at(traj: &RobotTrajectory, t_s: f64) -> TcpPoint<f64> {
    TcpPoint { position: traj.position_at(t_s), timestamp_ms: t_s * 1000.0 }
}
