use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Single-point wrist model of an inattentive worker.
///
/// The hand shuttles between task positions. Now and then it reaches for an
/// item lost near the robot; once the worker notices the robot (by sight or
/// by airflow) the hand retreats after the motor reaction delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanModel {
    /// Bit tray and toolbox, camera frame.
    pub task_positions: Vec<[f64; 3]>,
    pub task_dwell_s: f64,
    /// Centre and half-widths of the box where items get lost.
    pub item_center: [f64; 3],
    pub item_spread: [f64; 3],
    pub grab_dwell_s: f64,
    /// Probability per second of starting a reach while at the task.
    pub excursion_rate: f64,
    pub reaction_latency_ms: f64,
    pub reach_speed: f64,
    pub retreat_speed: f64,
    /// Probability of noticing the robot visually per glance cycle while
    /// inside the activation distance.
    pub attention_p: f64,
    pub glance_period_ms: f64,
}

impl Default for HumanModel {
    fn default() -> Self {
        Self {
            task_positions: vec![[-0.40, 0.10, 1.00], [-0.40, -0.15, 1.00]],
            task_dwell_s: 1.5,
            item_center: [-0.12, 0.00, 1.00],
            item_spread: [0.06, 0.08, 0.04],
            grab_dwell_s: 0.5,
            excursion_rate: 0.04,
            reaction_latency_ms: 250.0,
            reach_speed: 0.12,
            retreat_speed: 0.15,
            attention_p: 0.2125,
            glance_period_ms: 100.0,
        }
    }
}

impl HumanModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m| Err(SimError::InvalidHuman(m));
        if self.task_positions.is_empty() {
            return bad("at least one task position required");
        }
        let coords = self.task_positions.iter().flatten().chain(&self.item_center).chain(&self.item_spread);
        if coords.clone().any(|c| !c.is_finite()) || self.item_spread.iter().any(|s| *s < 0.0) {
            return bad("positions must be finite and spreads non-negative");
        }
        for p in [self.excursion_rate, self.attention_p] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(self.reach_speed > 0.0 && self.retreat_speed.is_finite()) {
            return bad("speeds must be positive and finite");
        }
        if self.reach_speed > self.retreat_speed {
            return bad("reach speed may not exceed retreat speed");
        }
        for t in [self.reaction_latency_ms, self.task_dwell_s, self.grab_dwell_s] {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("durations must be non-negative");
            }
        }
        if !(self.glance_period_ms > 0.0 && self.glance_period_ms.is_finite()) {
            return bad("glance period must be positive");
        }
        Ok(())
    }

    pub(crate) fn sample_item<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        let mut p = Vector3::from(self.item_center);
        for i in 0..3 {
            p[i] += self.item_spread[i] * (2.0 * rng.random::<f64>() - 1.0);
        }
        p
    }

    fn nearest_task(&self, pos: &Vector3<f64>) -> usize {
        let d = |i: usize| (Vector3::from(self.task_positions[i]) - pos).norm();
        (0..self.task_positions.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Phase {
    Task { goal: usize, dwell_left_s: f64 },
    Reach { item: Vector3<f64> },
    Grab { item: Vector3<f64>, left_s: f64 },
    Return { speed: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Hand {
    pub pos: Vector3<f64>,
    pub phase: Phase,
    pub noticed: bool,
    pub retreat_at_ms: Option<f64>,
}

fn step_toward(pos: &mut Vector3<f64>, goal: &Vector3<f64>, max_step: f64) -> bool {
    let delta = goal - *pos;
    let dist = delta.norm();
    if dist <= max_step {
        *pos = *goal;
        true
    } else {
        *pos += delta * (max_step / dist);
        false
    }
}

impl Hand {
    pub fn new(model: &HumanModel) -> Self {
        Self {
            pos: Vector3::from(model.task_positions[0]),
            phase: Phase::Task { goal: 0, dwell_left_s: model.task_dwell_s },
            noticed: false,
            retreat_at_ms: None,
        }
    }

    pub fn on_excursion(&self) -> bool {
        !matches!(self.phase, Phase::Task { .. })
    }

    pub fn start_excursion(&mut self, item: Vector3<f64>) {
        self.phase = Phase::Reach { item };
        self.noticed = false;
        self.retreat_at_ms = None;
    }

    pub fn notice(&mut self, now_ms: f64, model: &HumanModel) {
        if self.on_excursion() && !self.noticed {
            self.noticed = true;
            self.retreat_at_ms = Some(now_ms + model.reaction_latency_ms);
        }
    }

    /// Advances the hand by one tick ending at `now_ms`.
    pub fn advance(&mut self, now_ms: f64, dt_s: f64, model: &HumanModel) {
        if let Some(t) = self.retreat_at_ms {
            if now_ms >= t {
                self.retreat_at_ms = None;
                if self.on_excursion() {
                    self.phase = Phase::Return { speed: model.retreat_speed };
                }
            }
        }
        match self.phase {
            Phase::Task { goal, dwell_left_s } => {
                let target = Vector3::from(model.task_positions[goal]);
                if self.pos != target {
                    step_toward(&mut self.pos, &target, model.reach_speed * dt_s);
                } else if dwell_left_s > dt_s {
                    self.phase = Phase::Task { goal, dwell_left_s: dwell_left_s - dt_s };
                } else {
                    let next = (goal + 1) % model.task_positions.len();
                    self.phase = Phase::Task { goal: next, dwell_left_s: model.task_dwell_s };
                }
            }
            Phase::Reach { item } => {
                if step_toward(&mut self.pos, &item, model.reach_speed * dt_s) {
                    self.phase = Phase::Grab { item, left_s: model.grab_dwell_s };
                }
            }
            Phase::Grab { item, left_s } => {
                self.phase = if left_s > dt_s {
                    Phase::Grab { item, left_s: left_s - dt_s }
                } else {
                    Phase::Return { speed: model.reach_speed }
                };
            }
            Phase::Return { speed } => {
                let goal = model.nearest_task(&self.pos);
                if step_toward(&mut self.pos, &Vector3::from(model.task_positions[goal]), speed * dt_s) {
                    self.phase = Phase::Task { goal, dwell_left_s: model.task_dwell_s };
                    self.retreat_at_ms = None;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid() {
        HumanModel::default().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(HumanModel { attention_p: 1.5, ..HumanModel::default() }.validate().is_err());
        assert!(HumanModel { reach_speed: 2.0, ..HumanModel::default() }.validate().is_err());
        assert!(HumanModel { reaction_latency_ms: -1.0, ..HumanModel::default() }.validate().is_err());
    }

    #[test]
    fn notice_triggers_retreat_after_reaction_latency() {
        let m = HumanModel::default();
        let mut h = Hand::new(&m);
        h.start_excursion(Vector3::from(m.item_center));
        for k in 0..50 {
            h.advance(10.0 * k as f64, 0.01, &m);
        }
        h.notice(500.0, &m);
        h.advance(740.0, 0.01, &m);
        assert!(matches!(h.phase, Phase::Reach { .. }));
        h.advance(750.0, 0.01, &m);
        assert_eq!(h.phase, Phase::Return { speed: m.retreat_speed });
    }

    #[test]
    fn reach_completes_with_grab_then_return() {
        let m = HumanModel::default();
        let mut h = Hand::new(&m);
        let item = h.pos + Vector3::new(0.001, 0.0, 0.0);
        h.start_excursion(item);
        h.advance(10.0, 0.01, &m);
        assert!(matches!(h.phase, Phase::Grab { .. }));
        for k in 0..60 {
            h.advance(20.0 + 10.0 * k as f64, 0.01, &m);
        }
        assert!(matches!(h.phase, Phase::Task { .. }));
    }
}
