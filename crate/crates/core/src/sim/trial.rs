use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::human::{Hand, HumanModel};
use super::trajectory::{robot_tcp_at, RobotTrajectory};
use super::SimError;
use crate::airflow::{JetModel, PerceptionModel};
use crate::geometry::{self, CameraIntrinsics, MarkerPose, MarkerSpec};
use crate::pipeline::{DetectScheduler, Frame, Pipeline, StageLatencyModel};
use crate::safety::{SafetyState, SafetyZoneConfig};

pub const TICK_MS: f64 = 10.0;
pub const DEFAULT_DURATION_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Visual feedback only.
    V,
    /// Visual plus airflow feedback.
    VA,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::V, Condition::VA];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::V => "V",
            Condition::VA => "VA",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.to_ascii_uppercase().as_str() {
            "V" => Ok(Condition::V),
            "VA" => Ok(Condition::VA),
            _ => Err(SimError::UnknownCondition(s.to_owned())),
        }
    }
}

/// Everything a trial needs besides the condition, duration and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub human: HumanModel,
    pub robot: RobotTrajectory,
    pub zones: SafetyZoneConfig<f64>,
    pub jet: JetModel<f64>,
    pub perception: PerceptionModel<f64>,
    pub latency: StageLatencyModel,
    pub camera: CameraIntrinsics<f64>,
    pub marker: MarkerSpec<f64>,
    /// Wristband tag orientation relative to the camera, axis-angle.
    pub marker_tilt: [f64; 3],
    pub pixel_noise_px: f64,
    pub active_duty_pct: f64,
}

impl Default for World {
    fn default() -> Self {
        Self {
            human: HumanModel::default(),
            robot: RobotTrajectory::default(),
            zones: SafetyZoneConfig::default(),
            jet: JetModel::default(),
            perception: PerceptionModel::default(),
            latency: StageLatencyModel::default(),
            camera: CameraIntrinsics::default(),
            marker: MarkerSpec::default(),
            marker_tilt: [0.3, 0.0, 0.0],
            pixel_noise_px: 0.5,
            active_duty_pct: 100.0,
        }
    }
}

impl World {
    pub fn validate(&self) -> Result<(), SimError> {
        self.human.validate()?;
        self.robot.validate()?;
        self.zones.validate()?;
        self.jet.validate()?;
        self.perception.validate()?;
        self.latency.validate()?;
        self.camera.validate()?;
        if !(self.pixel_noise_px >= 0.0 && self.pixel_noise_px.is_finite()) {
            return Err(SimError::InvalidParameter("pixel noise must be non-negative"));
        }
        if !(0.0..=100.0).contains(&self.active_duty_pct) {
            return Err(SimError::InvalidParameter("active duty must lie in [0, 100]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t_ms: f64,
    /// True hand-to-TCP distance.
    pub dist_m: f64,
    pub state: SafetyState,
    /// Most recently applied impeller command.
    pub duty_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTrace {
    pub condition: Condition,
    pub seed: u64,
    pub samples: Vec<TraceSample>,
}

// Independent random streams per event kind, so both conditions draw the
// same numbers for the same events.
const STREAM_EXCURSION: u64 = 1;
const STREAM_ITEM: u64 = 2;
const STREAM_GLANCE: u64 = 3;
const STREAM_FEEL: u64 = 4;
const STREAM_PIXEL: u64 = 5;
const STREAM_LATENCY: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct PendingCommand {
    at_ms: f64,
    duty_pct: f64,
    state: SafetyState,
}

/// Simulates one trial at a fixed 10 ms tick.
pub fn run_trial(cond: Condition, world: &World, duration_s: f64, seed: u64) -> Result<DistanceTrace, SimError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SimError::InvalidDuration(duration_s));
    }
    world.validate()?;
    let human = &world.human;
    let mut pipeline = Pipeline::new(world.camera, world.marker, world.latency, world.zones, world.active_duty_pct)?;
    let mut excursions = stream(seed, STREAM_EXCURSION);
    let mut items = stream(seed, STREAM_ITEM);
    let mut glances = stream(seed, STREAM_GLANCE);
    let mut feel = stream(seed, STREAM_FEEL);
    let mut pixels = stream(seed, STREAM_PIXEL);
    let mut stage_times = stream(seed, STREAM_LATENCY);

    let dt_s = TICK_MS / 1000.0;
    let n_ticks = (duration_s * 1000.0 / TICK_MS).round().max(1.0) as u64;
    let glance_every = (human.glance_period_ms / TICK_MS).round().max(1.0) as u64;
    let p_excursion = 1.0 - (1.0 - human.excursion_rate).powf(dt_s);
    let tau_ms = world.latency.actuator_tau_ms();
    let follow = if tau_ms > 0.0 { 1.0 - (-TICK_MS / tau_ms).exp() } else { 1.0 };
    let rotation = MarkerPose::from_axis_angle(Vector3::from(world.marker_tilt), Vector3::zeros()).rotation;
    let duty_for = |state: SafetyState| match cond {
        Condition::VA if state.actuates() => world.active_duty_pct,
        _ => 0.0,
    };

    let mut hand = Hand::new(human);
    let mut scheduler = DetectScheduler::new();
    let mut pending: VecDeque<PendingCommand> = VecDeque::new();
    let mut next_capture_ms = 0.0;
    let mut state = SafetyState::Safe;
    let mut duty_cmd = 0.0;
    let mut duty_eff = 0.0;
    let mut samples = Vec::with_capacity(n_ticks as usize);

    for k in 0..n_ticks {
        let t_ms = k as f64 * TICK_MS;

        while next_capture_ms <= t_ms {
            let tcp = robot_tcp_at(&world.robot, next_capture_ms / 1000.0);
            let stages = world.latency.sample(&mut stage_times);
            let pose = MarkerPose { rotation, translation: hand.pos };
            let obs = geometry::observe(
                &pose,
                &world.marker,
                &world.camera,
                world.pixel_noise_px,
                next_capture_ms,
                &mut pixels,
            )
            .ok()
            .filter(|o| o.within_image(&world.camera));
            if obs.is_some() {
                scheduler.offer(Frame { capture_ms: next_capture_ms, obs, tcp, stages });
            }
            if world.latency.capture_ms > 0.0 {
                next_capture_ms += world.latency.capture_ms;
            } else {
                next_capture_ms = t_ms + TICK_MS;
            }
        }
        while let Some((start_ms, frame)) = scheduler.poll(t_ms) {
            let Some(obs) = frame.obs else { continue };
            // A failed detection yields no decision; the previous command stands.
            if let Ok(tick) = pipeline.run_cycle_with(start_ms, &obs, &frame.tcp, frame.stages) {
                pending.push_back(PendingCommand {
                    at_ms: tick.command_timestamp_ms,
                    duty_pct: duty_for(tick.decision.state),
                    state: tick.decision.state,
                });
            }
        }
        while pending.front().is_some_and(|c| c.at_ms <= t_ms) {
            let c = pending.pop_front().expect("front checked");
            duty_cmd = c.duty_pct;
            state = c.state;
        }
        duty_eff += (duty_cmd - duty_eff) * follow;

        let u_excursion: f64 = excursions.random();
        let glance = (k % glance_every == 0).then(|| glances.random::<f64>());
        let eps = world.perception.sample_noise(&mut feel);

        if !hand.on_excursion() && u_excursion < p_excursion {
            hand.start_excursion(human.sample_item(&mut items));
        }
        let tcp_now = world.robot.position_at(t_ms / 1000.0);
        let d = (hand.pos - tcp_now).norm();
        let seen = glance.is_some_and(|u| u < human.attention_p) && d <= world.zones.had;
        let felt =
            world.perception.perceives(world.perception.felt_pressure(world.jet.dynamic_pressure(duty_eff, d), eps));
        if seen || felt {
            hand.notice(t_ms, human);
        }
        hand.advance(t_ms, dt_s, human);

        samples.push(TraceSample { t_ms, dist_m: (hand.pos - tcp_now).norm(), state, duty_pct: duty_cmd });
    }
    Ok(DistanceTrace { condition: cond, seed, samples })
}

/// Mean of the samples at or inside the activation distance.
pub fn below_had_mean(trace: &DistanceTrace, cfg: &SafetyZoneConfig<f64>) -> Result<f64, SimError> {
    let (sum, n) =
        trace.samples.iter().filter(|s| s.dist_m <= cfg.had).fold((0.0, 0usize), |(s, n), x| (s + x.dist_m, n + 1));
    if n == 0 {
        return Err(SimError::NoExposure);
    }
    Ok(sum / n as f64)
}

/// Below-HAD means for one seed under both conditions.
pub fn matched_pair(world: &World, duration_s: f64, seed: u64) -> Result<(f64, f64), SimError> {
    let v = run_trial(Condition::V, world, duration_s, seed)?;
    let va = run_trial(Condition::VA, world, duration_s, seed)?;
    Ok((below_had_mean(&v, &world.zones)?, below_had_mean(&va, &world.zones)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(ds: &[f64]) -> DistanceTrace {
        DistanceTrace {
            condition: Condition::V,
            seed: 0,
            samples: ds
                .iter()
                .enumerate()
                .map(|(i, &d)| TraceSample { t_ms: i as f64, dist_m: d, state: SafetyState::Safe, duty_pct: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn below_had_mean_examples() {
        let cfg = SafetyZoneConfig::default();
        assert!((below_had_mean(&trace(&[0.40, 0.30, 0.32, 0.50]), &cfg).unwrap() - 0.31).abs() < 1e-12);
        assert_eq!(below_had_mean(&trace(&[0.40, 0.50]), &cfg), Err(SimError::NoExposure));
        assert!((below_had_mean(&trace(&[0.30; 5]), &cfg).unwrap() - 0.30).abs() < 1e-12);
    }

    #[test]
    fn conditions_parse() {
        assert_eq!("va".parse::<Condition>().unwrap(), Condition::VA);
        assert_eq!("V".parse::<Condition>().unwrap(), Condition::V);
        assert!("x".parse::<Condition>().is_err());
    }

    #[test]
    fn attentive_worker_without_excursions_never_enters() {
        let mut w = World::default();
        w.human.attention_p = 1.0;
        w.human.excursion_rate = 0.0;
        for cond in Condition::ALL {
            let t = run_trial(cond, &w, 30.0, 5).unwrap();
            assert!(t.samples.iter().all(|s| s.dist_m > w.zones.had));
            assert_eq!(below_had_mean(&t, &w.zones), Err(SimError::NoExposure));
        }
    }

    #[test]
    fn trials_are_deterministic() {
        let w = World::default();
        let a = run_trial(Condition::VA, &w, 20.0, 9).unwrap();
        let b = run_trial(Condition::VA, &w, 20.0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn imperceptible_airflow_isolates_the_channel() {
        let mut w = World::default();
        w.perception.detect_q = f64::INFINITY;
        let v = run_trial(Condition::V, &w, 30.0, 11).unwrap();
        let va = run_trial(Condition::VA, &w, 30.0, 11).unwrap();
        let dist = |t: &DistanceTrace| t.samples.iter().map(|s| s.dist_m).collect::<Vec<_>>();
        assert_eq!(dist(&v), dist(&va));
    }

    #[test]
    fn trace_invariants() {
        let w = World::default();
        let t = run_trial(Condition::VA, &w, 30.0, 3).unwrap();
        assert_eq!(t.samples.len(), 3000);
        assert!(t.samples.windows(2).all(|p| p[0].t_ms < p[1].t_ms));
        assert!(t.samples.iter().all(|s| s.dist_m >= 0.0));
        let robot_step = w.robot.speed_mps * TICK_MS / 1000.0;
        let hand_step = w.human.retreat_speed * TICK_MS / 1000.0;
        assert!(t.samples.windows(2).all(|p| (p[1].dist_m - p[0].dist_m).abs() <= robot_step + hand_step + 1e-9));
    }

    #[test]
    fn rejects_non_positive_duration() {
        assert!(matches!(run_trial(Condition::V, &World::default(), 0.0, 1), Err(SimError::InvalidDuration(_))));
    }
}
