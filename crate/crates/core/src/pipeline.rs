//! Sense → estimate → decide → actuate loop with an explicit latency model.
//!
//! Stages are connected by single-slot mailboxes that keep only the newest
//! item, so a slow stage drops stale frames instead of queueing them. The
//! same stage logic runs either on worker threads ([`run_threaded`]) or in
//! simulated time ([`DetectScheduler`] + [`Pipeline::run_cycle_with`]).

use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::airflow::ImpellerCommand;
use crate::geometry::{self, CameraIntrinsics, GeometryError, MarkerSpec, TagObservation, TcpPoint};
use crate::safety::{SafetyDecision, SafetyError, SafetyMonitor, SafetyZoneConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("observation is {age_ms:.1} ms old, limit {limit_ms:.1} ms")]
    StaleObservation { age_ms: f64, limit_ms: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error("invalid latency model: {0}")]
    InvalidLatency(&'static str),
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Per-stage timing, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageLatencyModel {
    pub capture_ms: f64,
    pub detect_ms_mean: f64,
    pub detect_ms_sd: f64,
    pub decide_ms: f64,
    pub transmit_ms: f64,
    /// Time for the impeller to reach 90 % of commanded thrust.
    pub actuator_rise_ms: f64,
}

impl Default for StageLatencyModel {
    fn default() -> Self {
        Self {
            capture_ms: 33.3,
            detect_ms_mean: 30.0,
            detect_ms_sd: 2.0,
            decide_ms: 0.5,
            transmit_ms: 2.0,
            actuator_rise_ms: 100.0,
        }
    }
}

impl StageLatencyModel {
    pub fn zero() -> Self {
        Self {
            capture_ms: 0.0,
            detect_ms_mean: 0.0,
            detect_ms_sd: 0.0,
            decide_ms: 0.0,
            transmit_ms: 0.0,
            actuator_rise_ms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.capture_ms,
            self.detect_ms_mean,
            self.detect_ms_sd,
            self.decide_ms,
            self.transmit_ms,
            self.actuator_rise_ms,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(PipelineError::InvalidLatency("all stage times must be finite and non-negative"))
        }
    }

    /// Age beyond which an observation is flagged stale.
    pub fn stale_after_ms(&self) -> f64 {
        self.capture_ms + self.detect_ms_mean + 3.0 * self.detect_ms_sd
    }

    /// Age beyond which an observation is rejected.
    pub fn reject_after_ms(&self) -> f64 {
        2.0 * self.stale_after_ms()
    }

    /// Worst-case (3σ) delay from a distance change to the matching command.
    pub fn reaction_bound_ms(&self) -> f64 {
        self.stale_after_ms() + self.decide_ms + self.transmit_ms
    }

    /// First-order actuator time constant giving 90 % rise in `actuator_rise_ms`.
    pub fn actuator_tau_ms(&self) -> f64 {
        self.actuator_rise_ms / std::f64::consts::LN_10
    }

    /// Detection time, Normal(mean, sd) truncated at zero.
    pub fn sample_detect<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let d = self.detect_ms_mean + self.detect_ms_sd * z;
            if d >= 0.0 {
                return d;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StageSample {
        StageSample { detect_ms: self.sample_detect(rng), decide_ms: self.decide_ms, transmit_ms: self.transmit_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSample {
    pub detect_ms: f64,
    pub decide_ms: f64,
    pub transmit_ms: f64,
}

impl StageSample {
    pub fn total_ms(&self) -> f64 {
        self.detect_ms + self.decide_ms + self.transmit_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineTick {
    pub obs_timestamp_ms: f64,
    pub decision_timestamp_ms: f64,
    pub command_timestamp_ms: f64,
    pub decision: SafetyDecision<f64>,
    pub command: ImpellerCommand,
    /// Observation older than [`StageLatencyModel::stale_after_ms`] when processed.
    pub stale: bool,
}

/// The estimate/decide/actuate chain for one tracked marker. Owns the
/// safety state cell.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub camera: CameraIntrinsics<f64>,
    pub marker: MarkerSpec<f64>,
    pub latency: StageLatencyModel,
    /// Duty commanded while the monitor is not SAFE.
    pub active_duty_pct: f64,
    monitor: SafetyMonitor<f64>,
}

impl Pipeline {
    pub fn new(
        camera: CameraIntrinsics<f64>,
        marker: MarkerSpec<f64>,
        latency: StageLatencyModel,
        zones: SafetyZoneConfig<f64>,
        active_duty_pct: f64,
    ) -> Result<Self> {
        latency.validate()?;
        camera.validate()?;
        zones.validate()?;
        Ok(Self { camera, marker, latency, active_duty_pct, monitor: SafetyMonitor::new(zones) })
    }

    pub fn monitor(&self) -> &SafetyMonitor<f64> {
        &self.monitor
    }

    /// Runs one cycle with stage times drawn from the latency model.
    pub fn run_cycle<R: Rng + ?Sized>(
        &mut self,
        now_ms: f64,
        obs: &TagObservation<f64>,
        tcp: &TcpPoint<f64>,
        rng: &mut R,
    ) -> Result<PipelineTick> {
        let stages = self.latency.sample(rng);
        self.run_cycle_with(now_ms, obs, tcp, stages)
    }

    /// Runs one cycle starting detection at `now_ms` with explicit stage
    /// times. The safety state is left untouched on error.
    pub fn run_cycle_with(
        &mut self,
        now_ms: f64,
        obs: &TagObservation<f64>,
        tcp: &TcpPoint<f64>,
        stages: StageSample,
    ) -> Result<PipelineTick> {
        let age = now_ms - obs.timestamp_ms;
        let limit = self.latency.reject_after_ms();
        if age > limit {
            return Err(PipelineError::StaleObservation { age_ms: age, limit_ms: limit });
        }
        let start = now_ms.max(obs.timestamp_ms);
        let pose = geometry::estimate_pose(obs, &self.marker, &self.camera)?;
        let distance = geometry::marker_to_tcp_distance(&pose, tcp);
        let decision_t = start + stages.detect_ms + stages.decide_ms;
        let command_t = decision_t + stages.transmit_ms;
        let decision = self.monitor.update(distance, decision_t)?;
        let duty = if decision.actuate { self.active_duty_pct } else { 0.0 };
        let command = ImpellerCommand::new(duty, command_t)
            .map_err(|_| PipelineError::InvalidLatency("active duty outside [0, 100]"))?;
        Ok(PipelineTick {
            obs_timestamp_ms: obs.timestamp_ms,
            decision_timestamp_ms: decision_t,
            command_timestamp_ms: command_t,
            decision,
            command,
            stale: age > self.latency.stale_after_ms(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Monte-Carlo distribution of detect + decide + transmit.
pub fn end_to_end_latency(model: &StageLatencyModel, n: usize, seed: u64) -> Result<LatencySummary> {
    model.validate()?;
    if n == 0 {
        return Err(PipelineError::InvalidLatency("need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals: Vec<f64> = (0..n).map(|_| model.sample(&mut rng).total_ms()).collect();
    totals.sort_by(f64::total_cmp);
    Ok(LatencySummary {
        samples: n,
        mean_ms: totals.iter().sum::<f64>() / n as f64,
        p50_ms: percentile(&totals, 50.0),
        p95_ms: percentile(&totals, 95.0),
        p99_ms: percentile(&totals, 99.0),
        max_ms: totals[n - 1],
    })
}

/// One captured camera frame waiting for the detector.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub capture_ms: f64,
    /// `None` when the tag was not visible in this frame.
    pub obs: Option<TagObservation<f64>>,
    pub tcp: TcpPoint<f64>,
    pub stages: StageSample,
}

/// Simulated-time detector with a latest-wins input slot.
#[derive(Debug, Default, Clone)]
pub struct DetectScheduler {
    busy_until_ms: f64,
    pending: Option<Frame>,
    dropped: u64,
}

impl DetectScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places a frame in the input slot, replacing any frame not yet started.
    pub fn offer(&mut self, frame: Frame) {
        if self.pending.replace(frame).is_some() {
            self.dropped += 1;
        }
    }

    /// Starts the pending frame if the detector is idle by `now_ms`; returns
    /// the detection start time and the frame.
    pub fn poll(&mut self, now_ms: f64) -> Option<(f64, Frame)> {
        if self.busy_until_ms > now_ms {
            return None;
        }
        let frame = self.pending.take()?;
        let start = self.busy_until_ms.max(frame.capture_ms);
        self.busy_until_ms = start + frame.stages.detect_ms;
        Some((start, frame))
    }

    pub fn occupancy(&self) -> usize {
        usize::from(self.pending.is_some())
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[derive(Debug)]
struct Slot<T> {
    value: Option<T>,
    closed: bool,
    overwritten: u64,
}

/// Single-slot overwrite mailbox shared between two stages.
#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Mutex<Slot<T>>,
    ready: Condvar,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self { slot: Mutex::new(Slot { value: None, closed: false, overwritten: 0 }), ready: Condvar::new() }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `value`, discarding an unread predecessor. Returns true if one
    /// was discarded.
    pub fn put(&self, value: T) -> bool {
        let mut slot = self.slot.lock().expect("mailbox poisoned");
        let replaced = slot.value.replace(value).is_some();
        if replaced {
            slot.overwritten += 1;
        }
        self.ready.notify_one();
        replaced
    }

    pub fn try_take(&self) -> Option<T> {
        self.slot.lock().expect("mailbox poisoned").value.take()
    }

    /// Blocks until a value arrives; `None` once closed and drained.
    pub fn take(&self) -> Option<T> {
        let mut slot = self.slot.lock().expect("mailbox poisoned");
        loop {
            if let Some(v) = slot.value.take() {
                return Some(v);
            }
            if slot.closed {
                return None;
            }
            slot = self.ready.wait(slot).expect("mailbox poisoned");
        }
    }

    pub fn close(&self) {
        self.slot.lock().expect("mailbox poisoned").closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        usize::from(self.slot.lock().expect("mailbox poisoned").value.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overwritten(&self) -> u64 {
        self.slot.lock().expect("mailbox poisoned").overwritten
    }
}

#[derive(Debug, Clone, Default)]
pub struct ThreadedReport {
    pub offered: u64,
    pub detected: u64,
    pub decisions: Vec<SafetyDecision<f64>>,
    pub dropped_frames: u64,
    pub dropped_distances: u64,
}

/// Runs capture, detect and decide on separate threads joined by
/// latest-wins mailboxes. Wall-clock timing is not modelled; stamps are the
/// frame capture times.
pub fn run_threaded<I>(pipeline: Pipeline, frames: I) -> Result<ThreadedReport>
where
    I: IntoIterator<Item = (TagObservation<f64>, TcpPoint<f64>)> + Send + 'static,
    I::IntoIter: Send,
{
    let detect_in: Arc<Mailbox<(TagObservation<f64>, TcpPoint<f64>)>> = Arc::new(Mailbox::new());
    let decide_in: Arc<Mailbox<(f64, f64)>> = Arc::new(Mailbox::new());
    let Pipeline { camera, marker, monitor, .. } = pipeline;

    let capture = {
        let out = Arc::clone(&detect_in);
        thread::spawn(move || {
            let mut offered = 0u64;
            for f in frames {
                out.put(f);
                offered += 1;
            }
            out.close();
            offered
        })
    };
    let detect = {
        let input = Arc::clone(&detect_in);
        let out = Arc::clone(&decide_in);
        thread::spawn(move || -> Result<u64> {
            let mut n = 0;
            while let Some((obs, tcp)) = input.take() {
                let pose = geometry::estimate_pose(&obs, &marker, &camera);
                n += 1;
                match pose {
                    Ok(pose) => {
                        out.put((geometry::marker_to_tcp_distance(&pose, &tcp), obs.timestamp_ms));
                    }
                    Err(GeometryError::DegenerateObservation(_)) => continue,
                    Err(e) => {
                        out.close();
                        return Err(e.into());
                    }
                }
            }
            out.close();
            Ok(n)
        })
    };
    let decide = {
        let input = Arc::clone(&decide_in);
        let mut monitor = monitor;
        thread::spawn(move || -> Result<Vec<SafetyDecision<f64>>> {
            let mut out = Vec::new();
            while let Some((d, t)) = input.take() {
                out.push(monitor.update(d, t)?);
            }
            Ok(out)
        })
    };

    let offered = capture.join().expect("capture thread panicked");
    let detected = detect.join().expect("detect thread panicked")?;
    let decisions = decide.join().expect("decide thread panicked")?;
    Ok(ThreadedReport {
        offered,
        detected,
        decisions,
        dropped_frames: detect_in.overwritten(),
        dropped_distances: decide_in.overwritten(),
    })
}
