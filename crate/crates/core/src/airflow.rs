//! Impeller jet and its perception.
//!
//! The axial velocity holds at the exit value inside a potential core of
//! length `core_k * duct_d` and decays as 1/x beyond it; velocity scales
//! linearly with duty. A person judges distance from felt dynamic pressure,
//! perturbed by a multiplicative Weber-fraction noise, and inverts the jet
//! law to obtain a distance estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Sea-level air density, kg/m³.
pub const AIR_DENSITY: f64 = 1.225;

/// Weber fraction fitted so that the simulated mean absolute error at the
/// 0.25 m reference is 0.035 m (100% duty, default jet, 10 000 draws, seed
/// [`PERCEPTION_SEED`]).
pub const CALIBRATED_WEBER: f64 = 0.300_544_807;

pub const PERCEPTION_SEED: u64 = 2023;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AirflowError {
    #[error("dynamic pressure {q_pa:.3} Pa at {distance_m} m is below the detection threshold {detect_q_pa} Pa")]
    ImperceptibleFlow { distance_m: f64, q_pa: f64, detect_q_pa: f64 },
    #[error("distance {distance_m} m lies inside the potential core ({core_m} m); no gradient to perceive")]
    InsidePotentialCore { distance_m: f64, core_m: f64 },
    #[error("duty {0}% outside (0, 100]")]
    InvalidDuty(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("calibration did not bracket the target: {0}")]
    CalibrationBracket(&'static str),
}

type Result<T> = std::result::Result<T, AirflowError>;

/// Duty-cycle command, quantized to 0.5 % steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpellerCommand {
    half_percent: u8,
    pub timestamp_ms: f64,
}

impl ImpellerCommand {
    pub const STEP_PCT: f64 = 0.5;
    pub const MAX_UNITS: u8 = 200;

    /// Rounds to the nearest 0.5 % step.
    pub fn new(duty_pct: f64, timestamp_ms: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&duty_pct) {
            return Err(AirflowError::InvalidDuty(duty_pct));
        }
        let units = (duty_pct / Self::STEP_PCT).round() as u8;
        Ok(Self { half_percent: units, timestamp_ms })
    }

    pub fn from_units(units: u8, timestamp_ms: f64) -> Result<Self> {
        if units > Self::MAX_UNITS {
            return Err(AirflowError::InvalidDuty(f64::from(units) * Self::STEP_PCT));
        }
        Ok(Self { half_percent: units, timestamp_ms })
    }

    pub fn off(timestamp_ms: f64) -> Self {
        Self { half_percent: 0, timestamp_ms }
    }

    pub fn units(&self) -> u8 {
        self.half_percent
    }

    pub fn duty_pct(&self) -> f64 {
        f64::from(self.half_percent) * Self::STEP_PCT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetModel<T> {
    /// Exit velocity at 100 % duty, m/s.
    pub v0: T,
    /// Duct diameter, m.
    pub duct_d: T,
    /// Potential-core length in duct diameters.
    pub core_k: T,
}

impl<T: Real> Default for JetModel<T> {
    fn default() -> Self {
        Self { v0: T::lit(25.0), duct_d: T::lit(0.064), core_k: T::lit(3.0) }
    }
}

impl<T: Real> JetModel<T> {
    pub fn new(v0: T, duct_d: T, core_k: T) -> Result<Self> {
        let m = Self { v0, duct_d, core_k };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > T::zero() && self.duct_d > T::zero() && self.core_k > T::zero()) {
            return Err(AirflowError::InvalidParameter("v0, duct_d and core_k must be positive"));
        }
        Ok(())
    }

    pub fn core_length(&self) -> T {
        self.core_k * self.duct_d
    }

    /// Axial velocity at distance `x >= 0` from the nozzle.
    pub fn velocity(&self, duty_pct: T, x: T) -> T {
        debug_assert!(!(x < T::zero()), "distance must be non-negative");
        let exit = self.v0 * duty_pct / T::lit(100.0);
        let x0 = self.core_length();
        if x <= x0 {
            exit
        } else {
            exit * x0 / x
        }
    }

    /// Dynamic pressure ½ρv² at distance `x`, Pa.
    pub fn dynamic_pressure(&self, duty_pct: T, x: T) -> T {
        let v = self.velocity(duty_pct, x);
        T::lit(0.5 * AIR_DENSITY) * v * v
    }

    /// Distance at which the jet delivers pressure `q`. Pressures at or above
    /// the core value map to the core length; non-positive pressures map to
    /// infinity.
    pub fn distance_for_pressure(&self, duty_pct: T, q: T) -> T {
        let x0 = self.core_length();
        let q_core = self.dynamic_pressure(duty_pct, T::zero());
        if !(q > T::zero()) {
            return T::infinity();
        }
        if q >= q_core {
            return x0;
        }
        x0 * (q_core / q).sqrt()
    }
}

/// Jet centreline velocity, free-function form.
pub fn jet_velocity<T: Real>(model: &JetModel<T>, duty_pct: T, x: T) -> T {
    model.velocity(duty_pct, x)
}

pub fn dynamic_pressure<T: Real>(model: &JetModel<T>, duty_pct: T, x: T) -> T {
    model.dynamic_pressure(duty_pct, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionModel<T> {
    /// Standard deviation of the relative pressure-discrimination noise.
    pub weber: T,
    /// Minimum perceptible dynamic pressure, Pa.
    pub detect_q: T,
}

impl<T: Real> Default for PerceptionModel<T> {
    fn default() -> Self {
        Self { weber: T::lit(CALIBRATED_WEBER), detect_q: T::lit(0.5) }
    }
}

impl<T: Real> PerceptionModel<T> {
    pub fn new(weber: T, detect_q: T) -> Result<Self> {
        let m = Self { weber, detect_q };
        m.validate()?;
        Ok(m)
    }

    /// `weber = 0` is accepted as the noiseless limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.weber >= T::zero()) || self.weber.is_infinite() {
            return Err(AirflowError::InvalidParameter("weber must be finite and non-negative"));
        }
        if !(self.detect_q > T::zero()) {
            return Err(AirflowError::InvalidParameter("detect_q must be positive"));
        }
        Ok(())
    }

    /// Relative noise draw, truncated so that felt pressure stays positive.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let eps = self.weber * T::lit(z);
            if eps > -T::one() {
                return eps;
            }
        }
    }

    /// Felt pressure for a given relative noise draw.
    pub fn felt_pressure(&self, q: T, noise: T) -> T {
        q * (T::one() + noise)
    }

    pub fn perceives(&self, felt_q: T) -> bool {
        felt_q >= self.detect_q
    }

    /// One perceived-distance judgement at `true_x`.
    pub fn perceive<R: Rng + ?Sized>(&self, jet: &JetModel<T>, duty_pct: T, true_x: T, rng: &mut R) -> Result<T> {
        if !(duty_pct > T::zero() && duty_pct <= T::lit(100.0)) {
            return Err(AirflowError::InvalidDuty(duty_pct.as_f64()));
        }
        let x0 = jet.core_length();
        if !(true_x > x0) {
            return Err(AirflowError::InsidePotentialCore { distance_m: true_x.as_f64(), core_m: x0.as_f64() });
        }
        let q = jet.dynamic_pressure(duty_pct, true_x);
        if q < self.detect_q {
            return Err(AirflowError::ImperceptibleFlow {
                distance_m: true_x.as_f64(),
                q_pa: q.as_f64(),
                detect_q_pa: self.detect_q.as_f64(),
            });
        }
        let eps = self.sample_noise(rng);
        if eps == T::zero() {
            return Ok(true_x);
        }
        Ok(jet.distance_for_pressure(duty_pct, self.felt_pressure(q, eps)))
    }
}

/// Seeded single judgement.
pub fn perceived_distance<T: Real>(
    pm: &PerceptionModel<T>,
    jm: &JetModel<T>,
    duty_pct: T,
    true_x: T,
    seed: u64,
) -> Result<T> {
    pm.perceive(jm, duty_pct, true_x, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerceptionSummary {
    pub reference_m: f64,
    pub samples: usize,
    pub mean_abs_error_m: f64,
    pub sd_abs_error_m: f64,
    /// Mean of perceived − reference; positive means overestimation.
    pub mean_signed_error_m: f64,
}

/// Monte-Carlo perceived-distance errors at a reference distance.
pub fn perception_errors<T: Real>(
    pm: &PerceptionModel<T>,
    jm: &JetModel<T>,
    duty_pct: T,
    reference: T,
    samples: usize,
    seed: u64,
) -> Result<PerceptionSummary> {
    if samples == 0 {
        return Err(AirflowError::InvalidParameter("at least one sample required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut abs = Vec::with_capacity(samples);
    let mut signed = 0.0;
    for _ in 0..samples {
        let x = pm.perceive(jm, duty_pct, reference, &mut rng)?;
        let e = (x - reference).as_f64();
        signed += e;
        abs.push(e.abs());
    }
    let n = samples as f64;
    let mean = abs.iter().sum::<f64>() / n;
    let sd =
        if samples > 1 { (abs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(PerceptionSummary {
        reference_m: reference.as_f64(),
        samples,
        mean_abs_error_m: mean,
        sd_abs_error_m: sd,
        mean_signed_error_m: signed / n,
    })
}

/// Bisection on the Weber fraction so the mean absolute error at
/// `reference` hits `target_mae`. Draws use common random numbers across
/// iterations.
pub fn calibrate_weber(
    jm: &JetModel<f64>,
    detect_q: f64,
    duty_pct: f64,
    reference: f64,
    target_mae: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    const ITERS: usize = 40;
    let mae = |w: f64| -> Result<f64> {
        let pm = PerceptionModel { weber: w, detect_q };
        Ok(perception_errors(&pm, jm, duty_pct, reference, samples, seed)?.mean_abs_error_m)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if mae(hi)? < target_mae {
        return Err(AirflowError::CalibrationBracket("target error above reach of weber <= 1"));
    }
    for _ in 0..ITERS {
        let mid = 0.5 * (lo + hi);
        if mae(mid)? < target_mae {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet() -> JetModel<f64> {
        JetModel::default()
    }

    #[test]
    fn velocity_examples() {
        let j = jet();
        assert!((j.core_length() - 0.192).abs() < 1e-15);
        assert_eq!(jet_velocity(&j, 100.0, 0.1), 25.0);
        assert!((jet_velocity(&j, 100.0, 0.384) - 12.5).abs() < 1e-12);
        assert_eq!(jet_velocity(&j, 0.0, 0.3), 0.0);
        assert_eq!(jet_velocity(&j, 0.0, 0.0), 0.0);
    }

    #[test]
    fn pressure_examples() {
        // 10 m/s exit speed at half duty with v0 = 20.
        let j = JetModel::new(20.0, 0.064, 3.0).unwrap();
        assert!((dynamic_pressure(&j, 50.0, 0.1) - 61.25_f64).abs() < 1e-12);
        assert_eq!(dynamic_pressure(&jet(), 0.0, 0.3), 0.0);
        let ratio = dynamic_pressure(&jet(), 100.0, 0.25) / dynamic_pressure(&jet(), 100.0, 0.35);
        assert!((ratio - 1.96).abs() < 1e-12);
    }

    #[test]
    fn inversion_is_exact_beyond_core() {
        let j = jet();
        for x in [0.2, 0.25, 0.3, 0.35, 1.0, 4.0] {
            let q = j.dynamic_pressure(80.0, x);
            assert!((j.distance_for_pressure(80.0, q) - x).abs() < 1e-12);
        }
        assert_eq!(j.distance_for_pressure(100.0, 1e9), j.core_length());
        assert!(j.distance_for_pressure(100.0, 0.0).is_infinite());
    }

    #[test]
    fn noiseless_perception_returns_truth() {
        let pm = PerceptionModel::new(0.0, 0.5).unwrap();
        assert_eq!(perceived_distance(&pm, &jet(), 100.0, 0.30, 1).unwrap(), 0.30);
    }

    #[test]
    fn perception_error_paths() {
        let pm = PerceptionModel::<f64>::default();
        assert!(matches!(
            perceived_distance(&pm, &jet(), 100.0, 0.10, 1),
            Err(AirflowError::InsidePotentialCore { .. })
        ));
        assert!(matches!(perceived_distance(&pm, &jet(), 0.0, 0.30, 1), Err(AirflowError::InvalidDuty(_))));
        // 25 m/s exit: q falls below 0.5 Pa beyond roughly 4.8 m.
        assert!(matches!(perceived_distance(&pm, &jet(), 100.0, 6.0, 1), Err(AirflowError::ImperceptibleFlow { .. })));
    }

    #[test]
    fn perception_is_seed_deterministic() {
        let pm = PerceptionModel::<f64>::default();
        let a = perceived_distance(&pm, &jet(), 100.0, 0.3, 77).unwrap();
        let b = perceived_distance(&pm, &jet(), 100.0, 0.3, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn command_quantization() {
        assert_eq!(ImpellerCommand::new(100.0, 0.0).unwrap().units(), 200);
        assert_eq!(ImpellerCommand::new(33.3, 0.0).unwrap().duty_pct(), 33.5);
        assert_eq!(ImpellerCommand::new(33.2, 0.0).unwrap().duty_pct(), 33.0);
        assert!(ImpellerCommand::new(100.5, 0.0).is_err());
        assert!(ImpellerCommand::from_units(201, 0.0).is_err());
    }

    #[test]
    fn velocity_generic_over_f32() {
        let j = JetModel::<f32>::default();
        assert!((j.velocity(100.0, 0.384) - 12.5).abs() < 1e-5);
    }
}
