use serde::{Deserialize, Serialize};

use super::human::HumanModel;
use super::trial::{matched_pair, World, DEFAULT_DURATION_S};
use super::SimError;
use crate::airflow::{calibrate_weber, perception_errors, PERCEPTION_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    pub v_mean_m: f64,
    pub va_mean_m: f64,
    pub perception_reference_m: f64,
    pub perception_mae_m: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self { v_mean_m: 0.307, va_mean_m: 0.326, perception_reference_m: 0.25, perception_mae_m: 0.035 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Maximum number of simulation evaluations.
    pub budget: usize,
    pub seeds: u64,
    pub first_seed: u64,
    pub duration_s: f64,
    pub tolerance_m: f64,
    /// Stop as soon as both residuals fall below this.
    pub early_stop_m: f64,
    pub perception_samples: usize,
    /// Impeller duty used for the perception calibration.
    pub perception_duty_pct: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            budget: 60,
            seeds: 40,
            first_seed: 1,
            duration_s: DEFAULT_DURATION_S,
            tolerance_m: 0.005,
            early_stop_m: 0.0005,
            perception_samples: 10_000,
            perception_duty_pct: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub v_mean_m: f64,
    pub va_mean_m: f64,
    pub perception_mae_m: f64,
}

impl Residuals {
    fn worst_sim(&self) -> f64 {
        self.v_mean_m.abs().max(self.va_mean_m.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub weber: f64,
    pub human: HumanModel,
    pub v_mean_m: f64,
    pub va_mean_m: f64,
    pub residuals: Residuals,
    pub evaluations: usize,
}

/// Mean below-HAD distance under V and VA over `seeds` matched seeds.
/// Seeds where either trial never entered the zone are skipped.
pub fn evaluate(world: &World, seeds: u64, first_seed: u64, duration_s: f64) -> Result<(f64, f64), SimError> {
    let (mut v, mut va, mut n) = (0.0, 0.0, 0usize);
    for seed in first_seed..first_seed + seeds {
        match matched_pair(world, duration_s, seed) {
            Ok((a, b)) => {
                v += a;
                va += b;
                n += 1;
            }
            Err(SimError::NoExposure) => {}
            Err(e) => return Err(e),
        }
    }
    if n == 0 {
        return Err(SimError::NoExposure);
    }
    Ok((v / n as f64, va / n as f64))
}

#[derive(Clone, Copy)]
enum Knob {
    AttentionP,
    ExcursionRate,
    RetreatSpeed,
    ReachSpeed,
}

impl Knob {
    const ALL: [Knob; 4] = [Knob::AttentionP, Knob::ExcursionRate, Knob::RetreatSpeed, Knob::ReachSpeed];

    fn initial_step(self) -> f64 {
        match self {
            Knob::AttentionP => 0.05,
            Knob::ExcursionRate => 0.03,
            Knob::RetreatSpeed => 0.10,
            Knob::ReachSpeed => 0.04,
        }
    }

    /// Returns a copy nudged by `delta`, or `None` if that leaves the valid range.
    fn nudge(self, h: &HumanModel, delta: f64) -> Option<HumanModel> {
        let mut out = h.clone();
        let slot = match self {
            Knob::AttentionP => &mut out.attention_p,
            Knob::ExcursionRate => &mut out.excursion_rate,
            Knob::RetreatSpeed => &mut out.retreat_speed,
            Knob::ReachSpeed => &mut out.reach_speed,
        };
        *slot += delta;
        (out.validate().is_ok() && out.excursion_rate > 0.0 && out.retreat_speed <= 3.0).then_some(out)
    }
}

/// Fits the perception noise to the single-judgement error target, then runs
/// coordinate descent on the hand model so simulated below-HAD means match
/// the V and VA targets. Deterministic: every evaluation reuses the same
/// seeds.
pub fn calibrate(
    targets: &CalibrationTargets,
    start: &World,
    opts: &CalibrationOptions,
) -> Result<CalibrationReport, SimError> {
    if opts.budget == 0 {
        return Err(SimError::CalibrationFailed { residual: f64::INFINITY, evaluations: 0 });
    }
    if opts.seeds == 0 {
        return Err(SimError::InvalidParameter("calibration needs at least one seed"));
    }
    let mut world = start.clone();
    world.validate()?;

    let weber = calibrate_weber(
        &world.jet,
        world.perception.detect_q,
        opts.perception_duty_pct,
        targets.perception_reference_m,
        targets.perception_mae_m,
        opts.perception_samples,
        PERCEPTION_SEED,
    )?;
    world.perception.weber = weber;
    let achieved_mae = perception_errors(
        &world.perception,
        &world.jet,
        opts.perception_duty_pct,
        targets.perception_reference_m,
        opts.perception_samples,
        PERCEPTION_SEED,
    )?
    .mean_abs_error_m;

    let mut evaluations = 0usize;
    let score = |w: &World, evaluations: &mut usize| -> Result<(f64, f64, f64), SimError> {
        *evaluations += 1;
        let (v, va) = match evaluate(w, opts.seeds, opts.first_seed, opts.duration_s) {
            Ok(m) => m,
            Err(SimError::NoExposure) => return Ok((f64::NAN, f64::NAN, f64::INFINITY)),
            Err(e) => return Err(e),
        };
        let cost = (v - targets.v_mean_m).powi(2) + (va - targets.va_mean_m).powi(2);
        Ok((v, va, cost))
    };

    let (mut v, mut va, mut cost) = score(&world, &mut evaluations)?;
    let mut steps: Vec<f64> = Knob::ALL.iter().map(|k| k.initial_step()).collect();
    let converged = |v: f64, va: f64| {
        (v - targets.v_mean_m).abs() <= opts.early_stop_m && (va - targets.va_mean_m).abs() <= opts.early_stop_m
    };

    'search: while !converged(v, va) && steps.iter().any(|s| *s > 1e-4) {
        let mut improved = false;
        for (i, knob) in Knob::ALL.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let Some(human) = knob.nudge(&world.human, sign * steps[i]) else { continue };
                if evaluations >= opts.budget {
                    break 'search;
                }
                let candidate = World { human, ..world.clone() };
                let (cv, cva, c) = score(&candidate, &mut evaluations)?;
                if c < cost {
                    (world, v, va, cost) = (candidate, cv, cva, c);
                    improved = true;
                    if converged(v, va) {
                        break 'search;
                    }
                    break;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }

    let residuals = Residuals {
        v_mean_m: v - targets.v_mean_m,
        va_mean_m: va - targets.va_mean_m,
        perception_mae_m: achieved_mae - targets.perception_mae_m,
    };
    let worst = residuals.worst_sim();
    if !(worst <= opts.tolerance_m) {
        return Err(SimError::CalibrationFailed { residual: worst, evaluations });
    }
    Ok(CalibrationReport { weber, human: world.human, v_mean_m: v, va_mean_m: va, residuals, evaluations })
}
