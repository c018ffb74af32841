//! Haptic-activation-distance monitor.
//!
//! The impeller runs whenever the marker is within the haptic activation
//! distance (HAD) of the robot TCP. Distances at or below the danger
//! threshold are reported separately. Thresholds are inclusive on the severe
//! side, and leaving a zone requires clearing its threshold by the
//! hysteresis margin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("invalid safety zone configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyZoneConfig<T> {
    pub had: T,
    pub danger: T,
    pub hysteresis: T,
}

impl<T: Real> SafetyZoneConfig<T> {
    pub fn new(had: T, danger: T, hysteresis: T) -> Result<Self, SafetyError> {
        let cfg = Self { had, danger, hysteresis };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SafetyError> {
        if !(self.danger > T::zero() && self.danger < self.had) {
            return Err(SafetyError::InvalidConfig("require 0 < danger < had"));
        }
        if !(self.hysteresis >= T::zero() && self.hysteresis < (self.had - self.danger) / T::lit(2.0)) {
            return Err(SafetyError::InvalidConfig("require 0 <= hysteresis < (had - danger) / 2"));
        }
        Ok(())
    }
}

impl<T: Real> Default for SafetyZoneConfig<T> {
    fn default() -> Self {
        Self { had: T::lit(0.35), danger: T::lit(0.25), hysteresis: T::lit(0.01) }
    }
}

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SafetyState {
    Safe,
    Active,
    Danger,
}

impl SafetyState {
    pub fn actuates(self) -> bool {
        self != SafetyState::Safe
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SafetyState::Safe => "SAFE",
            SafetyState::Active => "ACTIVE",
            SafetyState::Danger => "DANGER",
        }
    }
}

impl std::fmt::Display for SafetyState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SafetyDecision<T> {
    pub state: SafetyState,
    pub actuate: bool,
    pub distance: T,
    pub timestamp_ms: f64,
}

fn check_distance<T: Real>(d: T) -> Result<(), SafetyError> {
    // NaN is rejected along with negatives.
    if d >= T::zero() {
        Ok(())
    } else {
        Err(SafetyError::NegativeDistance(d.as_f64()))
    }
}

/// Memoryless zone classification.
pub fn classify<T: Real>(d: T, cfg: &SafetyZoneConfig<T>) -> Result<SafetyState, SafetyError> {
    check_distance(d)?;
    Ok(if d <= cfg.danger {
        SafetyState::Danger
    } else if d <= cfg.had {
        SafetyState::Active
    } else {
        SafetyState::Safe
    })
}

/// One transition of the monitor. Escalation follows [`classify`]
/// immediately; de-escalation needs `d` to exceed the threshold being left
/// by more than the hysteresis margin.
pub fn step<T: Real>(prev: SafetyState, d: T, cfg: &SafetyZoneConfig<T>) -> Result<SafetyState, SafetyError> {
    let raw = classify(d, cfg)?;
    if raw >= prev {
        return Ok(raw);
    }
    let h = cfg.hysteresis;
    let next = match prev {
        SafetyState::Danger if d > cfg.had + h => SafetyState::Safe,
        SafetyState::Danger if d > cfg.danger + h => SafetyState::Active,
        SafetyState::Danger => SafetyState::Danger,
        SafetyState::Active if d > cfg.had + h => SafetyState::Safe,
        SafetyState::Active => SafetyState::Active,
        SafetyState::Safe => SafetyState::Safe,
    };
    Ok(next)
}

/// State cell for one tracked marker.
#[derive(Debug, Clone)]
pub struct SafetyMonitor<T> {
    cfg: SafetyZoneConfig<T>,
    state: SafetyState,
}

impl<T: Real> SafetyMonitor<T> {
    pub fn new(cfg: SafetyZoneConfig<T>) -> Self {
        Self { cfg, state: SafetyState::Safe }
    }

    pub fn state(&self) -> SafetyState {
        self.state
    }

    pub fn config(&self) -> &SafetyZoneConfig<T> {
        &self.cfg
    }

    pub fn update(&mut self, d: T, timestamp_ms: f64) -> Result<SafetyDecision<T>, SafetyError> {
        self.state = step(self.state, d, &self.cfg)?;
        Ok(SafetyDecision { state: self.state, actuate: self.state.actuates(), distance: d, timestamp_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> SafetyZoneConfig<f64> {
        SafetyZoneConfig::new(0.35, 0.25, 0.01).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(0.40, &cfg()), Ok(SafetyState::Safe));
        assert_eq!(classify(0.30, &cfg()), Ok(SafetyState::Active));
        assert_eq!(classify(0.20, &cfg()), Ok(SafetyState::Danger));
        assert_eq!(classify(0.0, &cfg()), Ok(SafetyState::Danger));
        assert!(matches!(classify(-0.01, &cfg()), Err(SafetyError::NegativeDistance(_))));
        assert!(classify(f64::NAN, &cfg()).is_err());
    }

    #[test]
    fn thresholds_are_inclusive_on_the_severe_side() {
        assert_eq!(classify(0.35, &cfg()), Ok(SafetyState::Active));
        assert_eq!(classify(0.25, &cfg()), Ok(SafetyState::Danger));
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(SafetyState::Safe, 0.349, &cfg()), Ok(SafetyState::Active));
        assert_eq!(step(SafetyState::Active, 0.355, &cfg()), Ok(SafetyState::Active));
        assert_eq!(step(SafetyState::Active, 0.365, &cfg()), Ok(SafetyState::Safe));
        assert_eq!(step(SafetyState::Danger, 0.255, &cfg()), Ok(SafetyState::Danger));
        assert_eq!(step(SafetyState::Danger, 0.265, &cfg()), Ok(SafetyState::Active));
        assert_eq!(step(SafetyState::Danger, 0.50, &cfg()), Ok(SafetyState::Safe));
    }

    #[test]
    fn monitor_reports_actuation() {
        let mut m = SafetyMonitor::new(cfg());
        let d = m.update(0.30, 12.0).unwrap();
        assert!(d.actuate);
        assert_eq!(d.state, SafetyState::Active);
        assert_eq!(d.timestamp_ms, 12.0);
        assert!(!m.update(0.50, 13.0).unwrap().actuate);
    }

    #[test]
    fn config_validation() {
        assert!(SafetyZoneConfig::new(0.25, 0.35, 0.01).is_err());
        assert!(SafetyZoneConfig::new(0.35, 0.0, 0.01).is_err());
        assert!(SafetyZoneConfig::new(0.35, 0.25, 0.05).is_err());
        assert!(SafetyZoneConfig::new(0.35, 0.25, -0.001).is_err());
        assert!(SafetyZoneConfig::new(0.35, 0.25, 0.0).is_ok());
    }

    fn any_state() -> impl Strategy<Value = SafetyState> {
        prop_oneof![Just(SafetyState::Safe), Just(SafetyState::Active), Just(SafetyState::Danger)]
    }

    proptest! {
        #[test]
        fn severity_is_non_increasing_in_distance(prev in any_state(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = step(prev, lo, &cfg()).unwrap();
            let s_hi = step(prev, hi, &cfg()).unwrap();
            prop_assert!(s_lo >= s_hi);
        }

        #[test]
        fn actuation_iff_not_safe(ds in proptest::collection::vec(0.0f64..1.0, 1..200)) {
            let mut m = SafetyMonitor::new(cfg());
            for (i, d) in ds.into_iter().enumerate() {
                let dec = m.update(d, i as f64).unwrap();
                prop_assert_eq!(dec.actuate, dec.state != SafetyState::Safe);
            }
        }

        #[test]
        fn decisions_are_deterministic(ds in proptest::collection::vec(0.0f64..1.0, 1..100)) {
            let run = |ds: &[f64]| {
                let mut m = SafetyMonitor::new(cfg());
                ds.iter().map(|&d| m.update(d, 0.0).unwrap().state).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(&ds), run(&ds));
        }
    }
}
