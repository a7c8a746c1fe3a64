//! Problem and detector parameter records with validation.
//!
//! All times are f64 seconds and all rates Hz. Callers working in
//! milliseconds (as results are usually quoted) convert at the boundary.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Imposed variables of the detection problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Number of distinct repeating patterns (>= 1).
    pub pattern_count: u32,
    /// Duration of each pattern, seconds. May be `f64::INFINITY` when only
    /// analytic quantities are needed and no upper bound on the detection
    /// window applies; operations that generate or replay concrete patterns
    /// require a finite value.
    pub pattern_len: f64,
    /// Number of afferent neurons (>= 1).
    pub afferent_count: u32,
    /// Homogeneous Poisson firing rate of every afferent, Hz (> 0).
    pub rate_hz: f64,
    /// Maximal spike-time jitter half-width, seconds (>= 0; 0 disables jitter).
    pub jitter: f64,
}

impl ProblemParams {
    /// Checks the type invariants in isolation.
    pub fn check(&self) -> Result<()> {
        if self.pattern_count < 1 {
            return Err(Error::invalid("pattern_count", "must be >= 1"));
        }
        if self.afferent_count < 1 {
            return Err(Error::invalid("afferent_count", "must be >= 1"));
        }
        if !(self.pattern_len > 0.0) {
            return Err(Error::invalid(
                "pattern_len",
                format!("must be > 0 s, got {}", self.pattern_len),
            ));
        }
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(Error::invalid(
                "rate_hz",
                format!("must be finite and > 0 Hz, got {}", self.rate_hz),
            ));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::invalid(
                "jitter",
                format!("must be finite and >= 0 s, got {}", self.jitter),
            ));
        }
        Ok(())
    }

    /// Requires a finite pattern duration (needed whenever concrete spike
    /// streams are generated).
    pub(crate) fn check_finite_len(&self) -> Result<()> {
        self.check()?;
        if !self.pattern_len.is_finite() {
            return Err(Error::invalid(
                "pattern_len",
                "must be finite to generate or replay patterns",
            ));
        }
        Ok(())
    }
}

/// Free variables of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Membrane time constant, seconds (> 0).
    pub tau: f64,
    /// Duration of the pattern subsection whose firing afferents are
    /// connected, seconds (0 < dt_window <= pattern_len).
    pub dt_window: f64,
}

impl DetectorConfig {
    fn check(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(
                "tau",
                format!("must be finite and > 0 s, got {}", self.tau),
            ));
        }
        if !(self.dt_window > 0.0) || !self.dt_window.is_finite() {
            return Err(Error::invalid(
                "dt_window",
                format!("must be finite and > 0 s, got {}", self.dt_window),
            ));
        }
        Ok(())
    }
}

/// Validates a parameter pair, returning it unchanged when every invariant
/// holds (including the cross-invariant `dt_window <= pattern_len`).
pub fn validate(
    params: ProblemParams,
    config: DetectorConfig,
) -> Result<(ProblemParams, DetectorConfig)> {
    params.check()?;
    config.check()?;
    if config.dt_window > params.pattern_len {
        return Err(Error::invalid(
            "dt_window",
            format!(
                "must not exceed pattern_len: {} s > {} s",
                config.dt_window, params.pattern_len
            ),
        ));
    }
    Ok((params, config))
}
