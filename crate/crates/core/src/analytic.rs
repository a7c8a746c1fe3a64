//! Closed-form expected signal-to-noise ratio of the multi-pattern detector.
//!
//! Model: N afferents fire homogeneous Poisson spike trains at rate f. A
//! leaky integrator with membrane constant tau is connected, at weight 1, to
//! every afferent that fires within the leading `dt_window` of at least one of
//! the P stored patterns. During a presentation the connected population
//! transiently fires above its background average, driving a potential peak;
//! the SNR relates the expected peak to the mean and spread of the background
//! potential. Potential is measured in unitary-synapse units: one spike
//! through a weight-w synapse raises it by w.

use serde::Serialize;

use crate::{validate, DetectorConfig, Error, ProblemParams, Result};

/// Constituent quantities of the analytic SNR.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SnrBreakdown {
    /// Expected pattern-evoked peak as a fraction of the span between the
    /// background level and the infinite-window asymptote `tau * r`; in (0, 1].
    pub v_max: f64,
    /// Expected connected-afferent count.
    pub m_expected: f64,
    /// Expected total input rate through connected synapses while a pattern
    /// subsection plays, Hz.
    pub r_expected: f64,
    /// Mean background potential `tau * f * m`.
    pub v_noise_mean: f64,
    /// Background potential standard deviation `sqrt(tau * f * m / 2)`.
    pub v_noise_std: f64,
    /// Expected signal-to-noise ratio.
    pub snr: f64,
}

/// Expected number of afferents that fire at least one spike within the
/// leading `dt_window` of at least one of the P patterns:
/// `N * (1 - exp(-P * f * dt))`.
///
/// Monotone nondecreasing in each of P, f and dt, and bounded by N.
pub fn expected_m(params: ProblemParams, dt_window: f64) -> f64 {
    debug_assert!(dt_window >= 0.0);
    let exponent = -(params.pattern_count as f64) * params.rate_hz * dt_window;
    params.afferent_count as f64 * -exponent.exp_m1()
}

/// Expected total input rate `f * N` through the connected synapses while a
/// pattern subsection plays, Hz.
pub fn expected_r(params: ProblemParams) -> f64 {
    params.rate_hz * params.afferent_count as f64
}

/// Expected peak potential during a jittered pattern subsection, reduced to
/// the (0, 1] range by normalizing between the background level and the
/// asymptote reached for an infinitely long window.
///
/// For `jitter = 0` this is the analytic limit `1 - exp(-dt/tau)`; otherwise
/// `min(1, dt/2T) - (tau/2T) * ln(1 - e^(-max(dt,2T)/tau) + e^(-|dt-2T|/tau))`,
/// evaluated as `ln_1p` of a nonnegative difference of exponentials so that
/// nothing overflows and nearby terms never cancel destructively.
pub fn v_max_reduced(tau: f64, dt_window: f64, jitter: f64) -> f64 {
    debug_assert!(tau > 0.0 && dt_window > 0.0 && jitter >= 0.0);
    if jitter == 0.0 {
        return -(-dt_window / tau).exp_m1();
    }
    let spread = 2.0 * jitter;
    let plateau = (dt_window / spread).min(1.0);
    // x = e^(-|dt-2T|/tau) - e^(-max(dt,2T)/tau), grouped as a product of a
    // decaying envelope and a positive expm1 term (max = |dt-2T| + min).
    let x = (-(dt_window - spread).abs() / tau).exp()
        * -(-dt_window.min(spread) / tau).exp_m1();
    plateau - tau / spread * x.ln_1p()
}

/// Mean and standard deviation of the background potential when `m` synapses
/// of equal weight each receive independent Poisson spikes at rate `f`:
/// `(tau*f*m*w, sqrt(tau*f*m*w^2/2))`.
pub fn noise_stats(tau: f64, rate_hz: f64, m: f64, weight: f64) -> (f64, f64) {
    debug_assert!(m >= 0.0);
    let mean = tau * rate_hz * m * weight;
    let std = (tau * rate_hz * m * weight * weight / 2.0).sqrt();
    (mean, std)
}

/// Assembles the expected-SNR approximation from its closed-form pieces.
///
/// The returned breakdown satisfies
/// `snr = v_max * (tau * r_expected - v_noise_mean) / v_noise_std`.
pub fn snr(params: ProblemParams, config: DetectorConfig) -> Result<SnrBreakdown> {
    let (params, config) = validate(params, config)?;
    let m = expected_m(params, config.dt_window);
    if m <= 0.0 {
        return Err(Error::Degenerate(
            "expected connected-afferent count is zero".into(),
        ));
    }
    let v_max = v_max_reduced(config.tau, config.dt_window, params.jitter);
    let r = expected_r(params);
    let (v_noise_mean, v_noise_std) = noise_stats(config.tau, params.rate_hz, m, 1.0);
    let snr = v_max * (config.tau * r - v_noise_mean) / v_noise_std;
    Ok(SnrBreakdown {
        v_max,
        m_expected: m,
        r_expected: r,
        v_noise_mean,
        v_noise_std,
        snr,
    })
}

/// SNR with the amplitude and time scales factored out: `(r - f*m) / sqrt(m)`.
pub fn reduced_snr(m: f64, r: f64, rate_hz: f64) -> Result<f64> {
    if m <= 0.0 {
        return Err(Error::Degenerate(format!(
            "reduced snr is undefined for m = {m}"
        )));
    }
    Ok((r - rate_hz * m) / m.sqrt())
}
