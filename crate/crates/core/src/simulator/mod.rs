//! Spike-stream generation and empirical SNR measurement.
//!
//! The measurement protocol presents frozen spike patterns periodically on a
//! background of Poisson activity from the connected afferents, integrates
//! the unitary-weight LIF, and compares the mean peak potential during
//! presentations against the potential statistics far from them. Streams are
//! generated and integrated chunk by chunk (one presentation cycle at a time)
//! so that hour-long protocols run in constant memory.

mod lif;

pub use lif::{integrate_lif, Engine, LifIntegration, TracePoint};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::reduced_snr;
use crate::{
    validate, DetectorConfig, Error, Pattern, ProblemParams, Result, RngStream, SpikeEvent,
    SpikeStream, StreamKind,
};

/// How a presentation run is laid out in time and integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialProtocol {
    pub params: ProblemParams,
    /// Number of presentations of each pattern (patterns alternate).
    pub presentations_per_pattern: u32,
    /// Start-to-start spacing of presentations, seconds.
    pub inter_presentation_interval: f64,
    /// Bin width for the clock engine, seconds.
    pub integration_step: f64,
    pub engine: Engine,
}

impl TrialProtocol {
    /// Protocol with the default 400 ms spacing and 0.1 ms bin.
    pub fn new(params: ProblemParams, presentations_per_pattern: u32, engine: Engine) -> Self {
        TrialProtocol {
            params,
            presentations_per_pattern,
            inter_presentation_interval: 0.4,
            integration_step: 1e-4,
            engine,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        self.params.check_finite_len()?;
        if self.presentations_per_pattern < 1 {
            return Err(Error::invalid("presentations_per_pattern", "must be >= 1"));
        }
        let needed = self.params.pattern_len + 2.0 * self.params.jitter;
        if !(self.inter_presentation_interval > needed) {
            return Err(Error::invalid(
                "inter_presentation_interval",
                format!(
                    "must exceed pattern_len + 2*jitter = {needed} s so presentations do not \
                     overlap, got {} s",
                    self.inter_presentation_interval
                ),
            ));
        }
        if self.engine == Engine::Clock
            && (!(self.integration_step > 0.0) || !self.integration_step.is_finite())
        {
            return Err(Error::invalid(
                "integration_step",
                format!(
                    "must be finite and > 0 for the clock engine, got {}",
                    self.integration_step
                ),
            ));
        }
        Ok(())
    }
}

/// Peak and background statistics measured from a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalSnr {
    /// Mean over presentations of the peak potential in each window.
    pub v_max_mean: f64,
    pub v_noise_mean: f64,
    pub v_noise_std: f64,
    /// `(v_max_mean - v_noise_mean) / v_noise_std`.
    pub snr: f64,
    pub n_presentations: u32,
}

/// Draws a frozen pattern: each afferent fires a homogeneous Poisson train at
/// `rate_hz` over the pattern length.
pub fn generate_pattern(params: &ProblemParams, rng: RngStream) -> Result<Pattern> {
    params.check()?;
    params.check_finite_len()?;
    let mut g = rng.rng();
    let mut events = Vec::new();
    for afferent in 0..params.afferent_count {
        let mut t = 0.0;
        loop {
            t += exponential_gap(&mut g, params.rate_hz);
            if t > params.pattern_len {
                break;
            }
            events.push(SpikeEvent { afferent, time: t });
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(Pattern {
        stream: SpikeStream::new(params.afferent_count, params.pattern_len, events)?,
    })
}

/// Displaces every spike of `pattern` by an independent uniform draw from
/// `[-t_jitter, t_jitter]`. Spikes pushed outside the pattern are kept.
pub fn jitter(pattern: &Pattern, t_jitter: f64, rng: RngStream) -> Result<SpikeStream> {
    if !(t_jitter >= 0.0) || !t_jitter.is_finite() {
        return Err(Error::invalid(
            "t_jitter",
            format!("must be finite and >= 0, got {t_jitter}"),
        ));
    }
    let stream = pattern.stream();
    if t_jitter == 0.0 {
        return Ok(stream.clone());
    }
    let mut g = rng.rng();
    let mut events: Vec<SpikeEvent> = stream
        .events()
        .iter()
        .map(|ev| SpikeEvent {
            afferent: ev.afferent,
            time: ev.time + g.random_range(-t_jitter..=t_jitter),
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    SpikeStream::with_margin(stream.afferent_count(), stream.duration(), t_jitter, events)
}

/// Marks the afferents that fire at least one spike inside `[0, dt_window)`
/// of at least one pattern.
pub fn select_afferents(patterns: &[Pattern], dt_window: f64) -> Result<Vec<bool>> {
    if patterns.is_empty() {
        return Err(Error::invalid("patterns", "must be non-empty"));
    }
    if !(dt_window >= 0.0) || !dt_window.is_finite() {
        return Err(Error::invalid(
            "dt_window",
            format!("must be finite and >= 0, got {dt_window}"),
        ));
    }
    let n = patterns[0].stream().afferent_count();
    let mut mask = vec![false; n as usize];
    for (i, p) in patterns.iter().enumerate() {
        let s = p.stream();
        if s.afferent_count() != n {
            return Err(Error::invalid(
                "patterns",
                format!(
                    "pattern {i} has {} afferents, expected {n}",
                    s.afferent_count()
                ),
            ));
        }
        if dt_window > s.duration() {
            return Err(Error::invalid(
                "dt_window",
                format!(
                    "{dt_window} s exceeds pattern {i} length {} s",
                    s.duration()
                ),
            ));
        }
        for ev in s.events() {
            if ev.time >= dt_window {
                break;
            }
            mask[ev.afferent as usize] = true;
        }
    }
    Ok(mask)
}

fn exponential_gap(g: &mut ChaCha8Rng, rate_hz: f64) -> f64 {
    -(1.0 - g.random::<f64>()).ln() / rate_hz
}

/// Appends merged-Poisson events over `[start, end)`: a single exponential
/// clock at `count * rate_hz`, each arrival labelled with a uniform afferent.
pub(crate) fn merged_poisson(
    count: u32,
    rate_hz: f64,
    start: f64,
    end: f64,
    g: &mut ChaCha8Rng,
    out: &mut Vec<(f64, u32)>,
) {
    let total = count as f64 * rate_hz;
    if !(total > 0.0) || end <= start {
        return;
    }
    let mut t = start;
    loop {
        t += exponential_gap(g, total);
        if t >= end {
            return;
        }
        out.push((t, g.random_range(0..count)));
    }
}

/// Exact decay-and-accumulate state for the event engine: advances the
/// potential between spikes and integrates V and V^2 over the overlap of each
/// decay segment with the current background-statistics region.
struct EventCarry {
    tau: f64,
    t: f64,
    v: f64,
}

#[derive(Default)]
struct NoiseAcc {
    time: f64,
    sum_v: f64,
    sum_v2: f64,
}

impl EventCarry {
    fn advance(&mut self, to: f64, region: (f64, f64), acc: &mut NoiseAcc) {
        let a = self.t.max(region.0);
        let b = to.min(region.1);
        if b > a {
            let va = self.v * (-(a - self.t) / self.tau).exp();
            let d = b - a;
            acc.time += d;
            acc.sum_v += va * self.tau * -(-d / self.tau).exp_m1();
            acc.sum_v2 += va * va * (self.tau / 2.0) * -(-2.0 * d / self.tau).exp_m1();
        }
        self.v *= (-(to - self.t) / self.tau).exp();
        self.t = to;
    }
}

/// Per-chunk input generator for the presentation protocol, shared by the
/// SNR measurement and the potential-trace materializer so both walk exactly
/// the same event sequence for a given stream.
struct ProtocolSampler<'a> {
    rate_hz: f64,
    t_jit: f64,
    len: f64,
    interval: f64,
    p: usize,
    m_conn: u32,
    masked_times: &'a [Vec<f64>],
    rng: RngStream,
}

impl ProtocolSampler<'_> {
    /// Chunk span `[start, end)` and the presentation start time, if any.
    /// Chunk 0 covers the initial background-only interval; chunk k+1 covers
    /// presentation k up to just before presentation k+1's window opens.
    fn chunk_span(&self, chunk: usize) -> (f64, f64, Option<f64>) {
        if chunk == 0 {
            (0.0, self.interval - self.t_jit, None)
        } else {
            let t_k = chunk as f64 * self.interval;
            (t_k - self.t_jit, t_k + self.interval - self.t_jit, Some(t_k))
        }
    }

    /// Fills `out` with the chunk's time-sorted unit-weight events:
    /// fresh background everywhere except `[t_k, t_k + L)`, where the frozen
    /// pattern (jittered) replaces the Poisson processes.
    fn chunk_events(
        &self,
        chunk: usize,
        background: &mut Vec<(f64, u32)>,
        out: &mut Vec<(f64, f64)>,
    ) {
        let (c_start, c_end, present) = self.chunk_span(chunk);
        background.clear();
        let mut g = self.rng.derive(StreamKind::Background, chunk as u64).rng();
        match present {
            None => merged_poisson(self.m_conn, self.rate_hz, c_start, c_end, &mut g, background),
            Some(t_k) => {
                merged_poisson(self.m_conn, self.rate_hz, c_start, t_k, &mut g, background);
                merged_poisson(self.m_conn, self.rate_hz, t_k + self.len, c_end, &mut g, background);
            }
        }
        out.clear();
        out.extend(background.iter().map(|&(t, _)| (t, 1.0)));
        if let Some(t_k) = present {
            let k = chunk - 1;
            let mut jg = self.rng.derive(StreamKind::Jitter, k as u64).rng();
            let base = &self.masked_times[k % self.p];
            if self.t_jit == 0.0 {
                out.extend(base.iter().map(|&t| (t_k + t, 1.0)));
            } else {
                out.extend(
                    base.iter()
                        .map(|&t| (t_k + t + jg.random_range(-self.t_jit..=self.t_jit), 1.0)),
                );
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
}

/// Runs the presentation protocol and measures the empirical SNR.
///
/// Presentation k (k = 0, 1, ...) starts at `(k+1) * interval` and shows
/// pattern `k mod P` with fresh jitter; the first interval carries background
/// only. During a presentation the frozen pattern replaces the Poisson
/// processes; in between, the connected afferents fire fresh Poisson spikes
/// at the same rate. Peaks are read inside each presentation window widened by the jitter
/// half-width; background statistics come only from stretches beginning five
/// membrane constants after a window ends. The detector weights are the
/// 0/1 connectivity mask chosen by [`select_afferents`] at `config.dt_window`.
pub fn measure_empirical_snr(
    protocol: &TrialProtocol,
    config: DetectorConfig,
    rng: RngStream,
) -> Result<EmpiricalSnr> {
    protocol.check()?;
    let (params, config) = validate(protocol.params, config)?;
    let tau = config.tau;
    let interval = protocol.inter_presentation_interval;
    let t_jit = params.jitter;
    let len = params.pattern_len;
    let p = params.pattern_count as usize;
    let k_total = p * protocol.presentations_per_pattern as usize;

    let patterns: Vec<Pattern> = (0..p)
        .map(|i| generate_pattern(&params, rng.derive(StreamKind::Pattern, i as u64)))
        .collect::<Result<_>>()?;
    let mask = select_afferents(&patterns, config.dt_window)?;
    let m_conn = mask.iter().filter(|&&b| b).count() as u32;
    if m_conn == 0 {
        return Err(Error::Degenerate(
            "no afferent selected: the detector potential is identically zero".into(),
        ));
    }
    // With unit weights on connected afferents only the spike times matter.
    let masked_times: Vec<Vec<f64>> = patterns
        .iter()
        .map(|pat| {
            pat.stream()
                .events()
                .iter()
                .filter(|ev| mask[ev.afferent as usize])
                .map(|ev| ev.time)
                .collect()
        })
        .collect();

    let mut peaks = Vec::with_capacity(k_total);
    let mut acc = NoiseAcc::default();
    let mut clock_samples = 0_u64;
    let mut carry = EventCarry {
        tau,
        t: 0.0,
        v: 0.0,
    };
    let mut clock_v = 0.0;
    let mut background = Vec::new();
    let mut chunk_events: Vec<(f64, f64)> = Vec::new();
    let sampler = ProtocolSampler {
        rate_hz: params.rate_hz,
        t_jit,
        len,
        interval,
        p,
        m_conn,
        masked_times: &masked_times,
        rng,
    };

    for chunk in 0..=k_total {
        let (c_start, c_end, present) = sampler.chunk_span(chunk);
        let region = match present {
            // Guard band: five membrane constants after the widened window
            // (or after the run start for the leading chunk).
            None => (5.0 * tau, c_end),
            Some(t_k) => (t_k + len + t_jit + 5.0 * tau, c_end),
        };
        sampler.chunk_events(chunk, &mut background, &mut chunk_events);

        match protocol.engine {
            Engine::Event => {
                let window_end = present.map(|t_k| t_k + len + t_jit);
                let mut peak = carry.v; // potential as the window opens
                for &(t, w) in &chunk_events {
                    carry.advance(t, region, &mut acc);
                    carry.v += w;
                    if let Some(b) = window_end {
                        if t <= b {
                            peak = peak.max(carry.v);
                        }
                    }
                }
                carry.advance(c_end, region, &mut acc);
                if present.is_some() {
                    peaks.push(peak);
                }
            }
            Engine::Clock => {
                let step = protocol.integration_step;
                let n_bins = ((c_end - c_start) / step).round().max(1.0) as usize;
                let decay = 1.0 - step / tau;
                let window_end = present.map(|t_k| t_k + len + t_jit);
                let mut peak = clock_v;
                let mut ei = 0;
                for j in 0..n_bins {
                    let t = c_start + (j + 1) as f64 * step;
                    clock_v *= decay;
                    while ei < chunk_events.len() && chunk_events[ei].0 <= t {
                        clock_v += chunk_events[ei].1;
                        ei += 1;
                    }
                    if let Some(b) = window_end {
                        if t <= b {
                            peak = peak.max(clock_v);
                        }
                    }
                    if t >= region.0 && t <= region.1 {
                        clock_samples += 1;
                        acc.sum_v += clock_v;
                        acc.sum_v2 += clock_v * clock_v;
                    }
                }
                acc.time = clock_samples as f64 * step;
                if present.is_some() {
                    peaks.push(peak);
                }
            }
        }
    }

    let required = 100.0 * tau;
    if acc.time < required {
        return Err(Error::InsufficientNoise {
            available_s: acc.time,
            required_s: required,
        });
    }
    let (mean, var) = match protocol.engine {
        Engine::Event => {
            let mean = acc.sum_v / acc.time;
            (mean, acc.sum_v2 / acc.time - mean * mean)
        }
        Engine::Clock => {
            let n = clock_samples as f64;
            let mean = acc.sum_v / n;
            (mean, acc.sum_v2 / n - mean * mean)
        }
    };
    let std = var.max(0.0).sqrt();
    if std == 0.0 {
        return Err(Error::Degenerate(
            "background potential has zero variance".into(),
        ));
    }
    let v_max_mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
    Ok(EmpiricalSnr {
        v_max_mean,
        v_noise_mean: mean,
        v_noise_std: std,
        snr: (v_max_mean - mean) / std,
        n_presentations: k_total as u32,
    })
}

/// Materializes the potential trace of the first `presentations`
/// presentations of the same protocol run that [`measure_empirical_snr`]
/// measures: identical pattern draws, jitters, and background (the streams
/// are derived from the same labels), fed through [`integrate_lif`] with the
/// protocol's engine. Peaks are reported per presentation window.
pub fn protocol_potential_trace(
    protocol: &TrialProtocol,
    config: DetectorConfig,
    rng: RngStream,
    presentations: u32,
) -> Result<LifIntegration> {
    protocol.check()?;
    let (params, config) = validate(protocol.params, config)?;
    if presentations < 1 {
        return Err(Error::invalid("presentations", "must be >= 1"));
    }
    let interval = protocol.inter_presentation_interval;
    let t_jit = params.jitter;
    let len = params.pattern_len;
    let p = params.pattern_count as usize;

    let patterns: Vec<Pattern> = (0..p)
        .map(|i| generate_pattern(&params, rng.derive(StreamKind::Pattern, i as u64)))
        .collect::<Result<_>>()?;
    let mask = select_afferents(&patterns, config.dt_window)?;
    let m_conn = mask.iter().filter(|&&b| b).count() as u32;
    if m_conn == 0 {
        return Err(Error::Degenerate(
            "no afferent selected: the detector potential is identically zero".into(),
        ));
    }
    let masked_times: Vec<Vec<f64>> = patterns
        .iter()
        .map(|pat| {
            pat.stream()
                .events()
                .iter()
                .filter(|ev| mask[ev.afferent as usize])
                .map(|ev| ev.time)
                .collect()
        })
        .collect();
    let sampler = ProtocolSampler {
        rate_hz: params.rate_hz,
        t_jit,
        len,
        interval,
        p,
        m_conn,
        masked_times: &masked_times,
        rng,
    };

    // All weights are one, so the afferent labels do not matter: collapse
    // everything onto a single synapse of weight one.
    let mut background = Vec::new();
    let mut chunk_events = Vec::new();
    let mut events = Vec::new();
    let mut windows = Vec::with_capacity(presentations as usize);
    let mut end = 0.0;
    for chunk in 0..=presentations as usize {
        let (_, c_end, present) = sampler.chunk_span(chunk);
        sampler.chunk_events(chunk, &mut background, &mut chunk_events);
        events.extend(
            chunk_events
                .iter()
                .map(|&(time, _)| SpikeEvent { afferent: 0, time }),
        );
        if let Some(t_k) = present {
            windows.push((t_k - t_jit, t_k + len + t_jit));
        }
        end = c_end;
    }
    let stream = SpikeStream::new(1, end, events)?;
    integrate_lif(
        &stream,
        &[1.0],
        config.tau,
        protocol.engine,
        protocol.integration_step,
        &windows,
    )
}

/// One random pattern realization inside the averaging study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingSample {
    /// Number of distinct afferents firing inside the detected windows.
    pub m: u32,
    /// Aggregate in-window firing rate estimate, Hz.
    pub r: f64,
    /// `reduced_snr(m, r)`; absent when m = 0.
    pub snr: Option<f64>,
}

/// Distribution of per-realization reduced SNRs against the approximation
/// that evaluates the reduced SNR at the mean M and mean r.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingReport {
    pub samples: Vec<AveragingSample>,
    /// Mean reduced SNR over realizations with m > 0.
    pub mean_snr: f64,
    /// Reduced SNR evaluated at (mean m, mean r) over all realizations.
    pub approx_snr: f64,
    pub mean_m: f64,
    pub mean_r: f64,
    /// Realizations with m = 0, excluded from `mean_snr`.
    pub excluded: u32,
}

/// Compares the average of the reduced SNR over random pattern realizations
/// with the reduced SNR of the average realization.
///
/// Each realization draws fresh Poisson activity over the P detected windows
/// (total span `P * dt_window`), counts the distinct firing afferents m and
/// the aggregate rate `r = spikes / (P * dt_window)`, and scores
/// `reduced_snr(m, r)`.
pub fn averaging_validation(
    params: &ProblemParams,
    dt_window: f64,
    n_realizations: u32,
    rng: RngStream,
) -> Result<AveragingReport> {
    params.check()?;
    if !(dt_window > 0.0) || !dt_window.is_finite() {
        return Err(Error::invalid(
            "dt_window",
            format!("must be finite and > 0, got {dt_window}"),
        ));
    }
    if dt_window > params.pattern_len {
        return Err(Error::invalid(
            "dt_window",
            format!(
                "{dt_window} s exceeds pattern_len {} s",
                params.pattern_len
            ),
        ));
    }
    if n_realizations < 1 {
        return Err(Error::invalid("n_realizations", "must be >= 1"));
    }
    let n_aff = params.afferent_count as usize;
    let span = params.pattern_count as f64 * dt_window;
    let samples: Vec<AveragingSample> = (0..n_realizations)
        .into_par_iter()
        .map_init(
            || (vec![0_u32; n_aff], Vec::new()),
            |(stamp, scratch), i| {
                let mut g = rng.derive(StreamKind::Trial, i as u64).rng();
                scratch.clear();
                merged_poisson(
                    params.afferent_count,
                    params.rate_hz,
                    0.0,
                    span,
                    &mut g,
                    scratch,
                );
                let epoch = i + 1;
                let mut m = 0_u32;
                for &(_, label) in scratch.iter() {
                    let slot = &mut stamp[label as usize];
                    if *slot != epoch {
                        *slot = epoch;
                        m += 1;
                    }
                }
                let r = scratch.len() as f64 / span;
                AveragingSample {
                    m,
                    r,
                    snr: reduced_snr(m as f64, r, params.rate_hz).ok(),
                }
            },
        )
        .collect();
    let mut mean_m = 0.0;
    let mut mean_r = 0.0;
    let mut mean_snr = 0.0;
    let mut included = 0_u32;
    for s in &samples {
        mean_m += s.m as f64;
        mean_r += s.r;
        if let Some(v) = s.snr {
            mean_snr += v;
            included += 1;
        }
    }
    mean_m /= samples.len() as f64;
    mean_r /= samples.len() as f64;
    if included == 0 {
        return Err(Error::Degenerate(
            "every realization had m = 0; the reduced SNR is undefined".into(),
        ));
    }
    mean_snr /= included as f64;
    let approx_snr = reduced_snr(mean_m, mean_r, params.rate_hz)?;
    Ok(AveragingReport {
        excluded: n_realizations - included,
        samples,
        mean_snr,
        approx_snr,
        mean_m,
        mean_r,
    })
}
