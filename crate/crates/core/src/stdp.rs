//! Unsupervised learning of repeating spike patterns with a plastic LIF.
//!
//! The neuron listens to all N afferents with weights in [0, 1]. Its
//! threshold is adaptive: each postsynaptic spike raises it by a fixed jump
//! and it decays back to the baseline with its own time constant, which
//! pushes the neuron to spread its spikes over multiple patterns instead of
//! firing repeatedly on one. Potentiation uses a per-synapse presynaptic
//! trace; depression is a uniform homeostatic term. Both act together at
//! each postsynaptic spike through the soft-bounded update
//! `w <- clamp(w + w(1-w)(A_pre + w_out), 0, 1)`, which drives weights to
//! saturate at 0 or 1.
//!
//! Everything here is event-driven and exact: potentials, traces, and the
//! threshold are stored as (value, last-update time) and decayed lazily. A
//! postsynaptic spike can then only happen at a presynaptic arrival; between
//! events the potential decays at least as fast as the threshold whenever
//! `tau <= tau_theta`, so no crossing is ever missed. That regime is
//! enforced at entry.

use rand::Rng;
use serde::Serialize;

use crate::optimizer::optimize_snr;
use crate::simulator::{generate_pattern, merged_poisson};
use crate::{
    Error, Pattern, ProblemParams, Result, RngStream, SpikeEvent, StreamKind,
};

/// Start-to-start spacing of pattern presentations, seconds.
const INTERVAL: f64 = 0.4;
/// Convergence-index value below which weights count as converged.
const CONVERGENCE_THRESHOLD: f64 = 0.01;
/// Simulated time the index must stay converged before an adaptive stop.
const STABLE_WINDOW: f64 = 500.0;

/// Plasticity and threshold parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StdpConfig {
    /// Baseline threshold, potential units.
    pub theta0: f64,
    /// Threshold increment per postsynaptic spike (1.8 * theta0 by default).
    pub theta_jump: f64,
    /// Threshold decay constant, seconds.
    pub tau_theta: f64,
    /// Presynaptic trace increment per presynaptic spike.
    pub delta_a_pre: f64,
    /// Presynaptic trace decay constant, seconds.
    pub tau_pre: f64,
    /// Homeostatic depression term, dimensionless and negative.
    pub w_out: f64,
    /// Uniform initial weight.
    pub w_init: f64,
}

impl StdpConfig {
    /// Builds the standard configuration for a problem: threshold jump
    /// 1.8 * theta0, threshold decay 80 ms, trace increment 0.1 with decay
    /// 20 ms, and the initial weight solved from the background statistics.
    pub fn for_problem(
        params: &ProblemParams,
        tau: f64,
        theta0: f64,
        w_out: f64,
    ) -> Result<StdpConfig> {
        let mut config = StdpConfig {
            theta0,
            theta_jump: 1.8 * theta0,
            tau_theta: 0.080,
            delta_a_pre: 0.1,
            tau_pre: 0.020,
            w_out,
            w_init: 0.0,
        };
        config.w_init = initial_weight(params, &config, tau)?;
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.theta0 > 0.0) || !self.theta0.is_finite() {
            return Err(Error::invalid(
                "theta0",
                format!("must be finite and > 0, got {}", self.theta0),
            ));
        }
        if !(self.theta_jump >= 0.0) || !self.theta_jump.is_finite() {
            return Err(Error::invalid(
                "theta_jump",
                format!("must be finite and >= 0, got {}", self.theta_jump),
            ));
        }
        for (name, value) in [("tau_theta", self.tau_theta), ("tau_pre", self.tau_pre)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !(self.delta_a_pre > 0.0) || !self.delta_a_pre.is_finite() {
            return Err(Error::invalid(
                "delta_a_pre",
                format!("must be finite and > 0, got {}", self.delta_a_pre),
            ));
        }
        if !(self.w_out < 0.0) || !self.w_out.is_finite() {
            return Err(Error::invalid(
                "w_out",
                format!("must be finite and < 0, got {}", self.w_out),
            ));
        }
        if !(0.0..=1.0).contains(&self.w_init) {
            return Err(Error::invalid(
                "w_init",
                format!("must lie in [0, 1], got {}", self.w_init),
            ));
        }
        Ok(())
    }
}

/// Solves the uniform initial weight from
/// `V_noise_mean = theta0 + V_noise_std`, i.e.
/// `tau f N w - sqrt(tau f N / 2) w = theta0`.
pub fn initial_weight(params: &ProblemParams, config: &StdpConfig, tau: f64) -> Result<f64> {
    params.check()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    let drive = tau * params.rate_hz * params.afferent_count as f64;
    let denom = drive - (drive / 2.0).sqrt();
    let w = config.theta0 / denom;
    if !(denom > 0.0) || !w.is_finite() || !(0.0..=1.0).contains(&w) {
        return Err(Error::InitialWeight { value: w });
    }
    Ok(w)
}

/// Applies the merged potentiation/depression update to every synapse, with
/// `traces[i]` already decayed to the postsynaptic spike instant.
pub fn apply_ltp_ltd(weights: &mut [f64], traces: &[f64], config: &StdpConfig) {
    debug_assert_eq!(weights.len(), traces.len());
    for (w, &a) in weights.iter_mut().zip(traces) {
        *w = (*w + *w * (1.0 - *w) * (a + config.w_out)).clamp(0.0, 1.0);
    }
}

/// Full state of the plastic neuron, decayed lazily.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasticState {
    v: f64,
    t_v: f64,
    /// Threshold excess above theta0 at `t_theta`.
    theta_excess: f64,
    t_theta: f64,
    weights: Vec<f64>,
    trace: Vec<f64>,
    t_trace: Vec<f64>,
    plastic: bool,
}

impl PlasticState {
    pub fn new(params: &ProblemParams, config: &StdpConfig) -> Result<Self> {
        params.check()?;
        config.check()?;
        let n = params.afferent_count as usize;
        Ok(PlasticState {
            v: 0.0,
            t_v: 0.0,
            theta_excess: 0.0,
            t_theta: 0.0,
            weights: vec![config.w_init; n],
            trace: vec![0.0; n],
            t_trace: vec![0.0; n],
            plastic: true,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Enables or disables weight updates; membrane, trace, and threshold
    /// dynamics continue either way.
    pub fn set_plastic(&mut self, plastic: bool) {
        self.plastic = plastic;
    }

    /// Membrane potential decayed to `t` (which must not precede the state).
    pub fn potential(&self, t: f64, tau: f64) -> f64 {
        self.v * (-(t - self.t_v) / tau).exp()
    }

    /// Threshold decayed to `t`.
    pub fn theta(&self, t: f64, config: &StdpConfig) -> f64 {
        config.theta0 + self.theta_excess * (-(t - self.t_theta) / config.tau_theta).exp()
    }

    /// Zeroes the membrane and the threshold excess at time `t`, leaving
    /// weights and traces untouched.
    pub fn reset_response(&mut self, t: f64) {
        self.v = 0.0;
        self.t_v = t;
        self.theta_excess = 0.0;
        self.t_theta = t;
    }

    /// Processes one presynaptic spike; returns true when the neuron fires.
    ///
    /// Order of effects at the spike instant: membrane jump, trace
    /// increment, threshold test — so the arriving spike's own trace
    /// increment participates in the potentiation it may trigger.
    fn on_spike(&mut self, t: f64, afferent: usize, config: &StdpConfig, tau: f64) -> bool {
        self.v = self.v * (-(t - self.t_v) / tau).exp() + self.weights[afferent];
        self.t_v = t;
        let a = self.trace[afferent] * (-(t - self.t_trace[afferent]) / config.tau_pre).exp()
            + config.delta_a_pre;
        self.trace[afferent] = a;
        self.t_trace[afferent] = t;

        // theta >= theta0 always, so no need to evaluate the decay when even
        // the baseline is out of reach; this is the hot path for
        // background-driven activity.
        if self.v < config.theta0 {
            return false;
        }
        let theta = self.theta(t, config);
        if self.v < theta {
            return false;
        }

        if self.plastic {
            for i in 0..self.weights.len() {
                let a = self.trace[i] * (-(t - self.t_trace[i]) / config.tau_pre).exp();
                self.trace[i] = a;
                self.t_trace[i] = t;
            }
            apply_ltp_ltd(&mut self.weights, &self.trace, config);
        }
        self.v = 0.0;
        self.t_v = t;
        self.theta_excess = theta - config.theta0 + config.theta_jump;
        self.t_theta = t;
        true
    }
}

/// Advances the neuron through a batch of time-ordered presynaptic spikes;
/// returns the postsynaptic spike times.
pub fn step_plastic_lif(
    state: &mut PlasticState,
    spikes: &[SpikeEvent],
    config: &StdpConfig,
    tau: f64,
) -> Result<Vec<f64>> {
    config.check()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    if tau > config.tau_theta {
        return Err(Error::invalid(
            "tau",
            format!(
                "event-driven threshold detection requires tau <= tau_theta \
                 ({} > {})",
                tau, config.tau_theta
            ),
        ));
    }
    let mut prev = state.t_v.min(state.t_theta);
    let mut posts = Vec::new();
    for (i, ev) in spikes.iter().enumerate() {
        if ev.time < prev {
            return Err(Error::InvalidStream(format!(
                "spike {i} at {} s precedes the state clock {} s",
                ev.time, prev
            )));
        }
        if ev.afferent as usize >= state.weights.len() {
            return Err(Error::InvalidStream(format!(
                "spike {i} afferent {} out of range {}",
                ev.afferent,
                state.weights.len()
            )));
        }
        prev = ev.time;
        if state.on_spike(ev.time, ev.afferent as usize, config, tau) {
            posts.push(ev.time);
        }
    }
    Ok(posts)
}

/// Mean distance between weights and their nearest binary value (0 below
/// 0.5, 1 at or above); 0 when fully saturated, 0.5 at the farthest point.
pub fn convergence_index(weights: &[f64]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let sum: f64 = weights
        .iter()
        .map(|&w| if w < 0.5 { w } else { 1.0 - w })
        .sum();
    sum / weights.len() as f64
}

/// Result of a learning run plus its frozen-weight evaluation phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningOutcome {
    pub final_weights: Vec<f64>,
    /// Patterns that elicited at least one postsynaptic spike in evaluation.
    pub learned_pattern_count: u32,
    /// Fraction of evaluated presentations of learned patterns with a spike.
    pub hit_rate: f64,
    /// Postsynaptic spikes per second outside presentation windows, Hz.
    pub false_alarm_rate: f64,
    /// Weights at or above 0.5 after learning.
    pub potentiated_count: u32,
    pub optimal: bool,
    /// Sampled (time_s, convergence index) series over the learning phase.
    pub convergence_trace: Vec<(f64, f64)>,
    pub final_convergence_index: f64,
    /// Simulated learning time actually run (early stop may shorten it).
    pub learning_duration: f64,
    /// Delay of each in-window evaluation spike after its pattern onset.
    pub eval_spike_latencies: Vec<f64>,
    /// Per pattern: spikes in the leading stretch that ends at the first
    /// spike from a non-potentiated afferent.
    pub pattern_lead_spikes: Vec<u32>,
}

/// Knobs for [`run_learning_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnOptions {
    /// Learning-phase duration cap, seconds.
    pub duration: f64,
    /// Stop early once the convergence index stays below 0.01 for 500 s.
    pub adaptive_stop: bool,
    /// Frozen-weight evaluation presentations per pattern.
    pub eval_presentations: u32,
    /// Spacing of convergence-trace samples, seconds.
    pub sample_interval: f64,
}

impl LearnOptions {
    pub fn fixed(duration: f64) -> Self {
        LearnOptions {
            duration,
            adaptive_stop: false,
            eval_presentations: 100,
            sample_interval: 4.0,
        }
    }

    pub fn adaptive(cap: f64) -> Self {
        LearnOptions {
            adaptive_stop: true,
            ..LearnOptions::fixed(cap)
        }
    }
}

/// Runs plastic learning for `duration` seconds, then evaluates with frozen
/// weights; see [`run_learning_with`].
pub fn run_learning(
    params: &ProblemParams,
    tau: f64,
    config: &StdpConfig,
    duration: f64,
    rng: RngStream,
) -> Result<LearningOutcome> {
    run_learning_with(params, tau, config, &LearnOptions::fixed(duration), rng)
}

/// Runs the full learning protocol.
///
/// Patterns are drawn once (frozen) and presented alternately every 400 ms
/// starting at t = 400 ms, each presentation independently jittered; all N
/// afferents fire Poisson background between presentations. After the
/// learning phase the weights freeze, the membrane and threshold reset, and
/// the protocol continues for `eval_presentations` further presentations of
/// each pattern to measure hits (a postsynaptic spike inside the
/// presentation window widened by the jitter half-width) and false alarms
/// (spikes outside every window, as a rate over the remaining time).
pub fn run_learning_with(
    params: &ProblemParams,
    tau: f64,
    config: &StdpConfig,
    options: &LearnOptions,
    rng: RngStream,
) -> Result<LearningOutcome> {
    params.check()?;
    params.check_finite_len()?;
    config.check()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    if tau > config.tau_theta {
        return Err(Error::invalid(
            "tau",
            format!(
                "event-driven threshold detection requires tau <= tau_theta \
                 ({} > {})",
                tau, config.tau_theta
            ),
        ));
    }
    let margin = params.pattern_len + 2.0 * params.jitter;
    if !(INTERVAL > margin) {
        return Err(Error::invalid(
            "pattern_len",
            format!(
                "pattern plus jitter spans {margin} s, exceeding the {INTERVAL} s \
                 presentation interval"
            ),
        ));
    }
    if !(options.duration >= 0.0) || !options.duration.is_finite() {
        return Err(Error::invalid(
            "duration",
            format!("must be finite and >= 0, got {}", options.duration),
        ));
    }
    if options.eval_presentations < 1 {
        return Err(Error::invalid("eval_presentations", "must be >= 1"));
    }
    if !(options.sample_interval > 0.0) {
        return Err(Error::invalid("sample_interval", "must be > 0"));
    }

    let n = params.afferent_count;
    let p = params.pattern_count as usize;
    let t_jit = params.jitter;
    let len = params.pattern_len;
    let patterns: Vec<Pattern> = (0..p)
        .map(|i| generate_pattern(params, rng.derive(StreamKind::Pattern, i as u64)))
        .collect::<Result<_>>()?;

    let mut state = PlasticState::new(params, config)?;
    let mut background: Vec<(f64, u32)> = Vec::new();
    let mut presented: Vec<(f64, u32)> = Vec::new();
    let mut merged: Vec<(f64, u32)> = Vec::new();

    // One presentation cycle: presentation k starts at (k+1) * INTERVAL and
    // its chunk spans [start - T, start + INTERVAL - T); chunk 0 is the
    // leading background-only interval.
    let run_chunk = |state: &mut PlasticState,
                         chunk: usize,
                         background: &mut Vec<(f64, u32)>,
                         presented: &mut Vec<(f64, u32)>,
                         merged: &mut Vec<(f64, u32)>,
                         mut on_post: Option<&mut dyn FnMut(f64)>|
     -> Result<()> {
        let (c_start, c_end) = if chunk == 0 {
            (0.0, INTERVAL - t_jit)
        } else {
            let t_k = chunk as f64 * INTERVAL;
            (t_k - t_jit, t_k + INTERVAL - t_jit)
        };
        // The frozen pattern replaces the Poisson processes during
        // [t_k, t_k + L): background fills only the rest of the chunk.
        background.clear();
        let mut g = rng.derive(StreamKind::Background, chunk as u64).rng();
        if chunk == 0 {
            merged_poisson(n, params.rate_hz, c_start, c_end, &mut g, background);
        } else {
            let t_k = chunk as f64 * INTERVAL;
            merged_poisson(n, params.rate_hz, c_start, t_k, &mut g, background);
            merged_poisson(n, params.rate_hz, t_k + len, c_end, &mut g, background);
        }
        presented.clear();
        if chunk > 0 {
            let k = chunk - 1;
            let t_k = chunk as f64 * INTERVAL;
            let events = patterns[k % p].stream().events();
            if t_jit == 0.0 {
                presented.extend(events.iter().map(|ev| (t_k + ev.time, ev.afferent)));
            } else {
                let mut jg = rng.derive(StreamKind::Jitter, k as u64).rng();
                presented.extend(
                    events
                        .iter()
                        .map(|ev| (t_k + ev.time + jg.random_range(-t_jit..=t_jit), ev.afferent)),
                );
                presented.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        merged.clear();
        merged.reserve(background.len() + presented.len());
        let (mut bi, mut pi) = (0, 0);
        while bi < background.len() && pi < presented.len() {
            if background[bi].0 <= presented[pi].0 {
                merged.push(background[bi]);
                bi += 1;
            } else {
                merged.push(presented[pi]);
                pi += 1;
            }
        }
        merged.extend_from_slice(&background[bi..]);
        merged.extend_from_slice(&presented[pi..]);
        for &(t, afferent) in merged.iter() {
            if state.on_spike(t, afferent as usize, config, tau) {
                if let Some(cb) = on_post.as_deref_mut() {
                    cb(t);
                }
            }
        }
        Ok(())
    };

    // Learning phase.
    let learn_chunks = (options.duration / INTERVAL).floor() as usize;
    let mut convergence_trace = vec![(0.0, convergence_index(state.weights()))];
    let mut next_sample = options.sample_interval;
    let mut below_since: Option<f64> = None;
    let mut learning_duration = 0.0;
    if learn_chunks > 0 {
        for chunk in 0..=learn_chunks {
            run_chunk(
                &mut state,
                chunk,
                &mut background,
                &mut presented,
                &mut merged,
                None,
            )?;
            let t_end = (chunk + 1) as f64 * INTERVAL - t_jit;
            learning_duration = t_end;
            if t_end >= next_sample {
                let idx = convergence_index(state.weights());
                convergence_trace.push((t_end, idx));
                while next_sample <= t_end {
                    next_sample += options.sample_interval;
                }
                if options.adaptive_stop {
                    if idx < CONVERGENCE_THRESHOLD {
                        let since = *below_since.get_or_insert(t_end);
                        if t_end - since >= STABLE_WINDOW {
                            break;
                        }
                    } else {
                        below_since = None;
                    }
                }
            }
        }
    }
    let chunks_done = if learn_chunks == 0 {
        0
    } else {
        ((learning_duration + t_jit) / INTERVAL).round() as usize
    };

    // Evaluation phase: frozen weights, fresh response state, continuing the
    // presentation sequence so every pattern appears exactly
    // `eval_presentations` times.
    state.set_plastic(false);
    let final_weights = state.weights().to_vec();
    let final_convergence_index = convergence_index(&final_weights);
    let potentiated_count = final_weights.iter().filter(|&&w| w >= 0.5).count() as u32;

    let eval_start_chunk = chunks_done.max(1);
    let eval_total = p * options.eval_presentations as usize;
    let boundary = eval_start_chunk as f64 * INTERVAL - t_jit;
    state.reset_response(boundary.max(learning_duration));
    let mut pattern_hits = vec![0_u32; p];
    let mut fa_count = 0_u64;
    let mut eval_spike_latencies = Vec::new();
    for offset in 0..eval_total {
        let chunk = eval_start_chunk + offset;
        let k = chunk - 1;
        let t_k = chunk as f64 * INTERVAL;
        let window_end = t_k + len + t_jit;
        let mut hit = false;
        {
            let mut on_post = |t: f64| {
                if t <= window_end {
                    hit = true;
                    eval_spike_latencies.push(t - t_k);
                } else {
                    fa_count += 1;
                }
            };
            run_chunk(
                &mut state,
                chunk,
                &mut background,
                &mut presented,
                &mut merged,
                Some(&mut on_post),
            )?;
        }
        if hit {
            pattern_hits[k % p] += 1;
        }
    }

    let learned: Vec<bool> = pattern_hits.iter().map(|&h| h > 0).collect();
    let learned_pattern_count = learned.iter().filter(|&&b| b).count() as u32;
    let hit_rate = if learned_pattern_count == 0 {
        0.0
    } else {
        let hits: u32 = pattern_hits.iter().sum();
        hits as f64 / (learned_pattern_count as f64 * options.eval_presentations as f64)
    };
    let outside = eval_total as f64 * (INTERVAL - len - 2.0 * t_jit);
    let false_alarm_rate = fa_count as f64 / outside;

    let pattern_lead_spikes = patterns
        .iter()
        .map(|pat| {
            let mut count = 0_u32;
            for ev in pat.stream().events() {
                if final_weights[ev.afferent as usize] >= 0.5 {
                    count += 1;
                } else {
                    break;
                }
            }
            count
        })
        .collect();

    let mut outcome = LearningOutcome {
        final_weights,
        learned_pattern_count,
        hit_rate,
        false_alarm_rate,
        potentiated_count,
        optimal: false,
        convergence_trace,
        final_convergence_index,
        learning_duration,
        eval_spike_latencies,
        pattern_lead_spikes,
    };
    outcome.optimal = match optimize_snr(*params) {
        Ok(best) => is_optimal(&outcome, params, best.m_opt).unwrap_or(false),
        Err(_) => false,
    };
    Ok(outcome)
}

/// Whether a converged run reached the theoretically optimal detector:
/// every pattern learned, the potentiated count within 5% of the optimal
/// group size, and every pattern opening with a stretch of spikes that all
/// map to potentiated synapses.
pub fn is_optimal(outcome: &LearningOutcome, params: &ProblemParams, m_opt: f64) -> Result<bool> {
    if outcome.final_convergence_index >= CONVERGENCE_THRESHOLD {
        return Err(Error::NotConverged {
            index: outcome.final_convergence_index,
            threshold: CONVERGENCE_THRESHOLD,
        });
    }
    let all_learned = outcome.learned_pattern_count == params.pattern_count;
    let in_band = (outcome.potentiated_count as f64 - m_opt).abs() <= 0.05 * m_opt;
    let clean_prefixes = outcome.pattern_lead_spikes.len() == params.pattern_count as usize
        && outcome.pattern_lead_spikes.iter().all(|&c| c >= 1);
    Ok(all_learned && in_band && clean_prefixes)
}

/// One evaluated point of the (theta0, w_out) search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub theta0: f64,
    pub w_out: f64,
    /// Fraction of trials deemed optimal.
    pub p_optimal: f64,
    pub mean_learned: f64,
    pub mean_hit_rate: f64,
    pub mean_false_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchReport {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the best point (highest optimal fraction, then
    /// highest hit rate).
    pub best: usize,
}

/// Exhaustive search over geometric grids of theta0 and |w_out| (ratio
/// 2.5%), with trials seeded identically in every cell so comparisons are
/// paired; see [`grid_search_with`].
pub fn grid_search(
    params: &ProblemParams,
    tau: f64,
    theta0_range: (f64, f64),
    w_out_range: (f64, f64),
    trials_per_cell: u32,
    rng: RngStream,
) -> Result<GridSearchReport> {
    grid_search_with(
        params,
        tau,
        theta0_range,
        w_out_range,
        trials_per_cell,
        &LearnOptions::adaptive(12_000.0),
        rng,
    )
}

pub fn grid_search_with(
    params: &ProblemParams,
    tau: f64,
    theta0_range: (f64, f64),
    w_out_range: (f64, f64),
    trials_per_cell: u32,
    options: &LearnOptions,
    rng: RngStream,
) -> Result<GridSearchReport> {
    use rayon::prelude::*;

    let theta_grid = geometric_grid("theta0_range", theta0_range)?;
    let w_grid = geometric_grid("w_out_range", w_out_range)?;
    if trials_per_cell < 1 {
        return Err(Error::invalid("trials_per_cell", "must be >= 1"));
    }
    let mut points = Vec::new();
    for &theta0 in &theta_grid {
        for &w_mag in &w_grid {
            points.push((theta0, -w_mag));
        }
    }
    let cells: Vec<GridCell> = points
        .par_iter()
        .map(|&(theta0, w_out)| {
            let config = StdpConfig::for_problem(params, tau, theta0, w_out)?;
            let mut optimal = 0_u32;
            let mut learned = 0.0;
            let mut hit = 0.0;
            let mut fa = 0.0;
            for trial in 0..trials_per_cell {
                let out = run_learning_with(
                    params,
                    tau,
                    &config,
                    options,
                    rng.derive(StreamKind::Trial, trial as u64),
                )?;
                optimal += out.optimal as u32;
                learned += out.learned_pattern_count as f64;
                hit += out.hit_rate;
                fa += out.false_alarm_rate;
            }
            let t = trials_per_cell as f64;
            Ok(GridCell {
                theta0,
                w_out,
                p_optimal: optimal as f64 / t,
                mean_learned: learned / t,
                mean_hit_rate: hit / t,
                mean_false_alarm_rate: fa / t,
            })
        })
        .collect::<Result<_>>()?;
    let best = cells
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            (a.p_optimal, a.mean_hit_rate)
                .partial_cmp(&(b.p_optimal, b.mean_hit_rate))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(GridSearchReport { cells, best })
}

/// Geometric progression with ratio 2.5% covering [lo, hi] on magnitudes;
/// the range may be given with either sign but must not straddle zero.
fn geometric_grid(name: &'static str, range: (f64, f64)) -> Result<Vec<f64>> {
    let (a, b) = range;
    if !(a.is_finite() && b.is_finite()) || a == 0.0 || b == 0.0 || (a < 0.0) != (b < 0.0) {
        return Err(Error::invalid(
            name,
            format!("must be a finite same-sign range, got ({a}, {b})"),
        ));
    }
    let (lo, hi) = (a.abs().min(b.abs()), a.abs().max(b.abs()));
    let mut grid = Vec::new();
    let mut x = lo;
    while x < hi * (1.0 + 1e-12) {
        grid.push(x);
        x *= 1.025;
    }
    Ok(grid)
}
