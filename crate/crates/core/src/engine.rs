//! Disaggregation by online tracking of device configurations.
//!
//! A configuration assigns every library device a piecewise-constant input.
//! Starting from all-off, the engine keeps the configuration while its
//! predicted aggregate stays within a threshold of the measurement. When the
//! residual leaves that band for `persistence` consecutive samples at `k*`,
//! the configuration branches:
//!
//! * each device that is off may switch on at any `k'` in `[k* - W, k*]`,
//!   with its level fit in closed form against the residual over
//!   `[k* - W, k* + N]` (the lookahead `N` sets the output delay);
//! * on a decrease, the on-device whose contribution best matches the drop
//!   may switch off at any admissible `k'` in the same range.
//!
//! Branches are ranked by squared residual up to the current sample, plus the
//! lookahead residual clipped at `threshold²` per sample, plus `λ` per switch
//! event with `λ = threshold² · N`, a surrogate for the number of nonzero input
//! changes. Clipping keeps a configuration that has not yet reached an
//! upcoming event from paying more for it than explaining it would cost.
//! [`disaggregate`] keeps the single best branch; [`disaggregate_beam`] keeps
//! the best `beam_width` distinct configurations and finally returns the one
//! with the least full squared residual plus event penalty.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_signal_csv, write_signal_csv};
use crate::model::DeviceModel;
use crate::signal::{PiecewiseInput, SignalSeries};

/// Consistency factor turning a median absolute deviation into a normal std.
const MAD_TO_STD: f64 = 0.6745;
/// Default threshold in units of estimated noise std.
pub const THRESHOLD_NOISE_MULTIPLE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    /// Residual band; `None` derives it from the measured signal's noise.
    pub deviation_threshold: Option<f64>,
    /// Consecutive out-of-band samples that trigger a change.
    pub persistence: usize,
    /// Lookahead `N`, in samples past `k*`.
    pub lookahead: usize,
    /// Backtrack window `W`; switch times `k' ∈ [k* - W, k*]` are tried.
    pub backtrack_window: usize,
    /// A device must stay on this many samples before it may switch off.
    pub min_on_duration: usize,
    pub min_level: f64,
    pub beam_width: usize,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            deviation_threshold: None,
            persistence: 2,
            lookahead: 15,
            backtrack_window: 5,
            min_on_duration: 3,
            min_level: 0.0,
            beam_width: 1,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(msg.to_string()));
        if self.persistence == 0 {
            return bad("persistence must be at least 1");
        }
        if self.lookahead == 0 {
            return bad("lookahead must be at least 1");
        }
        if self.beam_width == 0 {
            return bad("beam_width must be at least 1");
        }
        if !(self.min_level.is_finite() && self.min_level >= 0.0) {
            return bad("min_level must be finite and nonnegative");
        }
        if let Some(t) = self.deviation_threshold {
            if !(t.is_finite() && t > 0.0) {
                return bad("deviation_threshold must be positive");
            }
        }
        Ok(())
    }

    /// Copy with the threshold filled in from `y_m` when unset.
    pub fn resolved(&self, y_m: &[f64]) -> EngineParams {
        let mut p = self.clone();
        p.deviation_threshold = Some(self.deviation_threshold.unwrap_or_else(|| default_threshold(y_m)));
        p
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust noise std from the first difference: MAD / 0.6745 / √2.
///
/// Switch events and transients only touch a small fraction of the
/// differences, so the median ignores them.
pub fn estimate_noise_std(y: &[f64]) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let mut diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let center = median(&mut diffs.clone());
    diffs.iter_mut().for_each(|d| *d = (*d - center).abs());
    median(&mut diffs) / MAD_TO_STD / std::f64::consts::SQRT_2
}

/// Five estimated noise stds, floored at a relative 1e-9 of the signal scale so
/// noiseless signals still get a positive band.
pub fn default_threshold(y: &[f64]) -> f64 {
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (THRESHOLD_NOISE_MULTIPLE * estimate_noise_std(y))
        .max(1e-9 * scale)
        .max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Change {
    None,
    Increase(usize),
    Decrease(usize),
}

/// Inspect the residual `y_m - ŷ` over the `persistence` samples ending at `k`.
///
/// Returns a change at the first sample of that run when every sample lies
/// outside `±threshold`; the direction is the sign of the run's mean residual.
pub fn detect_change(y_m: &[f64], y_hat: &[f64], k: usize, threshold: f64, persistence: usize) -> Change {
    if persistence == 0 || k + 1 < persistence || k >= y_m.len() || k >= y_hat.len() {
        return Change::None;
    }
    let start = k + 1 - persistence;
    let mut sum = 0.0;
    for j in start..=k {
        let r = y_m[j] - y_hat[j];
        if r.abs() <= threshold || r.is_nan() {
            return Change::None;
        }
        sum += r;
    }
    if sum > 0.0 {
        Change::Increase(start)
    } else {
        Change::Decrease(start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnFit {
    pub level: f64,
    pub sse: f64,
}

/// Least-squares level for a unit response `g` that starts `offset` samples
/// into the window `e`; samples before the onset count as unexplained residual.
fn fit_shifted(e: &[f64], g: &[f64], offset: usize) -> Option<OnFit> {
    let tail = &e[offset.min(e.len())..];
    let g = &g[..tail.len()];
    let gg: f64 = g.iter().map(|v| v * v).sum();
    if gg.is_nan() || gg <= 0.0 {
        return None;
    }
    let ge: f64 = g.iter().zip(tail).map(|(a, b)| a * b).sum();
    let level = ge / gg;
    let head: f64 = e[..offset.min(e.len())].iter().map(|v| v * v).sum();
    let sse = head
        + tail
            .iter()
            .zip(g)
            .map(|(ei, gi)| (ei - level * gi).powi(2))
            .sum::<f64>();
    Some(OnFit { level, sse })
}

/// Best constant input for `model` switched on at `onset` from zero state,
/// fit to the deviation `e`.
///
/// With `G` the unit step response started at `onset` (zero before it), the
/// level is `⟨G, e⟩ / ⟨G, G⟩` and `sse = ‖e − level·G‖²` over the whole window.
pub fn fit_on_event(e: &SignalSeries, model: &DeviceModel, onset: usize) -> Result<OnFit> {
    if e.is_empty() {
        return Err(Error::EmptySignal);
    }
    if onset < e.start_index() || onset >= e.end_index() {
        return Err(Error::Validation(format!(
            "onset {onset} outside the window [{}, {})",
            e.start_index(),
            e.end_index()
        )));
    }
    if let Some(index) = e.first_non_finite() {
        return Err(Error::NonFinite { index });
    }
    let offset = onset - e.start_index();
    let g = model.unit_step(e.len() - offset);
    fit_shifted(e.values(), &g, offset).ok_or(Error::DegenerateResponse)
}

/// Pick the on-device whose contribution is nearest the observed drop.
///
/// `contributions` lists `(device, contribution)` for eligible devices; ties go
/// to the lower device index.
pub fn attribute_off_event(contributions: &[(usize, f64)], drop: f64) -> Option<usize> {
    let target = drop.abs();
    let mut best: Option<(usize, f64)> = None;
    for &(device, c) in contributions {
        let dist = (c - target).abs();
        let better = match best {
            None => true,
            Some((bd, bdist)) => dist < bdist || (dist == bdist && device < bd),
        };
        if better {
            best = Some((device, dist));
        }
    }
    best.map(|(d, _)| d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub k: usize,
    pub device: usize,
    pub kind: EventKind,
    /// Input level after the event; 0 for switch-offs.
    pub level: f64,
}

/// A detected change no candidate could explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unexplained {
    pub k: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

/// A possible switch event, scored by the squared residual it leaves over the
/// branch window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub device: usize,
    pub k: usize,
    pub kind: EventKind,
    pub level: f64,
    pub sse: f64,
    /// Start of the window `sse` was measured over.
    pub window_start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceStatus {
    Off,
    On { level: f64, since: usize },
}

/// One node of the configuration tree: device inputs so far and the
/// predicted aggregate they produce.
#[derive(Debug, Clone)]
pub struct Configuration {
    status: Vec<DeviceStatus>,
    inputs: Vec<PiecewiseInput>,
    outputs: Vec<Vec<f64>>,
    total: Vec<f64>,
    /// `cum[j]` is the squared residual summed over `[0, j)`.
    cum: Vec<f64>,
    events: Vec<LoggedEvent>,
    unexplained: Vec<Unexplained>,
    /// Out-of-band runs must start after this index.
    hold: Option<usize>,
}

impl Configuration {
    pub fn status(&self) -> &[DeviceStatus] {
        &self.status
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    pub fn unexplained(&self) -> &[Unexplained] {
        &self.unexplained
    }

    /// Predicted aggregate over the whole signal under the current inputs.
    pub fn predicted(&self) -> &[f64] {
        &self.total
    }

    pub fn device_output(&self, device: usize) -> &[f64] {
        &self.outputs[device]
    }

    pub fn squared_residual(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    fn last_event_k(&self) -> Option<usize> {
        self.events.last().map(|e| e.k)
    }
}

fn sum_outputs(outputs: &[Vec<f64>], j: usize) -> f64 {
    outputs.iter().fold(0.0, |acc, y| acc + y[j])
}

/// Holds the measurement, the library and cached unit step responses for one
/// run. Positions are 0-based offsets into the measurement.
#[derive(Debug)]
pub struct Disaggregator<'a> {
    y: &'a [f64],
    library: &'a [DeviceModel],
    params: EngineParams,
    threshold: f64,
    lambda: f64,
    steps: Vec<Vec<f64>>,
    gains: Vec<f64>,
}

impl<'a> Disaggregator<'a> {
    pub fn new(y_m: &'a [f64], library: &'a [DeviceModel], params: &EngineParams) -> Result<Self> {
        params.validate()?;
        if let Some(index) = y_m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if y_m.len() <= params.lookahead + params.backtrack_window {
            return Err(Error::Validation(format!(
                "signal has {} samples; need more than lookahead + backtrack window = {}",
                y_m.len(),
                params.lookahead + params.backtrack_window
            )));
        }
        let params = params.resolved(y_m);
        let threshold = params.deviation_threshold.unwrap_or_default();
        let span = params.lookahead + params.backtrack_window + 1;
        let mut gains = Vec::with_capacity(library.len());
        for m in library {
            gains.push(m.dc_gain()?);
        }
        Ok(Disaggregator {
            y: y_m,
            library,
            lambda: threshold * threshold * params.lookahead as f64,
            threshold,
            steps: library.iter().map(|m| m.unit_step(span)).collect(),
            gains,
            params,
        })
    }

    /// Parameters with the threshold resolved.
    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Per-event penalty in the configuration score.
    pub fn event_penalty(&self) -> f64 {
        self.lambda
    }

    fn len(&self) -> usize {
        self.y.len()
    }

    /// All devices off.
    pub fn root(&self) -> Configuration {
        let t = self.len();
        let d = self.library.len();
        let mut cum = Vec::with_capacity(t + 1);
        cum.push(0.0);
        for j in 0..t {
            cum.push(cum[j] + self.y[j] * self.y[j]);
        }
        Configuration {
            status: vec![DeviceStatus::Off; d],
            inputs: vec![PiecewiseInput::default(); d],
            outputs: vec![vec![0.0; t]; d],
            total: vec![0.0; t],
            cum,
            events: Vec::new(),
            unexplained: Vec::new(),
            hold: None,
        }
    }

    fn window(&self, k_star: usize) -> (usize, usize) {
        let ws = k_star.saturating_sub(self.params.backtrack_window);
        let we = (k_star + self.params.lookahead).min(self.len() - 1);
        (ws, we)
    }

    /// Last index of the score horizon when the run ending at `k` triggers.
    fn horizon(&self, k: usize) -> usize {
        let k_star = (k + 1).saturating_sub(self.params.persistence);
        (k_star + self.params.lookahead).min(self.len() - 1)
    }

    fn earliest_switch(&self, c: &Configuration, ws: usize) -> usize {
        ws.max(c.last_event_k().map_or(0, |t| t + 1))
    }

    fn on_candidates(&self, c: &Configuration, k_star: usize) -> Vec<Candidate> {
        let (ws, we) = self.window(k_star);
        let lo = self.earliest_switch(c, ws);
        let mut out = Vec::new();
        if lo > k_star {
            return out;
        }
        let e: Vec<f64> = (ws..=we).map(|j| self.y[j] - c.total[j]).collect();
        for (device, model) in self.library.iter().enumerate() {
            if c.status[device] != DeviceStatus::Off {
                continue;
            }
            for k in lo..=k_star {
                let Some(fit) = fit_shifted(&e, &self.steps[device], k - ws) else {
                    continue;
                };
                if !self.level_admissible(device, model, fit.level) {
                    continue;
                }
                out.push(Candidate {
                    device,
                    k,
                    kind: EventKind::On,
                    level: fit.level,
                    sse: fit.sse,
                    window_start: ws,
                });
            }
        }
        out
    }

    fn level_admissible(&self, device: usize, model: &DeviceModel, level: f64) -> bool {
        if !(level > 0.0 && level >= self.params.min_level) {
            return false;
        }
        if model.max_input().is_some_and(|m| level > m) {
            return false;
        }
        if model
            .max_output()
            .is_some_and(|m| (level * self.gains[device]).abs() > m)
        {
            return false;
        }
        true
    }

    /// `(device, contribution)` for devices allowed to switch off at `k_star`,
    /// with the contribution averaged over `[k_star, k]`.
    fn off_contributions(&self, c: &Configuration, k_star: usize, k: usize) -> Vec<(usize, f64)> {
        c.status
            .iter()
            .enumerate()
            .filter_map(|(device, s)| match *s {
                DeviceStatus::On { since, .. } if k_star >= since + self.params.min_on_duration => {
                    let out = &c.outputs[device][k_star..=k];
                    Some((device, out.iter().sum::<f64>() / out.len() as f64))
                }
                _ => None,
            })
            .collect()
    }

    fn off_candidates(&self, c: &Configuration, device: usize, k_star: usize) -> Vec<Candidate> {
        let DeviceStatus::On { since, .. } = c.status[device] else {
            return Vec::new();
        };
        let (ws, we) = self.window(k_star);
        let lo = self.earliest_switch(c, ws).max(since + self.params.min_on_duration);
        (lo..=k_star)
            .map(|k| {
                let mut cand = Candidate {
                    device,
                    k,
                    kind: EventKind::Off,
                    level: 0.0,
                    sse: 0.0,
                    window_start: ws,
                };
                cand.sse = (ws..=we).map(|j| self.child_residual(c, &cand, j).powi(2)).sum();
                cand
            })
            .collect()
    }

    /// Residual at `j` of the child `c` would get from `cand`, for `j` inside
    /// the candidate's window.
    fn child_residual(&self, c: &Configuration, cand: &Candidate, j: usize) -> f64 {
        let d = cand.device;
        let g = &self.steps[d];
        let delta = match cand.kind {
            _ if j < cand.k => 0.0,
            EventKind::On => cand.level * g[j - cand.k],
            EventKind::Off => match c.status[d] {
                DeviceStatus::On { .. } if self.library[d].instant_off() => -c.outputs[d][j],
                DeviceStatus::On { level, .. } => -level * g[j - cand.k],
                DeviceStatus::Off => 0.0,
            },
        };
        self.y[j] - c.total[j] - delta
    }

    /// Pruning score of the child: exact squared residual through `k`, plus the
    /// lookahead residual clipped at the threshold so an event that has not
    /// been reached yet costs no more than explaining it would.
    fn child_score(&self, c: &Configuration, cand: &Candidate, k: usize, horizon: usize) -> f64 {
        let ws = cand.window_start;
        let cap = self.threshold * self.threshold;
        let mut score = c.cum[ws] + self.lambda * (c.events.len() + 1) as f64;
        for j in ws..=horizon {
            let r2 = self.child_residual(c, cand, j).powi(2);
            score += if j <= k { r2 } else { r2.min(cap) };
        }
        score
    }

    /// Pruning score of a configuration that does not branch at `k`. Samples
    /// of a trailing out-of-band run too short to trigger detection are
    /// treated like lookahead: the configuration may still explain them.
    fn keep_score(&self, c: &Configuration, k: usize, horizon: usize) -> f64 {
        let cap = self.threshold * self.threshold;
        let r2 = |j: usize| (self.y[j] - c.total[j]).powi(2);
        let mut pending = k + 1;
        while pending > 0 && k + 1 - pending + 1 < self.params.persistence && r2(pending - 1) > cap {
            pending -= 1;
        }
        let ahead: f64 = (pending..=horizon).map(|j| r2(j).min(cap)).sum();
        c.cum[pending] + ahead + self.lambda * c.events.len() as f64
    }

    /// Best admissible switch-on for a change first seen at `k_star`: lowest
    /// sse, then earlier switch time, then lower device index.
    pub fn select_on_candidate(&self, c: &Configuration, k_star: usize) -> Option<Candidate> {
        let mut cands = self.on_candidates(c, k_star);
        sort_candidates(&mut cands);
        cands.into_iter().next()
    }

    /// Branches for a change detected by the run `[k_star, k]`, best first.
    pub fn candidates(&self, c: &Configuration, change: Change, k: usize) -> Vec<Candidate> {
        let (k_star, decrease) = match change {
            Change::None => return Vec::new(),
            Change::Increase(s) => (s, false),
            Change::Decrease(s) => (s, true),
        };
        let mut cands = self.on_candidates(c, k_star);
        if decrease {
            let drop = (k_star..=k).map(|j| c.total[j] - self.y[j]).sum::<f64>() / (k + 1 - k_star) as f64;
            let contributions = self.off_contributions(c, k_star, k);
            if let Some(device) = attribute_off_event(&contributions, drop) {
                cands.extend(self.off_candidates(c, device, k_star));
            }
        }
        sort_candidates(&mut cands);
        cands
    }

    /// Advance `c` to sample `k`. Returns the candidate branches when a change
    /// is detected there; an unexplainable change is logged on `c` instead.
    pub fn step(&self, c: &mut Configuration, k: usize) -> Option<Vec<Candidate>> {
        let p = self.params.persistence;
        if k + 1 < p {
            return None;
        }
        if c.hold.is_some_and(|h| k + 1 - p <= h) {
            return None;
        }
        let change = detect_change(self.y, &c.total, k, self.threshold, p);
        let direction = match change {
            Change::None => return None,
            Change::Increase(_) => Direction::Increase,
            Change::Decrease(_) => Direction::Decrease,
        };
        let cands = self.candidates(c, change, k);
        if cands.is_empty() {
            c.unexplained.push(Unexplained {
                k: k + 1 - p,
                direction,
            });
            c.hold = Some(k + self.params.lookahead);
            return None;
        }
        Some(cands)
    }

    /// Child configuration with `cand` applied; `k` is the detection sample.
    pub fn apply(&self, parent: &Configuration, cand: &Candidate, k: usize) -> Configuration {
        let mut c = parent.clone();
        let t = self.len();
        let d = cand.device;
        let level = match cand.kind {
            EventKind::On => cand.level,
            EventKind::Off => 0.0,
        };
        c.inputs[d]
            .push(cand.k, level)
            .expect("candidate switch times follow every logged event");
        c.status[d] = match cand.kind {
            EventKind::On => DeviceStatus::On { level, since: cand.k },
            EventKind::Off => DeviceStatus::Off,
        };
        c.outputs[d] = self.library[d].simulate_slice(&c.inputs[d].expand(0, t));
        for j in cand.k..t {
            c.total[j] = sum_outputs(&c.outputs, j);
            let r = self.y[j] - c.total[j];
            c.cum[j + 1] = c.cum[j] + r * r;
        }
        c.events.push(LoggedEvent {
            k: cand.k,
            device: d,
            kind: cand.kind,
            level,
        });
        c.hold = Some(k);
        c
    }

    /// Squared residual over the whole signal plus the event penalty.
    pub fn final_score(&self, c: &Configuration) -> f64 {
        c.squared_residual() + self.lambda * c.events.len() as f64
    }

    /// Beam search over the configuration tree with the configured width.
    pub fn run(&self) -> Configuration {
        let width = self.params.beam_width;
        let mut beam = vec![self.root()];
        for k in 0..self.len() {
            let horizon = self.horizon(k);
            let mut pool: Vec<(f64, Pending)> = Vec::with_capacity(beam.len());
            let mut branched = false;
            for (rank, c) in beam.iter_mut().enumerate() {
                match self.step(c, k) {
                    Some(cands) => {
                        branched = true;
                        for cand in cands {
                            let score = self.child_score(c, &cand, k, horizon);
                            pool.push((score, Pending::Child(rank, cand)));
                        }
                    }
                    None => pool.push((self.keep_score(c, k, horizon), Pending::Keep(rank))),
                }
            }
            if !branched {
                continue;
            }
            // Stable: ties keep parent rank order, then candidate order.
            pool.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut next: Vec<Configuration> = Vec::with_capacity(width.min(pool.len()));
            let mut seen = HashSet::with_capacity(width.min(pool.len()));
            for (_, p) in &pool {
                if next.len() == width {
                    break;
                }
                let (rank, cand) = match p {
                    Pending::Keep(rank) => (*rank, None),
                    Pending::Child(rank, cand) => (*rank, Some(cand)),
                };
                let mut key = event_key(&beam[rank].events);
                if let Some(c) = cand {
                    key.push(event_key_of(c.k, c.device, c.kind, c.level));
                }
                if seen.insert(key) {
                    next.push(match cand {
                        None => beam[rank].clone(),
                        Some(c) => self.apply(&beam[rank], c, k),
                    });
                }
            }
            beam = next;
        }
        let mut best = 0;
        for (i, c) in beam.iter().enumerate().skip(1) {
            if self.final_score(c) < self.final_score(&beam[best]) {
                best = i;
            }
        }
        beam.swap_remove(best)
    }

    /// Package a configuration as a result, re-simulating every device from its
    /// estimated input.
    pub fn finish(&self, c: &Configuration, y_m: &SignalSeries) -> DisaggregationResult {
        let t = self.len();
        let start = y_m.start_index();
        let outputs: Vec<Vec<f64>> = self
            .library
            .iter()
            .zip(&c.inputs)
            .map(|(m, u)| m.simulate_slice(&u.expand(0, t)))
            .collect();
        let total: Vec<f64> = (0..t).map(|j| sum_outputs(&outputs, j)).collect();
        let sq: f64 = self.y.iter().zip(&total).map(|(a, b)| (a - b).powi(2)).sum();
        let shift = |k: usize| k + start;
        DisaggregationResult {
            device_names: self.library.iter().map(|m| m.name().to_string()).collect(),
            estimates: c
                .inputs
                .iter()
                .map(|u| {
                    PiecewiseInput::new(u.events().iter().map(|&(k, l)| (shift(k), l)).collect())
                        .expect("shifting preserves event order")
                })
                .collect(),
            outputs: outputs.into_iter().map(|v| y_m.with_values(v)).collect(),
            total: y_m.with_values(total),
            residual_rms: (sq / t as f64).sqrt(),
            score: sq + self.lambda * c.events.len() as f64,
            events: c
                .events
                .iter()
                .map(|e| LoggedEvent {
                    k: shift(e.k),
                    ..e.clone()
                })
                .collect(),
            unexplained: c
                .unexplained
                .iter()
                .map(|u| Unexplained {
                    k: shift(u.k),
                    ..u.clone()
                })
                .collect(),
            params: self.params.clone(),
        }
    }
}

type EventKey = (usize, usize, bool, u64);

fn event_key_of(k: usize, device: usize, kind: EventKind, level: f64) -> EventKey {
    (k, device, kind == EventKind::On, level.to_bits())
}

/// Identity of an event log; configurations with equal logs are equal.
fn event_key(events: &[LoggedEvent]) -> Vec<EventKey> {
    events
        .iter()
        .map(|e| event_key_of(e.k, e.device, e.kind, e.level))
        .collect()
}

#[derive(Debug, Clone)]
enum Pending {
    Keep(usize),
    Child(usize, Candidate),
}

fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        a.sse
            .total_cmp(&b.sse)
            .then(a.k.cmp(&b.k))
            .then(a.device.cmp(&b.device))
            .then((a.kind == EventKind::Off).cmp(&(b.kind == EventKind::Off)))
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggregationResult {
    pub device_names: Vec<String>,
    /// Estimated input of each device.
    pub estimates: Vec<PiecewiseInput>,
    /// Each device's model simulated under its estimated input.
    pub outputs: Vec<SignalSeries>,
    /// Sum of `outputs`.
    pub total: SignalSeries,
    pub residual_rms: f64,
    /// Squared residual plus the per-event penalty.
    pub score: f64,
    pub events: Vec<LoggedEvent>,
    pub unexplained: Vec<Unexplained>,
    /// Parameters used, with the threshold resolved.
    pub params: EngineParams,
}

/// Greedy single-pass disaggregation: at every detected change keep only the
/// best-scoring branch.
pub fn disaggregate(
    y_m: &SignalSeries,
    library: &[DeviceModel],
    params: &EngineParams,
) -> Result<DisaggregationResult> {
    let params = EngineParams {
        beam_width: 1,
        ..params.clone()
    };
    disaggregate_beam(y_m, library, &params)
}

/// Beam search keeping the `params.beam_width` best configurations.
pub fn disaggregate_beam(
    y_m: &SignalSeries,
    library: &[DeviceModel],
    params: &EngineParams,
) -> Result<DisaggregationResult> {
    let engine = Disaggregator::new(y_m.values(), library, params)?;
    let best = engine.run();
    Ok(engine.finish(&best, y_m))
}

/// On-disk result layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub params: EngineParams,
    pub devices: Vec<String>,
    pub events: Vec<ResultEvent>,
    pub residual_rms: f64,
    pub unexplained: Vec<Unexplained>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEvent {
    pub k: usize,
    pub device: usize,
    pub device_name: String,
    pub kind: EventKind,
    pub level: f64,
}

pub const RESULT_FILE: &str = "result.json";
pub const TOTAL_ESTIMATE_FILE: &str = "estimate_total.csv";

/// Per-device estimate file; numbered from 1.
pub fn estimate_file_name(device: usize) -> String {
    format!("estimate_{}.csv", device + 1)
}

impl DisaggregationResult {
    pub fn to_file(&self) -> ResultFile {
        ResultFile {
            params: self.params.clone(),
            devices: self.device_names.clone(),
            events: self
                .events
                .iter()
                .map(|e| ResultEvent {
                    k: e.k,
                    device: e.device,
                    device_name: self.device_names[e.device].clone(),
                    kind: e.kind,
                    level: e.level,
                })
                .collect(),
            residual_rms: self.residual_rms,
            unexplained: self.unexplained.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    /// Write `result.json`, `estimate_<n>.csv` per device and `estimate_total.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESULT_FILE);
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        for (i, y) in self.outputs.iter().enumerate() {
            write_signal_csv(dir.join(estimate_file_name(i)), y)?;
        }
        write_signal_csv(dir.join(TOTAL_ESTIMATE_FILE), &self.total)
    }

    /// Load a result directory written by [`DisaggregationResult::write_dir`].
    pub fn read_dir(dir: impl AsRef<Path>, sample_period: f64) -> Result<DisaggregationResult> {
        let dir = dir.as_ref();
        let path = dir.join(RESULT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: ResultFile = serde_json::from_str(&text)?;
        let d = file.devices.len();
        let mut per_device: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        let mut events = Vec::with_capacity(file.events.len());
        for e in &file.events {
            if e.device >= d {
                return Err(Error::Validation(format!(
                    "event refers to unknown device {}",
                    e.device
                )));
            }
            per_device[e.device].push((e.k, e.level));
            events.push(LoggedEvent {
                k: e.k,
                device: e.device,
                kind: e.kind,
                level: e.level,
            });
        }
        let estimates = per_device
            .into_iter()
            .map(PiecewiseInput::new)
            .collect::<Result<Vec<_>>>()?;
        let outputs = (0..d)
            .map(|i| read_signal_csv(dir.join(estimate_file_name(i)), sample_period))
            .collect::<Result<Vec<_>>>()?;
        let total = read_signal_csv(dir.join(TOTAL_ESTIMATE_FILE), sample_period)?;
        let lambda = file
            .params
            .deviation_threshold
            .map_or(0.0, |t| t * t * file.params.lookahead as f64);
        let residual_rms = file.residual_rms;
        let score = residual_rms * residual_rms * total.len() as f64 + lambda * events.len() as f64;
        Ok(DisaggregationResult {
            device_names: file.devices,
            estimates,
            outputs,
            total,
            residual_rms,
            score,
            events,
            unexplained: file.unexplained,
            params: file.params,
        })
    }
}
