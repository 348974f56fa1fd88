//! Building device models from plug-level recordings.
//!
//! The input a plug never records is reconstructed by thresholded change
//! detection; an ARX model is then fit by ordinary least squares and realized
//! in observable canonical state-space form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{spectral_radius, DeviceModel, STABILITY_MARGIN};
use crate::signal::{PiecewiseInput, SignalSeries};

/// Fraction of the on-level a sample must fall below after switch-off for the
/// device to count as instant-off.
pub const INSTANT_OFF_FRACTION: f64 = 0.05;
/// Number of post-off samples inspected by the instant-off rule.
pub const INSTANT_OFF_SAMPLES: usize = 2;
/// `max_output` is this factor times the largest observed sample.
pub const MAX_OUTPUT_FACTOR: f64 = 1.25;
/// Largest shift, in samples, tried when aligning detected switch times.
pub const MAX_ON_SHIFT: usize = 5;
pub const MAX_OFF_SHIFT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub na: usize,
    pub nb: usize,
    /// Autoregressive coefficients, `y[k] = Σ a_j y[k-j] + ...`.
    pub a: Vec<f64>,
    /// Exogenous coefficients, `... + Σ b_j u[k-delay-j+1]`.
    pub b_coef: Vec<f64>,
    pub delay: usize,
    pub residual_rms: f64,
    /// Set when the fitted AR polynomial is not stable.
    pub unstable: bool,
}

impl ArxModel {
    pub fn new(a: Vec<f64>, b_coef: Vec<f64>, delay: usize) -> Result<Self> {
        if a.is_empty() || b_coef.is_empty() {
            return Err(Error::Validation("ARX orders na and nb must be at least 1".into()));
        }
        let mut m = ArxModel {
            na: a.len(),
            nb: b_coef.len(),
            a,
            b_coef,
            delay,
            residual_rms: 0.0,
            unstable: false,
        };
        m.unstable = !m.is_stable();
        Ok(m)
    }

    /// Spectral radius of the companion matrix of the AR polynomial.
    pub fn spectral_radius(&self) -> f64 {
        let n = self.na;
        let mut comp = DMatrix::zeros(n, n);
        for (j, &aj) in self.a.iter().enumerate() {
            comp[(0, j)] = aj;
        }
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        spectral_radius(&comp)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0 - STABILITY_MARGIN
    }

    /// Run the difference equation from rest.
    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        for k in 0..u.len() {
            let mut acc = 0.0;
            for (j, &aj) in self.a.iter().enumerate() {
                if let Some(i) = k.checked_sub(j + 1) {
                    acc += aj * y[i];
                }
            }
            for (j, &bj) in self.b_coef.iter().enumerate() {
                if let Some(i) = (k + 1).checked_sub(self.delay + j + 1) {
                    acc += bj * u[i];
                }
            }
            y[k] = acc;
        }
        y
    }

    fn first_row(&self) -> usize {
        self.na.max(self.delay + self.nb - 1)
    }
}

/// Parameters of the change detector that reconstructs a plug's input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugRecordingLabel {
    pub device_name: String,
    pub on_threshold: f64,
    /// Samples after each switch-on ignored when estimating the level.
    pub settle_skip: usize,
}

impl PlugRecordingLabel {
    pub fn new(device_name: impl Into<String>, on_threshold: f64, settle_skip: usize) -> Result<Self> {
        if !(on_threshold.is_finite() && on_threshold > 0.0) {
            return Err(Error::Validation(format!(
                "on_threshold must be positive, got {on_threshold}"
            )));
        }
        Ok(PlugRecordingLabel {
            device_name: device_name.into(),
            on_threshold,
            settle_skip,
        })
    }
}

/// Maximal on-intervals `[on, off)` found by two-sample hysteresis. An interval
/// still open at the end of the signal has `off == len`.
fn on_intervals(y: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let above = |i: usize| i >= y.len() || y[i] > threshold;
    let below = |i: usize| i >= y.len() || y[i] < threshold;
    let mut out = Vec::new();
    let mut on: Option<usize> = None;
    for (i, &v) in y.iter().enumerate() {
        match on {
            None if v > threshold && above(i + 1) => on = Some(i),
            Some(start) if v < threshold && below(i + 1) => {
                out.push((start, i));
                on = None;
            }
            _ => {}
        }
    }
    if let Some(start) = on {
        out.push((start, y.len()));
    }
    out
}

/// Reconstruct a piecewise-constant input from a plug recording.
///
/// A device is on once the signal exceeds the threshold for two consecutive
/// samples and off once it is below for two consecutive samples. Each on-level
/// is the mean of the interval after skipping `settle_skip` samples.
pub fn detect_plug_input(y: &SignalSeries, label: &PlugRecordingLabel) -> Result<PiecewiseInput> {
    if y.is_empty() {
        return Err(Error::EmptySignal);
    }
    if let Some(index) = y.first_non_finite() {
        return Err(Error::NonFinite { index });
    }
    let v = y.values();
    let base = y.start_index();
    let mut events = Vec::new();
    for (on, off) in on_intervals(v, label.on_threshold) {
        let settled = if off - on > label.settle_skip {
            &v[on + label.settle_skip..off]
        } else {
            &v[on..off]
        };
        let level = settled.iter().sum::<f64>() / settled.len() as f64;
        if level <= 0.0 {
            continue;
        }
        events.push((base + on, level));
        if off < v.len() {
            events.push((base + off, 0.0));
        }
    }
    PiecewiseInput::new(events)
}

/// Ordinary least-squares ARX fit.
pub fn fit_arx(y: &SignalSeries, u: &SignalSeries, na: usize, nb: usize, delay: usize) -> Result<ArxModel> {
    if y.len() != u.len() {
        return Err(Error::Validation(format!(
            "output and input lengths differ ({} vs {})",
            y.len(),
            u.len()
        )));
    }
    fit_arx_rows(y.values(), u.values(), na, nb, delay, &[])
}

/// ARX fit that leaves out the regression rows whose index is in `skip`.
pub(crate) fn fit_arx_rows(
    y: &[f64],
    u: &[f64],
    na: usize,
    nb: usize,
    delay: usize,
    skip: &[usize],
) -> Result<ArxModel> {
    if na == 0 || nb == 0 {
        return Err(Error::Validation("ARX orders na and nb must be at least 1".into()));
    }
    let needed = na + nb + delay + 10;
    if y.len() < needed {
        return Err(Error::Validation(format!(
            "need at least {needed} samples for na={na}, nb={nb}, delay={delay}; got {}",
            y.len()
        )));
    }
    if let Some(index) = y.iter().chain(u).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: index % y.len() });
    }
    let proto = ArxModel {
        na,
        nb,
        a: vec![0.0; na],
        b_coef: vec![0.0; nb],
        delay,
        residual_rms: 0.0,
        unstable: false,
    };
    let rows: Vec<usize> = (proto.first_row()..y.len())
        .filter(|k| skip.binary_search(k).is_err())
        .collect();
    let params = na + nb;
    if rows.len() < params {
        return Err(Error::RankDeficient {
            rank: rows.len(),
            params,
        });
    }
    let phi = DMatrix::from_fn(rows.len(), params, |r, col| {
        let k = rows[r];
        if col < na {
            y[k - col - 1]
        } else {
            u[k + 1 - delay - (col - na) - 1]
        }
    });
    let target = DVector::from_iterator(rows.len(), rows.iter().map(|&k| y[k]));

    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if smax == 0.0 || rank < params {
        return Err(Error::RankDeficient { rank, params });
    }
    let theta = svd
        .solve(&target, tol)
        .map_err(|e| Error::Validation(format!("least squares failed: {e}")))?;
    let resid = &target - &phi * &theta;
    let residual_rms = (resid.norm_squared() / rows.len() as f64).sqrt();

    let mut m = ArxModel::new(
        theta.rows(0, na).iter().copied().collect(),
        theta.rows(na, nb).iter().copied().collect(),
        delay,
    )?;
    m.residual_rms = residual_rms;
    Ok(m)
}

/// Observable canonical realization of an ARX model.
///
/// With transfer function `B(z⁻¹)/A(z⁻¹)` written over a common order
/// `n = max(na, delay + nb - 1)`, `A` has the negated denominator in its first
/// column and an identity superdiagonal, `c = e₁`, and a zero delay becomes the
/// feedthrough `d`.
pub fn arx_to_state_space(m: &ArxModel, name: impl Into<String>) -> Result<DeviceModel> {
    if !m.is_stable() {
        return Err(Error::Unstable {
            radius: m.spectral_radius(),
        });
    }
    let n = m.na.max(m.delay + m.nb - 1).max(1);
    // denominator 1 + α₁z⁻¹ + ... and numerator β₀ + β₁z⁻¹ + ...
    let mut alpha = vec![0.0; n + 1];
    for (j, &aj) in m.a.iter().enumerate() {
        alpha[j + 1] = -aj;
    }
    let mut beta = vec![0.0; n + 1];
    for (j, &bj) in m.b_coef.iter().enumerate() {
        beta[m.delay + j] = bj;
    }
    let d = beta[0];
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, 0)] = -alpha[i + 1];
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
    }
    let b = DVector::from_fn(n, |i, _| beta[i + 1] - alpha[i + 1] * d);
    let mut c = DVector::zeros(n);
    c[0] = 1.0;
    DeviceModel::new(name, a, b, c, d)
}

/// Whether every switch-off in `input` is followed within two samples by a
/// sample below 5% of the preceding on-level.
fn looks_instant_off(y: &[f64], base: usize, input: &PiecewiseInput) -> bool {
    let mut prev_level = 0.0;
    let mut offs = 0;
    for &(k, level) in input.events() {
        if level == 0.0 {
            let pos = k - base;
            let window = &y[pos..(pos + INSTANT_OFF_SAMPLES).min(y.len())];
            if !window.iter().any(|&v| v < INSTANT_OFF_FRACTION * prev_level) {
                return false;
            }
            offs += 1;
        }
        prev_level = level;
    }
    offs > 0
}

/// Realigns a detected schedule against a plug recording.
struct Aligner<'a> {
    y: &'a [f64],
    base: usize,
    detected: &'a PiecewiseInput,
    settle_skip: usize,
    instant_off: bool,
    max_lag: usize,
    orders: (usize, usize, usize),
}

impl Aligner<'_> {
    fn max_shift(&self, level: f64) -> usize {
        match (level > 0.0, self.instant_off) {
            (true, _) => MAX_ON_SHIFT,
            (false, true) => 0,
            (false, false) => MAX_OFF_SHIFT,
        }
    }

    /// The detected schedule moved to `times`, with every on-level
    /// re-estimated over its realigned interval so a decaying tail after a
    /// late-detected switch-off does not bias it.
    fn schedule(&self, times: &[usize]) -> Option<PiecewiseInput> {
        let mut events: Vec<(usize, f64)> = Vec::with_capacity(times.len());
        for (&t, &(_, level)) in times.iter().zip(self.detected.events()) {
            if t < self.base || events.last().is_some_and(|e| t <= e.0) {
                return None;
            }
            events.push((t, level));
        }
        for i in 0..events.len() {
            if events[i].1 == 0.0 {
                continue;
            }
            let on = events[i].0 - self.base;
            let off = events.get(i + 1).map_or(self.y.len(), |e| e.0 - self.base);
            let interval = if off - on > self.settle_skip {
                &self.y[on + self.settle_skip..off]
            } else {
                &self.y[on..off]
            };
            let level = interval.iter().sum::<f64>() / interval.len() as f64;
            if level <= 0.0 {
                return None;
            }
            events[i].1 = level;
        }
        PiecewiseInput::new(events).ok()
    }

    /// ARX fit under `input`; for instant-off devices the regression rows
    /// spanning a state reset are left out.
    fn fit(&self, input: &PiecewiseInput) -> Result<ArxModel> {
        let u = input.expand(self.base, self.y.len());
        let mut skip: Vec<usize> = if self.instant_off {
            input
                .events()
                .iter()
                .filter(|e| e.1 == 0.0)
                .flat_map(|&(k, _)| (k - self.base)..(k - self.base + self.max_lag))
                .collect()
        } else {
            Vec::new()
        };
        skip.sort_unstable();
        skip.dedup();
        let (na, nb, delay) = self.orders;
        fit_arx_rows(self.y, &u, na, nb, delay, &skip)
    }

    /// Best fit over one shift shared by all switch-ons and one shared by all
    /// switch-offs, refined by moving single events while that helps.
    fn align(&self) -> Result<ArxModel> {
        let detected: Vec<(usize, f64)> = self.detected.events().to_vec();
        let mut best: Option<(ArxModel, Vec<usize>)> = None;
        let mut last_err = None;
        let mut consider = |times: Vec<usize>, best: &mut Option<(ArxModel, Vec<usize>)>| {
            let Some(input) = self.schedule(&times) else {
                return;
            };
            match self.fit(&input) {
                Ok(m) => {
                    if best.as_ref().is_none_or(|(b, _)| m.residual_rms < b.residual_rms) {
                        *best = Some((m, times));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        };
        for on_shift in 0..=self.max_shift(1.0) {
            for off_shift in 0..=self.max_shift(0.0) {
                let times = detected
                    .iter()
                    .map(|&(k, level)| k.checked_sub(if level > 0.0 { on_shift } else { off_shift }))
                    .collect::<Option<Vec<usize>>>();
                if let Some(times) = times {
                    consider(times, &mut best);
                }
            }
        }
        for _ in 0..ALIGN_PASSES {
            for (i, &(k, level)) in detected.iter().enumerate() {
                let Some((_, current)) = best.clone() else {
                    break;
                };
                for shift in 0..=self.max_shift(level).min(k) {
                    let mut times = current.clone();
                    times[i] = k - shift;
                    if times != current {
                        consider(times, &mut best);
                    }
                }
            }
        }
        match best {
            Some((m, _)) => Ok(m),
            None => Err(last_err.unwrap_or(Error::EmptySignal)),
        }
    }
}

/// Coordinate-descent passes over single events after the shared-shift search.
const ALIGN_PASSES: usize = 2;

/// Identify a device model from one plug recording.
///
/// Detected switch-ons lag the true input by however long the output takes
/// to clear the threshold, so the detected schedule is realigned: switch-ons
/// move up to [`MAX_ON_SHIFT`] samples earlier and, for devices that decay,
/// switch-offs up to [`MAX_OFF_SHIFT`], choosing the alignment with the
/// smallest ARX residual. The model keeps its physical DC gain.
pub fn identify_device(
    y: &SignalSeries,
    label: &PlugRecordingLabel,
    na: usize,
    nb: usize,
    delay: usize,
) -> Result<DeviceModel> {
    let detected = detect_plug_input(y, label)?;
    if detected.is_empty() {
        return Err(Error::Validation(format!(
            "no switch-on detected in the recording of `{}` (threshold {})",
            label.device_name, label.on_threshold
        )));
    }
    let v = y.values();
    let base = y.start_index();
    let aligner = Aligner {
        y: v,
        base,
        detected: &detected,
        settle_skip: label.settle_skip,
        instant_off: looks_instant_off(v, base, &detected),
        max_lag: na.max(delay + nb - 1),
        orders: (na, nb, delay),
    };
    let arx = aligner.align()?;
    let instant_off = aligner.instant_off;
    let max_seen = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let model = arx_to_state_space(&arx, label.device_name.clone())?
        .with_instant_off(instant_off)
        .with_max_output((max_seen > 0.0).then_some(MAX_OUTPUT_FACTOR * max_seen))?;
    Ok(model)
}
