//! Scoring a disaggregation against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{DisaggregationResult, EventKind, LoggedEvent};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::signal::{PiecewiseInput, SignalSeries};

pub const DEFAULT_MATCH_WINDOW: usize = 10;

/// Per-device ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub device_names: Vec<String>,
    pub inputs: Vec<PiecewiseInput>,
    pub outputs: Vec<SignalSeries>,
}

impl Truth {
    pub fn new(device_names: Vec<String>, inputs: Vec<PiecewiseInput>, outputs: Vec<SignalSeries>) -> Result<Self> {
        if device_names.len() != inputs.len() || inputs.len() != outputs.len() {
            return Err(Error::Validation(
                "truth names, inputs and outputs differ in length".into(),
            ));
        }
        Ok(Truth {
            device_names,
            inputs,
            outputs,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let rendered = s.render()?;
        Truth::new(
            s.models.iter().map(|m| m.name().to_string()).collect(),
            s.inputs.clone(),
            rendered.truth_outputs,
        )
    }

    pub fn events(&self) -> Vec<LoggedEvent> {
        events_of(&self.inputs)
    }
}

/// Switch events of a set of inputs, ordered by time then device.
pub fn events_of(inputs: &[PiecewiseInput]) -> Vec<LoggedEvent> {
    let mut out: Vec<LoggedEvent> = inputs
        .iter()
        .enumerate()
        .flat_map(|(device, u)| {
            u.events().iter().map(move |&(k, level)| LoggedEvent {
                k,
                device,
                kind: if level > 0.0 { EventKind::On } else { EventKind::Off },
                level,
            })
        })
        .collect();
    out.sort_by_key(|e| (e.k, e.device));
    out
}

/// Greedy nearest-time matching of estimated to true events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    /// `(truth index, estimate index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_estimate: Vec<usize>,
}

/// Pair events of the same device and kind whose times differ by at most
/// `window`, closest pairs first. Each event is used at most once.
pub fn match_events(truth: &[LoggedEvent], estimate: &[LoggedEvent], window: usize) -> EventMatch {
    let mut options = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        for (ei, e) in estimate.iter().enumerate() {
            let dk = t.k.abs_diff(e.k);
            if t.device == e.device && t.kind == e.kind && dk <= window {
                options.push((dk, t.k, e.k, ti, ei));
            }
        }
    }
    options.sort_unstable();
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimate.len()];
    let mut pairs = Vec::new();
    for (_, _, _, ti, ei) in options {
        if !used_t[ti] && !used_e[ei] {
            used_t[ti] = true;
            used_e[ei] = true;
            pairs.push((ti, ei));
        }
    }
    pairs.sort_unstable();
    EventMatch {
        pairs,
        unmatched_truth: (0..truth.len()).filter(|&i| !used_t[i]).collect(),
        unmatched_estimate: (0..estimate.len()).filter(|&i| !used_e[i]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub device: String,
    pub k: usize,
    pub truth: f64,
    pub estimate: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean absolute switch-time error over matched events, in samples.
    pub switch_time_mae: f64,
    pub precision: f64,
    pub recall: f64,
    /// Relative level error of every matched switch-on.
    pub level_errors: Vec<LevelError>,
    /// `Σ|ŷ_i − y_i| / Σ|y_i|` per device; null when the device never draws power
    /// but the estimate does.
    pub per_device_energy_error: BTreeMap<String, Option<f64>>,
    /// RMS difference between the estimated total and the noiseless true total.
    pub aggregate_rmse: f64,
    pub matched_events: usize,
    pub truth_events: usize,
    pub estimated_events: usize,
}

impl Metrics {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn same_range(a: &SignalSeries, b: &SignalSeries) -> Result<()> {
    if a.start_index() == b.start_index() && a.end_index() == b.end_index() {
        return Ok(());
    }
    if a.start_index() >= b.end_index() || b.start_index() >= a.end_index() {
        return Err(Error::DisjointRanges);
    }
    Err(Error::Validation(format!(
        "index ranges differ: [{}, {}) vs [{}, {})",
        a.start_index(),
        a.end_index(),
        b.start_index(),
        b.end_index()
    )))
}

/// Score a result against ground truth.
///
/// Devices are paired by name when every estimated device name occurs in the
/// truth, by index otherwise. Precision and recall of an empty set are 1.
pub fn score(result: &DisaggregationResult, truth: &Truth, match_window: usize) -> Result<Metrics> {
    let by_name: Option<Vec<usize>> = result
        .device_names
        .iter()
        .map(|n| truth.device_names.iter().position(|t| t == n))
        .collect();
    let to_truth: Vec<usize> = match by_name {
        Some(map) => map,
        None => {
            if result.device_names.len() != truth.device_names.len() {
                return Err(Error::Validation(format!(
                    "result has {} devices, truth has {}",
                    result.device_names.len(),
                    truth.device_names.len()
                )));
            }
            (0..result.device_names.len()).collect()
        }
    };
    for (i, &t) in to_truth.iter().enumerate() {
        same_range(&result.outputs[i], &truth.outputs[t])?;
    }
    same_range(&result.total, &truth.outputs[0])?;

    let truth_events = truth.events();
    let estimated: Vec<LoggedEvent> = result
        .events
        .iter()
        .map(|e| LoggedEvent {
            device: to_truth[e.device],
            ..e.clone()
        })
        .collect();
    let m = match_events(&truth_events, &estimated, match_window);

    let switch_time_mae = if m.pairs.is_empty() {
        0.0
    } else {
        m.pairs
            .iter()
            .map(|&(t, e)| truth_events[t].k.abs_diff(estimated[e].k) as f64)
            .sum::<f64>()
            / m.pairs.len() as f64
    };
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let level_errors = m
        .pairs
        .iter()
        .filter(|&&(t, _)| truth_events[t].kind == EventKind::On)
        .map(|&(t, e)| {
            let te = &truth_events[t];
            let ee = &estimated[e];
            LevelError {
                device: truth.device_names[te.device].clone(),
                k: te.k,
                truth: te.level,
                estimate: ee.level,
                relative: (ee.level - te.level).abs() / te.level,
            }
        })
        .collect();

    let mut per_device_energy_error = BTreeMap::new();
    for (t, name) in truth.device_names.iter().enumerate() {
        let y = truth.outputs[t].values();
        let est = to_truth
            .iter()
            .position(|&x| x == t)
            .map(|i| result.outputs[i].values());
        let num: f64 = match est {
            Some(e) => e.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            None => y.iter().map(|v| v.abs()).sum(),
        };
        let den: f64 = y.iter().map(|v| v.abs()).sum();
        let err = if den > 0.0 {
            Some(num / den)
        } else if num == 0.0 {
            Some(0.0)
        } else {
            None
        };
        per_device_energy_error.insert(name.clone(), err);
    }

    let n = result.total.len();
    let sq: f64 = (0..n)
        .map(|j| {
            let true_total = truth.outputs.iter().fold(0.0, |acc, y| acc + y.values()[j]);
            (result.total.values()[j] - true_total).powi(2)
        })
        .sum();
    let aggregate_rmse = if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };

    Ok(Metrics {
        switch_time_mae,
        precision: ratio(m.pairs.len(), estimated.len()),
        recall: ratio(m.pairs.len(), truth_events.len()),
        level_errors,
        per_device_energy_error,
        aggregate_rmse,
        matched_events: m.pairs.len(),
        truth_events: truth_events.len(),
        estimated_events: estimated.len(),
    })
}
