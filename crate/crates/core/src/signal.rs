use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled scalar signal.
///
/// Sample `k` (an absolute step index) lives at position `k - start_index`;
/// time is never used as a lookup key.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    values: Vec<f64>,
    sample_period: f64,
    start_index: usize,
}

impl SignalSeries {
    pub fn new(values: Vec<f64>, sample_period: f64, start_index: usize) -> Result<Self> {
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        Ok(SignalSeries {
            values,
            sample_period,
            start_index,
        })
    }

    /// Unit sample period, starting at index 0.
    pub fn from_values(values: Vec<f64>) -> Self {
        SignalSeries {
            values,
            sample_period: 1.0,
            start_index: 0,
        }
    }

    pub fn zeros(len: usize, sample_period: f64, start_index: usize) -> Result<Self> {
        Self::new(vec![0.0; len], sample_period, start_index)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// One past the last index.
    pub fn end_index(&self) -> usize {
        self.start_index + self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at absolute index `k`.
    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.start_index)
            .and_then(|pos| self.values.get(pos).copied())
    }

    /// Iterate `(k, value)` pairs.
    pub fn indexed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(pos, &v)| (self.start_index + pos, v))
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        SignalSeries {
            values,
            sample_period: self.sample_period,
            start_index: self.start_index,
        }
    }

    /// Index of the first non-finite sample, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|pos| pos + self.start_index)
    }
}

/// A piecewise-constant, nonnegative input given by its switch events.
///
/// The level is 0 before the first event. Event times are strictly increasing
/// and consecutive levels differ, so the support of the first difference of the
/// expanded input is exactly the event set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct PiecewiseInput {
    events: Vec<(usize, f64)>,
}

impl PiecewiseInput {
    pub fn new(events: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev_k: Option<usize> = None;
        let mut prev_level = 0.0;
        for &(k, level) in &events {
            if !level.is_finite() || level < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "level {level} at k={k} must be finite and nonnegative"
                )));
            }
            if let Some(p) = prev_k {
                if k <= p {
                    return Err(Error::InvalidInput(format!(
                        "event times must be strictly increasing ({p} then {k})"
                    )));
                }
            }
            if level == prev_level {
                return Err(Error::InvalidInput(format!(
                    "null event at k={k}: level unchanged at {level}"
                )));
            }
            prev_k = Some(k);
            prev_level = level;
        }
        Ok(PiecewiseInput { events })
    }

    /// Input that is `level` on the closed interval `[on, off_inclusive]` and 0 elsewhere.
    pub fn pulse(on: usize, off_inclusive: usize, level: f64) -> Result<Self> {
        Self::new(vec![(on, level), (off_inclusive + 1, 0.0)])
    }

    pub fn events(&self) -> &[(usize, f64)] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_event(&self) -> Option<(usize, f64)> {
        self.events.last().copied()
    }

    pub fn level_at(&self, k: usize) -> f64 {
        match self.events.partition_point(|&(t, _)| t <= k) {
            0 => 0.0,
            i => self.events[i - 1].1,
        }
    }

    /// Dense samples over `[start, start + len)`.
    pub fn expand(&self, start: usize, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        let mut level = self.level_at(start);
        let mut next = self.events.partition_point(|&(t, _)| t <= start);
        for (pos, slot) in out.iter_mut().enumerate() {
            let k = start + pos;
            while next < self.events.len() && self.events[next].0 <= k {
                level = self.events[next].1;
                next += 1;
            }
            *slot = level;
        }
        out
    }

    pub fn to_series(&self, start: usize, len: usize, sample_period: f64) -> Result<SignalSeries> {
        SignalSeries::new(self.expand(start, len), sample_period, start)
    }

    /// Nonzero entries of the first difference, `(k, u[k] - u[k-1])`.
    pub fn delta(&self) -> Vec<(usize, f64)> {
        let mut prev = 0.0;
        self.events
            .iter()
            .map(|&(k, level)| {
                let d = level - prev;
                prev = level;
                (k, d)
            })
            .collect()
    }

    /// Append an event; must come after every existing event and change the level.
    pub fn push(&mut self, k: usize, level: f64) -> Result<()> {
        let mut events = self.events.clone();
        events.push((k, level));
        *self = Self::new(events)?;
        Ok(())
    }
}

impl TryFrom<Vec<(usize, f64)>> for PiecewiseInput {
    type Error = Error;

    fn try_from(events: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(events)
    }
}

impl From<PiecewiseInput> for Vec<(usize, f64)> {
    fn from(p: PiecewiseInput) -> Self {
        p.events
    }
}
