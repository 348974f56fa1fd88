//! emonTx measurement files and signal CSV.
//!
//! emonTx CSV has the header `timestamp_utc,irms,vrms,pva,pw,pf`; signal CSV has
//! the header `k,value`. Numbers are written with Rust's shortest round-trip
//! formatting, so writing then reading reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalSeries;

pub const EMONTX_HEADER: [&str; 6] = ["timestamp_utc", "irms", "vrms", "pva", "pw", "pf"];
pub const SIGNAL_HEADER: [&str; 2] = ["k", "value"];

/// Sampling rate of an emonTx node.
pub const EMONTX_RATE_HZ: f64 = 12.0;

/// Gaps longer than this many sample periods are marked `long`.
pub const LONG_GAP_PERIODS: f64 = 10.0;

const PF_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmonRecord {
    pub timestamp_utc: f64,
    pub irms: f64,
    pub vrms: f64,
    pub pva: f64,
    pub pw: f64,
    pub pf: f64,
}

impl EmonRecord {
    fn check(&self) -> std::result::Result<(), String> {
        let fields = [
            ("timestamp_utc", self.timestamp_utc),
            ("irms", self.irms),
            ("vrms", self.vrms),
            ("pva", self.pva),
            ("pw", self.pw),
            ("pf", self.pf),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} is not finite"));
        }
        if self.pf.abs() > 1.0 + PF_TOLERANCE {
            return Err(format!("power factor {} outside [-1, 1]", self.pf));
        }
        for (name, v) in [("irms", self.irms), ("vrms", self.vrms), ("pva", self.pva)] {
            if v < 0.0 {
                return Err(format!("{name} is negative ({v})"));
            }
        }
        Ok(())
    }

    pub fn channel(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Irms => self.irms,
            Channel::Pw => self.pw,
            Channel::Pva => self.pva,
        }
    }
}

/// Which emonTx channel to disaggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    Irms,
    Pw,
    Pva,
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "irms" => Ok(Channel::Irms),
            "pw" => Ok(Channel::Pw),
            "pva" => Ok(Channel::Pva),
            other => Err(Error::Validation(format!(
                "unknown channel `{other}` (expected irms, pw or pva)"
            ))),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn check_header(path: &Path, reader: &mut csv::Reader<&[u8]>, want: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| parse_error(path, 1, e.to_string()))?;
    if header.iter().ne(want.iter().copied()) {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                want.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

pub fn parse_emontx_csv(path: impl AsRef<Path>) -> Result<Vec<EmonRecord>> {
    let path = path.as_ref();
    parse_emontx_str(&read_text(path)?, path)
}

/// Parse emonTx CSV text; `origin` only labels error messages.
pub fn parse_emontx_str(text: &str, origin: impl AsRef<Path>) -> Result<Vec<EmonRecord>> {
    let origin = origin.as_ref();
    let mut reader = csv_reader(text);
    check_header(origin, &mut reader, &EMONTX_HEADER)?;
    let mut out: Vec<EmonRecord> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(origin, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let mut vals = [0.0; 6];
        for (slot, (field, name)) in vals.iter_mut().zip(row.iter().zip(EMONTX_HEADER)) {
            *slot = field
                .parse()
                .map_err(|_| parse_error(origin, line, format!("{name}: cannot parse `{field}`")))?;
        }
        let rec = EmonRecord {
            timestamp_utc: vals[0],
            irms: vals[1],
            vrms: vals[2],
            pva: vals[3],
            pw: vals[4],
            pf: vals[5],
        };
        rec.check().map_err(|reason| parse_error(origin, line, reason))?;
        if let Some(prev) = out.last() {
            if rec.timestamp_utc <= prev.timestamp_utc {
                return Err(parse_error(
                    origin,
                    line,
                    format!(
                        "timestamp {} does not increase (previous {})",
                        rec.timestamp_utc, prev.timestamp_utc
                    ),
                ));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn emontx_to_string(records: &[EmonRecord]) -> String {
    let mut s = EMONTX_HEADER.join(",");
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.timestamp_utc, r.irms, r.vrms, r.pva, r.pw, r.pf
        );
    }
    s
}

pub fn write_emontx_csv(path: impl AsRef<Path>, records: &[EmonRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, emontx_to_string(records)).map_err(|e| Error::io(path, e))
}

/// A stretch where the resampler held a value across missing records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// Grid index of the first held sample.
    pub start: usize,
    /// Grid samples carrying the value of the record before the gap.
    pub held: usize,
    pub seconds: f64,
    /// Longer than [`LONG_GAP_PERIODS`] sample periods.
    pub long: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub signal: SignalSeries,
    pub gaps: Vec<Gap>,
}

/// Zero-order-hold resampling of one channel onto a uniform grid at `nominal_rate` Hz.
///
/// The grid starts at the first timestamp and has
/// `ceil((t_last - t_first) * rate) + 1` samples. Every inter-record interval
/// longer than 1.5 periods is reported as a gap.
pub fn to_signal(records: &[EmonRecord], channel: Channel, nominal_rate: f64) -> Result<Resampled> {
    if records.is_empty() {
        return Err(Error::EmptySignal);
    }
    if records.len() < 2 {
        return Err(Error::Validation("resampling needs at least two records".into()));
    }
    if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
        return Err(Error::Validation(format!(
            "sample rate must be positive, got {nominal_rate}"
        )));
    }
    // tolerance for timestamps printed with millisecond resolution
    const EPS: f64 = 1e-3;
    let t0 = records[0].timestamp_utc;
    let span = (records[records.len() - 1].timestamp_utc - t0) * nominal_rate;
    let len = (span - EPS).ceil().max(0.0) as usize + 1;
    let grid_pos = |t: f64| (t - t0) * nominal_rate;

    let mut values = Vec::with_capacity(len);
    let mut gaps = Vec::new();
    let mut next = 0;
    let mut current = records[0].channel(channel);
    for j in 0..len {
        while next < records.len() && grid_pos(records[next].timestamp_utc) <= j as f64 + EPS {
            current = records[next].channel(channel);
            next += 1;
        }
        values.push(current);
    }
    for w in records.windows(2) {
        let periods = (w[1].timestamp_utc - w[0].timestamp_utc) * nominal_rate;
        if periods > 1.5 {
            let first = (grid_pos(w[0].timestamp_utc) - EPS).ceil().max(0.0) as usize;
            let end = (grid_pos(w[1].timestamp_utc) - EPS).ceil() as usize;
            gaps.push(Gap {
                start: first,
                held: end.saturating_sub(first),
                seconds: w[1].timestamp_utc - w[0].timestamp_utc,
                long: periods > LONG_GAP_PERIODS,
            });
        }
    }
    Ok(Resampled {
        signal: SignalSeries::new(values, 1.0 / nominal_rate, 0)?,
        gaps,
    })
}

/// Pointwise sum over the intersection of the index ranges.
///
/// At each index the addends are sorted before summing left to right, so the
/// result does not depend on the order of `signals`.
pub fn sum_aligned(signals: &[SignalSeries]) -> Result<SignalSeries> {
    let first = signals.first().ok_or(Error::EmptySignal)?;
    let period = first.sample_period();
    for s in &signals[1..] {
        if (s.sample_period() - period).abs() > 1e-12 * period {
            return Err(Error::PeriodMismatch(period, s.sample_period()));
        }
    }
    let start = signals.iter().map(|s| s.start_index()).max().unwrap_or(0);
    let end = signals.iter().map(|s| s.end_index()).min().unwrap_or(0);
    if start >= end {
        return Err(Error::DisjointRanges);
    }
    let mut addends = Vec::with_capacity(signals.len());
    let values = (start..end)
        .map(|k| {
            addends.clear();
            addends.extend(signals.iter().filter_map(|s| s.get(k)));
            addends.sort_by(f64::total_cmp);
            addends.iter().fold(0.0, |acc, v| acc + v)
        })
        .collect();
    SignalSeries::new(values, period, start)
}

pub fn signal_to_string(s: &SignalSeries) -> String {
    let mut out = SIGNAL_HEADER.join(",");
    out.push('\n');
    for (k, v) in s.indexed() {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

pub fn write_signal_csv(path: impl AsRef<Path>, s: &SignalSeries) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, signal_to_string(s)).map_err(|e| Error::io(path, e))
}

pub fn read_signal_csv(path: impl AsRef<Path>, sample_period: f64) -> Result<SignalSeries> {
    let path = path.as_ref();
    parse_signal_str(&read_text(path)?, path, sample_period)
}

/// Parse signal CSV text. Indices must be consecutive integers.
pub fn parse_signal_str(text: &str, origin: impl AsRef<Path>, sample_period: f64) -> Result<SignalSeries> {
    let origin = origin.as_ref();
    let mut reader = csv_reader(text);
    check_header(origin, &mut reader, &SIGNAL_HEADER)?;
    let mut start = None;
    let mut values = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(origin, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let k: usize = row[0]
            .parse()
            .map_err(|_| parse_error(origin, line, format!("k: cannot parse `{}`", &row[0])))?;
        let v: f64 = row[1]
            .parse()
            .map_err(|_| parse_error(origin, line, format!("value: cannot parse `{}`", &row[1])))?;
        if !v.is_finite() {
            return Err(parse_error(origin, line, "value is not finite"));
        }
        let first = *start.get_or_insert(k);
        if k != first + values.len() {
            return Err(parse_error(
                origin,
                line,
                format!("expected k={}, found {k}", first + values.len()),
            ));
        }
        values.push(v);
    }
    SignalSeries::new(values, sample_period, start.unwrap_or(0))
}
