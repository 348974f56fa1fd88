//! Discrete LTI single-input single-output device models.
//!
//! A device evolves as `x[k+1] = A x[k] + b u[k]` with output
//! `y[k] = cᵀ x[k] + d u[k]`. Devices flagged `instant_off` have their state
//! reset to zero on the sample where the input returns to 0, so their output
//! collapses immediately instead of decaying.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalSeries;

/// Eigenvalues must satisfy `|λ| < 1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Tolerance on `|dc_gain - 1|` for models flagged as DC-normalized.
pub const DC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    name: String,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    d: f64,
    instant_off: bool,
    max_input: Option<f64>,
    max_output: Option<f64>,
    dc_normalized: bool,
}

/// State of one device model.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn zeros(model: &DeviceModel) -> Self {
        StateVector(DVector::zeros(model.order()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub stable: bool,
    pub spectral_radius: f64,
}

impl DeviceModel {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64) -> Result<Self> {
        let name = name.into();
        let n = a.nrows();
        let invalid = |reason: String| Error::InvalidModel {
            name: name.clone(),
            reason,
        };
        if n == 0 || a.ncols() != n {
            return Err(invalid(format!(
                "A must be square and non-empty, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if b.len() != n || c.len() != n {
            return Err(invalid(format!(
                "b and c must have length {n}, got {} and {}",
                b.len(),
                c.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) || !d.is_finite() {
            return Err(invalid("non-finite coefficient".into()));
        }
        Ok(DeviceModel {
            name,
            a,
            b,
            c,
            d,
            instant_off: false,
            max_input: None,
            max_output: None,
            dc_normalized: false,
        })
    }

    /// Scalar first-order model `x' = a x + b u, y = c x + d u`.
    pub fn first_order(name: impl Into<String>, a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(
            name,
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            DVector::from_element(1, c),
            d,
        )
    }

    pub fn with_instant_off(mut self, instant_off: bool) -> Self {
        self.instant_off = instant_off;
        self
    }

    pub fn with_max_input(mut self, max_input: Option<f64>) -> Result<Self> {
        check_bound(&self.name, "max_input", max_input)?;
        self.max_input = max_input;
        Ok(self)
    }

    pub fn with_max_output(mut self, max_output: Option<f64>) -> Result<Self> {
        check_bound(&self.name, "max_output", max_output)?;
        self.max_output = max_output;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn instant_off(&self) -> bool {
        self.instant_off
    }

    pub fn max_input(&self) -> Option<f64> {
        self.max_input
    }

    pub fn max_output(&self) -> Option<f64> {
        self.max_output
    }

    pub fn dc_normalized(&self) -> bool {
        self.dc_normalized
    }

    pub fn stability(&self) -> Stability {
        let spectral_radius = spectral_radius(&self.a);
        Stability {
            stable: spectral_radius < 1.0 - STABILITY_MARGIN,
            spectral_radius,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.stability().stable
    }

    fn require_stable(&self) -> Result<()> {
        let s = self.stability();
        if s.stable {
            Ok(())
        } else {
            Err(Error::Unstable {
                radius: s.spectral_radius,
            })
        }
    }

    /// Steady-state output per unit constant input, `cᵀ(I − A)⁻¹b + d`.
    pub fn dc_gain(&self) -> Result<f64> {
        self.require_stable()?;
        let n = self.order();
        let i_minus_a = DMatrix::<f64>::identity(n, n) - &self.a;
        let x = i_minus_a.lu().solve(&self.b).ok_or(Error::Unstable { radius: 1.0 })?;
        Ok(self.c.dot(&x) + self.d)
    }

    /// Rescale `b` and `d` so the DC gain is exactly 1.
    pub fn normalize_dc(&self) -> Result<DeviceModel> {
        let gain = self.dc_gain()?;
        if gain == 0.0 || !gain.is_finite() {
            return Err(Error::ZeroDcGain);
        }
        let mut out = self.clone();
        out.b /= gain;
        out.d /= gain;
        out.dc_normalized = true;
        Ok(out)
    }

    /// Zero-initial-state response to `u`.
    pub fn simulate_zero_state(&self, u: &SignalSeries) -> Result<SignalSeries> {
        if let Some(index) = u.first_non_finite() {
            return Err(Error::NonFinite { index });
        }
        Ok(u.with_values(self.simulate_slice(u.values())))
    }

    /// Zero-state response to the constant input `level` over `horizon` samples.
    pub fn step_response(&self, horizon: usize, level: f64) -> Result<SignalSeries> {
        if horizon == 0 {
            return Err(Error::Validation("step response horizon must be at least 1".into()));
        }
        self.simulate_zero_state(&SignalSeries::from_values(vec![level; horizon]))
    }

    /// Unit step response as a plain vector.
    pub(crate) fn unit_step(&self, horizon: usize) -> Vec<f64> {
        self.simulate_slice(&vec![1.0; horizon])
    }

    /// Simulation kernel; inputs are assumed finite.
    pub(crate) fn simulate_slice(&self, u: &[f64]) -> Vec<f64> {
        let n = self.order();
        // row-major copy of A for the inner loop
        let a: Vec<f64> = (0..n)
            .flat_map(|r| (0..n).map(move |col| (r, col)))
            .map(|(r, col)| self.a[(r, col)])
            .collect();
        let b = self.b.as_slice();
        let c = self.c.as_slice();
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut prev_u = 0.0;
        let mut y = Vec::with_capacity(u.len());
        for &uk in u {
            if self.instant_off && uk == 0.0 && prev_u != 0.0 {
                x.iter_mut().for_each(|v| *v = 0.0);
            }
            let mut out = self.d * uk;
            for i in 0..n {
                out += c[i] * x[i];
            }
            y.push(out);
            for i in 0..n {
                let row = &a[i * n..(i + 1) * n];
                let mut acc = b[i] * uk;
                for j in 0..n {
                    acc += row[j] * x[j];
                }
                next[i] = acc;
            }
            std::mem::swap(&mut x, &mut next);
            prev_u = uk;
        }
        y
    }

    /// Check the invariants a library entry must satisfy.
    pub fn validate(&self) -> Result<()> {
        self.require_stable()?;
        check_bound(&self.name, "max_input", self.max_input)?;
        check_bound(&self.name, "max_output", self.max_output)?;
        if self.dc_normalized {
            let gain = self.dc_gain()?;
            if (gain - 1.0).abs() > DC_TOLERANCE {
                return Err(Error::InvalidModel {
                    name: self.name.clone(),
                    reason: format!("flagged dc_normalized but DC gain is {gain}"),
                });
            }
        }
        Ok(())
    }
}

fn check_bound(name: &str, field: &str, bound: Option<f64>) -> Result<()> {
    match bound {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(Error::InvalidModel {
            name: name.to_string(),
            reason: format!("{field} must be positive, got {v}"),
        }),
        _ => Ok(()),
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// A random stable model with unit DC gain, deterministic in `seed`.
///
/// Poles are drawn one at a time: a coin flip chooses between a real pole in
/// (−0.95, 0.95) and a complex-conjugate pair with modulus in (0.3, 0.95).
/// `A` is block diagonal in real form, `b` and `c` are standard normal and
/// `d = 0`. Draws whose DC gain is too small to normalize are redrawn from the
/// same stream.
pub fn random_stable_model(order: usize, seed: u64, instant_off: bool) -> Result<DeviceModel> {
    if order == 0 {
        return Err(Error::Validation("model order must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = random_pole_matrix(order, &mut rng);
        let b = DVector::from_fn(order, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DVector::from_fn(order, |_, _| rng.sample::<f64, _>(StandardNormal));
        let raw = DeviceModel::new(format!("sim_{seed}"), a, b, c, 0.0)?;
        let gain = raw.dc_gain()?;
        // A near-zero gain would blow b up by orders of magnitude.
        if gain.abs() < 1e-3 * raw.b.norm() * raw.c.norm() {
            continue;
        }
        return Ok(raw.normalize_dc()?.with_instant_off(instant_off));
    }
}

fn random_pole_matrix(order: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(order, order);
    let mut i = 0;
    while i < order {
        let pair = rng.random_bool(0.5);
        if pair && i + 1 < order {
            let r = rng.random_range(0.3..0.95);
            let theta = rng.random_range(0.0..PI);
            let (s, co) = theta.sin_cos();
            a[(i, i)] = r * co;
            a[(i, i + 1)] = r * s;
            a[(i + 1, i)] = -r * s;
            a[(i + 1, i + 1)] = r * co;
            i += 2;
        } else {
            a[(i, i)] = rng.random_range(-0.95..0.95);
            i += 1;
        }
    }
    a
}

/// One entry of the device library JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct DeviceRecord {
    pub name: String,
    pub order: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub instant_off: bool,
    pub max_input: Option<f64>,
    pub max_output: Option<f64>,
    pub dc_normalized: bool,
}

impl From<&DeviceModel> for DeviceRecord {
    fn from(m: &DeviceModel) -> Self {
        let n = m.order();
        DeviceRecord {
            name: m.name.clone(),
            order: n,
            a: (0..n)
                .flat_map(|r| (0..n).map(move |col| (r, col)))
                .map(|(r, col)| m.a[(r, col)])
                .collect(),
            b: m.b.iter().copied().collect(),
            c: m.c.iter().copied().collect(),
            d: m.d,
            instant_off: m.instant_off,
            max_input: m.max_input,
            max_output: m.max_output,
            dc_normalized: m.dc_normalized,
        }
    }
}

impl TryFrom<DeviceRecord> for DeviceModel {
    type Error = Error;

    fn try_from(r: DeviceRecord) -> Result<Self> {
        let n = r.order;
        if r.a.len() != n * n {
            return Err(Error::InvalidModel {
                name: r.name,
                reason: format!("A has {} entries, expected {}", r.a.len(), n * n),
            });
        }
        let mut model = DeviceModel::new(
            r.name,
            DMatrix::from_row_slice(n, n, &r.a),
            DVector::from_vec(r.b),
            DVector::from_vec(r.c),
            r.d,
        )?
        .with_instant_off(r.instant_off)
        .with_max_input(r.max_input)?
        .with_max_output(r.max_output)?;
        model.dc_normalized = r.dc_normalized;
        model.validate()?;
        Ok(model)
    }
}

impl Serialize for DeviceModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DeviceRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DeviceModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let record = DeviceRecord::deserialize(d)?;
        DeviceModel::try_from(record).map_err(serde::de::Error::custom)
    }
}

/// Parse a device library: a JSON array of model records. Every entry is validated
/// and names must be unique.
pub fn library_from_json(text: &str) -> Result<Vec<DeviceModel>> {
    let models: Vec<DeviceModel> = serde_json::from_str(text)?;
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|o| o.name == m.name) {
            return Err(Error::Validation(format!("duplicate device name `{}`", m.name)));
        }
    }
    Ok(models)
}

pub fn library_to_json(models: &[DeviceModel]) -> Result<String> {
    let mut text = serde_json::to_string_pretty(models)?;
    text.push('\n');
    Ok(text)
}

pub fn read_library(path: impl AsRef<Path>) -> Result<Vec<DeviceModel>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    library_from_json(&text)
}

pub fn write_library(path: impl AsRef<Path>, models: &[DeviceModel]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, library_to_json(models)?).map_err(|e| Error::io(path, e))
}
