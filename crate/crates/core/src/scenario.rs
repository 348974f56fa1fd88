//! Synthetic disaggregation problems with known ground truth.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{random_stable_model, DeviceModel, DeviceRecord};
use crate::signal::{PiecewiseInput, SignalSeries};

pub const DEFAULT_HORIZON: usize = 450;
pub const PAPER_NOISE_STD: f64 = 0.02;
pub const PAPER_DEVICE_COUNT: usize = 5;

/// Closed on-intervals and levels of the reference five-device schedule; the
/// fifth device is never switched on.
pub const PAPER_SCHEDULE: [(usize, usize, f64); 4] =
    [(20, 100, 1.2), (130, 400, 2.0), (180, 300, 0.6), (250, 350, 1.8)];

// Noise uses its own ChaCha stream so it never overlaps a model draw made
// from the same seed.
const NOISE_STREAM: u64 = 0x6e6f697365;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub models: Vec<DeviceModel>,
    pub inputs: Vec<PiecewiseInput>,
    pub noise_std: f64,
    pub seed: u64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    /// Sum of device outputs plus noise.
    pub aggregate: SignalSeries,
    pub truth_outputs: Vec<SignalSeries>,
}

impl Scenario {
    pub fn new(
        models: Vec<DeviceModel>,
        inputs: Vec<PiecewiseInput>,
        noise_std: f64,
        seed: u64,
        horizon: usize,
    ) -> Result<Self> {
        let s = Scenario {
            models,
            inputs,
            noise_std,
            seed,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() != self.inputs.len() {
            return Err(Error::Validation(format!(
                "{} models but {} input schedules",
                self.models.len(),
                self.inputs.len()
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Validation(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if let Some(last) = self.inputs.iter().filter_map(|u| u.last_event()).map(|e| e.0).max() {
            if last > self.horizon {
                return Err(Error::Validation(format!(
                    "horizon {} ends before the last event at {last}",
                    self.horizon
                )));
            }
        }
        for m in &self.models {
            m.validate()?;
        }
        Ok(())
    }

    /// Device outputs and the noisy aggregate over `[0, horizon)`.
    pub fn render(&self) -> Result<Rendered> {
        let truth: Vec<Vec<f64>> = self
            .models
            .iter()
            .zip(&self.inputs)
            .map(|(m, u)| m.simulate_slice(&u.expand(0, self.horizon)))
            .collect();
        let mut aggregate = vec![0.0; self.horizon];
        for y in &truth {
            for (acc, v) in aggregate.iter_mut().zip(y) {
                *acc += v;
            }
        }
        if self.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(NOISE_STREAM);
            let normal = Normal::new(0.0, self.noise_std).map_err(|e| Error::Validation(format!("noise: {e}")))?;
            for v in aggregate.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        Ok(Rendered {
            aggregate: SignalSeries::from_values(aggregate),
            truth_outputs: truth.into_iter().map(SignalSeries::from_values).collect(),
        })
    }

    /// Five random third-order unit-gain instant-off devices driven by the
    /// reference overlapping schedule, with 0.02 noise.
    pub fn paper_simulation(seed: u64) -> Result<Scenario> {
        let mut models = Vec::with_capacity(PAPER_DEVICE_COUNT);
        for i in 0..PAPER_DEVICE_COUNT {
            let m = random_stable_model(3, seed.wrapping_add(i as u64), true)?;
            models.push(m.with_name(format!("device_{}", i + 1)));
        }
        let mut inputs: Vec<PiecewiseInput> = PAPER_SCHEDULE
            .iter()
            .map(|&(on, off, level)| PiecewiseInput::pulse(on, off, level))
            .collect::<Result<_>>()?;
        inputs.push(PiecewiseInput::default());
        Scenario::new(models, inputs, PAPER_NOISE_STD, seed, DEFAULT_HORIZON)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            seed: self.seed,
            noise_std: self.noise_std,
            horizon: self.horizon,
            devices: self
                .models
                .iter()
                .zip(&self.inputs)
                .map(|(m, u)| DeviceEntry {
                    model: Some(DeviceRecord::from(m)),
                    model_ref: None,
                    events: u.events().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    /// Parse a scenario file, resolving `model_ref` entries against `library`.
    pub fn from_json(text: &str, library: &[DeviceModel]) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.resolve(library)
    }

    pub fn read(path: impl AsRef<Path>, library: &[DeviceModel]) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, library)
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub seed: u64,
    pub noise_std: f64,
    pub horizon: usize,
    pub devices: Vec<DeviceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<DeviceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ref: Option<String>,
    pub events: Vec<(usize, f64)>,
}

impl ScenarioFile {
    pub fn resolve(self, library: &[DeviceModel]) -> Result<Scenario> {
        let mut models = Vec::with_capacity(self.devices.len());
        let mut inputs = Vec::with_capacity(self.devices.len());
        for (i, d) in self.devices.into_iter().enumerate() {
            let model = match (d.model, d.model_ref) {
                (Some(record), None) => DeviceModel::try_from(record)?,
                (None, Some(name)) => library
                    .iter()
                    .find(|m| m.name() == name)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("device {i}: unknown model_ref `{name}`")))?,
                _ => {
                    return Err(Error::Validation(format!(
                        "device {i}: exactly one of `model` and `model_ref` is required"
                    )))
                }
            };
            models.push(model);
            inputs.push(PiecewiseInput::new(d.events)?);
        }
        Scenario::new(models, inputs, self.noise_std, self.seed, self.horizon)
    }
}
