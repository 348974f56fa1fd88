//! A monitor whose response resembles the microwave's takes the blame for the
//! microwave switching on, until the monitor's model carries the prior that
//! it never draws more than 10 A.
//!
//! Usage: cargo run --example max_output_prior

use nalgebra::{DMatrix, DVector};
use nilm::{disaggregate, DeviceModel, EngineParams, EventKind, PiecewiseInput, Scenario};

/// Two real poles in parallel, unit DC gain, output vanishing at switch-off.
fn two_pole(name: &str, p1: f64, p2: f64) -> nilm::Result<DeviceModel> {
    Ok(DeviceModel::new(
        name,
        DMatrix::from_row_slice(2, 2, &[p1, 0.0, 0.0, p2]),
        DVector::from_vec(vec![1.0 - p1, 1.0 - p2]),
        DVector::from_vec(vec![0.5, 0.5]),
        0.0,
    )?
    .with_instant_off(true))
}

fn main() -> nilm::Result<()> {
    let kettle = DeviceModel::first_order("kettle", 0.3, 0.7, 1.0, 0.0)?.with_instant_off(true);
    let toaster = DeviceModel::first_order("toaster", 0.8, 0.2, 1.0, 0.0)?.with_instant_off(true);
    // the microwave in the house, and the slightly misidentified model of it
    let real_microwave = two_pole("microwave", 0.6, 0.2)?;
    let microwave = two_pole("microwave", 0.45, 0.2)?;
    let monitor = two_pole("monitor", 0.62, 0.2)?;

    let inputs = vec![
        PiecewiseInput::pulse(20, 90, 9.0)?,
        PiecewiseInput::pulse(60, 160, 7.0)?,
        PiecewiseInput::pulse(200, 280, 12.0)?,
    ];
    let house = Scenario::new(
        vec![kettle.clone(), toaster.clone(), real_microwave],
        inputs,
        0.02,
        5,
        320,
    )?;
    let y = house.render()?.aggregate;

    for cap in [None, Some(10.0)] {
        let library = vec![
            kettle.clone(),
            toaster.clone(),
            microwave.clone(),
            monitor.clone().with_max_output(cap)?,
        ];
        let r = disaggregate(&y, &library, &EngineParams::default())?;
        println!("monitor max_output {cap:?}:");
        for e in r.events.iter().filter(|e| e.kind == EventKind::On) {
            println!("  {} on @{} level {:.2}", library[e.device].name(), e.k, e.level);
        }
    }
    Ok(())
}
