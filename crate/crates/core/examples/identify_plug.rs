//! Identify a device model from a plug recording and compare its step response
//! with the device that produced the data.
//!
//! Usage: cargo run --example identify_plug [plug.csv threshold]
//!
//! With a signal CSV (`k,value`) the model is fit to that file. Without
//! arguments a noisy recording of a known second-order heater is synthesised.

use nilm::ingest::read_signal_csv;
use nilm::model::random_stable_model;
use nilm::sysid::{identify_device, PlugRecordingLabel};
use nilm::{PiecewiseInput, Scenario, SignalSeries};

fn main() -> nilm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (recording, truth, threshold) = match args.as_slice() {
        [path, threshold, ..] => (
            read_signal_csv(path, 1.0)?,
            None,
            threshold
                .parse()
                .map_err(|_| nilm::Error::Validation("bad threshold".into()))?,
        ),
        _ => {
            let truth = random_stable_model(2, 4, true)?.with_name("heater");
            // three uses at different settings, each long enough to settle
            let u = PiecewiseInput::new(vec![
                (20, 2.0),
                (220, 0.0),
                (320, 1.0),
                (520, 0.0),
                (620, 3.0),
                (820, 0.0),
            ])?;
            let s = Scenario::new(vec![truth.clone()], vec![u], 0.01, 1, 900)?;
            (s.render()?.aggregate, Some(truth), 0.3)
        }
    };

    let label = PlugRecordingLabel::new("plug", threshold, 50)?;
    let model = identify_device(&recording, &label, 2, 2, 1)?;
    println!(
        "identified order {} model, dc gain {:.4}, instant_off {}, max_output {:?}",
        model.order(),
        model.dc_gain()?,
        model.instant_off(),
        model.max_output()
    );

    let found = model.step_response(15, 1.0)?;
    let show = |s: &SignalSeries| {
        s.values()
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("identified step {}", show(&found));
    if let Some(truth) = truth {
        let want = truth.step_response(15, 1.0)?;
        println!("true step       {}", show(&want));
        let err = found
            .values()
            .iter()
            .zip(want.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        println!("largest step-response error {err:.4}");
    }
    Ok(())
}
