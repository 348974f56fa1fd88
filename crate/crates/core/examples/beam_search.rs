//! Greedy tracking against beam search on two devices whose early responses
//! look alike: the greedy engine credits the first switch-on to the wrong
//! device, a beam of four recovers the true assignment.
//!
//! Usage: cargo run --example beam_search

use nalgebra::{DMatrix, DVector};
use nilm::{
    disaggregate, disaggregate_beam, DeviceModel, DisaggregationResult, EngineParams, PiecewiseInput, Scenario,
};

fn describe(label: &str, r: &DisaggregationResult) {
    let events: Vec<String> = r
        .events
        .iter()
        .map(|e| {
            format!(
                "{:?} {} @{} level {:.3}",
                e.kind, r.device_names[e.device], e.k, e.level
            )
        })
        .collect();
    println!("{label:>8}: score {:.5} | {}", r.score, events.join(", "));
}

fn main() -> nilm::Result<()> {
    let quick = DeviceModel::first_order("quick", 0.4, 0.6, 1.0, 0.0)?;
    // the same fast mode plus a slow tail
    let slow = DeviceModel::new(
        "slow",
        DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.0, 0.9]),
        DVector::from_vec(vec![0.6, 0.1]),
        DVector::from_vec(vec![0.7, 0.3]),
        0.0,
    )?;
    let library = vec![quick, slow];
    let inputs = vec![
        PiecewiseInput::new(vec![(20, 1.0)])?,
        PiecewiseInput::new(vec![(26, 0.6)])?,
    ];
    let y = Scenario::new(library.clone(), inputs, 0.0, 0, 60)?.render()?.aggregate;
    println!("truth: quick on @20 level 1.0, slow on @26 level 0.6");

    let params = EngineParams {
        deviation_threshold: Some(0.05),
        lookahead: 6,
        backtrack_window: 2,
        min_level: 0.2,
        ..EngineParams::default()
    };
    describe("greedy", &disaggregate(&y, &library, &params)?);
    for width in [2, 4, 8] {
        let r = disaggregate_beam(
            &y,
            &library,
            &EngineParams {
                beam_width: width,
                ..params.clone()
            },
        )?;
        describe(&format!("beam {width}"), &r);
    }
    Ok(())
}
