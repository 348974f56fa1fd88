//! The full pipeline on one reference scenario: simulate, disaggregate, write
//! the result directory and score it against the ground truth.
//!
//! Usage: cargo run --example evaluate [seed] [beam_width] [out_dir]

use nilm::eval::{score, Truth, DEFAULT_MATCH_WINDOW};
use nilm::{disaggregate_beam, EngineParams, Scenario};

fn main() -> nilm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.first().and_then(|a| a.parse().ok()).unwrap_or(0);
    let beam_width = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1);

    let scenario = Scenario::paper_simulation(seed)?;
    let aggregate = scenario.render()?.aggregate;
    let params = EngineParams {
        beam_width,
        ..EngineParams::default()
    };
    let result = disaggregate_beam(&aggregate, &scenario.models, &params)?;
    if let Some(dir) = args.get(2) {
        result.write_dir(dir)?;
        println!("result written to {dir}");
    }
    let metrics = score(&result, &Truth::from_scenario(&scenario)?, DEFAULT_MATCH_WINDOW)?;
    print!("{}", metrics.to_json()?);
    Ok(())
}
