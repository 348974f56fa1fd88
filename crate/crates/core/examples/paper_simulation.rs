//! Disaggregate the five-device reference simulation for a range of seeds and
//! compare recovered events with the true schedule.
//!
//! Usage: cargo run --release --example paper_simulation [first_seed] [count] [beam_width]

use std::time::Instant;

use nilm::eval::{score, Truth};
use nilm::{disaggregate_beam, EngineParams, EventKind, Scenario};

fn main() -> nilm::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let first = args.first().copied().unwrap_or(0);
    let count = args.get(1).copied().unwrap_or(20);
    let beam_width = args.get(2).copied().unwrap_or(1) as usize;
    let params = EngineParams {
        beam_width,
        ..EngineParams::default()
    };

    let mut exact = 0;
    for seed in first..first + count {
        let scenario = Scenario::paper_simulation(seed)?;
        let rendered = scenario.render()?;
        let start = Instant::now();
        let result = disaggregate_beam(&rendered.aggregate, &scenario.models, &params)?;
        let elapsed = start.elapsed();
        let truth = Truth::from_scenario(&scenario)?;
        let metrics = score(&result, &truth, 0)?;
        let all_exact =
            metrics.matched_events == metrics.truth_events && metrics.estimated_events == metrics.truth_events;
        exact += usize::from(all_exact);

        let levels: Vec<String> = result
            .events
            .iter()
            .filter(|e| e.kind == EventKind::On)
            .map(|e| format!("d{}@{}={:.4}", e.device + 1, e.k, e.level))
            .collect();
        let offs: Vec<String> = result
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Off)
            .map(|e| format!("d{}@{}", e.device + 1, e.k))
            .collect();
        println!(
            "seed {seed:>3} {} rms {:.4} {:>6.1} ms | on {} | off {}{}",
            if all_exact { "exact" } else { "MISS " },
            result.residual_rms,
            elapsed.as_secs_f64() * 1e3,
            levels.join(" "),
            offs.join(" "),
            if result.unexplained.is_empty() {
                String::new()
            } else {
                format!(" | {} unexplained", result.unexplained.len())
            }
        );
    }
    println!("{exact}/{count} seeds with every event exact");
    Ok(())
}
