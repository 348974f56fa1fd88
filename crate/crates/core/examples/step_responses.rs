//! Draw random stable device models and print their step responses, DC gain
//! and spectral radius; optionally save them as a library file.
//!
//! Usage: cargo run --example step_responses [order] [count] [library.json]

use nilm::model::{random_stable_model, spectral_radius, write_library};

fn main() -> nilm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let order = args.first().and_then(|a| a.parse().ok()).unwrap_or(3);
    let count = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(5);

    let mut library = Vec::new();
    for seed in 0..count {
        let model = random_stable_model(order, seed, true)?.with_name(format!("device_{}", seed + 1));
        let step = model.step_response(12, 1.0)?;
        let samples: Vec<String> = step.values().iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "{}: radius {:.3}, dc gain {:.6}\n  step {}",
            model.name(),
            spectral_radius(model.a()),
            model.dc_gain()?,
            samples.join(" ")
        );
        library.push(model);
    }
    if let Some(path) = args.get(2) {
        write_library(path, &library)?;
        println!("wrote {} models to {path}", library.len());
    }
    Ok(())
}
