#![allow(dead_code)]

use nilm::engine::{Configuration, Disaggregator, LoggedEvent};

/// Every leaf of the configuration tree, found by depth-first enumeration of
/// all branches the engine offers, with no pruning.
pub struct Exhaustive {
    pub leaves: usize,
    pub best_score: f64,
    pub best_events: Vec<LoggedEvent>,
}

/// Enumerate the full tree, giving up once more than `limit` leaves exist.
pub fn exhaustive(d: &Disaggregator, len: usize, limit: usize) -> Option<Exhaustive> {
    let mut out = Exhaustive {
        leaves: 0,
        best_score: f64::INFINITY,
        best_events: Vec::new(),
    };
    walk(d, d.root(), 0, len, limit, &mut out).then_some(out)
}

fn walk(d: &Disaggregator, mut c: Configuration, from: usize, len: usize, limit: usize, out: &mut Exhaustive) -> bool {
    for k in from..len {
        if let Some(cands) = d.step(&mut c, k) {
            for cand in &cands {
                if !walk(d, d.apply(&c, cand, k), k + 1, len, limit, out) {
                    return false;
                }
            }
            return true;
        }
    }
    out.leaves += 1;
    let score = d.final_score(&c);
    if score < out.best_score {
        out.best_score = score;
        out.best_events = c.events().to_vec();
    }
    out.leaves <= limit
}

use nilm::model::random_stable_model;
use nilm::{DeviceModel, EngineParams, PiecewiseInput, Scenario, SignalSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small two-device instance: device 0 switches on, device 1 switches on
/// 25–35 samples later and, on odd seeds, device 0 switches off again.
pub struct SmallInstance {
    pub models: Vec<DeviceModel>,
    pub scenario: Scenario,
    pub y: SignalSeries,
}

pub fn small_instance(seed: u64) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<DeviceModel> = (0..2)
        .map(|i| random_stable_model(2, seed * 2 + i, true).unwrap())
        .collect();
    let t1 = rng.random_range(10..20);
    let t2 = t1 + rng.random_range(25..35);
    let t3 = t2 + rng.random_range(25..35);
    let l1 = rng.random_range(0.5..2.0);
    let l2 = rng.random_range(0.5..2.0);
    let (first, horizon) = if seed % 2 == 1 {
        (PiecewiseInput::new(vec![(t1, l1), (t3, 0.0)]).unwrap(), t3 + 30)
    } else {
        (PiecewiseInput::new(vec![(t1, l1)]).unwrap(), t2 + 30)
    };
    let inputs = vec![first, PiecewiseInput::new(vec![(t2, l2)]).unwrap()];
    let scenario = Scenario::new(models.clone(), inputs, 0.02, seed, horizon).unwrap();
    let y = scenario.render().unwrap().aggregate;
    SmallInstance { models, scenario, y }
}

/// Engine settings that keep the configuration tree of a small instance
/// small enough to enumerate.
pub fn small_params() -> EngineParams {
    EngineParams {
        deviation_threshold: Some(0.1),
        persistence: 3,
        lookahead: 8,
        backtrack_window: 1,
        min_level: 0.3,
        ..EngineParams::default()
    }
}
