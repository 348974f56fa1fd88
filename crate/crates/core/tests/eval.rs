use nilm::eval::{events_of, match_events, score, Truth};
use nilm::model::random_stable_model;
use nilm::{DeviceModel, DisaggregationResult, EngineParams, Error, EventKind, PiecewiseInput, SignalSeries};

const LEN: usize = 200;

fn models() -> Vec<DeviceModel> {
    (0..2)
        .map(|i| {
            random_stable_model(2, 500 + i, true)
                .unwrap()
                .with_name(format!("dev{i}"))
        })
        .collect()
}

fn simulate(models: &[DeviceModel], inputs: &[PiecewiseInput]) -> Vec<SignalSeries> {
    models
        .iter()
        .zip(inputs)
        .map(|(m, u)| m.simulate_zero_state(&u.to_series(0, LEN, 1.0).unwrap()).unwrap())
        .collect()
}

fn truth(models: &[DeviceModel], inputs: Vec<PiecewiseInput>) -> Truth {
    let outputs = simulate(models, &inputs);
    Truth::new(models.iter().map(|m| m.name().to_string()).collect(), inputs, outputs).unwrap()
}

/// A result whose estimates are exactly `inputs` under `models`.
fn result(models: &[DeviceModel], inputs: Vec<PiecewiseInput>) -> DisaggregationResult {
    let outputs = simulate(models, &inputs);
    let total: Vec<f64> = (0..LEN).map(|j| outputs.iter().map(|o| o.values()[j]).sum()).collect();
    DisaggregationResult {
        device_names: models.iter().map(|m| m.name().to_string()).collect(),
        events: events_of(&inputs),
        estimates: inputs,
        outputs,
        total: SignalSeries::from_values(total),
        residual_rms: 0.0,
        score: 0.0,
        unexplained: Vec::new(),
        params: EngineParams::default(),
    }
}

fn pulse(on: usize, off: usize, level: f64) -> PiecewiseInput {
    PiecewiseInput::pulse(on, off, level).unwrap()
}

#[test]
fn one_sample_late_switch_off() {
    let m = models();
    let t = truth(&m, vec![pulse(20, 100, 1.0), PiecewiseInput::default()]);
    let r = result(&m, vec![pulse(20, 101, 1.0), PiecewiseInput::default()]);
    let metrics = score(&r, &t, 5).unwrap();
    assert_eq!(metrics.switch_time_mae, 0.5);
    assert_eq!(metrics.precision, 1.0);
    assert_eq!(metrics.recall, 1.0);
    // outside a zero window the late event no longer matches
    let strict = score(&r, &t, 0).unwrap();
    assert_eq!(strict.recall, 0.5);
    assert_eq!(strict.precision, 0.5);
}

#[test]
fn perfect_recovery_scores_zero_error() {
    let m = models();
    let inputs = vec![pulse(20, 100, 1.3), pulse(60, 150, 0.7)];
    let metrics = score(&result(&m, inputs.clone()), &truth(&m, inputs), 10).unwrap();
    assert_eq!(metrics.switch_time_mae, 0.0);
    assert_eq!((metrics.precision, metrics.recall), (1.0, 1.0));
    assert!(metrics.level_errors.iter().all(|e| e.relative == 0.0));
    assert_eq!(metrics.level_errors.len(), 2);
    assert!(metrics.per_device_energy_error.values().all(|e| *e == Some(0.0)));
    assert_eq!(metrics.aggregate_rmse, 0.0);
}

#[test]
fn missing_one_of_four_events() {
    let m = models();
    let t = truth(&m, vec![pulse(20, 100, 1.0), pulse(60, 150, 0.5)]);
    let r = result(
        &m,
        vec![pulse(20, 100, 1.0), PiecewiseInput::new(vec![(60, 0.5)]).unwrap()],
    );
    let metrics = score(&r, &t, 10).unwrap();
    assert_eq!(metrics.recall, 0.75);
    assert_eq!(metrics.precision, 1.0);
    assert!(metrics.per_device_energy_error["dev1"].unwrap() > 0.0);
    assert_eq!(metrics.per_device_energy_error["dev0"], Some(0.0));
}

#[test]
fn matching_is_one_to_one_and_respects_device_and_kind() {
    let t = events_of(&[pulse(10, 50, 1.0), pulse(12, 40, 1.0)]);
    // two estimates near the same true switch-on, one with the wrong device
    let e = events_of(&[
        PiecewiseInput::new(vec![(11, 1.0), (50, 0.0)]).unwrap(),
        PiecewiseInput::new(vec![(9, 1.0)]).unwrap(),
    ]);
    let m = match_events(&t, &e, 5);
    for &(ti, ei) in &m.pairs {
        assert_eq!(t[ti].device, e[ei].device);
        assert_eq!(t[ti].kind, e[ei].kind);
        assert!(t[ti].k.abs_diff(e[ei].k) <= 5);
    }
    let mut used: Vec<usize> = m.pairs.iter().map(|p| p.1).collect();
    used.dedup();
    assert_eq!(used.len(), m.pairs.len());
    assert_eq!(m.pairs.len() + m.unmatched_truth.len(), t.len());
    assert_eq!(m.pairs.len() + m.unmatched_estimate.len(), e.len());
    // the device-1 switch-on at 9 matches device 1's true switch-on at 12
    assert!(m.pairs.iter().any(|&(ti, ei)| t[ti].k == 12 && e[ei].k == 9));
    assert!(e.iter().all(|ev| ev.kind == EventKind::On || ev.k == 50));
}

#[test]
fn devices_pair_by_name_regardless_of_order() {
    let m = models();
    let inputs = vec![pulse(20, 100, 1.3), pulse(60, 150, 0.7)];
    let t = truth(&m, inputs.clone());
    let swapped_models = vec![m[1].clone(), m[0].clone()];
    let swapped = result(&swapped_models, vec![inputs[1].clone(), inputs[0].clone()]);
    let a = score(&result(&m, inputs), &t, 10).unwrap();
    let b = score(&swapped, &t, 10).unwrap();
    assert_eq!(a, b);
}

#[test]
fn disjoint_ranges_are_rejected() {
    let m = models();
    let inputs = vec![pulse(20, 100, 1.0), PiecewiseInput::default()];
    let t = truth(&m, inputs.clone());
    let mut r = result(&m, inputs);
    let shift = |s: &SignalSeries| SignalSeries::new(s.values().to_vec(), 1.0, 1000).unwrap();
    r.outputs = r.outputs.iter().map(shift).collect();
    r.total = shift(&r.total);
    assert!(matches!(score(&r, &t, 5), Err(Error::DisjointRanges)));
}
