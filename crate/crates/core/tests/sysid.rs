use nilm::model::random_stable_model;
use nilm::sysid::{arx_to_state_space, detect_plug_input, fit_arx, identify_device, ArxModel, PlugRecordingLabel};
use nilm::{PiecewiseInput, SignalSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Monic polynomial coefficients of `Π (1 - r_i z⁻¹)` written as the ARX
/// recursion `y[k] = Σ a_j y[k-j]`, i.e. `a_j = -coef_j`.
fn ar_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut poly = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, &p) in poly.iter().enumerate() {
            next[i] += p;
            next[i + 1] -= r * p;
        }
        poly = next;
    }
    poly[1..].iter().map(|c| -c).collect()
}

fn random_binary_input(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect()
}

fn random_arx(rng: &mut ChaCha8Rng) -> ArxModel {
    let roots: Vec<f64> = (0..3).map(|_| rng.random_range(-0.9..0.9)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
    ArxModel::new(ar_from_roots(&roots), b, 1).unwrap()
}

#[test]
fn noiseless_third_order_fit_recovers_coefficients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_arx(&mut rng);
        let u = random_binary_input(&mut rng, 300);
        let y = truth.simulate(&u);
        let fit = fit_arx(&SignalSeries::from_values(y), &SignalSeries::from_values(u), 3, 3, 1).unwrap();
        for (got, want) in fit.a.iter().chain(&fit.b_coef).zip(truth.a.iter().chain(&truth.b_coef)) {
            assert!((got - want).abs() <= 1e-8, "seed {seed}: {got} vs {want}");
        }
        assert!(fit.residual_rms <= 1e-9);
    }
}

#[test]
fn noisy_first_order_fit_stays_close_over_twenty_seeds() {
    let noise = Normal::new(0.0, 0.01).unwrap();
    let truth = ArxModel::new(vec![0.5], vec![0.5], 1).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let u = random_binary_input(&mut rng, 500);
        let y: Vec<f64> = truth
            .simulate(&u)
            .into_iter()
            .map(|v| v + noise.sample(&mut rng))
            .collect();
        let fit = fit_arx(&SignalSeries::from_values(y), &SignalSeries::from_values(u), 1, 1, 1).unwrap();
        assert!((fit.a[0] - 0.5).abs() <= 0.05, "seed {seed}: a = {}", fit.a[0]);
        assert!(
            (fit.b_coef[0] - 0.5).abs() <= 0.05,
            "seed {seed}: b = {}",
            fit.b_coef[0]
        );
    }
}

#[test]
fn canonical_realization_simulates_like_the_difference_equation() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let mut m = random_arx(&mut rng);
        m.delay = (seed % 3) as usize;
        let ss = arx_to_state_space(&m, "x").unwrap();
        let u = random_binary_input(&mut rng, 200);
        let want = m.simulate(&u);
        let got = ss.simulate_zero_state(&SignalSeries::from_values(u)).unwrap();
        for (g, w) in got.values().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-8, "seed {seed}");
        }
    }
}

/// A plug recording: the model driven by pulses of `width` samples with idle
/// gaps long enough for a decaying device to come to rest.
fn plug_trace(model: &nilm::DeviceModel, levels: &[f64], width: usize) -> (PiecewiseInput, SignalSeries) {
    let mut events = Vec::new();
    let mut k = 15;
    for &level in levels {
        events.push((k, level));
        events.push((k + width, 0.0));
        k += width + 100;
    }
    let u = PiecewiseInput::new(events).unwrap();
    let y = model
        .simulate_zero_state(&u.to_series(0, k + 20, 1.0).unwrap())
        .unwrap();
    (u, y)
}

#[test]
fn identify_round_trip_matches_step_response() {
    let mut checked = 0;
    for seed in 0..40 {
        let truth = random_stable_model(3, 300 + seed, true).unwrap();
        // The hysteresis detector needs a response that, once above the
        // threshold, stays there for the whole pulse.
        let threshold = 0.2;
        let unit = truth.step_response(400, 1.0).unwrap();
        let crossing = unit.values().iter().position(|&v| 1.5 * v > threshold).unwrap();
        if unit.values()[crossing..].iter().any(|&v| 1.5 * v <= threshold) || unit.values().iter().any(|&v| v < -0.05) {
            continue;
        }
        checked += 1;
        let level = 2.0;
        // Plug data carries no input scale: the detected level is the settled
        // output, which equals the input for a unit-gain device once the
        // skipped samples cover the transient.
        let (_, y) = plug_trace(&truth, &[level, 1.5, 2.5], 400);
        let label = PlugRecordingLabel::new("plug", threshold, 200).unwrap();
        let found = identify_device(&y, &label, 3, 3, 1).unwrap();
        assert!(found.instant_off(), "seed {seed}");
        let want = truth.step_response(80, level).unwrap();
        let got = found.step_response(80, level).unwrap();
        let err = got
            .values()
            .iter()
            .zip(want.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 0.02 * level, "seed {seed}: step error {err}");
    }
    assert!(checked >= 10, "only {checked} models exercised");
}

#[test]
fn identify_of_a_decaying_device_keeps_its_tail() {
    let truth = nilm::DeviceModel::first_order("heater", 0.8, 0.2, 1.0, 0.0).unwrap();
    let (_, y) = plug_trace(&truth, &[1.0, 3.0], 80);
    let label = PlugRecordingLabel::new("heater", 0.2, 40).unwrap();
    let found = identify_device(&y, &label, 1, 1, 1).unwrap();
    assert!(!found.instant_off());
    let want = truth.step_response(40, 1.0).unwrap();
    let got = found.step_response(40, 1.0).unwrap();
    for (a, b) in got.values().iter().zip(want.values()) {
        assert!((a - b).abs() <= 0.02);
    }
    let peak = y.values().iter().copied().fold(0.0, f64::max);
    assert!((found.max_output().unwrap() - 1.25 * peak).abs() <= 1e-12);
}

proptest! {
    #[test]
    fn fit_never_worse_than_the_zero_model(seed in 0u64..5000, na in 1usize..4, nb in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        let first = na.max(nb);
        let zero_rms = (y[first..].iter().map(|v| v * v).sum::<f64>() / (y.len() - first) as f64).sqrt();
        let fit = fit_arx(&SignalSeries::from_values(y), &SignalSeries::from_values(u), na, nb, 1).unwrap();
        prop_assert!(fit.residual_rms <= zero_rms + 1e-12);
    }

    #[test]
    fn detected_events_alternate_in_time_order(
        values in prop::collection::vec(prop_oneof![0.0f64..0.5, 1.5f64..4.0], 2..200),
        skip in 0usize..4,
    ) {
        let label = PlugRecordingLabel::new("p", 1.0, skip).unwrap();
        let u = detect_plug_input(&SignalSeries::from_values(values), &label).unwrap();
        let ev = u.events();
        for w in ev.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            prop_assert!((w[0].1 > 0.0) != (w[1].1 > 0.0));
        }
        if let Some(first) = ev.first() {
            prop_assert!(first.1 > 0.0);
        }
    }
}
