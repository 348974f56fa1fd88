use nalgebra::{DMatrix, DVector};
use nilm::model::{random_stable_model, spectral_radius, DeviceModel};
use nilm::SignalSeries;
use proptest::prelude::*;

fn series(v: Vec<f64>) -> SignalSeries {
    SignalSeries::from_values(v)
}

/// Independent simulator: plain matrix recursion without any reset.
fn simulate_reference(m: &DeviceModel, u: &[f64]) -> Vec<f64> {
    let mut x = DVector::zeros(m.order());
    u.iter()
        .map(|&uk| {
            let y = m.c().dot(&x) + m.d() * uk;
            x = m.a() * &x + m.b() * uk;
            y
        })
        .collect()
}

fn block_diagonal(models: &[DeviceModel]) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n: usize = models.iter().map(|m| m.order()).sum();
    let d = models.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, d);
    let mut c = DVector::zeros(n);
    let mut off = 0;
    for (i, m) in models.iter().enumerate() {
        let k = m.order();
        a.view_mut((off, off), (k, k)).copy_from(m.a());
        b.view_mut((off, i), (k, 1)).copy_from(m.b());
        c.rows_mut(off, k).copy_from(m.c());
        off += k;
    }
    (a, b, c)
}

fn input_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulation_matches_matrix_recursion(seed in 0u64..10_000, order in 1usize..5, u in input_strategy(60)) {
        let m = random_stable_model(order, seed, false).unwrap();
        let got = m.simulate_zero_state(&series(u.clone())).unwrap();
        for (g, w) in got.values().iter().zip(simulate_reference(&m, &u)) {
            prop_assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn linearity_in_input_scale(seed in 0u64..10_000, alpha in -5.0f64..5.0, u in input_strategy(80)) {
        let m = random_stable_model(3, seed, false).unwrap();
        let y = m.simulate_zero_state(&series(u.clone())).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| alpha * v).collect();
        let ys = m.simulate_zero_state(&series(scaled)).unwrap();
        let scale = y.values().iter().fold(1e-12_f64, |acc, v| acc.max(v.abs()));
        for (a, b) in ys.values().iter().zip(y.values()) {
            prop_assert!((a - alpha * b).abs() <= 1e-9 * scale * alpha.abs().max(1.0));
        }
    }

    #[test]
    fn superposition_matches_block_diagonal_composite(
        seed in 0u64..10_000,
        inputs in prop::collection::vec(input_strategy(70), 1..5),
    ) {
        let models: Vec<DeviceModel> = (0..inputs.len())
            .map(|i| random_stable_model(1 + i % 3, seed + i as u64, false).unwrap())
            .collect();
        let sum: Vec<f64> = (0..70)
            .map(|k| {
                models
                    .iter()
                    .zip(&inputs)
                    .map(|(m, u)| m.simulate_zero_state(&series(u.clone())).unwrap().values()[k])
                    .sum()
            })
            .collect();
        let (a, b, c) = block_diagonal(&models);
        let mut x = DVector::zeros(a.nrows());
        for k in 0..70 {
            let uk = DVector::from_iterator(inputs.len(), inputs.iter().map(|u| u[k]));
            let y = c.dot(&x);
            prop_assert!((y - sum[k]).abs() <= 1e-9 * (1.0 + sum[k].abs()));
            x = &a * &x + &b * uk;
        }
    }

    #[test]
    fn instant_off_output_vanishes_whenever_input_is_zero(seed in 0u64..10_000, u in input_strategy(100)) {
        let m = random_stable_model(3, seed, true).unwrap();
        let m = DeviceModel::new("feedthrough", m.a().clone(), m.b().clone(), m.c().clone(), 0.3)
            .unwrap()
            .with_instant_off(true);
        let y = m.simulate_zero_state(&series(u.clone())).unwrap();
        for (k, (&uk, &yk)) in u.iter().zip(y.values()).enumerate() {
            if uk == 0.0 {
                prop_assert_eq!(yk, 0.0, "k = {}", k);
            }
        }
    }

    #[test]
    fn normalize_is_idempotent_and_keeps_a_and_c(seed in 0u64..10_000, order in 1usize..6) {
        let raw = random_stable_model(order, seed, false).unwrap();
        let raw = DeviceModel::new("raw", raw.a().clone(), raw.b() * 3.7, raw.c().clone(), 0.0).unwrap();
        let once = raw.normalize_dc().unwrap();
        let twice = once.normalize_dc().unwrap();
        prop_assert_eq!(once.a(), raw.a());
        prop_assert_eq!(once.c(), raw.c());
        prop_assert_eq!(twice.a(), once.a());
        prop_assert_eq!(twice.c(), once.c());
        for (x, y) in twice.b().iter().zip(once.b().iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
        prop_assert!((twice.dc_gain().unwrap() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn random_models_are_stable_with_unit_gain() {
    for seed in 0..100 {
        let m = random_stable_model(3, seed, true).unwrap();
        let rho = spectral_radius(m.a());
        assert!(rho < 1.0 - 1e-9, "seed {seed}: radius {rho}");
        assert!(m.is_stable());
        assert!((m.dc_gain().unwrap() - 1.0).abs() <= 1e-9, "seed {seed}");
        assert_eq!(m.d(), 0.0);
    }
}

/// The unit-gain step response error `e_k = y_k - L` is a sum of modes of A,
/// so after normalising by `(ρ + 1e-6)^k` it cannot grow: the late half of the
/// representable range stays below twice the early half's peak.
#[test]
fn step_response_converges_at_the_spectral_rate() {
    for seed in 0..50 {
        let m = random_stable_model(3, seed, false).unwrap();
        let rate = spectral_radius(m.a()) + 1e-6;
        let level = 1.7;
        // stop while the error is still far above rounding noise
        let horizon = ((1e-9_f64).ln() / rate.ln()).floor() as usize;
        let y = m.step_response(horizon, level).unwrap();
        let norm: Vec<f64> = y
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - level).abs() / rate.powi(k as i32))
            .collect();
        let half = horizon / 2;
        let early = norm[..half].iter().fold(0.0_f64, |a, &b| a.max(b));
        let late = norm[half..].iter().fold(0.0_f64, |a, &b| a.max(b));
        assert!(late <= 2.0 * early, "seed {seed}: early {early}, late {late}");
        let last = y.values()[horizon - 1];
        assert!((last - level).abs() <= 2.0 * early * rate.powi(horizon as i32 - 1) + 1e-12);
    }
}

#[test]
fn library_file_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.json");
    let lib: Vec<DeviceModel> = (0..4)
        .map(|i| {
            random_stable_model(1 + i, 40 + i as u64, i % 2 == 0)
                .unwrap()
                .with_name(format!("m{i}"))
                .with_max_output(Some(2.5 + i as f64))
                .unwrap()
        })
        .collect();
    nilm::model::write_library(&path, &lib).unwrap();
    assert_eq!(nilm::model::read_library(&path).unwrap(), lib);
}
