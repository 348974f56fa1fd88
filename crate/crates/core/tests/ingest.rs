use nilm::ingest::{
    emontx_to_string, parse_emontx_csv, parse_emontx_str, parse_signal_str, read_signal_csv, signal_to_string,
    sum_aligned, to_signal, write_emontx_csv, write_signal_csv, Channel, EmonRecord, EMONTX_RATE_HZ,
};
use nilm::model::random_stable_model;
use nilm::{Error, PiecewiseInput, Scenario, SignalSeries};
use proptest::prelude::*;

fn record_strategy() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (
        0.0f64..50.0,
        90.0f64..250.0,
        0.0f64..9000.0,
        -9000.0f64..9000.0,
        -1.0f64..=1.0,
    )
}

fn records_strategy() -> impl Strategy<Value = Vec<EmonRecord>> {
    (
        1.6e9f64..1.7e9,
        prop::collection::vec((0.01f64..3.0, record_strategy()), 1..60),
    )
        .prop_map(|(t0, rows)| {
            let mut t = t0;
            rows.into_iter()
                .map(|(dt, (irms, vrms, pva, pw, pf))| {
                    t += dt;
                    EmonRecord {
                        timestamp_utc: t,
                        irms,
                        vrms,
                        pva,
                        pw,
                        pf,
                    }
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn emontx_parse_serialize_parse_is_lossless(records in records_strategy()) {
        let text = emontx_to_string(&records);
        let parsed = parse_emontx_str(&text, "mem.csv").unwrap();
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(emontx_to_string(&parsed), text);
    }

    #[test]
    fn signal_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..100), start in 0usize..1000) {
        let s = SignalSeries::new(values, 0.5, start).unwrap();
        let back = parse_signal_str(&signal_to_string(&s), "mem.csv", 0.5).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn resampled_length_follows_the_span(records in records_strategy(), rate in 0.5f64..20.0) {
        prop_assume!(records.len() >= 2);
        let r = to_signal(&records, Channel::Irms, rate).unwrap();
        let span = records.last().unwrap().timestamp_utc - records[0].timestamp_utc;
        let want = (span * rate - 1e-3).ceil().max(0.0) as usize + 1;
        prop_assert_eq!(r.signal.len(), want);
        // every grid value is the value of the latest record at or before it
        for (j, &v) in r.signal.values().iter().enumerate() {
            let t = records[0].timestamp_utc + j as f64 / rate;
            let held = records.iter().rev().find(|rec| rec.timestamp_utc <= t + 1e-3 / rate).unwrap();
            prop_assert_eq!(v, held.irms);
        }
    }

    #[test]
    fn sum_is_order_independent(
        parts in prop::collection::vec((0usize..5, prop::collection::vec(-10.0f64..10.0, 20..30)), 2..6),
        perm_seed in any::<u64>(),
    ) {
        let signals: Vec<SignalSeries> = parts
            .into_iter()
            .map(|(start, v)| SignalSeries::new(v, 1.0, start).unwrap())
            .collect();
        let mut shuffled = signals.clone();
        // deterministic Fisher-Yates from the drawn seed
        let mut state = perm_seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(sum_aligned(&signals).unwrap(), sum_aligned(&shuffled).unwrap());
    }

    #[test]
    fn sum_regrouping_agrees_to_rounding(
        a in prop::collection::vec(-10.0f64..10.0, 25),
        b in prop::collection::vec(-10.0f64..10.0, 25),
        c in prop::collection::vec(-10.0f64..10.0, 25),
    ) {
        let [a, b, c] = [a, b, c].map(SignalSeries::from_values);
        let left = sum_aligned(&[sum_aligned(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let right = sum_aligned(&[a.clone(), sum_aligned(&[b.clone(), c.clone()]).unwrap()]).unwrap();
        let flat = sum_aligned(&[a, b, c]).unwrap();
        for ((l, r), f) in left.values().iter().zip(right.values()).zip(flat.values()) {
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + f.abs()));
            prop_assert!((l - f).abs() <= 1e-12 * (1.0 + f.abs()));
        }
    }
}

#[test]
fn half_second_gap_at_twelve_hertz_holds_six_samples() {
    let t0 = 1_700_000_000.0;
    let mut records: Vec<EmonRecord> = (0..5)
        .map(|i| EmonRecord {
            timestamp_utc: t0 + i as f64 / 12.0,
            irms: i as f64,
            vrms: 120.0,
            pva: 0.0,
            pw: 0.0,
            pf: 1.0,
        })
        .collect();
    let last = records[4].timestamp_utc;
    records.push(EmonRecord {
        timestamp_utc: last + 0.5,
        irms: 9.0,
        ..records[4]
    });
    let r = to_signal(&records, Channel::Irms, EMONTX_RATE_HZ).unwrap();
    assert_eq!(r.gaps.len(), 1);
    let gap = r.gaps[0];
    assert_eq!(gap.held, 6);
    assert!(!gap.long);
    assert_eq!(&r.signal.values()[4..10], &[4.0; 6]);
    assert_eq!(r.signal.values()[10], 9.0);
}

#[test]
fn plug_sum_matches_jointly_measured_aggregate() {
    // Three plugs recorded separately, and the same devices measured together.
    let models: Vec<_> = (0..3).map(|i| random_stable_model(3, 70 + i, true).unwrap()).collect();
    let inputs = vec![
        PiecewiseInput::pulse(10, 60, 1.0).unwrap(),
        PiecewiseInput::pulse(30, 90, 2.0).unwrap(),
        PiecewiseInput::pulse(50, 70, 0.5).unwrap(),
    ];
    let joint = Scenario::new(models.clone(), inputs.clone(), 0.01, 4, 120).unwrap();
    let measured = joint.render().unwrap().aggregate;
    let plugs: Vec<SignalSeries> = models
        .iter()
        .zip(&inputs)
        .enumerate()
        .map(|(i, (m, u))| {
            Scenario::new(vec![m.clone()], vec![u.clone()], 0.0, i as u64, 120)
                .unwrap()
                .render()
                .unwrap()
                .aggregate
        })
        .collect();
    let summed = sum_aligned(&plugs).unwrap();
    let worst = summed
        .values()
        .iter()
        .zip(measured.values())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    // five standard deviations of the sensor noise
    assert!(worst <= 0.05, "{worst}");
}

#[test]
fn file_round_trips_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        EmonRecord {
            timestamp_utc: 1.5e9,
            irms: 1.25,
            vrms: 121.0,
            pva: 151.25,
            pw: 150.0,
            pf: 0.99,
        },
        EmonRecord {
            timestamp_utc: 1.5e9 + 0.25,
            irms: 0.0,
            vrms: 120.5,
            pva: 0.0,
            pw: 0.0,
            pf: 0.0,
        },
    ];
    let path = dir.path().join("plug.csv");
    write_emontx_csv(&path, &records).unwrap();
    assert_eq!(parse_emontx_csv(&path).unwrap(), records);

    let s = SignalSeries::new(vec![1.0, 2.5, -3.0], 1.0, 7).unwrap();
    let spath = dir.path().join("s.csv");
    write_signal_csv(&spath, &s).unwrap();
    assert_eq!(read_signal_csv(&spath, 1.0).unwrap(), s);

    let missing = read_signal_csv(dir.path().join("nope.csv"), 1.0).unwrap_err();
    assert!(missing.is_io());
}

#[test]
fn malformed_rows_report_their_line() {
    let text = "timestamp_utc,irms,vrms,pva,pw,pf\n1,0.1,120,12,11,0.9\n2,abc,120,12,11,0.9\n";
    match parse_emontx_str(text, "bad.csv") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}
