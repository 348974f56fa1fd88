//! Read emonTx plug recordings, resample them onto the nominal 12 Hz grid,
//! report gaps and add the plugs into one aggregate.
//!
//! Usage: cargo run --example ingest_emontx [plug.csv ...]
//!
//! Without arguments two synthetic recordings are written to a temporary
//! directory first, one of them with a dropped half second.

use nilm::ingest::{parse_emontx_csv, sum_aligned, to_signal, write_emontx_csv, Channel, EmonRecord, EMONTX_RATE_HZ};

fn synthetic(dir: &std::path::Path) -> nilm::Result<Vec<std::path::PathBuf>> {
    let t0 = 1_700_000_000.0;
    let record = |i: usize, irms: f64| EmonRecord {
        timestamp_utc: t0 + i as f64 / EMONTX_RATE_HZ,
        irms,
        vrms: 120.0,
        pva: 120.0 * irms,
        pw: 118.0 * irms,
        pf: 0.98,
    };
    // a kettle drawing 9 A for two seconds, and a lamp with a dropout
    let kettle: Vec<EmonRecord> = (0..60)
        .map(|i| record(i, if (12..36).contains(&i) { 9.0 } else { 0.0 }))
        .collect();
    let lamp: Vec<EmonRecord> = (0..60)
        .filter(|i| !(20..26).contains(i))
        .map(|i| record(i, 0.5))
        .collect();
    let mut paths = Vec::new();
    for (name, records) in [("kettle.csv", kettle), ("lamp.csv", lamp)] {
        let path = dir.join(name);
        write_emontx_csv(&path, &records)?;
        paths.push(path);
    }
    Ok(paths)
}

fn main() -> nilm::Result<()> {
    let mut paths: Vec<std::path::PathBuf> = std::env::args().skip(1).map(Into::into).collect();
    let tmp = std::env::temp_dir().join("nilm-ingest-example");
    if paths.is_empty() {
        std::fs::create_dir_all(&tmp).map_err(|e| nilm::Error::Io {
            path: tmp.clone(),
            source: e,
        })?;
        paths = synthetic(&tmp)?;
    }

    let mut plugs = Vec::new();
    for path in &paths {
        let records = parse_emontx_csv(path)?;
        let resampled = to_signal(&records, Channel::Irms, EMONTX_RATE_HZ)?;
        println!(
            "{}: {} records -> {} samples at {EMONTX_RATE_HZ} Hz",
            path.display(),
            records.len(),
            resampled.signal.len()
        );
        for gap in &resampled.gaps {
            println!(
                "  gap at sample {}: {:.2} s, {} samples held{}",
                gap.start,
                gap.seconds,
                gap.held,
                if gap.long { " (long)" } else { "" }
            );
        }
        plugs.push(resampled.signal);
    }
    let total = sum_aligned(&plugs)?;
    let peak = total.values().iter().copied().fold(f64::MIN, f64::max);
    println!("aggregate: {} samples, peak {peak:.2} A", total.len());
    Ok(())
}
