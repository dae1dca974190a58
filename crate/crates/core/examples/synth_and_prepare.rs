//! Generates a synthetic click log, preprocesses it and round-trips the
//! dataset file.
//!
//! cargo run --release --example synth_and_prepare

use tailnet::ingest::{
    gen_synthetic, load_dataset, parse_events, preprocess, save_dataset, write_events, PreprocessConfig, SynthConfig,
};

fn main() -> tailnet::Result<()> {
    let synth = SynthConfig {
        num_sessions: 2_000,
        num_items: 300,
        ..Default::default()
    };
    let events = gen_synthetic(&synth)?;

    // through CSV and back, as the command-line tool would do it
    let mut csv = Vec::new();
    write_events(&mut csv, &events)?;
    let parsed = parse_events(csv.as_slice())?;
    assert_eq!(parsed.events, events);

    let (dataset, stats) = preprocess(&parsed.events, &PreprocessConfig::default())?;
    let cat = &dataset.catalog;
    println!("{} events in {} sessions", stats.raw_events, stats.raw_sessions);
    println!("{} sessions kept after {} filter rounds", stats.kept_sessions, stats.filter_rounds);
    println!("{} items: {} head, {} tail", cat.len(), cat.num_head(), cat.num_tail());
    println!(
        "pairs: {} train, {} valid, {} test",
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len()
    );

    let top: Vec<String> = (0..5)
        .map(|i| format!("{} ({} clicks)", cat.id_of(i), cat.click_count()[i]))
        .collect();
    println!("first catalog entries: {}", top.join(", "));

    let dir = std::env::temp_dir().join("tailnet-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("synthetic.tlds");
    save_dataset(&dataset, &path)?;
    let back = load_dataset(&path)?;
    assert_eq!(back, dataset);
    println!("dataset written to {}", path.display());
    Ok(())
}
