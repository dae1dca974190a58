//! Trains TailNet on a synthetic Zipf dataset and compares it with the
//! variant that ranks without the preference mechanism.
//!
//! cargo run --release --example train_synthetic -- [epochs] [d]

use std::time::Instant;

use tailnet::eval::{evaluate, DEFAULT_KS};
use tailnet::ingest::{gen_synthetic, preprocess, PreprocessConfig, SynthConfig};
use tailnet::model::TailNet;
use tailnet::train::{train_with, TrainConfig};

fn main() -> tailnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(Ok(10), |s| s.parse()).expect("epochs");
    let d = args.next().map_or(Ok(100), |s| s.parse()).expect("d");

    let events = gen_synthetic(&SynthConfig::default())?;
    let (dataset, stats) = preprocess(&events, &PreprocessConfig::default())?;
    println!(
        "{} items ({} tail), {} train / {} valid / {} test pairs",
        dataset.catalog.len(),
        dataset.catalog.num_tail(),
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len()
    );
    println!("kept {} of {} sessions", stats.kept_sessions, stats.raw_sessions);

    for use_pm in [true, false] {
        let config = TrainConfig {
            d,
            epochs,
            use_pm,
            ..Default::default()
        };
        let start = Instant::now();
        let out = train_with(&dataset, &config, |s| {
            println!(
                "  epoch {:>2}  loss {:.5}  valid MRR@20 {:.3}  ({:.0?})",
                s.epoch,
                s.train_loss,
                s.valid_mrr,
                start.elapsed()
            )
        })?;
        let cp = &out.checkpoint;
        let scorer = TailNet {
            params: &cp.params,
            catalog: &cp.catalog,
            use_pm,
        };
        let name = if use_pm { "tailnet" } else { "tailnet-no-pm" };
        let report = evaluate(name, &scorer, &dataset.test, &cp.catalog, &DEFAULT_KS)?;
        println!("{}", report.to_table());
    }
    Ok(())
}
