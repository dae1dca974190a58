//! Evaluates the frequency and neighbourhood baselines next to a briefly
//! trained TailNet on synthetic data.
//!
//! cargo run --release --example compare_baselines

use tailnet::baselines::{ItemKnn, Pop, SPop, TailNetProportion};
use tailnet::eval::{evaluate, MetricsReport, Recommender};
use tailnet::ingest::{gen_synthetic, preprocess, Dataset, PreprocessConfig, SynthConfig};
use tailnet::model::TailNet;
use tailnet::train::{train, TrainConfig};

fn run<R: Recommender>(name: &str, r: &R, ds: &Dataset) -> tailnet::Result<MetricsReport> {
    evaluate(name, r, &ds.test, &ds.catalog, &[10, 20])
}

fn main() -> tailnet::Result<()> {
    let events = gen_synthetic(&SynthConfig {
        num_sessions: 2_000,
        num_items: 200,
        ..Default::default()
    })?;
    let (ds, _) = preprocess(&events, &PreprocessConfig::default())?;
    let cat = &ds.catalog;

    let sessions = ds.train_sessions();
    let knn = ItemKnn::build(cat.len(), sessions.iter().map(|s| s.as_slice()))?;
    let config = TrainConfig {
        d: 32,
        epochs: 3,
        ..Default::default()
    };
    let model = train(&ds, &config)?.checkpoint;

    let reports = [
        run("pop", &Pop::new(cat), &ds)?,
        run("spop", &SPop::new(cat), &ds)?,
        run("itemknn", &knn, &ds)?,
        run(
            "tailnet",
            &TailNet {
                params: &model.params,
                catalog: cat,
                use_pm: true,
            },
            &ds,
        )?,
        run(
            "tailnet-proportion",
            &TailNetProportion {
                params: &model.params,
                catalog: cat,
            },
            &ds,
        )?,
    ];
    println!("{:<20} {:>9} {:>9} {:>9} {:>14} {:>7}", "method", "Recall@20", "MRR@20", "Cov@20", "TailCov@20", "Tail@20");
    for r in &reports {
        let m = r.at(20).expect("K=20 requested");
        println!(
            "{:<20} {:>9.2} {:>9.2} {:>9.2} {:>14.2} {:>7.2}",
            r.method, m.recall, m.mrr, m.coverage, m.tail_coverage, m.tail
        );
    }

    let mut csv = String::from("method,metric,K,value\n");
    for r in &reports {
        r.write_csv_rows(&mut csv);
    }
    println!("\n{} CSV rows", csv.lines().count() - 1);
    Ok(())
}
