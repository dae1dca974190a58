//! Trains a small model, saves the checkpoint, reloads it and prints
//! recommendations for a session given by item ids.
//!
//! cargo run --release --example recommend -- [item ids...]

use tailnet::eval::topk;
use tailnet::ingest::{gen_synthetic, preprocess, PreprocessConfig, SynthConfig};
use tailnet::model::predict;
use tailnet::train::{load_checkpoint, save_checkpoint, train, TrainConfig};
use tailnet::Error;

fn main() -> tailnet::Result<()> {
    let events = gen_synthetic(&SynthConfig {
        num_sessions: 1_500,
        num_items: 150,
        ..Default::default()
    })?;
    let (ds, _) = preprocess(&events, &PreprocessConfig::default())?;
    let config = TrainConfig {
        d: 24,
        epochs: 3,
        ..Default::default()
    };
    let outcome = train(&ds, &config)?;
    let path = std::env::temp_dir().join("tailnet-example.tlnt");
    save_checkpoint(&outcome.checkpoint, &path)?;
    let cp = load_checkpoint(&path)?;
    println!("checkpoint from epoch {} (valid MRR@20 {:.2})", cp.epoch, cp.best_valid_mrr);

    let mut ids: Vec<String> = std::env::args().skip(1).collect();
    if ids.is_empty() {
        // a head item followed by a tail item
        let tail = (0..cp.catalog.len()).find(|&i| cp.catalog.is_tail(i)).expect("tail items exist");
        ids = vec![cp.catalog.id_of(0).to_string(), cp.catalog.id_of(tail).to_string()];
    }
    let session = ids
        .iter()
        .map(|id| cp.catalog.index_of(id).ok_or_else(|| Error::Usage(format!("unknown item id {id:?}"))))
        .collect::<tailnet::Result<Vec<_>>>()?;

    let pred = predict(&cp.params, &cp.catalog, &session, cp.config.use_pm)?;
    println!("session: {}", ids.join(", "));
    for (rank, &i) in topk(&pred.adjusted, 10, &[]).iter().enumerate() {
        let class = if cp.catalog.is_tail(i) { "TAIL" } else { "HEAD" };
        println!("{:>3}  {:<8} {:.5}  {class}", rank + 1, cp.catalog.id_of(i), pred.probs[i]);
    }
    println!("r_head {:.4}  r_tail {:.4}", pred.factors.r_head, pred.factors.r_tail);
    Ok(())
}
