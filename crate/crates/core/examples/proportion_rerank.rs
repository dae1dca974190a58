//! Soft adjustment versus hard head/tail slot quotas for a single session.
//!
//! cargo run --release --example proportion_rerank

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tailnet::baselines::{head_slots, proportion_rerank};
use tailnet::eval::topk;
use tailnet::ingest::ItemCatalog;
use tailnet::model::{item_scores, predict, ModelParams};

fn describe(list: &[usize], catalog: &ItemCatalog) -> String {
    list.iter()
        .map(|&i| format!("{}{}", catalog.id_of(i), if catalog.is_tail(i) { "*" } else { "" }))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> tailnet::Result<()> {
    let n = 60;
    let catalog = ItemCatalog::from_counts((0..n).map(|k| (format!("m{k:02}"), (n - k) as u64 * 3)), 0.2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = ModelParams::init(16, n, &mut rng)?;
    let k = 10;

    // two head clicks and three tail clicks
    let session = [2, 40, 51, 7, 33];
    let heads = session.iter().filter(|&&i| !catalog.is_tail(i)).count();
    println!("session: {}", describe(&session, &catalog));
    println!("head share p = {heads}/{} -> {} head slots of {k}", session.len(), head_slots(k, heads, session.len()));

    let raw = item_scores(&params, &session)?;
    println!("plain scores:    {}", describe(&topk(&raw, k, &[]), &catalog));
    println!("hard quota:      {}", describe(&proportion_rerank(&raw, &session, &catalog, k)?, &catalog));

    let soft = predict(&params, &catalog, &session, true)?;
    println!("soft adjustment: {}", describe(&topk(&soft.adjusted, k, &[]), &catalog));
    println!(
        "factors: r_head {:.4}, r_tail {:.4}   (* marks tail items)",
        soft.factors.r_head, soft.factors.r_tail
    );
    Ok(())
}
