//! Compares the tape's reverse-mode gradients with central differences on a
//! tiny randomly initialised model.
//!
//! cargo run --release --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tailnet::ingest::ItemCatalog;
use tailnet::model::{forward, ModelParams, Slot};
use tailnet::numkernel::fd_check;

fn main() -> tailnet::Result<()> {
    let n = 30;
    let catalog = ItemCatalog::from_counts((0..n).map(|k| (format!("item{k}"), (n - k) as u64)), 0.2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = ModelParams::init(6, n, &mut rng)?;
    let session = [3, 17, 3, 25];
    let target = 9;

    for use_pm in [true, false] {
        let report = fd_check(
            |tape| Ok(forward(tape, &params, &catalog, &session, Some(target), use_pm)?.loss.expect("target given")),
            params.set(),
            1e-5,
            1e-4,
        )?;
        let worst = report
            .worst
            .map(|(id, k)| format!("{}[{k}]", Slot::ALL[id.0].name()))
            .unwrap_or_else(|| "-".into());
        println!(
            "preference mechanism {}: {} entries, max relative error {:.2e} at {worst} ({})",
            if use_pm { "on " } else { "off" },
            report.entries_checked,
            report.max_rel_error,
            if report.passed() { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
