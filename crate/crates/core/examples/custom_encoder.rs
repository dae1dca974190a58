//! The preference mechanism only needs d-wide latent states, so it can sit
//! on top of any session encoder. Here the GRU is replaced by a running mean
//! of item embeddings, and gradients still flow through both parts.
//!
//! cargo run --release --example custom_encoder

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tailnet::ingest::ItemCatalog;
use tailnet::model::{pool_and_score, preference_factors, rectify, tail_encode, ModelParams, Slot};
use tailnet::numkernel::{fd_check, Shape, Tape, Tensor, Var};

/// State t is the mean of the first t+1 item embeddings.
fn mean_encoder(tape: &mut Tape<'_>, session: &[usize]) -> tailnet::Result<Vec<Var>> {
    let table = tape.param(Slot::Embedding.id());
    let mut states = Vec::with_capacity(session.len());
    let mut sum: Option<Var> = None;
    for (t, &item) in session.iter().enumerate() {
        let e = tape.row(table, item)?;
        let s = match sum {
            None => e,
            Some(acc) => tape.add(acc, e)?,
        };
        sum = Some(s);
        let inv = tape.constant(Tensor::filled(Shape::Vector(1), 1.0 / (t + 1) as f64));
        states.push(tape.scale(s, inv)?);
    }
    Ok(states)
}

fn loss(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    catalog: &ItemCatalog,
    session: &[usize],
    target: usize,
) -> tailnet::Result<(Var, Var)> {
    let states = mean_encoder(tape, session)?;
    let (_, scores) = pool_and_score(tape, params, &states)?;
    let encoded = tail_encode(tape, &states, catalog, session)?;
    let pm = preference_factors(tape, params.preference_slots(), &encoded)?;
    let (_, adjusted) = rectify(tape, scores, pm.r_head, pm.r_tail, catalog)?;
    let probs = tape.softmax(adjusted)?;
    Ok((tape.bce_one_hot(probs, target)?, pm.r_head))
}

fn main() -> tailnet::Result<()> {
    let n = 25;
    let catalog = ItemCatalog::from_counts((0..n).map(|k| (format!("t{k}"), (n - k) as u64)), 0.2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ModelParams::init(5, n, &mut rng)?;
    let session = [1, 20, 22, 4];

    let mut tape = Tape::new(params.set());
    let (l, r_head) = loss(&mut tape, &params, &catalog, &session, 7)?;
    println!("loss {:.5}, r_head {:.4}", tape.scalar(l), tape.scalar(r_head));

    let report = fd_check(|t| Ok(loss(t, &params, &catalog, &session, 7)?.0), params.set(), 1e-5, 1e-4)?;
    println!(
        "gradient check through the custom encoder: max relative error {:.2e} ({})",
        report.max_rel_error,
        if report.passed() { "ok" } else { "FAILED" }
    );
    // the GRU weights are untouched by this encoder
    let untouched = tape_grad_is_zero(&params, &catalog, &session)?;
    println!("GRU gate gradients all zero: {untouched}");
    Ok(())
}

fn tape_grad_is_zero(params: &ModelParams, catalog: &ItemCatalog, session: &[usize]) -> tailnet::Result<bool> {
    let mut tape = Tape::new(params.set());
    let (l, _) = loss(&mut tape, params, catalog, session, 7)?;
    let grads = tape.backward(l)?;
    Ok([Slot::GateReset, Slot::GateUpdate, Slot::GateCandidate]
        .iter()
        .all(|s| grads.get(s.id()).data().iter().all(|&g| g == 0.0)))
}
