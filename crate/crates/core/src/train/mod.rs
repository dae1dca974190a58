//! Joint end-to-end training by backpropagation through time, with Adam,
//! validation-based model selection and checkpointing.

mod checkpoint;
mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use optim::{optimizer_step, OptimizerState, ADAM_EPS, BETA1, BETA2};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::ingest::{Dataset, ItemCatalog, Pair};
use crate::model::{forward, ModelParams, TailNet};
use crate::numkernel::{Gradients, Tape};

/// Cut-off used for model selection.
pub const SELECTION_K: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding and hidden width.
    pub d: usize,
    pub learning_rate: f64,
    /// Training pairs per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Decoupled weight-decay coefficient.
    pub l2: f64,
    pub seed: u64,
    /// Train and rank with the preference mechanism.
    pub use_pm: bool,
    /// Epochs without a validation improvement before stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            l2: 1e-5,
            seed: 42,
            use_pm: true,
            early_stop_patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be a positive number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be a non-negative number");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the initialisation, before any update.
    pub epoch: usize,
    /// Mean per-pair loss over the epoch.
    pub train_loss: f64,
    /// Validation MRR@20 in percent, NaN without validation pairs.
    pub valid_mrr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Loss and parameter gradients of a single training pair.
pub fn pair_gradient(
    params: &ModelParams,
    catalog: &ItemCatalog,
    pair: &Pair,
    use_pm: bool,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(params.set());
    let trace = forward(&mut tape, params, catalog, &pair.prefix, Some(pair.target), use_pm)?;
    let loss = trace.loss.expect("target given");
    let value = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    Ok((value, grads))
}

/// Pairs whose gradients share one accumulation buffer. Fixed, so the
/// floating-point summation order never depends on the thread count.
pub const GRADIENT_GROUP: usize = 8;

/// Reusable gradient buffers for [`batch_gradient_into`].
#[derive(Clone, Debug)]
pub struct BatchWorkspace {
    groups: Vec<Gradients>,
    pub total: Gradients,
}

impl BatchWorkspace {
    pub fn new(params: &ModelParams) -> Self {
        BatchWorkspace {
            groups: Vec::new(),
            total: Gradients::zeros_like(params.set()),
        }
    }
}

fn accumulate_group(
    params: &ModelParams,
    catalog: &ItemCatalog,
    pairs: &[&Pair],
    use_pm: bool,
    buf: &mut Gradients,
) -> Result<f64> {
    buf.zero();
    let mut loss = 0.0;
    for p in pairs {
        let mut tape = Tape::new(params.set());
        let trace = forward(&mut tape, params, catalog, &p.prefix, Some(p.target), use_pm)?;
        let l = trace.loss.expect("target given");
        loss += tape.scalar(l);
        tape.backward_into(l, buf)?;
    }
    Ok(loss)
}

/// Summed loss and gradient over `pairs`, written to `ws.total`.
///
/// Consecutive runs of [`GRADIENT_GROUP`] pairs are accumulated into their
/// own buffer (possibly in parallel), and the group sums are then added in
/// order.
pub fn batch_gradient_into(
    params: &ModelParams,
    catalog: &ItemCatalog,
    pairs: &[&Pair],
    use_pm: bool,
    ws: &mut BatchWorkspace,
) -> Result<f64> {
    let n_groups = pairs.len().div_ceil(GRADIENT_GROUP);
    while ws.groups.len() < n_groups {
        ws.groups.push(Gradients::zeros_like(params.set()));
    }
    let losses: Vec<f64> = ws.groups[..n_groups]
        .par_iter_mut()
        .zip(pairs.par_chunks(GRADIENT_GROUP))
        .map(|(buf, chunk)| accumulate_group(params, catalog, chunk, use_pm, buf))
        .collect::<Result<_>>()?;
    ws.total.zero();
    for g in &ws.groups[..n_groups] {
        ws.total.add_assign(g)?;
    }
    Ok(losses.iter().sum())
}

/// Allocating convenience wrapper around [`batch_gradient_into`].
pub fn batch_gradient(
    params: &ModelParams,
    catalog: &ItemCatalog,
    pairs: &[&Pair],
    use_pm: bool,
) -> Result<(f64, Gradients)> {
    let mut ws = BatchWorkspace::new(params);
    let loss = batch_gradient_into(params, catalog, pairs, use_pm, &mut ws)?;
    Ok((loss, ws.total))
}

/// Mean loss over `pairs` without updating anything.
pub fn mean_loss(params: &ModelParams, catalog: &ItemCatalog, pairs: &[Pair], use_pm: bool) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Vec<f64> = pairs
        .par_iter()
        .map(|p| -> Result<f64> {
            let mut tape = Tape::new(params.set());
            let trace = forward(&mut tape, params, catalog, &p.prefix, Some(p.target), use_pm)?;
            Ok(tape.scalar(trace.loss.expect("target given")))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / pairs.len() as f64)
}

fn valid_mrr(params: &ModelParams, dataset: &Dataset, use_pm: bool) -> Result<f64> {
    if dataset.valid.is_empty() {
        return Ok(f64::NAN);
    }
    let scorer = TailNet {
        params,
        catalog: &dataset.catalog,
        use_pm,
    };
    let report = evaluate("valid", &scorer, &dataset.valid, &dataset.catalog, &[SELECTION_K])?;
    Ok(report.rows[0].mrr)
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch (including epoch 0).
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    dataset.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    if dataset.valid.is_empty() {
        warn!("no validation pairs; keeping the parameters of the last epoch");
    }
    let catalog = &dataset.catalog;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(config.d, catalog.len(), &mut rng)?;
    let mut opt = OptimizerState::new(&params);
    let mut ws = BatchWorkspace::new(&params);

    let first = EpochStats {
        epoch: 0,
        train_loss: mean_loss(&params, catalog, &dataset.train, config.use_pm)?,
        valid_mrr: valid_mrr(&params, dataset, config.use_pm)?,
    };
    info!("epoch 0: loss {:.6}, valid MRR@20 {:.4}", first.train_loss, first.valid_mrr);
    on_epoch(&first);
    let mut best = (params.clone(), first.valid_mrr, 0usize);
    let mut history = vec![first];
    let mut stale = 0;

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let pairs: Vec<&Pair> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let loss = batch_gradient_into(&params, catalog, &pairs, config.use_pm, &mut ws)?;
            if !loss.is_finite() || !ws.total.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged in epoch {epoch}, batch {b} (loss {loss})"
                )));
            }
            loss_sum += loss;
            optimizer_step(&mut params, &ws.total, &mut opt, config.learning_rate, config.l2)?;
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / dataset.train.len() as f64,
            valid_mrr: valid_mrr(&params, dataset, config.use_pm)?,
        };
        info!(
            "epoch {epoch}: loss {:.6}, valid MRR@20 {:.4}",
            stats.train_loss, stats.valid_mrr
        );
        on_epoch(&stats);
        let improved = stats.valid_mrr.is_nan() || stats.valid_mrr > best.1;
        history.push(stats);
        if improved {
            best = (params.clone(), history[epoch].valid_mrr, epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                info!("stopping after {epoch} epochs; best epoch {}", best.2);
                break;
            }
        }
    }

    let (params, best_valid_mrr, epoch) = best;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            catalog: catalog.clone(),
            params,
            best_valid_mrr,
            epoch,
        },
        history,
    })
}
