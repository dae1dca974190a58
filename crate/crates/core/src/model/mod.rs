//! The TailNet network: GRU session encoder, tail-type encoding, preference
//! mechanism, attention pooling, soft adjustment and loss.

mod forward;
mod params;

pub use forward::{
    attention_pool, encode_session, forward, gru_step, item_scores, loss, pool_and_score, predict, preference_factors,
    rectify, soft_adjust, tail_encode, ForwardTrace, GruStep, PoolTrace, Prediction, PreferenceTrace,
    RectificationFactors,
};
pub use params::{AttentionSlots, ModelParams, PreferenceSlots, Slot};

use crate::error::Result;
use crate::eval::Scorer;
use crate::ingest::ItemCatalog;

/// A trained model as a ranking scorer. Ranks by `ĉ ⊙ R` (or `ĉ` without
/// the preference mechanism), which orders items exactly like `ŷ`.
#[derive(Clone, Copy)]
pub struct TailNet<'a> {
    pub params: &'a ModelParams,
    pub catalog: &'a ItemCatalog,
    pub use_pm: bool,
}

impl Scorer for TailNet<'_> {
    fn score(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        if self.use_pm {
            Ok(predict(self.params, self.catalog, prefix, true)?.adjusted)
        } else {
            item_scores(self.params, prefix)
        }
    }
}
