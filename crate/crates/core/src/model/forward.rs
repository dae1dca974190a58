use crate::error::{dim_err, Error, Result};
use crate::ingest::ItemCatalog;
use crate::numkernel::{Shape, Tape, Tensor, Var};

use super::params::{AttentionSlots, ModelParams, PreferenceSlots, Slot};

/// Tape handles for one GRU step.
#[derive(Clone, Copy, Debug)]
pub struct GruStep {
    pub reset: Var,
    pub update: Var,
    pub candidate: Var,
    pub state: Var,
}

/// Attention pooling over a run of latent states.
#[derive(Clone, Debug)]
pub struct PoolTrace {
    /// One length-1 node per state.
    pub alphas: Vec<Var>,
    pub local: Var,
    pub global: Var,
}

#[derive(Clone, Debug)]
pub struct PreferenceTrace {
    pub pool: PoolTrace,
    /// `[S_l^m; S_g^m] W_3`, length 1.
    pub preference: Var,
    pub r_head: Var,
    pub r_tail: Var,
}

/// Every intermediate of one forward pass, kept on the tape for backward.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub steps: Vec<GruStep>,
    pub states: Vec<Var>,
    pub tail_encoded: Vec<Var>,
    pub preference: Option<PreferenceTrace>,
    pub pool: PoolTrace,
    /// Scores before adjustment.
    pub scores: Var,
    /// Per-item rectification vector, absent without the preference mechanism.
    pub rectification: Option<Var>,
    /// Scores after adjustment, the softmax input.
    pub adjusted: Var,
    pub probs: Var,
    pub loss: Option<Var>,
}

/// Head/tail multipliers. `r_tail` is defined as `1 - r_head`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectificationFactors {
    pub r_head: f64,
    pub r_tail: f64,
}

impl RectificationFactors {
    pub fn from_head(r_head: f64) -> Self {
        RectificationFactors {
            r_head,
            r_tail: 1.0 - r_head,
        }
    }
}

/// One GRU update without bias terms:
/// `r = σ(W_r[v;e])`, `z = σ(W_z[v;e])`, `ṽ = tanh(W_h[r⊙v;e])`, `v' = (1-z)⊙v + z⊙ṽ`.
pub fn gru_step(tape: &mut Tape<'_>, params: &ModelParams, prev: Var, item: usize) -> Result<GruStep> {
    if item >= params.num_items() {
        return Err(Error::Usage(format!(
            "item index {item} out of range for {} items",
            params.num_items()
        )));
    }
    let table = tape.param(Slot::Embedding.id());
    let emb = tape.row(table, item)?;
    let joint = tape.concat(prev, emb)?;

    let w_r = tape.param(Slot::GateReset.id());
    let reset = tape.affine(w_r, joint, None)?;
    let reset = tape.sigmoid(reset)?;

    let w_z = tape.param(Slot::GateUpdate.id());
    let update = tape.affine(w_z, joint, None)?;
    let update = tape.sigmoid(update)?;

    let gated = tape.hadamard(reset, prev)?;
    let gated = tape.concat(gated, emb)?;
    let w_h = tape.param(Slot::GateCandidate.id());
    let candidate = tape.affine(w_h, gated, None)?;
    let candidate = tape.tanh(candidate)?;

    let keep = tape.one_minus(update)?;
    let keep = tape.hadamard(keep, prev)?;
    let take = tape.hadamard(update, candidate)?;
    let state = tape.add(keep, take)?;
    Ok(GruStep {
        reset,
        update,
        candidate,
        state,
    })
}

/// Folds [`gru_step`] over the session from `v_0 = 0`.
pub fn encode_session(tape: &mut Tape<'_>, params: &ModelParams, session: &[usize]) -> Result<Vec<GruStep>> {
    if session.is_empty() {
        return Err(Error::Usage("cannot encode an empty session".into()));
    }
    let mut prev = tape.constant(Tensor::zeros(Shape::Vector(params.d())));
    let mut steps = Vec::with_capacity(session.len());
    for &item in session {
        let step = gru_step(tape, params, prev, item)?;
        prev = step.state;
        steps.push(step);
    }
    Ok(steps)
}

/// Adds an all-ones vector to the state of every tail click; head clicks are
/// left as they are.
pub fn tail_encode(
    tape: &mut Tape<'_>,
    states: &[Var],
    catalog: &ItemCatalog,
    session: &[usize],
) -> Result<Vec<Var>> {
    if states.len() != session.len() {
        return Err(dim_err(format!(
            "{} latent states for a session of {} clicks",
            states.len(),
            session.len()
        )));
    }
    let mut ones = None;
    states
        .iter()
        .zip(session)
        .map(|(&v, &item)| {
            if catalog.is_tail(item) {
                let d = tape.shape(v).len();
                let o = *ones.get_or_insert_with(|| tape.constant(Tensor::filled(Shape::Vector(d), 1.0)));
                tape.add(v, o)
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// `α_i = W_out tanh(W_last v_t + W_item v_i + b)`, `S_l = v_t`, `S_g = Σ α_i v_i`.
pub fn attention_pool(tape: &mut Tape<'_>, slots: AttentionSlots, states: &[Var]) -> Result<PoolTrace> {
    let &local = states
        .last()
        .ok_or_else(|| Error::Usage("attention over an empty session".into()))?;
    let (w_out, w_last, w_item, bias) = (
        tape.param(slots.out),
        tape.param(slots.last),
        tape.param(slots.item),
        tape.param(slots.bias),
    );
    let query = tape.affine(w_last, local, Some(bias))?;
    let mut alphas = Vec::with_capacity(states.len());
    let mut global: Option<Var> = None;
    for &v in states {
        let key = tape.affine(w_item, v, None)?;
        let h = tape.add(query, key)?;
        let h = tape.tanh(h)?;
        let alpha = tape.affine(w_out, h, None)?;
        let term = tape.scale(v, alpha)?;
        global = Some(match global {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
        alphas.push(alpha);
    }
    Ok(PoolTrace {
        alphas,
        local,
        global: global.expect("non-empty"),
    })
}

/// The preference mechanism: attention over (tail-encoded) latent states
/// compressed to a scalar preference, then `r_head = σ(S_p)`, `r_tail = 1 - r_head`.
///
/// It only reads latent states, so any session encoder that produces d-wide
/// states can drive it.
pub fn preference_factors(tape: &mut Tape<'_>, slots: PreferenceSlots, latent: &[Var]) -> Result<PreferenceTrace> {
    let pool = attention_pool(tape, slots.attention, latent)?;
    let joint = tape.concat(pool.local, pool.global)?;
    let w3 = tape.param(slots.compress);
    let preference = tape.vecmat(joint, w3)?;
    let r_head = tape.sigmoid(preference)?;
    let r_tail = tape.one_minus(r_head)?;
    Ok(PreferenceTrace {
        pool,
        preference,
        r_head,
        r_tail,
    })
}

/// Item scores `ĉ = [S_l; S_g] W_4` from the main attention over raw states.
pub fn pool_and_score(tape: &mut Tape<'_>, params: &ModelParams, states: &[Var]) -> Result<(PoolTrace, Var)> {
    let pool = attention_pool(tape, params.attention_slots(), states)?;
    let joint = tape.concat(pool.local, pool.global)?;
    let w4 = tape.param(Slot::Score.id());
    let scores = tape.vecmat(joint, w4)?;
    Ok((pool, scores))
}

/// Builds `R` from the catalog split and returns `(R, ĉ ⊙ R)`.
pub fn rectify(
    tape: &mut Tape<'_>,
    scores: Var,
    r_head: Var,
    r_tail: Var,
    catalog: &ItemCatalog,
) -> Result<(Var, Var)> {
    let n = tape.shape(scores).len();
    if n != catalog.len() {
        return Err(dim_err(format!("{n} scores for a {}-item catalog", catalog.len())));
    }
    let head_mask: Vec<f64> = catalog.tail_flags().iter().map(|&t| if t { 0.0 } else { 1.0 }).collect();
    let tail_mask: Vec<f64> = head_mask.iter().map(|h| 1.0 - h).collect();
    let head_mask = tape.constant_vec(head_mask)?;
    let tail_mask = tape.constant_vec(tail_mask)?;
    let head_part = tape.scale(head_mask, r_head)?;
    let tail_part = tape.scale(tail_mask, r_tail)?;
    let r = tape.add(head_part, tail_part)?;
    let adjusted = tape.hadamard(scores, r)?;
    Ok((r, adjusted))
}

/// `ŷ = softmax(ĉ ⊙ R)`.
pub fn soft_adjust(
    tape: &mut Tape<'_>,
    scores: Var,
    factors: &PreferenceTrace,
    catalog: &ItemCatalog,
) -> Result<Var> {
    let (_, adjusted) = rectify(tape, scores, factors.r_head, factors.r_tail, catalog)?;
    tape.softmax(adjusted)
}

/// Full TailNet pass over `session`. With `use_pm = false` the rectification
/// is skipped and `ŷ = softmax(ĉ)`. A loss node is added when `target` is given.
pub fn forward(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    catalog: &ItemCatalog,
    session: &[usize],
    target: Option<usize>,
    use_pm: bool,
) -> Result<ForwardTrace> {
    if catalog.len() != params.num_items() {
        return Err(dim_err(format!(
            "model has {} items, catalog has {}",
            params.num_items(),
            catalog.len()
        )));
    }
    let steps = encode_session(tape, params, session)?;
    let states: Vec<Var> = steps.iter().map(|s| s.state).collect();
    let (pool, scores) = pool_and_score(tape, params, &states)?;

    let (tail_encoded, preference, rectification, adjusted) = if use_pm {
        let te = tail_encode(tape, &states, catalog, session)?;
        let pm = preference_factors(tape, params.preference_slots(), &te)?;
        let (r, adjusted) = rectify(tape, scores, pm.r_head, pm.r_tail, catalog)?;
        (te, Some(pm), Some(r), adjusted)
    } else {
        (Vec::new(), None, None, scores)
    };
    let probs = tape.softmax(adjusted)?;
    let loss = match target {
        Some(t) if t >= catalog.len() => {
            return Err(Error::Usage(format!("target {t} out of range for {} items", catalog.len())))
        }
        Some(t) => Some(tape.bce_one_hot(probs, t)?),
        None => None,
    };
    Ok(ForwardTrace {
        steps,
        states,
        tail_encoded,
        preference,
        pool,
        scores,
        rectification,
        adjusted,
        probs,
        loss,
    })
}

/// Loss `-Σ [y log ŷ + (1-y) log(1-ŷ)]` for a one-hot target.
pub fn loss(probs: &[f64], target: usize) -> Result<f64> {
    if target >= probs.len() {
        return Err(Error::Usage(format!("target {target} out of range for {} items", probs.len())));
    }
    Ok(crate::numkernel::bce_one_hot(probs, target))
}

/// Values of one inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `ĉ`
    pub scores: Vec<f64>,
    /// `ĉ ⊙ R` (or `ĉ` without the preference mechanism); ranks like `ŷ`.
    pub adjusted: Vec<f64>,
    /// `ŷ`
    pub probs: Vec<f64>,
    /// Output of the preference mechanism. Computed even when the model
    /// ranks without it, so callers can inspect it.
    pub factors: RectificationFactors,
}

pub fn predict(params: &ModelParams, catalog: &ItemCatalog, session: &[usize], use_pm: bool) -> Result<Prediction> {
    let mut tape = Tape::new(params.set());
    let trace = forward(&mut tape, params, catalog, session, None, use_pm)?;
    let factors = match &trace.preference {
        Some(pm) => RectificationFactors::from_head(tape.scalar(pm.r_head)),
        None => {
            let te = tail_encode(&mut tape, &trace.states, catalog, session)?;
            let pm = preference_factors(&mut tape, params.preference_slots(), &te)?;
            RectificationFactors::from_head(tape.scalar(pm.r_head))
        }
    };
    Ok(Prediction {
        scores: tape.value(trace.scores).to_vec(),
        adjusted: tape.value(trace.adjusted).to_vec(),
        probs: tape.value(trace.probs).to_vec(),
        factors,
    })
}

/// `ĉ` only, without the preference mechanism or the softmax.
pub fn item_scores(params: &ModelParams, session: &[usize]) -> Result<Vec<f64>> {
    let mut tape = Tape::new(params.set());
    let steps = encode_session(&mut tape, params, session)?;
    let states: Vec<Var> = steps.iter().map(|s| s.state).collect();
    let (_, scores) = pool_and_score(&mut tape, params, &states)?;
    Ok(tape.value(scores).to_vec())
}
