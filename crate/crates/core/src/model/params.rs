use rand::Rng;

use crate::error::{dim_err, Result};
use crate::numkernel::{ParamId, ParamSet, Shape, Tensor};

/// Every learnable tensor, in checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Item embedding table, |I|×d.
    Embedding,
    /// Reset gate, d×2d over `[v_{t-1}; emb]`.
    GateReset,
    /// Update gate, d×2d.
    GateUpdate,
    /// Candidate state, d×2d over `[r ⊙ v_{t-1}; emb]`.
    GateCandidate,
    /// Main attention: 1×d output row, d×d for the last state, d×d per state, bias d.
    AttnOut,
    AttnLast,
    AttnItem,
    AttnBias,
    /// Scoring projection, 2d×|I|.
    Score,
    /// Preference attention, same layout as the main attention.
    PrefOut,
    PrefLast,
    PrefItem,
    PrefBias,
    /// Compresses `[S_l^m; S_g^m]` to a scalar, 2d×1.
    PrefCompress,
}

impl Slot {
    pub const ALL: [Slot; 14] = [
        Slot::Embedding,
        Slot::GateReset,
        Slot::GateUpdate,
        Slot::GateCandidate,
        Slot::AttnOut,
        Slot::AttnLast,
        Slot::AttnItem,
        Slot::AttnBias,
        Slot::Score,
        Slot::PrefOut,
        Slot::PrefLast,
        Slot::PrefItem,
        Slot::PrefBias,
        Slot::PrefCompress,
    ];

    pub fn id(self) -> ParamId {
        ParamId(self as usize)
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Embedding => "E",
            Slot::GateReset => "W_r",
            Slot::GateUpdate => "W_z",
            Slot::GateCandidate => "W_h",
            Slot::AttnOut => "W_0",
            Slot::AttnLast => "W_1",
            Slot::AttnItem => "W_2",
            Slot::AttnBias => "b",
            Slot::Score => "W_4",
            Slot::PrefOut => "W_0m",
            Slot::PrefLast => "W_1m",
            Slot::PrefItem => "W_2m",
            Slot::PrefBias => "b_m",
            Slot::PrefCompress => "W_3",
        }
    }

    pub fn shape(self, d: usize, num_items: usize) -> Shape {
        match self {
            Slot::Embedding => Shape::Matrix(num_items, d),
            Slot::GateReset | Slot::GateUpdate | Slot::GateCandidate => Shape::Matrix(d, 2 * d),
            Slot::AttnOut | Slot::PrefOut => Shape::Matrix(1, d),
            Slot::AttnLast | Slot::AttnItem | Slot::PrefLast | Slot::PrefItem => Shape::Matrix(d, d),
            Slot::AttnBias | Slot::PrefBias => Shape::Vector(d),
            Slot::Score => Shape::Matrix(2 * d, num_items),
            Slot::PrefCompress => Shape::Matrix(2 * d, 1),
        }
    }

    pub fn is_bias(self) -> bool {
        matches!(self, Slot::AttnBias | Slot::PrefBias)
    }
}

/// Parameter ids of one attention block `α_i = W_out tanh(W_last v_t + W_item v_i + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionSlots {
    pub out: ParamId,
    pub last: ParamId,
    pub item: ParamId,
    pub bias: ParamId,
}

/// Everything the preference mechanism needs: its attention block and the
/// 2d×1 compression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreferenceSlots {
    pub attention: AttentionSlots,
    pub compress: ParamId,
}

/// TailNet weights plus their dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    d: usize,
    num_items: usize,
    set: ParamSet,
}

impl ModelParams {
    /// Uniform `[-1/√d, 1/√d]` for every weight and embedding, zero biases.
    pub fn init<R: Rng>(d: usize, num_items: usize, rng: &mut R) -> Result<Self> {
        check_dims(d, num_items)?;
        let bound = 1.0 / (d as f64).sqrt();
        let mut set = ParamSet::new();
        for slot in Slot::ALL {
            let shape = slot.shape(d, num_items);
            let t = if slot.is_bias() {
                Tensor::zeros(shape)
            } else {
                let data = (0..shape.len()).map(|_| rng.random_range(-bound..=bound)).collect();
                Tensor::new(shape, data)?
            };
            set.push(slot.name(), t);
        }
        Ok(ModelParams { d, num_items, set })
    }

    pub fn zeros(d: usize, num_items: usize) -> Result<Self> {
        check_dims(d, num_items)?;
        let mut set = ParamSet::new();
        for slot in Slot::ALL {
            set.push(slot.name(), Tensor::zeros(slot.shape(d, num_items)));
        }
        Ok(ModelParams { d, num_items, set })
    }

    /// Wraps an existing parameter set after checking every declared shape.
    pub fn from_param_set(d: usize, num_items: usize, set: ParamSet) -> Result<Self> {
        check_dims(d, num_items)?;
        if set.len() != Slot::ALL.len() {
            return Err(dim_err(format!(
                "expected {} parameter tensors, got {}",
                Slot::ALL.len(),
                set.len()
            )));
        }
        for slot in Slot::ALL {
            let want = slot.shape(d, num_items);
            let got = set.get(slot.id()).shape();
            if want != got {
                return Err(dim_err(format!("{} has shape {got}, expected {want}", slot.name())));
            }
            if !set.get(slot.id()).is_finite() {
                return Err(dim_err(format!("{} holds non-finite values", slot.name())));
            }
        }
        Ok(ModelParams { d, num_items, set })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn set(&self) -> &ParamSet {
        &self.set
    }

    pub fn set_mut(&mut self) -> &mut ParamSet {
        &mut self.set
    }

    pub fn get(&self, slot: Slot) -> &Tensor {
        self.set.get(slot.id())
    }

    pub fn get_mut(&mut self, slot: Slot) -> &mut Tensor {
        self.set.get_mut(slot.id())
    }

    pub fn attention_slots(&self) -> AttentionSlots {
        AttentionSlots {
            out: Slot::AttnOut.id(),
            last: Slot::AttnLast.id(),
            item: Slot::AttnItem.id(),
            bias: Slot::AttnBias.id(),
        }
    }

    pub fn preference_slots(&self) -> PreferenceSlots {
        PreferenceSlots {
            attention: AttentionSlots {
                out: Slot::PrefOut.id(),
                last: Slot::PrefLast.id(),
                item: Slot::PrefItem.id(),
                bias: Slot::PrefBias.id(),
            },
            compress: Slot::PrefCompress.id(),
        }
    }

    /// Zeroes every tensor of the preference mechanism.
    pub fn zero_preference(&mut self) {
        for slot in [Slot::PrefOut, Slot::PrefLast, Slot::PrefItem, Slot::PrefBias, Slot::PrefCompress] {
            self.get_mut(slot).data_mut().fill(0.0);
        }
    }
}

fn check_dims(d: usize, num_items: usize) -> Result<()> {
    if d == 0 {
        return Err(dim_err("embedding width must be positive"));
    }
    if num_items < 2 {
        return Err(dim_err(format!("need at least 2 items, got {num_items}")));
    }
    Ok(())
}
