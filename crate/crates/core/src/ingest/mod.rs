//! Raw click logs to train/valid/test pairs.

mod catalog;
mod events;
mod format;
mod preprocess;
mod synth;

pub use catalog::{head_count, pareto_split, ItemCatalog};
pub use events::{parse_events, write_events, ParsedEvents, RawEvent, MAX_MALFORMED_SHARE};
pub use format::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};
pub(crate) use format::{read_catalog, write_catalog};
pub use preprocess::{
    augment_prefixes, preprocess, Dataset, Pair, PreprocessConfig, PreprocessStats, SECONDS_PER_DAY,
};
pub use synth::{gen_synthetic, SynthConfig, MIN_SYNTH_SESSION_LEN, REPEAT_PROB, SYNTH_SPAN_DAYS};
