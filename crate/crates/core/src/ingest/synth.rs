use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Zipf};
use serde::{Deserialize, Serialize};

use super::events::RawEvent;
use super::preprocess::SECONDS_PER_DAY;
use crate::error::{Error, Result};

/// Shortest session the generator emits.
pub const MIN_SYNTH_SESSION_LEN: usize = 2;
/// Chance that a click re-visits an item already in the session.
pub const REPEAT_PROB: f64 = 0.15;
/// Session start times are spread over this many days.
pub const SYNTH_SPAN_DAYS: i64 = 10;
const BASE_TIMESTAMP: i64 = 1_600_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_sessions: usize,
    pub num_items: usize,
    pub zipf_exponent: f64,
    pub mean_len: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_sessions: 5_000,
            num_items: 500,
            zipf_exponent: 1.2,
            mean_len: 6.0,
            seed: 42,
        }
    }
}

/// Zipf-distributed click log.
///
/// Session lengths follow `2 + Geometric` with the requested mean. Each click
/// either repeats an earlier item of the same session (probability
/// [`REPEAT_PROB`]) or draws a fresh item by Zipf rank. Ranks are mapped to
/// item ids through a seeded permutation so popularity is unrelated to id order.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<RawEvent>> {
    if cfg.num_sessions == 0 {
        return Err(Error::Config("num_sessions must be positive".into()));
    }
    if cfg.num_items < 10 {
        return Err(Error::Config(format!("num_items must be at least 10, got {}", cfg.num_items)));
    }
    if !(cfg.zipf_exponent > 0.0) {
        return Err(Error::Config(format!("zipf exponent must be positive, got {}", cfg.zipf_exponent)));
    }
    if !(cfg.mean_len >= MIN_SYNTH_SESSION_LEN as f64) {
        return Err(Error::Config(format!(
            "mean session length must be at least {MIN_SYNTH_SESSION_LEN}, got {}",
            cfg.mean_len
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipf = Zipf::new(cfg.num_items as f64, cfg.zipf_exponent)
        .map_err(|e| Error::Config(format!("zipf distribution: {e}")))?;
    let extra = Geometric::new(1.0 / (cfg.mean_len - 1.0))
        .map_err(|e| Error::Config(format!("length distribution: {e}")))?;

    let mut ids: Vec<String> = (0..cfg.num_items).map(|i| format!("i{i:05}")).collect();
    ids.shuffle(&mut rng);

    let width = cfg.num_sessions.to_string().len();
    let span = SYNTH_SPAN_DAYS * SECONDS_PER_DAY;
    let mut events = Vec::new();
    let mut session: Vec<usize> = Vec::new();
    for s in 0..cfg.num_sessions {
        let len = MIN_SYNTH_SESSION_LEN + extra.sample(&mut rng) as usize;
        let sid = format!("s{s:0width$}");
        let mut t = BASE_TIMESTAMP + rng.random_range(0..span);
        session.clear();
        for k in 0..len {
            let rank = if k > 0 && rng.random_bool(REPEAT_PROB) {
                session[rng.random_range(0..session.len())]
            } else {
                zipf.sample(&mut rng) as usize - 1
            };
            session.push(rank);
            events.push(RawEvent::new(sid.clone(), t, ids[rank].clone()));
            t += rng.random_range(20..=600);
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn identical_seeds_give_identical_logs() {
        let cfg = SynthConfig {
            num_sessions: 100,
            num_items: 50,
            zipf_exponent: 1.2,
            mean_len: 5.0,
            seed: 7,
        };
        assert_eq!(gen_synthetic(&cfg).unwrap(), gen_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(gen_synthetic(&cfg).unwrap(), gen_synthetic(&other).unwrap());
    }

    #[test]
    fn timestamps_increase_within_sessions() {
        let evs = gen_synthetic(&SynthConfig {
            num_sessions: 200,
            ..Default::default()
        })
        .unwrap();
        for w in evs.windows(2) {
            if w[0].session_id == w[1].session_id {
                assert!(w[1].timestamp > w[0].timestamp);
            }
        }
    }

    #[test]
    fn top_item_share_matches_zipf() {
        // Zipf(1.2) over 500 items: the top rank carries 1/H(500, 1.2) of the mass.
        let h: f64 = (1..=500).map(|k| (k as f64).powf(-1.2)).sum();
        let expected = 1.0 / h;
        assert!((0.03..=0.30).contains(&expected));

        let zipf = Zipf::new(500.0, 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = HashMap::new();
        for _ in 0..10_000 {
            *counts.entry(zipf.sample(&mut rng) as usize).or_insert(0usize) += 1;
        }
        let top = *counts.values().max().unwrap() as f64 / 10_000.0;
        assert!((0.03..=0.30).contains(&top), "{top}");
        assert!((top - expected).abs() < 0.02, "{top} vs {expected}");

        // the same holds for the generator's fresh draws
        let evs = gen_synthetic(&SynthConfig {
            num_sessions: 2_000,
            mean_len: 5.0,
            ..Default::default()
        })
        .unwrap();
        let mut by_item: HashMap<&str, usize> = HashMap::new();
        for e in &evs {
            *by_item.entry(&e.item_id).or_default() += 1;
        }
        let share = *by_item.values().max().unwrap() as f64 / evs.len() as f64;
        assert!((0.03..=0.30).contains(&share), "{share}");
    }

    #[test]
    fn mean_length_is_respected() {
        let evs = gen_synthetic(&SynthConfig {
            num_sessions: 10_000,
            mean_len: 5.0,
            ..Default::default()
        })
        .unwrap();
        let mean = evs.len() as f64 / 10_000.0;
        assert!((mean - 5.0).abs() <= 0.5, "{mean}");
        let mut lens: HashMap<&str, usize> = HashMap::new();
        for e in &evs {
            *lens.entry(&e.session_id).or_default() += 1;
        }
        assert!(lens.values().all(|&l| l >= 2));
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            SynthConfig { num_sessions: 0, ..Default::default() },
            SynthConfig { num_items: 9, ..Default::default() },
            SynthConfig { zipf_exponent: 0.0, ..Default::default() },
            SynthConfig { mean_len: 1.5, ..Default::default() },
        ];
        for cfg in bad {
            assert!(gen_synthetic(&cfg).is_err(), "{cfg:?}");
        }
    }
}
