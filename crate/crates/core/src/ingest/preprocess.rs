use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::catalog::ItemCatalog;
use super::events::RawEvent;
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// A session prefix and the item clicked right after it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub prefix: Vec<usize>,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub catalog: ItemCatalog,
    /// Prefix-augmented train pairs. The pairs of one session are contiguous
    /// and ordered by prefix length, which [`Dataset::train_sessions`] relies on.
    pub train: Vec<Pair>,
    pub valid: Vec<Pair>,
    pub test: Vec<Pair>,
}

impl Dataset {
    /// Checks indices against the catalog and the prefix-length invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.catalog.len();
        for (name, pairs) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for (k, p) in pairs.iter().enumerate() {
                if p.prefix.is_empty() {
                    return Err(Error::Data(format!("{name} pair {k} has an empty prefix")));
                }
                if p.target >= n || p.prefix.iter().any(|&i| i >= n) {
                    return Err(Error::Data(format!(
                        "{name} pair {k} references an item outside the {n}-item catalog"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rebuilds the full training sessions from the augmented pairs.
    pub fn train_sessions(&self) -> Vec<Vec<usize>> {
        let mut sessions: Vec<Vec<usize>> = Vec::new();
        for p in &self.train {
            let extends = sessions
                .last()
                .is_some_and(|s| p.prefix.len() == s.len() && p.prefix.len() > 1 && p.prefix[..] == s[..]);
            if !extends {
                sessions.push(p.prefix.clone());
            }
            sessions.last_mut().expect("pushed above").push(p.target);
        }
        sessions
    }
}

/// Expands `[i1..in]` into `([i1..ik], i_{k+1})` for `k = 1..n-1`.
pub fn augment_prefixes(session: &[usize]) -> impl Iterator<Item = Pair> + '_ {
    (1..session.len()).map(move |k| Pair {
        prefix: session[..k].to_vec(),
        target: session[k],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_item_support: u64,
    pub min_session_len: usize,
    pub max_session_len: usize,
    pub head_fraction: f64,
    pub test_window_seconds: i64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_item_support: 5,
            min_session_len: 2,
            max_session_len: 19,
            head_fraction: 0.2,
            test_window_seconds: SECONDS_PER_DAY,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.head_fraction > 0.0 && self.head_fraction < 1.0) {
            return Err(Error::Config(format!(
                "head_fraction must lie in (0, 1), got {}",
                self.head_fraction
            )));
        }
        if self.min_session_len < 2 {
            return Err(Error::Config("min_session_len must be at least 2".into()));
        }
        if self.max_session_len < self.min_session_len {
            return Err(Error::Config(format!(
                "max_session_len {} is below min_session_len {}",
                self.max_session_len, self.min_session_len
            )));
        }
        if self.test_window_seconds <= 0 {
            return Err(Error::Config("test window must be positive".into()));
        }
        Ok(())
    }
}

/// Counts reported by [`preprocess`] for the dataset summary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreprocessStats {
    pub raw_events: usize,
    pub raw_sessions: usize,
    pub kept_sessions: usize,
    pub filter_rounds: usize,
    pub train_sessions: usize,
    pub valid_sessions: usize,
    pub test_sessions: usize,
    pub dropped_valid_pairs: usize,
    pub dropped_test_pairs: usize,
}

type RawSession = (String, Vec<(i64, String)>);

fn group_sessions(events: &[RawEvent]) -> Vec<RawSession> {
    let mut groups: BTreeMap<&str, Vec<(i64, &str)>> = BTreeMap::new();
    for ev in events {
        groups
            .entry(ev.session_id.as_str())
            .or_default()
            .push((ev.timestamp, ev.item_id.as_str()));
    }
    groups
        .into_iter()
        .map(|(sid, mut clicks)| {
            clicks.sort_by_key(|c| c.0);
            (
                sid.to_string(),
                clicks.into_iter().map(|(t, i)| (t, i.to_string())).collect(),
            )
        })
        .collect()
}

/// Drops rare items and short sessions until neither filter removes anything.
fn filter_to_fixed_point(sessions: &mut Vec<RawSession>, cfg: &PreprocessConfig) -> usize {
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut support: HashMap<&str, u64> = HashMap::new();
        for (_, clicks) in sessions.iter() {
            for (_, item) in clicks {
                *support.entry(item.as_str()).or_default() += 1;
            }
        }
        let rare: HashSet<String> = support
            .into_iter()
            .filter(|(_, c)| *c < cfg.min_item_support)
            .map(|(i, _)| i.to_string())
            .collect();
        let before: usize = sessions.iter().map(|s| s.1.len()).sum::<usize>() + sessions.len();
        for (_, clicks) in sessions.iter_mut() {
            clicks.retain(|(_, item)| !rare.contains(item));
        }
        sessions.retain(|(_, clicks)| clicks.len() >= cfg.min_session_len);
        let after: usize = sessions.iter().map(|s| s.1.len()).sum::<usize>() + sessions.len();
        if after == before {
            return rounds;
        }
    }
}

/// Turns a raw click log into train/valid/test pairs plus the item catalog.
///
/// Sessions whose last click falls within the final test window of the log
/// are test; the window before that is validation; the rest is train.
/// Validation and test pairs that mention an item never seen in train are
/// dropped. The catalog is built from train click counts only.
pub fn preprocess(events: &[RawEvent], cfg: &PreprocessConfig) -> Result<(Dataset, PreprocessStats)> {
    cfg.validate()?;
    if events.is_empty() {
        return Err(Error::Data("no events to preprocess".into()));
    }
    let mut stats = PreprocessStats {
        raw_events: events.len(),
        ..Default::default()
    };

    let mut sessions = group_sessions(events);
    stats.raw_sessions = sessions.len();
    stats.filter_rounds = filter_to_fixed_point(&mut sessions, cfg);
    if sessions.is_empty() {
        return Err(Error::Data(format!(
            "item-support (>= {}) / session-length (>= {}) filtering removed every session",
            cfg.min_item_support, cfg.min_session_len
        )));
    }
    stats.kept_sessions = sessions.len();

    for (_, clicks) in sessions.iter_mut() {
        if clicks.len() > cfg.max_session_len {
            clicks.drain(..clicks.len() - cfg.max_session_len);
        }
    }

    let log_end = sessions
        .iter()
        .map(|(_, c)| c.last().expect("non-empty session").0)
        .max()
        .expect("non-empty");
    let test_start = log_end - cfg.test_window_seconds;
    let valid_start = test_start - cfg.test_window_seconds;

    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, clicks) in sessions {
        let last = clicks.last().expect("non-empty session").0;
        let items: Vec<String> = clicks.into_iter().map(|(_, i)| i).collect();
        if last > test_start {
            test.push(items);
        } else if last > valid_start {
            valid.push(items);
        } else {
            train.push(items);
        }
    }
    if train.is_empty() {
        return Err(Error::Data(format!(
            "time split left no training sessions (log spans less than {} s before the test window)",
            cfg.test_window_seconds
        )));
    }
    stats.train_sessions = train.len();
    stats.valid_sessions = valid.len();
    stats.test_sessions = test.len();

    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for s in &train {
        for i in s {
            *counts.entry(i.as_str()).or_default() += 1;
        }
    }
    let catalog = ItemCatalog::from_counts(counts, cfg.head_fraction)?;

    let to_idx = |s: &[String]| -> Vec<Option<usize>> { s.iter().map(|i| catalog.index_of(i)).collect() };

    let mut train_pairs = Vec::new();
    for s in &train {
        let idx: Vec<usize> = to_idx(s).into_iter().map(|i| i.expect("train item in catalog")).collect();
        train_pairs.extend(augment_prefixes(&idx));
    }

    let held_out = |sessions: &[Vec<String>], dropped: &mut usize| -> Vec<Pair> {
        let mut out = Vec::new();
        for s in sessions {
            let idx = to_idx(s);
            for k in 1..idx.len() {
                match (idx[..k].iter().copied().collect::<Option<Vec<_>>>(), idx[k]) {
                    (Some(prefix), Some(target)) => out.push(Pair { prefix, target }),
                    _ => *dropped += 1,
                }
            }
        }
        out
    };
    let valid_pairs = held_out(&valid, &mut stats.dropped_valid_pairs);
    let test_pairs = held_out(&test, &mut stats.dropped_test_pairs);
    if test_pairs.is_empty() {
        warn!("no test pairs survived preprocessing");
    }
    if valid_pairs.is_empty() {
        warn!("no validation pairs survived preprocessing");
    }

    let ds = Dataset {
        catalog,
        train: train_pairs,
        valid: valid_pairs,
        test: test_pairs,
    };
    ds.validate()?;
    Ok((ds, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, t: i64, i: &str) -> RawEvent {
        RawEvent::new(s, t, i)
    }

    /// Appends a late session so earlier sessions fall into the train window.
    fn anchored(mut events: Vec<RawEvent>) -> Vec<RawEvent> {
        let late = 30 * SECONDS_PER_DAY;
        events.push(ev("zz-late", late, "a"));
        events.push(ev("zz-late", late + 1, "a"));
        events
    }

    fn loose() -> PreprocessConfig {
        PreprocessConfig {
            min_item_support: 1,
            ..Default::default()
        }
    }

    fn ids(ds: &Dataset, p: &Pair) -> (Vec<String>, String) {
        (
            p.prefix.iter().map(|&i| ds.catalog.id_of(i).to_string()).collect(),
            ds.catalog.id_of(p.target).to_string(),
        )
    }

    #[test]
    fn short_sessions_dropped_and_prefixes_expanded() {
        let events = vec![ev("s1", 10, "a"), ev("s1", 11, "b"), ev("s1", 12, "a"), ev("s2", 13, "a")];
        let (ds, stats) = preprocess(&anchored(events), &loose()).unwrap();
        assert_eq!(stats.kept_sessions, 2); // s1 and the late anchor
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ids(&ds, &ds.train[0]), (vec!["a".into()], "b".into()));
        assert_eq!(ids(&ds, &ds.train[1]), (vec!["a".into(), "b".into()], "a".into()));
    }

    #[test]
    fn long_sessions_keep_their_tail() {
        let events = vec![ev("s1", 1, "a"), ev("s1", 2, "b"), ev("s1", 3, "c")];
        let cfg = PreprocessConfig {
            max_session_len: 2,
            ..loose()
        };
        let (ds, _) = preprocess(&anchored(events), &cfg).unwrap();
        assert_eq!(ds.train.len(), 1);
        assert_eq!(ids(&ds, &ds.train[0]), (vec!["b".into()], "c".into()));
    }

    #[test]
    fn unseen_test_items_are_filtered() {
        let day = SECONDS_PER_DAY;
        let events = vec![
            ev("old", 0, "a"),
            ev("old", 5, "b"),
            ev("old2", 10, "b"),
            ev("old2", 20, "a"),
            // last day: "z" never appears in train
            ev("new", 3 * day, "a"),
            ev("new", 3 * day + 1, "z"),
            ev("new", 3 * day + 2, "b"),
        ];
        let (ds, stats) = preprocess(&events, &loose()).unwrap();
        assert_eq!(stats.test_sessions, 1);
        assert!(ds.catalog.index_of("z").is_none());
        // ([a], z) and ([a, z], b) both mention z
        assert_eq!(stats.dropped_test_pairs, 2);
        assert!(ds.test.is_empty());
    }

    #[test]
    fn sessions_sorted_by_time_stably() {
        let events = vec![ev("s", 5, "b"), ev("s", 1, "a"), ev("s", 5, "c")];
        let (ds, _) = preprocess(&anchored(events), &loose()).unwrap();
        let sessions = ds.train_sessions();
        let named: Vec<&str> = sessions[0].iter().map(|&i| ds.catalog.id_of(i)).collect();
        assert_eq!(named, vec!["a", "b", "c"]);
    }

    #[test]
    fn filtering_is_iterated() {
        // c has support 2 (< 2 fails at threshold 3); dropping it shortens s2
        // below length 2 which then pushes b under the threshold too.
        let events = vec![
            ev("s1", 1, "a"), ev("s1", 2, "a"), ev("s1", 3, "a"), ev("s1", 4, "b"),
            ev("s2", 5, "c"), ev("s2", 6, "b"),
            ev("s3", 7, "c"), ev("s3", 8, "b"),
            ev("s4", 9, "a"), ev("s4", 10, "a"),
        ];
        let cfg = PreprocessConfig {
            min_item_support: 3,
            ..Default::default()
        };
        let err = preprocess(&events, &cfg);
        // after removing c: s2=[b], s3=[b] dropped; b support 1 -> removed;
        // only a remains, in s1 and s4 => catalog of one item is rejected
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn everything_filtered_reports_the_filter() {
        let events = vec![ev("s1", 1, "a"), ev("s1", 2, "b")];
        match preprocess(&events, &PreprocessConfig::default()) {
            Err(Error::Data(msg)) => assert!(msg.contains("filtering removed every session"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn augmentation_yields_n_minus_one_pairs() {
        for n in 1..10 {
            let s: Vec<usize> = (0..n).collect();
            assert_eq!(augment_prefixes(&s).count(), n.saturating_sub(1));
        }
    }

    #[test]
    fn sessions_reconstruct_from_pairs() {
        let events = vec![
            ev("s1", 1, "a"), ev("s1", 2, "b"), ev("s1", 3, "c"),
            ev("s2", 4, "a"), ev("s2", 5, "a"),
            ev("s3", 6, "a"), ev("s3", 7, "b"),
        ];
        let (ds, _) = preprocess(&anchored(events), &loose()).unwrap();
        let names: Vec<Vec<&str>> = ds
            .train_sessions()
            .iter()
            .map(|s| s.iter().map(|&i| ds.catalog.id_of(i)).collect())
            .collect();
        assert_eq!(names, vec![vec!["a", "b", "c"], vec!["a", "a"], vec!["a", "b"]]);
    }
}
