//! Non-neural baselines and the hard head/tail re-ranking ablation.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::eval::{topk, Recommender, Scorer};
use crate::ingest::ItemCatalog;
use crate::model::{item_scores, ModelParams};

/// Global popularity from the training click counts.
#[derive(Clone, Debug)]
pub struct Pop {
    counts: Vec<f64>,
}

impl Pop {
    pub fn new(catalog: &ItemCatalog) -> Self {
        Pop {
            counts: catalog.click_count().iter().map(|&c| c as f64).collect(),
        }
    }
}

impl Scorer for Pop {
    fn score(&self, _prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self.counts.clone())
    }
}

/// Session popularity: in-prefix count first, global count as tie-break.
#[derive(Clone, Debug)]
pub struct SPop {
    counts: Vec<f64>,
    weight: f64,
}

impl SPop {
    pub fn new(catalog: &ItemCatalog) -> Self {
        let max = catalog.click_count().iter().copied().max().unwrap_or(0);
        SPop {
            counts: catalog.click_count().iter().map(|&c| c as f64).collect(),
            weight: 1.0 + max as f64,
        }
    }
}

impl Scorer for SPop {
    fn score(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut s = self.counts.clone();
        for &i in prefix {
            let slot = s
                .get_mut(i)
                .ok_or_else(|| Error::Usage(format!("item {i} out of range")))?;
            *slot += self.weight;
        }
        Ok(s)
    }
}

/// Last-item neighbourhood model with cosine similarity over session
/// co-occurrence.
#[derive(Clone, Debug)]
pub struct ItemKnn {
    support: Vec<u64>,
    /// Sparse symmetric co-occurrence rows, diagonal omitted.
    co: Vec<HashMap<usize, u64>>,
}

impl ItemKnn {
    pub fn build<'a, I>(num_items: usize, sessions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut support = vec![0u64; num_items];
        let mut co = vec![HashMap::new(); num_items];
        for session in sessions {
            let items: BTreeSet<usize> = session.iter().copied().collect();
            if let Some(&bad) = items.iter().find(|&&i| i >= num_items) {
                return Err(Error::Data(format!("item {bad} out of range for {num_items} items")));
            }
            for &i in &items {
                support[i] += 1;
                for &j in &items {
                    if i != j {
                        *co[i].entry(j).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(ItemKnn { support, co })
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        let c = self.co[i].get(&j).copied().unwrap_or(0);
        if c == 0 {
            return 0.0;
        }
        c as f64 / ((self.support[i] * self.support[j]) as f64).sqrt()
    }

    pub fn support(&self, i: usize) -> u64 {
        self.support[i]
    }
}

impl Scorer for ItemKnn {
    fn score(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut s = vec![0.0; self.support.len()];
        let Some(&last) = prefix.last() else {
            return Ok(s);
        };
        if last >= s.len() {
            return Err(Error::Usage(format!("item {last} out of range")));
        }
        for &j in self.co[last].keys() {
            s[j] = self.similarity(last, j);
        }
        Ok(s)
    }

    fn exclusions(&self, prefix: &[usize]) -> Vec<usize> {
        prefix.to_vec()
    }
}

/// `⌊K·h/L⌉` with halves rounded up, in exact integer arithmetic.
pub fn head_slots(k: usize, head_in_prefix: usize, prefix_len: usize) -> usize {
    if prefix_len == 0 {
        return 0;
    }
    (2 * k * head_in_prefix + prefix_len) / (2 * prefix_len)
}

/// Hard re-ranking: the session's head share `p` fixes how many of the `k`
/// slots go to head items; the rest go to tail items. A class short of
/// candidates cedes its slots to the other class.
pub fn proportion_rerank(scores: &[f64], prefix: &[usize], catalog: &ItemCatalog, k: usize) -> Result<Vec<usize>> {
    if scores.len() != catalog.len() {
        return Err(Error::Dimension(format!(
            "{} scores for a {}-item catalog",
            scores.len(),
            catalog.len()
        )));
    }
    if prefix.iter().any(|&i| i >= catalog.len()) {
        return Err(Error::Usage("prefix item out of range".into()));
    }
    let k = k.min(catalog.len());
    let heads_seen = prefix.iter().filter(|&&i| !catalog.is_tail(i)).count();
    let mut want_head = head_slots(k, heads_seen, prefix.len());

    let ranked = topk(scores, catalog.len(), &[]);
    let (head, tail): (Vec<usize>, Vec<usize>) = ranked.into_iter().partition(|&i| !catalog.is_tail(i));
    let mut want_tail = k - want_head;
    if head.len() < want_head {
        want_tail += want_head - head.len();
        want_head = head.len();
    }
    if tail.len() < want_tail {
        want_head += want_tail - tail.len();
        want_tail = tail.len();
    }
    let mut out: Vec<usize> = head[..want_head].iter().chain(&tail[..want_tail]).copied().collect();
    out.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(out)
}

/// TailNet without the preference mechanism, re-ranked by [`proportion_rerank`].
#[derive(Clone, Copy)]
pub struct TailNetProportion<'a> {
    pub params: &'a ModelParams,
    pub catalog: &'a ItemCatalog,
}

impl Recommender for TailNetProportion<'_> {
    fn recommend(&self, prefix: &[usize], k: usize) -> Result<Vec<usize>> {
        let scores = item_scores(self.params, prefix)?;
        proportion_rerank(&scores, prefix, self.catalog, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(counts: &[u64], frac: f64) -> ItemCatalog {
        ItemCatalog::from_counts(counts.iter().enumerate().map(|(i, &c)| (format!("i{i:03}"), c)), frac).unwrap()
    }

    #[test]
    fn pop_examples() {
        let cat = catalog(&[10, 5, 1], 0.34);
        assert_eq!(Pop::new(&cat).recommend(&[2], 2).unwrap(), vec![0, 1]);
        let counts: Vec<u64> = (0..200).rev().map(|c| c + 1).collect();
        let cat = catalog(&counts, 0.2);
        let lists = vec![Pop::new(&cat).recommend(&[5], 20).unwrap()];
        assert_eq!(crate::eval::tail_at_k(&lists, &cat, 20), 0.0);
    }

    #[test]
    fn spop_puts_session_items_first() {
        let cat = catalog(&[50, 40, 30, 20, 10], 0.2);
        let (a, b) = (3, 4);
        let list = SPop::new(&cat).recommend(&[a, b, a], 5).unwrap();
        assert_eq!(list, vec![a, b, 0, 1, 2]);
        assert_eq!(
            SPop::new(&cat).recommend(&[], 5).unwrap(),
            Pop::new(&cat).recommend(&[], 5).unwrap()
        );
    }

    proptest! {
        #[test]
        fn spop_matches_two_key_sort(
            counts in prop::collection::vec(1u64..6, 2..30),
            raw_prefix in prop::collection::vec(0usize..1000, 1..8),
        ) {
            let n = counts.len();
            let cat = catalog(&counts, 0.2);
            let prefix: Vec<usize> = raw_prefix.iter().map(|i| i % n).collect();
            let got = SPop::new(&cat).recommend(&prefix, n).unwrap();
            let mut oracle: Vec<usize> = (0..n).collect();
            let in_prefix = |i: usize| prefix.iter().filter(|&&p| p == i).count();
            let global = cat.click_count();
            oracle.sort_by(|&a, &b| {
                (in_prefix(b), global[b]).cmp(&(in_prefix(a), global[a])).then(a.cmp(&b))
            });
            prop_assert_eq!(got, oracle);
        }
    }

    #[test]
    fn itemknn_toy_corpus_matches_brute_force() {
        let sessions: Vec<Vec<usize>> = vec![
            vec![0, 1, 2],
            vec![1, 2, 2, 3],
            vec![0, 3],
            vec![4, 1],
            vec![2, 0, 1],
        ];
        let knn = ItemKnn::build(6, sessions.iter().map(|s| s.as_slice())).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    continue;
                }
                let contains = |s: &Vec<usize>, x| s.contains(&x);
                let co = sessions.iter().filter(|s| contains(s, i) && contains(s, j)).count() as f64;
                let si = sessions.iter().filter(|s| contains(s, i)).count() as f64;
                let sj = sessions.iter().filter(|s| contains(s, j)).count() as f64;
                let oracle = if co == 0.0 { 0.0 } else { co / (si * sj).sqrt() };
                assert!((knn.similarity(i, j) - oracle).abs() < 1e-15, "{i},{j}");
                assert_eq!(knn.similarity(i, j), knn.similarity(j, i));
            }
        }
        // item 5 never occurs: cold, all zeros
        assert!(knn.score(&[5]).unwrap().iter().all(|&s| s == 0.0));
        assert_eq!(knn.similarity(3, 4), 0.0);
    }

    #[test]
    fn itemknn_single_shared_session_is_one_and_prefix_is_excluded() {
        let sessions = [vec![0, 1], vec![2, 3]];
        let knn = ItemKnn::build(4, sessions.iter().map(|s| s.as_slice())).unwrap();
        assert_eq!(knn.similarity(0, 1), 1.0);
        let list = knn.recommend(&[2, 0], 4).unwrap();
        assert_eq!(list[0], 1);
        assert!(!list.contains(&0) && !list.contains(&2));
    }

    fn half_catalog(n: usize) -> ItemCatalog {
        let counts: Vec<u64> = (0..n as u64).map(|k| n as u64 - k).collect();
        catalog(&counts, 0.5)
    }

    #[test]
    fn proportion_examples() {
        let cat = half_catalog(100); // 0..50 head
        let scores: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let prefix: Vec<usize> = (0..7).chain(60..63).collect();
        let out = proportion_rerank(&scores, &prefix, &cat, 20).unwrap();
        assert_eq!(out.iter().filter(|&&i| !cat.is_tail(i)).count(), 14);
        assert_eq!(out.len(), 20);

        let all_head = proportion_rerank(&scores, &[1, 2], &cat, 20).unwrap();
        assert!(all_head.iter().all(|&i| !cat.is_tail(i)));
        let all_tail = proportion_rerank(&scores, &[70], &cat, 20).unwrap();
        assert!(all_tail.iter().all(|&i| cat.is_tail(i)));
    }

    #[test]
    fn short_class_cedes_slots() {
        let cat = half_catalog(10); // 5 head, 5 tail
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let out = proportion_rerank(&scores, &[0], &cat, 8).unwrap();
        assert_eq!(out, vec![9, 8, 7, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(head_slots(20, 7, 10), 14);
        assert_eq!(head_slots(5, 1, 2), 3); // 2.5
        assert_eq!(head_slots(5, 1, 4), 1); // 1.25
        assert_eq!(head_slots(20, 0, 3), 0);
        assert_eq!(head_slots(20, 3, 3), 20);
    }

    proptest! {
        #[test]
        fn proportion_quota_and_class_order(
            scores in prop::collection::vec(-100i32..100, 80),
            prefix in prop::collection::vec(0usize..80, 1..12),
            k in 1usize..=30,
        ) {
            let cat = half_catalog(80);
            let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
            let out = proportion_rerank(&s, &prefix, &cat, k).unwrap();
            let heads_seen = prefix.iter().filter(|&&i| !cat.is_tail(i)).count();
            let p = heads_seen as f64 / prefix.len() as f64;
            let expect = (k as f64 * p + 0.5).floor() as usize;
            prop_assert_eq!(out.iter().filter(|&&i| !cat.is_tail(i)).count(), expect);
            prop_assert_eq!(out.len(), k);
            let full = topk(&s, 80, &[]);
            for tail in [false, true] {
                let mine: Vec<usize> = out.iter().copied().filter(|&i| cat.is_tail(i) == tail).collect();
                let best: Vec<usize> = full.iter().copied().filter(|&i| cat.is_tail(i) == tail).take(mine.len()).collect();
                prop_assert_eq!(mine, best);
            }
        }
    }
}
