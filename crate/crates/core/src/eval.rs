//! Top-K ranking and the accuracy / long-tail metrics.
//!
//! All metrics are percentages. For a set of test sessions `S` with top-K
//! lists `L_K(s)`:
//!
//! - `recall@K`: share of sessions whose target is in `L_K(s)`
//! - `mrr@K`: mean reciprocal rank of the target, 0 beyond K
//! - `coverage@K`: `|∪ L_K(s)| / |I|`
//! - `tail_coverage@K`: `|∪ L_K^T(s)| / |I^T|`, tail items only
//! - `tail@K`: mean over sessions of `|L_K^T(s)| / K`

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ItemCatalog, Pair};

pub const DEFAULT_KS: [usize; 4] = [5, 10, 15, 20];

/// Ordered recommendations for one session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecommendationList {
    pub items: Vec<usize>,
    /// Position of the source session in the evaluated pair list.
    pub session: usize,
}

fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `k` largest scores, ties broken by ascending index.
pub fn topk(scores: &[f64], k: usize, exclusions: &[usize]) -> Vec<usize> {
    let mut candidates: Vec<usize> = if exclusions.is_empty() {
        (0..scores.len()).collect()
    } else {
        let skip: HashSet<usize> = exclusions.iter().copied().collect();
        (0..scores.len()).filter(|i| !skip.contains(i)).collect()
    };
    let cmp = by_score_desc(scores);
    if k < candidates.len() {
        if k == 0 {
            return Vec::new();
        }
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}

fn head_of(list: &[usize], k: usize) -> &[usize] {
    &list[..list.len().min(k)]
}

pub fn recall_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> f64 {
    debug_assert_eq!(lists.len(), targets.len());
    if lists.is_empty() {
        return 0.0;
    }
    let hits = lists
        .iter()
        .zip(targets)
        .filter(|(l, t)| head_of(l, k).contains(t))
        .count();
    100.0 * hits as f64 / lists.len() as f64
}

pub fn mrr_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> f64 {
    debug_assert_eq!(lists.len(), targets.len());
    if lists.is_empty() {
        return 0.0;
    }
    let sum: f64 = lists
        .iter()
        .zip(targets)
        .filter_map(|(l, t)| head_of(l, k).iter().position(|x| x == t))
        .map(|pos| 1.0 / (pos + 1) as f64)
        .sum();
    100.0 * sum / lists.len() as f64
}

/// `(coverage, tail_coverage)`.
pub fn coverage_at_k(lists: &[Vec<usize>], catalog: &ItemCatalog, k: usize) -> (f64, f64) {
    let seen: HashSet<usize> = lists.iter().flat_map(|l| head_of(l, k).iter().copied()).collect();
    let tail_seen = seen.iter().filter(|&&i| catalog.is_tail(i)).count();
    let coverage = 100.0 * seen.len() as f64 / catalog.len() as f64;
    let tail_coverage = if catalog.num_tail() == 0 {
        warn!("catalog has no tail items; tail coverage reported as 0");
        0.0
    } else {
        100.0 * tail_seen as f64 / catalog.num_tail() as f64
    };
    (coverage, tail_coverage)
}

pub fn tail_at_k(lists: &[Vec<usize>], catalog: &ItemCatalog, k: usize) -> f64 {
    if lists.is_empty() || k == 0 {
        return 0.0;
    }
    let sum: f64 = lists
        .iter()
        .map(|l| head_of(l, k).iter().filter(|&&i| catalog.is_tail(i)).count() as f64 / k as f64)
        .sum();
    100.0 * sum / lists.len() as f64
}

/// Maps a session prefix to one score per catalog item.
pub trait Scorer: Sync {
    fn score(&self, prefix: &[usize]) -> Result<Vec<f64>>;

    /// Items that must not be recommended for this prefix.
    fn exclusions(&self, _prefix: &[usize]) -> Vec<usize> {
        Vec::new()
    }
}

/// Produces top-K lists for a prefix.
pub trait Recommender: Sync {
    fn recommend(&self, prefix: &[usize], k: usize) -> Result<Vec<usize>>;

    /// One list per entry of `ks`.
    fn recommend_many(&self, prefix: &[usize], ks: &[usize]) -> Result<Vec<Vec<usize>>> {
        ks.iter().map(|&k| self.recommend(prefix, k)).collect()
    }
}

impl<S: Scorer> Recommender for S {
    fn recommend(&self, prefix: &[usize], k: usize) -> Result<Vec<usize>> {
        let scores = self.score(prefix)?;
        Ok(topk(&scores, k, &self.exclusions(prefix)))
    }

    /// Scores once; shorter lists are prefixes of the longest one.
    fn recommend_many(&self, prefix: &[usize], ks: &[usize]) -> Result<Vec<Vec<usize>>> {
        let max_k = ks.iter().copied().max().unwrap_or(0);
        let full = self.recommend(prefix, max_k)?;
        Ok(ks.iter().map(|&k| head_of(&full, k).to_vec()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub recall: f64,
    pub mrr: f64,
    pub coverage: f64,
    pub tail_coverage: f64,
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub sessions: usize,
    pub rows: Vec<MetricsAtK>,
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// `method,metric,K,value`, one row per metric and K.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,K,value\n");
        self.write_csv_rows(&mut out);
        out
    }

    pub fn write_csv_rows(&self, out: &mut String) {
        for r in &self.rows {
            for (name, v) in [
                ("recall", r.recall),
                ("mrr", r.mrr),
                ("coverage", r.coverage),
                ("tail_coverage", r.tail_coverage),
                ("tail", r.tail),
            ] {
                let _ = writeln!(out, "{},{name},{},{v}", self.method, r.k);
            }
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{} ({} sessions)\n", self.method, self.sessions);
        let _ = writeln!(
            out,
            "{:>4} {:>9} {:>9} {:>9} {:>14} {:>9}",
            "K", "Recall", "MRR", "Coverage", "Tail_Coverage", "Tail"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4} {:>9.2} {:>9.2} {:>9.2} {:>14.2} {:>9.2}",
                r.k, r.recall, r.mrr, r.coverage, r.tail_coverage, r.tail
            );
        }
        out
    }
}

fn normalize_ks(ks: &[usize]) -> Result<Vec<usize>> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::Config("cut-offs must be a non-empty list of positive integers".into()));
    }
    Ok(ks)
}

/// Computes all five metrics for each cut-off from precomputed lists.
pub fn metrics_from_lists(
    method: &str,
    lists_per_k: &[(usize, Vec<Vec<usize>>)],
    targets: &[usize],
    catalog: &ItemCatalog,
) -> MetricsReport {
    let rows = lists_per_k
        .iter()
        .map(|(k, lists)| {
            let (coverage, tail_coverage) = coverage_at_k(lists, catalog, *k);
            MetricsAtK {
                k: *k,
                recall: recall_at_k(lists, targets, *k),
                mrr: mrr_at_k(lists, targets, *k),
                coverage,
                tail_coverage,
                tail: tail_at_k(lists, catalog, *k),
            }
        })
        .collect();
    MetricsReport {
        method: method.to_string(),
        sessions: targets.len(),
        rows,
    }
}

/// Runs `recommender` on every pair and aggregates the metrics per cut-off.
///
/// Sessions are scored in parallel on the current rayon pool; results are
/// gathered in pair order, so the report does not depend on the thread count.
pub fn evaluate<R: Recommender + ?Sized>(
    method: &str,
    recommender: &R,
    pairs: &[Pair],
    catalog: &ItemCatalog,
    ks: &[usize],
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Data("no test pairs to evaluate".into()));
    }
    let ks = normalize_ks(ks)?;
    let per_pair: Vec<Vec<Vec<usize>>> = pairs
        .par_iter()
        .map(|p| recommender.recommend_many(&p.prefix, &ks))
        .collect::<Result<_>>()?;
    let lists_per_k: Vec<(usize, Vec<Vec<usize>>)> = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| (k, per_pair.iter().map(|lists| lists[j].clone()).collect()))
        .collect();
    let targets: Vec<usize> = pairs.iter().map(|p| p.target).collect();
    Ok(metrics_from_lists(method, &lists_per_k, &targets, catalog))
}

/// Lists with their source session attached, for callers that want them.
pub fn recommendation_lists<R: Recommender + ?Sized>(
    recommender: &R,
    pairs: &[Pair],
    k: usize,
) -> Result<Vec<RecommendationList>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(session, p)| {
            Ok(RecommendationList {
                items: recommender.recommend(&p.prefix, k)?,
                session,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(n: usize, n_head: usize) -> ItemCatalog {
        let frac = n_head as f64 / n as f64;
        ItemCatalog::from_counts((0..n).map(|k| (format!("i{k:03}"), (n - k) as u64)), frac).unwrap()
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk(&[0.1, 0.9, 0.5], 2, &[]), vec![1, 2]);
        assert_eq!(topk(&[1.0; 5], 3, &[]), vec![0, 1, 2]);
        assert_eq!(topk(&[0.1, 0.9, 0.5], 2, &[1]), vec![2, 0]);
        assert_eq!(topk(&[0.1, 0.9], 5, &[]), vec![1, 0]);
    }

    #[test]
    fn recall_and_mrr_closed_form() {
        // targets at ranks 1, 4 and 21
        let list: Vec<usize> = (0..25).collect();
        let lists = vec![list.clone(), list.clone(), list];
        let targets = [0, 3, 20];
        assert!((recall_at_k(&lists, &targets, 20) - 200.0 / 3.0).abs() < 1e-12);
        assert!((mrr_at_k(&lists, &targets, 20) - 100.0 * 1.25 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at_k(&lists, &[0, 0, 0], 20), 100.0);
        assert_eq!(mrr_at_k(&lists, &[0, 0, 0], 20), 100.0);
    }

    #[test]
    fn coverage_examples() {
        let cat = catalog(10, 2); // items 2..=9 tail
        let lists = vec![vec![1, 2], vec![3, 4]];
        let (c, _) = coverage_at_k(&lists, &cat, 2);
        assert!((c - 40.0).abs() < 1e-12);
        let (_, tc) = coverage_at_k(&[vec![7, 9]], &cat, 2);
        assert!((tc - 25.0).abs() < 1e-12);
        let repeated = vec![vec![1, 2]; 7];
        assert_eq!(coverage_at_k(&repeated, &cat, 2), coverage_at_k(&repeated[..1], &cat, 2));
    }

    #[test]
    fn no_tail_items_means_zero_tail_coverage() {
        let cat = ItemCatalog::from_counts([("a", 3), ("b", 2)], 0.9).unwrap();
        assert_eq!(cat.num_tail(), 0);
        assert_eq!(coverage_at_k(&[vec![0, 1]], &cat, 2).1, 0.0);
    }

    #[test]
    fn tail_examples() {
        let cat = catalog(40, 20); // 20..40 tail
        let mut a: Vec<usize> = (0..15).collect();
        a.extend(20..25);
        let mut b: Vec<usize> = (0..17).collect();
        b.extend(20..23);
        assert!((tail_at_k(&[a, b], &cat, 20) - 20.0).abs() < 1e-12);
        let heads: Vec<usize> = (0..20).collect();
        assert_eq!(tail_at_k(&[heads], &cat, 20), 0.0);
        let tails: Vec<usize> = (20..40).collect();
        assert_eq!(tail_at_k(&[tails], &cat, 20), 100.0);
    }

    struct OneHot(Vec<usize>);
    impl Recommender for OneHot {
        fn recommend(&self, prefix: &[usize], k: usize) -> Result<Vec<usize>> {
            // the prefix's first item encodes which pair this is
            let mut scores = vec![0.0; 30];
            scores[self.0[prefix[0]]] = 1.0;
            Ok(topk(&scores, k, &[]))
        }
    }

    struct Constant;
    impl Scorer for Constant {
        fn score(&self, _prefix: &[usize]) -> Result<Vec<f64>> {
            Ok((0..30).map(|i| -(i as f64)).collect())
        }
    }

    fn pairs(targets: &[usize]) -> Vec<Pair> {
        targets
            .iter()
            .enumerate()
            .map(|(i, &t)| Pair { prefix: vec![i], target: t })
            .collect()
    }

    #[test]
    fn perfect_and_constant_scorers() {
        let cat = catalog(30, 6);
        let targets = vec![4, 17, 29, 0];
        let ps = pairs(&targets);
        let rep = evaluate("oracle", &OneHot(targets.clone()), &ps, &cat, &DEFAULT_KS).unwrap();
        for r in &rep.rows {
            assert_eq!((r.recall, r.mrr), (100.0, 100.0));
        }
        let rep = evaluate("const", &Constant, &ps, &cat, &DEFAULT_KS).unwrap();
        for r in &rep.rows {
            assert!((r.coverage - 100.0 * r.k as f64 / 30.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let cat = catalog(30, 6);
        assert!(matches!(evaluate("c", &Constant, &[], &cat, &[20]), Err(Error::Data(_))));
        assert!(evaluate("c", &Constant, &pairs(&[1]), &cat, &[0]).is_err());
    }

    #[test]
    fn csv_has_five_rows_per_cutoff() {
        let cat = catalog(30, 6);
        let rep = evaluate("const", &Constant, &pairs(&[1, 2]), &cat, &[20]).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,metric,K,value");
        assert_eq!(lines.len(), 6);
        assert!(lines[1..].iter().all(|l| l.starts_with("const,") && l.split(',').nth(2) == Some("20")));
    }

    proptest! {
        #[test]
        fn topk_of_everything_is_a_descending_sort(scores in prop::collection::vec(-3i32..3, 1..40)) {
            let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
            let got = topk(&s, s.len(), &[]);
            let mut oracle: Vec<usize> = (0..s.len()).collect();
            // stable sort keeps ascending index among equal scores
            oracle.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
            prop_assert_eq!(got.clone(), oracle);
            for k in 1..=s.len() {
                prop_assert_eq!(&topk(&s, k, &[])[..], &got[..k]);
            }
        }

        #[test]
        fn metrics_are_monotone_and_order_free(
            seed_lists in prop::collection::vec((prop::collection::vec(0usize..25, 25), 0usize..25), 1..20)
        ) {
            let cat = catalog(25, 5);
            let lists: Vec<Vec<usize>> = seed_lists
                .iter()
                .map(|(s, _)| topk(&s.iter().map(|&x| x as f64).collect::<Vec<_>>(), 25, &[]))
                .collect();
            let targets: Vec<usize> = seed_lists.iter().map(|(_, t)| *t).collect();
            let mut prev = [0.0f64; 4];
            for k in 1..=25 {
                let (c, tc) = coverage_at_k(&lists, &cat, k);
                let cur = [recall_at_k(&lists, &targets, k), mrr_at_k(&lists, &targets, k), c, tc];
                for (a, b) in cur.iter().zip(&prev) {
                    prop_assert!(*a >= *b - 1e-12);
                }
                let t = tail_at_k(&lists, &cat, k);
                prop_assert!((0.0..=100.0).contains(&t));
                prev = cur;
            }
            let mut rl = lists.clone();
            let mut rt = targets.clone();
            rl.reverse();
            rt.reverse();
            prop_assert_eq!(recall_at_k(&rl, &rt, 10), recall_at_k(&lists, &targets, 10));
            prop_assert!((mrr_at_k(&rl, &rt, 10) - mrr_at_k(&lists, &targets, 10)).abs() < 1e-12);
            prop_assert_eq!(coverage_at_k(&rl, &cat, 10), coverage_at_k(&lists, &cat, 10));
            prop_assert!((tail_at_k(&rl, &cat, 10) - tail_at_k(&lists, &cat, 10)).abs() < 1e-12);
        }
    }
}
