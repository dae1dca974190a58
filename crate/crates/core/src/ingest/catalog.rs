use std::collections::HashMap;

use crate::error::{Error, Result};

/// Number of head items for a catalog of `n` items, `⌈fraction·n⌉`.
///
/// The product is nudged down by 1e-9 before the ceiling so that values like
/// `0.7 * 10 = 7.000000000000001` do not round up to 8.
pub fn head_count(n: usize, head_fraction: f64) -> usize {
    let raw = (head_fraction * n as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(n)
}

/// Splits items into head and tail by click count.
///
/// The top `⌈head_fraction·n⌉` items by count are head; ties are broken by
/// ascending index. Returns `is_tail` per item.
pub fn pareto_split(click_count: &[u64], head_fraction: f64) -> Result<Vec<bool>> {
    if click_count.len() < 2 {
        return Err(Error::Data(format!(
            "pareto split needs at least 2 items, got {}",
            click_count.len()
        )));
    }
    if !(head_fraction > 0.0 && head_fraction < 1.0) {
        return Err(Error::Config(format!(
            "head_fraction must lie in (0, 1), got {head_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..click_count.len()).collect();
    order.sort_by(|&a, &b| click_count[b].cmp(&click_count[a]).then(a.cmp(&b)));
    let mut is_tail = vec![true; click_count.len()];
    for &i in &order[..head_count(click_count.len(), head_fraction)] {
        is_tail[i] = false;
    }
    Ok(is_tail)
}

/// Dense item indexing with click counts and the head/tail partition.
///
/// Indices are assigned in ascending item-id order, so "ascending index" and
/// "ascending item id" are the same tie-break everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    index_of: HashMap<String, usize>,
    id_of: Vec<String>,
    click_count: Vec<u64>,
    is_tail: Vec<bool>,
    head_fraction: f64,
}

impl ItemCatalog {
    /// Builds a catalog from `(item_id, clicks)` pairs in any order.
    pub fn from_counts<I, S>(counts: I, head_fraction: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut pairs: Vec<(String, u64)> = counts.into_iter().map(|(s, c)| (s.into(), c)).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Data("duplicate item id in catalog".into()));
        }
        let (ids, counts): (Vec<String>, Vec<u64>) = pairs.into_iter().unzip();
        let is_tail = pareto_split(&counts, head_fraction)?;
        Self::from_parts(ids, counts, is_tail, head_fraction)
    }

    /// Reassembles a catalog from stored columns, validating the invariants.
    pub fn from_parts(
        id_of: Vec<String>,
        click_count: Vec<u64>,
        is_tail: Vec<bool>,
        head_fraction: f64,
    ) -> Result<Self> {
        let n = id_of.len();
        if n < 2 {
            return Err(Error::Data(format!("catalog needs at least 2 items, got {n}")));
        }
        if click_count.len() != n || is_tail.len() != n {
            return Err(Error::Format("catalog columns have different lengths".into()));
        }
        if !(head_fraction > 0.0 && head_fraction < 1.0) {
            return Err(Error::Format(format!("invalid head fraction {head_fraction}")));
        }
        if id_of.iter().any(String::is_empty) {
            return Err(Error::Format("empty item id in catalog".into()));
        }
        if id_of.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("catalog ids are not strictly ascending".into()));
        }
        let heads = is_tail.iter().filter(|t| !**t).count();
        if heads != head_count(n, head_fraction) {
            return Err(Error::Format(format!(
                "catalog marks {heads} head items, expected {}",
                head_count(n, head_fraction)
            )));
        }
        let index_of = id_of.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(ItemCatalog {
            index_of,
            id_of,
            click_count,
            is_tail,
            head_fraction,
        })
    }

    pub fn len(&self) -> usize {
        self.id_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_of.is_empty()
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.index_of.get(item_id).copied()
    }

    pub fn id_of(&self, index: usize) -> &str {
        &self.id_of[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.id_of
    }

    pub fn click_count(&self) -> &[u64] {
        &self.click_count
    }

    pub fn is_tail(&self, index: usize) -> bool {
        self.is_tail[index]
    }

    pub fn tail_flags(&self) -> &[bool] {
        &self.is_tail
    }

    pub fn head_fraction(&self) -> f64 {
        self.head_fraction
    }

    pub fn num_head(&self) -> usize {
        self.is_tail.iter().filter(|t| !**t).count()
    }

    pub fn num_tail(&self) -> usize {
        self.len() - self.num_head()
    }
}
