//! Item orderings (rating deviation, novelty, popularity) and the ternary
//! rating series built from them.
//!
//! Each user profile becomes three signals over {-1, 0, +1}: walk the item
//! universe in score order and emit +1 at the first rated item of a rated
//! stretch, -1 at the first unrated item of an unrated stretch, and 0
//! otherwise. The interleaved zeros keep consecutive extremes apart, which
//! the wavelet stage expects.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ItemStats, RatingMatrix, UserId};
use crate::error::{Error, Result};

/// The three item-ordering / series flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    RatingDeviation,
    Popularity,
    Novelty,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 3] = [
        SeriesKind::RatingDeviation,
        SeriesKind::Popularity,
        SeriesKind::Novelty,
    ];

    /// Short code used in CSV exports.
    pub fn code(&self) -> &'static str {
        match self {
            SeriesKind::RatingDeviation => "rd",
            SeriesKind::Popularity => "p",
            SeriesKind::Novelty => "n",
        }
    }
}

/// A permutation of the item universe, sorted by score descending with ties
/// broken by item id ascending.
///
/// Item indices refer to the matrix the ordering was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemOrdering {
    kind: SeriesKind,
    scores: Vec<f64>,
    order: Vec<u32>,
}

impl ItemOrdering {
    /// Build an ordering from per-item scores (indexed like the matrix
    /// items). Items are already id-sorted in the matrix, so index order is
    /// id order.
    pub fn from_scores(kind: SeriesKind, scores: Vec<f64>) -> Self {
        let mut order: Vec<u32> = (0..scores.len() as u32).collect();
        order.sort_by(|&a, &b| {
            scores[b as usize]
                .total_cmp(&scores[a as usize])
                .then(a.cmp(&b))
        });
        ItemOrdering { kind, scores, order }
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Debug export: `item_id,score,rank` sorted by rank.
    pub fn write_csv(&self, m: &RatingMatrix, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "item_id,score,rank").map_err(|e| Error::io(path, e))?;
        for (rank, &item) in self.order.iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                m.item_id(item as usize),
                self.scores[item as usize],
                rank + 1
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Rating deviation of each item: the mean absolute deviation of its ratings
/// from the item mean. Items without raters score 0.
pub fn compute_rdoi(m: &RatingMatrix, stats: &ItemStats) -> ItemOrdering {
    let mut sum_dev = vec![0.0f64; m.n_items()];
    for (_, i, r) in m.iter_ratings() {
        sum_dev[i] += (r as f64 - stats.item_mean(i)).abs();
    }
    let scores: Vec<f64> = sum_dev
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let n = stats.rater_count(i);
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        })
        .collect();
    ItemOrdering::from_scores(SeriesKind::RatingDeviation, scores)
}

/// Popularity of each item: its rater count.
pub fn compute_poi(stats: &ItemStats) -> ItemOrdering {
    let scores: Vec<f64> = stats.rater_counts().iter().map(|&c| c as f64).collect();
    ItemOrdering::from_scores(SeriesKind::Popularity, scores)
}

fn jaccard_from_counts(count_i: usize, count_j: usize, co: u32) -> f64 {
    let union = count_i + count_j - co as usize;
    if union == 0 {
        0.0
    } else {
        co as f64 / union as f64
    }
}

/// Jaccard similarity of the rater sets of two items; 0 when both are empty.
pub fn jaccard_similarity(m: &RatingMatrix, item_a: &str, item_b: &str) -> Result<f64> {
    let a = m
        .item_index(item_a)
        .ok_or_else(|| Error::UnknownItem(item_a.into()))?;
    let b = m
        .item_index(item_b)
        .ok_or_else(|| Error::UnknownItem(item_b.into()))?;
    Ok(jaccard_by_index(m, a, b))
}

pub(crate) fn jaccard_by_index(m: &RatingMatrix, a: usize, b: usize) -> f64 {
    let ra = m.item_raters(a);
    let rb = m.item_raters(b);
    if ra.is_empty() && rb.is_empty() {
        return 0.0;
    }
    // Sorted-list intersection.
    let mut co = 0u32;
    let (mut x, mut y) = (0usize, 0usize);
    while x < ra.len() && y < rb.len() {
        match ra[x].cmp(&rb[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                co += 1;
                x += 1;
                y += 1;
            }
        }
    }
    jaccard_from_counts(ra.len(), rb.len(), co)
}

fn pair_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

/// Novelty of each item: for every rater u of item i, the mean
/// dissimilarity `1 - simi(i, j)` of i to the other items in u's profile;
/// NoI_i averages those per-user values over i's raters. Degenerate
/// profiles (one rated item) contribute 0.
///
/// Co-rating counts between every pair of items appearing together in some
/// profile are precomputed, making each similarity lookup O(1).
pub fn compute_noi(m: &RatingMatrix) -> ItemOrdering {
    let mut co: HashMap<u64, u32> = HashMap::new();
    for u in 0..m.n_users() {
        let row = m.user_ratings(u);
        for x in 0..row.len() {
            for y in x + 1..row.len() {
                *co.entry(pair_key(row[x].0, row[y].0)).or_insert(0) += 1;
            }
        }
    }

    // Per-user novelty of each rated item, computed independently per user
    // and then accumulated in user order so results do not depend on the
    // parallel schedule.
    let per_user: Vec<Vec<(u32, f64)>> = (0..m.n_users())
        .into_par_iter()
        .map(|u| {
            let row = m.user_ratings(u);
            if row.len() < 2 {
                return row.iter().map(|&(i, _)| (i, 0.0)).collect();
            }
            let denom = (row.len() - 1) as f64;
            row.iter()
                .map(|&(i, _)| {
                    let count_i = m.item_raters(i as usize).len();
                    let mut sim_sum = 0.0;
                    for &(j, _) in row {
                        if j == i {
                            continue;
                        }
                        let co_ij = co.get(&pair_key(i, j)).copied().unwrap_or(0);
                        sim_sum +=
                            jaccard_from_counts(count_i, m.item_raters(j as usize).len(), co_ij);
                    }
                    (i, 1.0 - sim_sum / denom)
                })
                .collect()
        })
        .collect();

    let mut sums = vec![0.0f64; m.n_items()];
    for contributions in &per_user {
        for &(i, v) in contributions {
            sums[i as usize] += v;
        }
    }
    let scores: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let n = m.item_raters(i).len();
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        })
        .collect();
    ItemOrdering::from_scores(SeriesKind::Novelty, scores)
}

/// One user's ternary signal under one item ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingSeries {
    user: UserId,
    kind: SeriesKind,
    values: Vec<i8>,
}

impl RatingSeries {
    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Debug export: `rank,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "rank,value").map_err(|e| Error::io(path, e))?;
        for (rank, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", rank + 1, v).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Encode one user's rated/unrated pattern along an ordering.
pub fn build_series(m: &RatingMatrix, user: &str, ordering: &ItemOrdering) -> Result<RatingSeries> {
    let u = m
        .user_index(user)
        .ok_or_else(|| Error::UnknownUser(user.into()))?;
    let mut rated = vec![false; m.n_items()];
    for &(i, _) in m.user_ratings(u) {
        rated[i as usize] = true;
    }
    let mut values = Vec::with_capacity(ordering.len());
    let mut prev: i8 = 0;
    for (t, &item) in ordering.order().iter().enumerate() {
        let v = if rated[item as usize] {
            if t == 0 || prev != 1 {
                1
            } else {
                0
            }
        } else if t == 0 || prev != -1 {
            -1
        } else {
            0
        };
        values.push(v);
        prev = v;
    }
    Ok(RatingSeries {
        user: user.to_string(),
        kind: ordering.kind(),
        values,
    })
}

/// The three orderings every detection run shares.
#[derive(Debug, Clone)]
pub struct OrderingSet {
    pub rating_deviation: ItemOrdering,
    pub popularity: ItemOrdering,
    pub novelty: ItemOrdering,
}

impl OrderingSet {
    pub fn compute(m: &RatingMatrix, stats: &ItemStats) -> Self {
        OrderingSet {
            rating_deviation: compute_rdoi(m, stats),
            popularity: compute_poi(stats),
            novelty: compute_noi(m),
        }
    }

    pub fn get(&self, kind: SeriesKind) -> &ItemOrdering {
        match kind {
            SeriesKind::RatingDeviation => &self.rating_deviation,
            SeriesKind::Popularity => &self.popularity,
            SeriesKind::Novelty => &self.novelty,
        }
    }
}
