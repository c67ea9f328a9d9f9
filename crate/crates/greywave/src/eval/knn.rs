//! User-based kNN rating predictor with Pearson correlation over co-rated
//! items.
//!
//! Neighbor pairs need at least two co-rated items; prediction is the
//! mean-centered weighted deviation over the top-k most correlated
//! neighbors who rated the item, falling back to item mean, user mean and
//! finally system mean, clamped to the rating scale.

use crate::data::RatingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 20;
const MIN_CO_RATINGS: usize = 2;

/// Pearson correlation of two users over their co-rated items, with means
/// taken over the co-rated subset. `None` when fewer than two co-ratings
/// exist or either side has zero variance on them.
fn pearson_co_rated(m: &RatingMatrix, u: usize, v: usize) -> Option<f64> {
    let row_u = m.user_ratings(u);
    let row_v = m.user_ratings(v);
    let mut shared: Vec<(f64, f64)> = Vec::new();
    let (mut x, mut y) = (0usize, 0usize);
    while x < row_u.len() && y < row_v.len() {
        match row_u[x].0.cmp(&row_v[y].0) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                shared.push((row_u[x].1 as f64, row_v[y].1 as f64));
                x += 1;
                y += 1;
            }
        }
    }
    if shared.len() < MIN_CO_RATINGS {
        return None;
    }
    let n = shared.len() as f64;
    let mean_u = shared.iter().map(|&(a, _)| a).sum::<f64>() / n;
    let mean_v = shared.iter().map(|&(_, b)| b).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_u = 0.0;
    let mut var_v = 0.0;
    for &(a, b) in &shared {
        let da = a - mean_u;
        let db = b - mean_v;
        cov += da * db;
        var_u += da * da;
        var_v += db * db;
    }
    if var_u == 0.0 || var_v == 0.0 {
        return None;
    }
    Some(cov / (var_u.sqrt() * var_v.sqrt()))
}

fn user_mean(m: &RatingMatrix, u: usize) -> Option<f64> {
    let row = m.user_ratings(u);
    if row.is_empty() {
        return None;
    }
    Some(row.iter().map(|&(_, r)| r as f64).sum::<f64>() / row.len() as f64)
}

fn item_mean(m: &RatingMatrix, i: usize) -> Option<f64> {
    let raters = m.item_raters(i);
    if raters.is_empty() {
        return None;
    }
    let sum: f64 = raters
        .iter()
        .map(|&u| m.rating_at(u as usize, i).expect("rater has rating") as f64)
        .sum();
    Some(sum / raters.len() as f64)
}

fn system_mean(m: &RatingMatrix) -> f64 {
    if m.n_ratings() == 0 {
        return 0.0;
    }
    let sum: f64 = m.iter_ratings().map(|(_, _, r)| r as f64).sum();
    sum / m.n_ratings() as f64
}

fn clamp_to_scale(m: &RatingMatrix, value: f64) -> f64 {
    value.clamp(m.scale().min as f64, m.scale().max as f64)
}

pub(crate) fn predict_by_index(m: &RatingMatrix, u: usize, item: Option<usize>, k: usize) -> f64 {
    let mean_u = user_mean(m, u);

    if let Some(i) = item {
        // Candidate neighbors are exactly the other raters of the item.
        let mut neighbors: Vec<(f64, u32)> = m
            .item_raters(i)
            .iter()
            .filter(|&&v| v as usize != u)
            .filter_map(|&v| pearson_co_rated(m, u, v as usize).map(|w| (w, v)))
            .collect();
        neighbors.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        neighbors.truncate(k);

        let denom: f64 = neighbors.iter().map(|&(w, _)| w.abs()).sum();
        if denom > 0.0 {
            let mean_u = mean_u.expect("predicting for a user with ratings");
            let mut num = 0.0;
            for &(w, v) in &neighbors {
                let r_vi = m.rating_at(v as usize, i).expect("neighbor rated item") as f64;
                let mean_v = user_mean(m, v as usize).expect("neighbor has ratings");
                num += w * (r_vi - mean_v);
            }
            return clamp_to_scale(m, mean_u + num / denom);
        }
        if let Some(mean_i) = item_mean(m, i) {
            return clamp_to_scale(m, mean_i);
        }
    }
    if let Some(mean_u) = mean_u {
        return clamp_to_scale(m, mean_u);
    }
    clamp_to_scale(m, system_mean(m))
}

/// Predict one user's rating of one item.
pub fn predict_knn(m: &RatingMatrix, user: &str, item: &str, k: usize) -> Result<f64> {
    let u = m
        .user_index(user)
        .ok_or_else(|| Error::UnknownUser(user.into()))?;
    Ok(predict_by_index(m, u, m.item_index(item), k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RatingMatrixBuilder, RatingScale};

    fn matrix(rows: &[(&str, &str, i32)]) -> RatingMatrix {
        let mut b = RatingMatrixBuilder::new(RatingScale::ONE_TO_TEN);
        for &(u, i, r) in rows {
            b.add(u, i, r).unwrap();
        }
        b.build()
    }

    #[test]
    fn single_perfect_neighbor_with_equal_means() {
        // u and v correlate perfectly on {i1, i2} and share mean 6;
        // prediction for i3 equals v's rating of it.
        let m = matrix(&[
            ("u", "i1", 4),
            ("u", "i2", 8),
            ("v", "i1", 2),
            ("v", "i2", 8),
            ("v", "i3", 8),
        ]);
        let p = predict_knn(&m, "u", "i3", 20).unwrap();
        assert!((p - 8.0).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn hand_computed_two_neighbor_prediction() {
        // Both neighbors correlate +1 with u over {i1, i2}; their centered
        // deviations on i3 are 4/3 and -5/3, so the prediction is
        // 5 + (4/3 - 5/3) / 2 = 29/6.
        let m = matrix(&[
            ("u", "i1", 4),
            ("u", "i2", 6),
            ("v", "i1", 5),
            ("v", "i2", 7),
            ("v", "i3", 8),
            ("w", "i1", 2),
            ("w", "i2", 9),
            ("w", "i3", 3),
        ]);
        let p = predict_knn(&m, "u", "i3", 20).unwrap();
        assert!((p - 29.0 / 6.0).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn cold_user_falls_back_to_item_mean() {
        // u co-rates nothing (single rating, below the co-rating minimum).
        let m = matrix(&[
            ("u", "i1", 5),
            ("v", "i2", 7),
            ("w", "i2", 9),
        ]);
        let p = predict_knn(&m, "u", "i2", 20).unwrap();
        assert!((p - 8.0).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn unknown_item_falls_back_to_user_mean() {
        let m = matrix(&[("u", "i1", 4), ("u", "i2", 8)]);
        let p = predict_knn(&m, "u", "nope", 20).unwrap();
        assert!((p - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_user_is_an_error() {
        let m = matrix(&[("u", "i1", 4)]);
        assert!(matches!(
            predict_knn(&m, "ghost", "i1", 20),
            Err(Error::UnknownUser(_))
        ));
    }

    #[test]
    fn prediction_is_clamped() {
        // Neighbor deviations can push past the scale; clamp keeps it legal.
        let m = matrix(&[
            ("u", "i1", 9),
            ("u", "i2", 10),
            ("v", "i1", 8),
            ("v", "i2", 9),
            ("v", "i3", 10),
        ]);
        let p = predict_knn(&m, "u", "i3", 20).unwrap();
        assert!(p <= 10.0);
    }
}
