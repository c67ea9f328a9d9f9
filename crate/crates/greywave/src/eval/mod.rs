//! Evaluation harness: detection/false-alarm rates, prediction-shift
//! MAE/RMSE through a kNN predictor, and the sweep protocol.

mod knn;
mod sweep;

pub use knn::{predict_knn, DEFAULT_K};
pub use sweep::{
    enumerate_cells, evaluate_cell, load_sweep_dataset, read_metric_rows, run_sweep, CellKey,
    DatasetRef, DetectorTuning, IntentSpec, MetricRow, SweepConfig, SWEEP_CSV_HEADER,
};

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{inject_attacks, AttackSpec};
use crate::data::{compute_item_stats, RatingMatrix, RatingMatrixBuilder, UserId, UserLabelSet};
use crate::detect::{detect, DetectionReport, EmConfig};
use crate::error::{Error, Result};
use crate::features::extract_all_features;
use crate::seeding::SeedMixer;
use crate::series::OrderingSet;
use crate::wavelet::WaveletSpec;

/// Result of one inject -> extract -> detect run scored against the
/// ground-truth labels.
#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub report: DetectionReport,
    pub labels: UserLabelSet,
}

/// Inject the attack into the genuine matrix, run the full feature and
/// clustering pipeline, and score the flagged set.
pub fn detection_experiment(
    genuine: &RatingMatrix,
    spec: &AttackSpec,
    wavelet: &WaveletSpec,
    levels: usize,
    em: &EmConfig,
) -> Result<DetectionOutcome> {
    let (attacked, labels) = inject_attacks(genuine, spec)?;
    let stats = compute_item_stats(&attacked)?;
    let orderings = OrderingSet::compute(&attacked, &stats);
    let features = extract_all_features(&attacked, &orderings, wavelet, levels)?;
    let report = detect(&features, em)?;
    let flagged = report.flagged_set();
    let dr = detection_rate(&flagged, labels.attackers())?;
    let far = false_alarm_rate(&flagged, labels.genuine())?;
    Ok(DetectionOutcome {
        detection_rate: dr,
        false_alarm_rate: far,
        report,
        labels,
    })
}

/// |D intersect A| / |A|
pub fn detection_rate(detected: &BTreeSet<UserId>, attackers: &BTreeSet<UserId>) -> Result<f64> {
    if attackers.is_empty() {
        return Err(Error::EmptyAttackerSet);
    }
    let hit = detected.intersection(attackers).count();
    Ok(hit as f64 / attackers.len() as f64)
}

/// |D intersect G| / |G|
pub fn false_alarm_rate(detected: &BTreeSet<UserId>, genuine: &BTreeSet<UserId>) -> Result<f64> {
    if genuine.is_empty() {
        return Err(Error::EmptyGenuineSet);
    }
    let hit = detected.intersection(genuine).count();
    Ok(hit as f64 / genuine.len() as f64)
}

/// Mean absolute error over (actual, predicted) pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let sum: f64 = pairs.iter().map(|&(a, p)| (a - p).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

/// Root mean squared error over (actual, predicted) pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let sum: f64 = pairs.iter().map(|&(a, p)| (a - p) * (a - p)).sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Hold out a fraction of genuine ratings, inject the attack into the
/// remaining training matrix, and score kNN predictions of the held-out
/// pairs. An attack size that rounds to zero attackers degenerates to the
/// clean baseline.
///
/// Every holdout choice keeps its user with at least one training rating so
/// each held-out pair stays predictable.
pub fn prediction_shift_experiment(
    genuine: &RatingMatrix,
    spec: &AttackSpec,
    holdout_fraction: f64,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must be in (0, 1), got {holdout_fraction}"
        )));
    }
    let mut all: Vec<(usize, usize, i32)> = genuine.iter_ratings().collect();
    let target = ((holdout_fraction * all.len() as f64).round() as usize).min(all.len());
    if target == 0 {
        return Err(Error::EmptyHoldout);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SeedMixer::new(seed).str("holdout").finish());
    for i in (1..all.len()).rev() {
        let j = rng.random_range(0..=i);
        all.swap(i, j);
    }
    let mut remaining: Vec<usize> = (0..genuine.n_users())
        .map(|u| genuine.user_ratings(u).len())
        .collect();
    let mut held_out = Vec::with_capacity(target);
    let mut kept = Vec::with_capacity(all.len() - target);
    for (u, i, r) in all {
        if held_out.len() < target && remaining[u] >= 2 {
            remaining[u] -= 1;
            held_out.push((u, i, r));
        } else {
            kept.push((u, i, r));
        }
    }
    if held_out.is_empty() {
        return Err(Error::EmptyHoldout);
    }

    let mut builder = RatingMatrixBuilder::new(genuine.scale());
    for (u, i, r) in kept {
        builder.add(genuine.user_id(u), genuine.item_id(i), r)?;
    }
    let train = builder.build();

    let model = if spec.attacker_count(train.n_users()) == 0 {
        train
    } else {
        inject_attacks(&train, spec)?.0
    };

    let pairs: Vec<(f64, f64)> = held_out
        .iter()
        .map(|&(u, i, r)| {
            let user = genuine.user_id(u);
            let item = genuine.item_id(i);
            let u_idx = model
                .user_index(user)
                .expect("held-out user keeps at least one training rating");
            let predicted = knn::predict_by_index(&model, u_idx, model.item_index(item), k);
            (r as f64, predicted)
        })
        .collect();
    Ok((mae(&pairs)?, rmse(&pairs)?))
}
