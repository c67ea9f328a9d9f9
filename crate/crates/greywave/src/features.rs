//! Amplitude-domain statistics of wavelet approximations.
//!
//! Fifteen scalar statistics summarize each user's three rating series
//! after the wavelet stage. Skewness and kurtosis are kept as raw third and
//! fourth moments, the root-mean-square amplitude takes absolute values
//! before the square roots (approximations can be negative), and every
//! ratio with a zero denominator is defined as 0 so degenerate profiles
//! never inject non-finite values into clustering.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::series::{build_series, OrderingSet, SeriesKind};
use crate::wavelet::{dwt_multilevel, WaveletSpec};

pub const FEATURE_COUNT: usize = 15;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "min",
    "max",
    "mean",
    "peak",
    "rms",
    "rms_amplitude",
    "abs_mean",
    "variance",
    "skewness",
    "kurtosis",
    "shape_factor",
    "crest_factor",
    "impulse_factor",
    "clearance_factor",
    "kurtosis_value",
];

/// The 15 amplitude-domain statistics of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// max |x|
    pub peak: f64,
    pub rms: f64,
    /// ((1/N) sum sqrt|x|)^2
    pub rms_amplitude: f64,
    pub abs_mean: f64,
    /// rms^2 - mean^2
    pub variance: f64,
    /// raw third moment (1/N) sum x^3
    pub skewness: f64,
    /// raw fourth moment (1/N) sum x^4
    pub kurtosis: f64,
    /// rms / abs_mean
    pub shape_factor: f64,
    /// peak / rms
    pub crest_factor: f64,
    /// peak / abs_mean
    pub impulse_factor: f64,
    /// peak / rms_amplitude
    pub clearance_factor: f64,
    /// kurtosis / rms^4
    pub kurtosis_value: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.min,
            self.max,
            self.mean,
            self.peak,
            self.rms,
            self.rms_amplitude,
            self.abs_mean,
            self.variance,
            self.skewness,
            self.kurtosis,
            self.shape_factor,
            self.crest_factor,
            self.impulse_factor,
            self.clearance_factor,
            self.kurtosis_value,
        ]
    }
}

fn ratio(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

/// Compute the 15 statistics of a non-empty signal.
pub fn amplitude_features(x: &[f64]) -> Result<FeatureVector> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = x.len() as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_cube = 0.0;
    let mut sum_quad = 0.0;
    let mut sum_sqrt_abs = 0.0;
    for &v in x {
        min = min.min(v);
        max = max.max(v);
        sum += v;
        sum_abs += v.abs();
        let sq = v * v;
        sum_sq += sq;
        sum_cube += sq * v;
        sum_quad += sq * sq;
        sum_sqrt_abs += v.abs().sqrt();
    }
    let mean = sum / n;
    let abs_mean = sum_abs / n;
    let rms = (sum_sq / n).sqrt();
    let rms_amplitude = {
        let m = sum_sqrt_abs / n;
        m * m
    };
    let peak = min.abs().max(max.abs());
    let variance = rms * rms - mean * mean;
    let skewness = sum_cube / n;
    let kurtosis = sum_quad / n;
    Ok(FeatureVector {
        min,
        max,
        mean,
        peak,
        rms,
        rms_amplitude,
        abs_mean,
        variance,
        skewness,
        kurtosis,
        shape_factor: ratio(rms, abs_mean),
        crest_factor: ratio(peak, rms),
        impulse_factor: ratio(peak, abs_mean),
        clearance_factor: ratio(peak, rms_amplitude),
        kurtosis_value: ratio(kurtosis, rms * rms * rms * rms),
    })
}

/// Feature vectors of one user over the three series kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureSet {
    pub user: UserId,
    pub rating_deviation: FeatureVector,
    pub popularity: FeatureVector,
    pub novelty: FeatureVector,
}

impl UserFeatureSet {
    pub fn get(&self, kind: SeriesKind) -> &FeatureVector {
        match kind {
            SeriesKind::RatingDeviation => &self.rating_deviation,
            SeriesKind::Popularity => &self.popularity,
            SeriesKind::Novelty => &self.novelty,
        }
    }
}

/// Series -> wavelet -> amplitude statistics for one user. Only the deepest
/// approximation feeds the statistics; detail coefficients are discarded.
pub fn extract_user_features(
    m: &RatingMatrix,
    user: &str,
    orderings: &OrderingSet,
    wavelet: &WaveletSpec,
    levels: usize,
) -> Result<UserFeatureSet> {
    let mut vectors = [None, None, None];
    for (slot, kind) in SeriesKind::ALL.iter().enumerate() {
        let series = build_series(m, user, orderings.get(*kind))?;
        let transformed = dwt_multilevel(&series.to_f64(), wavelet, levels)?;
        vectors[slot] = Some(amplitude_features(transformed.final_approximation())?);
    }
    Ok(UserFeatureSet {
        user: user.to_string(),
        rating_deviation: vectors[0].take().expect("filled above"),
        popularity: vectors[1].take().expect("filled above"),
        novelty: vectors[2].take().expect("filled above"),
    })
}

/// Feature sets for every user, in user-id order.
pub fn extract_all_features(
    m: &RatingMatrix,
    orderings: &OrderingSet,
    wavelet: &WaveletSpec,
    levels: usize,
) -> Result<Vec<UserFeatureSet>> {
    (0..m.n_users())
        .into_par_iter()
        .map(|u| extract_user_features(m, m.user_id(u), orderings, wavelet, levels))
        .collect()
}

/// Export: `user_id,kind,f1..f15`, kind in {rd, p, n}.
pub fn write_features_csv(sets: &[UserFeatureSet], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header: Vec<String> = (1..=FEATURE_COUNT).map(|i| format!("f{i}")).collect();
    writeln!(out, "user_id,kind,{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for set in sets {
        for kind in SeriesKind::ALL {
            let values: Vec<String> = set
                .get(kind)
                .as_array()
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            writeln!(out, "{},{},{}", set.user, kind.code(), values.join(","))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
