//! Synthetic genuine rating data for desk-scale experiments.
//!
//! Mimics the shape of public book/movie rating dumps: heavy-tailed item
//! popularity (users gravitate to a small popular head while the long tail
//! collects zero or one rating each), log-normal profile sizes with a few
//! power raters, and ratings driven by item quality, per-user bias, and a
//! per-user genre taste. The taste term gives neighborhoods real predictive
//! structure, so profiles that merely echo item means dilute rather than
//! reinforce a collaborative predictor.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{RatingMatrix, RatingMatrixBuilder, RatingScale};
use crate::error::{Error, Result};
use crate::seeding::SeedMixer;

/// Parameters of the synthetic genuine-profile generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    /// Catalog size; only items that receive a rating end up in the matrix.
    pub n_items: usize,
    pub seed: u64,
    /// Zipf exponent of item popularity.
    #[serde(default = "default_zipf_exponent")]
    pub zipf_exponent: f64,
    /// Median profile size (items rated per user).
    #[serde(default = "default_median_profile")]
    pub median_profile_size: f64,
    /// Log-normal spread of profile sizes.
    #[serde(default = "default_profile_spread")]
    pub profile_size_spread: f64,
    /// Noise around the item quality when rating.
    #[serde(default = "default_rating_noise")]
    pub rating_noise: f64,
    /// Spread of per-user rating bias.
    #[serde(default = "default_user_bias")]
    pub user_bias_std: f64,
    /// Number of item genres carrying user taste.
    #[serde(default = "default_genres")]
    pub genres: usize,
    /// Spread of the per-user, per-genre taste offsets.
    #[serde(default = "default_taste_std")]
    pub taste_std: f64,
    /// Upper bound on the per-user probability that an item pick is steered
    /// into a preferred genre instead of the global popularity head. Users
    /// draw their own tilt below this bound, skewed toward zero: most
    /// follow popularity, a minority explores its genres' tails.
    #[serde(default = "default_selection_tilt")]
    pub selection_tilt: f64,
    /// Fraction of users who bulk-rate: large profiles picked mostly
    /// uniformly across the catalog (shelf importers, promo raters).
    #[serde(default = "default_browser_fraction")]
    pub browser_fraction: f64,
}

fn default_zipf_exponent() -> f64 {
    1.0
}

fn default_median_profile() -> f64 {
    12.0
}

fn default_profile_spread() -> f64 {
    1.1
}

fn default_rating_noise() -> f64 {
    1.2
}

fn default_user_bias() -> f64 {
    0.7
}

fn default_genres() -> usize {
    12
}

fn default_taste_std() -> f64 {
    1.4
}

fn default_selection_tilt() -> f64 {
    0.6
}

fn default_browser_fraction() -> f64 {
    0.02
}

impl SyntheticConfig {
    pub fn new(n_users: usize, n_items: usize, seed: u64) -> Self {
        SyntheticConfig {
            n_users,
            n_items,
            seed,
            zipf_exponent: default_zipf_exponent(),
            median_profile_size: default_median_profile(),
            profile_size_spread: default_profile_spread(),
            rating_noise: default_rating_noise(),
            user_bias_std: default_user_bias(),
            genres: default_genres(),
            taste_std: default_taste_std(),
            selection_tilt: default_selection_tilt(),
            browser_fraction: default_browser_fraction(),
        }
    }
}

const MIN_PROFILE_SIZE: usize = 3;
const MAX_PROFILE_SIZE: usize = 400;

/// Generate a genuine rating matrix on the 1..10 scale.
pub fn generate_genuine(cfg: &SyntheticConfig) -> Result<RatingMatrix> {
    if cfg.n_users == 0 || cfg.n_items == 0 {
        return Err(Error::Config(
            "synthetic generator needs at least one user and one item".into(),
        ));
    }
    if cfg.genres == 0 {
        return Err(Error::Config("genre count must be at least 1".into()));
    }
    let scale = RatingScale::ONE_TO_TEN;
    let mut rng = ChaCha8Rng::seed_from_u64(SeedMixer::new(cfg.seed).str("synth").finish());

    // Popularity ranks are shuffled over item ids so id order carries no
    // popularity signal.
    let mut ranked: Vec<usize> = (0..cfg.n_items).collect();
    for i in (1..ranked.len()).rev() {
        let j = rng.random_range(0..=i);
        ranked.swap(i, j);
    }
    let mut weight = vec![0.0f64; cfg.n_items];
    for (rank, &item) in ranked.iter().enumerate() {
        weight[item] = 1.0 / ((rank + 1) as f64).powf(cfg.zipf_exponent);
    }
    let mut cumulative = vec![0.0f64; cfg.n_items];
    let mut acc = 0.0;
    for (i, &w) in weight.iter().enumerate() {
        acc += w;
        cumulative[i] = acc;
    }
    let total_weight = acc;

    let quality_noise = Normal::new(0.0, 1.5).expect("valid std");
    let quality: Vec<f64> = (0..cfg.n_items)
        .map(|_| {
            let q: f64 = 6.5 + quality_noise.sample(&mut rng);
            q.clamp(1.0, 10.0)
        })
        .collect();
    let genre: Vec<usize> = (0..cfg.n_items)
        .map(|_| rng.random_range(0..cfg.genres))
        .collect();

    // Per-genre popularity prefix sums for taste-steered picks.
    let mut genre_items: Vec<Vec<usize>> = vec![Vec::new(); cfg.genres];
    for (item, &g) in genre.iter().enumerate() {
        genre_items[g].push(item);
    }
    let genre_cumulative: Vec<Vec<f64>> = genre_items
        .iter()
        .map(|items| {
            let mut acc = 0.0;
            items
                .iter()
                .map(|&i| {
                    acc += weight[i];
                    acc
                })
                .collect()
        })
        .collect();

    let size_dist = LogNormal::new(cfg.median_profile_size.ln(), cfg.profile_size_spread)
        .map_err(|e| Error::Config(format!("bad profile size parameters: {e}")))?;
    let bias_dist = Normal::new(0.0, cfg.user_bias_std)
        .map_err(|e| Error::Config(format!("bad user bias parameters: {e}")))?;
    let taste_dist = Normal::new(0.0, cfg.taste_std)
        .map_err(|e| Error::Config(format!("bad taste parameters: {e}")))?;
    let rating_dist = Normal::new(0.0, cfg.rating_noise)
        .map_err(|e| Error::Config(format!("bad rating noise parameters: {e}")))?;

    let mut builder = RatingMatrixBuilder::new(scale);
    let id_width = (cfg.n_users.max(cfg.n_items) as f64).log10().ceil() as usize + 1;
    for u in 0..cfg.n_users {
        let user = format!("u{u:0id_width$}");
        let bias = bias_dist.sample(&mut rng);
        let taste: Vec<f64> = (0..cfg.genres).map(|_| taste_dist.sample(&mut rng)).collect();
        // Favorite genres: softmax over the taste offsets.
        let taste_weights: Vec<f64> = taste.iter().map(|&t| t.exp()).collect();
        let taste_total: f64 = taste_weights.iter().sum();
        // The fourth power skews tilts hard toward zero: most users follow
        // popularity, a small minority digs into its genres' tails.
        let tilt = cfg.selection_tilt * rng.random_range(0.0f64..1.0).powi(4);
        // Bulk raters pick mostly uniformly and rate several times more
        // items than their base size.
        let (uniform_share, size_boost) = if cfg.browser_fraction > 0.0
            && rng.random_bool(cfg.browser_fraction.min(1.0))
        {
            (rng.random_range(0.5..0.95), rng.random_range(3.0..8.0))
        } else {
            (0.0, 1.0)
        };

        let raw_size = (size_dist.sample(&mut rng) * size_boost).round() as usize;
        let size = raw_size.clamp(MIN_PROFILE_SIZE, MAX_PROFILE_SIZE).min(cfg.n_items);

        let mut chosen: HashSet<usize> = HashSet::with_capacity(size);
        let mut attempts = 0usize;
        while chosen.len() < size && attempts < 60 * size {
            attempts += 1;
            if uniform_share > 0.0 && rng.random_bool(uniform_share) {
                chosen.insert(rng.random_range(0..cfg.n_items));
                continue;
            }
            let item = if tilt > 0.0 && rng.random_bool(tilt) {
                let mut pick = rng.random_range(0.0..taste_total);
                let mut g = cfg.genres - 1;
                for (idx, &w) in taste_weights.iter().enumerate() {
                    if pick < w {
                        g = idx;
                        break;
                    }
                    pick -= w;
                }
                let cum = &genre_cumulative[g];
                if cum.is_empty() {
                    continue;
                }
                let total = *cum.last().expect("non-empty");
                let draw = rng.random_range(0.0..total);
                let pos = match cum.binary_search_by(|c| c.total_cmp(&draw)) {
                    Ok(i) => i + 1,
                    Err(i) => i,
                }
                .min(cum.len() - 1);
                genre_items[g][pos]
            } else {
                let draw = rng.random_range(0.0..total_weight);
                match cumulative.binary_search_by(|c| c.total_cmp(&draw)) {
                    Ok(i) => i + 1,
                    Err(i) => i,
                }
                .min(cfg.n_items - 1)
            };
            chosen.insert(item);
        }
        // Popularity-weighted sampling can stall on tiny catalogs; top up
        // uniformly.
        let mut fallback = 0;
        while chosen.len() < size {
            chosen.insert(fallback % cfg.n_items);
            fallback += 1;
        }

        let mut items: Vec<usize> = chosen.into_iter().collect();
        items.sort_unstable();
        for item in items {
            let value =
                quality[item] + bias + taste[genre[item]] + rating_dist.sample(&mut rng);
            builder.add(&user, &format!("i{item:0id_width$}"), scale.quantize(value))?;
        }
    }
    Ok(builder.build())
}
