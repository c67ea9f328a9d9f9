//! Synthetic attack profiles: the eight classic shilling models with push,
//! nuke, and grey target ratings, plus injection into a genuine matrix with
//! ground-truth labels.
//!
//! Grey profiles reuse the nuke pattern for selected and filler ratings and
//! change only the target rating, treating a grey attack as a hidden
//! demotion. Gaussian filler draws are rounded to the nearest integer and
//! clamped to the rating scale.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    compute_item_stats, ItemId, ItemStats, RatingMatrix, RatingMatrixBuilder, RatingScale,
    UserLabelSet,
};
use crate::error::{Error, Result};
use crate::seeding::SeedMixer;

/// Reserved prefix for injected profiles; loaders never produce ids with it,
/// and injection refuses genuine matrices that contain it.
pub const ATTACKER_ID_PREFIX: &str = "attacker::";

/// Number of popular selected items in the bandwagon models.
pub const BANDWAGON_SELECTED: usize = 10;
/// Number of top-popularity selected items in the segment model.
pub const SEGMENT_SELECTED: usize = 5;
/// Number of single-rater selected items in the reverse bandwagon model.
pub const REVERSE_BANDWAGON_SELECTED: usize = 10;

pub const DEFAULT_POPULARITY_THRESHOLD: u32 = 200;
pub const DEFAULT_AOP_TOP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttackModel {
    Aop,
    Random,
    Average,
    BandwagonAverage,
    BandwagonRandom,
    Segment,
    ReverseBandwagon,
    LoveHate,
}

impl AttackModel {
    pub const ALL: [AttackModel; 8] = [
        AttackModel::Aop,
        AttackModel::Random,
        AttackModel::Average,
        AttackModel::BandwagonAverage,
        AttackModel::BandwagonRandom,
        AttackModel::Segment,
        AttackModel::ReverseBandwagon,
        AttackModel::LoveHate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackModel::Aop => "aop",
            AttackModel::Random => "random",
            AttackModel::Average => "average",
            AttackModel::BandwagonAverage => "bandwagon-average",
            AttackModel::BandwagonRandom => "bandwagon-random",
            AttackModel::Segment => "segment",
            AttackModel::ReverseBandwagon => "reverse-bandwagon",
            AttackModel::LoveHate => "love-hate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttackIntent {
    Push,
    Nuke,
    Grey,
}

impl AttackIntent {
    pub fn name(&self) -> &'static str {
        match self {
            AttackIntent::Push => "push",
            AttackIntent::Nuke => "nuke",
            AttackIntent::Grey => "grey",
        }
    }
}

/// Full parameterization of one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub model: AttackModel,
    pub intent: AttackIntent,
    /// Target rating for grey intent; required iff `intent` is grey.
    #[serde(default)]
    pub grey_rating: Option<i32>,
    /// Attackers as a fraction of the genuine user count.
    pub attack_size: f64,
    /// Filler items as a fraction of the item universe.
    pub filler_size: f64,
    /// Fraction of the most popular items AOP fillers are drawn from;
    /// required iff `model` is AOP.
    #[serde(default)]
    pub aop_top_fraction: Option<f64>,
    /// Minimum rater count for an item to qualify as "popular".
    #[serde(default = "default_popularity_threshold")]
    pub popularity_threshold: u32,
    pub seed: u64,
}

fn default_popularity_threshold() -> u32 {
    DEFAULT_POPULARITY_THRESHOLD
}

impl AttackSpec {
    pub fn validate(&self, scale: RatingScale) -> Result<()> {
        if !(self.attack_size > 0.0) {
            return Err(Error::InvalidAttackSpec(format!(
                "attack size must be positive, got {}",
                self.attack_size
            )));
        }
        if !(self.filler_size > 0.0 && self.filler_size <= 1.0) {
            return Err(Error::InvalidAttackSpec(format!(
                "filler size must be in (0, 1], got {}",
                self.filler_size
            )));
        }
        match (self.intent, self.grey_rating) {
            (AttackIntent::Grey, None) => {
                return Err(Error::InvalidAttackSpec(
                    "grey intent requires a grey rating".into(),
                ));
            }
            (AttackIntent::Grey, Some(r)) if !scale.contains(r) => {
                return Err(Error::InvalidAttackSpec(format!(
                    "grey rating {r} outside scale [{}, {}]",
                    scale.min, scale.max
                )));
            }
            _ => {}
        }
        match (self.model, self.aop_top_fraction) {
            (AttackModel::Aop, None) => {
                return Err(Error::InvalidAttackSpec(
                    "AOP model requires aop_top_fraction".into(),
                ));
            }
            (AttackModel::Aop, Some(x)) if !(x > 0.0 && x <= 1.0) => {
                return Err(Error::InvalidAttackSpec(format!(
                    "aop_top_fraction must be in (0, 1], got {x}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// round(attack_size * genuine user count)
    pub fn attacker_count(&self, n_genuine: usize) -> usize {
        (self.attack_size * n_genuine as f64).round() as usize
    }

    /// round(filler_size * item universe size)
    pub fn filler_count(&self, n_items: usize) -> usize {
        (self.filler_size * n_items as f64).round() as usize
    }

    fn target_rating(&self, scale: RatingScale) -> i32 {
        match self.intent {
            AttackIntent::Push => scale.max,
            AttackIntent::Nuke => scale.min,
            AttackIntent::Grey => self.grey_rating.expect("validated"),
        }
    }

    /// Grey follows the nuke pattern everywhere except the target rating.
    fn is_push_pattern(&self) -> bool {
        self.intent == AttackIntent::Push
    }
}

/// Which strategic item pool to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialItemKind {
    /// Items rated by more than `threshold` users; uniform draw.
    Popular { threshold: u32 },
    /// The items with the highest rater counts, ties by item id.
    Segment,
    /// Items rated by exactly one user; uniform draw.
    Unpopular,
}

impl SpecialItemKind {
    fn label(&self) -> &'static str {
        match self {
            SpecialItemKind::Popular { .. } => "popular",
            SpecialItemKind::Segment => "segment",
            SpecialItemKind::Unpopular => "unpopular",
        }
    }
}

fn select_special_indices(
    m: &RatingMatrix,
    stats: &ItemStats,
    kind: SpecialItemKind,
    count: usize,
    exclude: Option<u32>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    let candidates: Vec<u32> = match kind {
        SpecialItemKind::Popular { threshold } => (0..m.n_items() as u32)
            .filter(|&i| stats.rater_count(i as usize) > threshold)
            .filter(|&i| Some(i) != exclude)
            .collect(),
        SpecialItemKind::Unpopular => (0..m.n_items() as u32)
            .filter(|&i| stats.rater_count(i as usize) == 1)
            .filter(|&i| Some(i) != exclude)
            .collect(),
        SpecialItemKind::Segment => {
            let mut all: Vec<u32> = (0..m.n_items() as u32)
                .filter(|&i| Some(i) != exclude)
                .collect();
            all.sort_by(|&a, &b| {
                stats
                    .rater_count(b as usize)
                    .cmp(&stats.rater_count(a as usize))
                    .then(a.cmp(&b))
            });
            all
        }
    };
    if candidates.len() < count {
        return Err(Error::PoolTooSmall {
            kind: kind.label().into(),
            requested: count,
            available: candidates.len(),
        });
    }
    let mut picked: Vec<u32> = match kind {
        SpecialItemKind::Segment => candidates[..count].to_vec(),
        _ => rand::seq::index::sample(rng, candidates.len(), count)
            .iter()
            .map(|k| candidates[k])
            .collect(),
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Draw strategically chosen items: a uniform sample of sufficiently popular
/// items, the top items by rater count, or a uniform sample of single-rater
/// items.
pub fn select_special_items(
    m: &RatingMatrix,
    stats: &ItemStats,
    kind: SpecialItemKind,
    count: usize,
    seed: u64,
) -> Result<Vec<ItemId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = select_special_indices(m, stats, kind, count, None, &mut rng)?;
    Ok(picked
        .into_iter()
        .map(|i| m.item_id(i as usize).to_string())
        .collect())
}

/// One synthetic profile: a target rating, fixed-rating selected items, and
/// camouflage filler items. Unrated items are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackProfile {
    pub target: (ItemId, i32),
    pub selected: BTreeMap<ItemId, i32>,
    pub filler: BTreeMap<ItemId, i32>,
}

impl AttackProfile {
    pub fn n_rated(&self) -> usize {
        1 + self.selected.len() + self.filler.len()
    }

    pub fn iter_ratings(&self) -> impl Iterator<Item = (&str, i32)> {
        std::iter::once((self.target.0.as_str(), self.target.1))
            .chain(self.selected.iter().map(|(i, &r)| (i.as_str(), r)))
            .chain(self.filler.iter().map(|(i, &r)| (i.as_str(), r)))
    }
}

enum FillerRating {
    ItemGaussian,
    SystemGaussian,
    Fixed(i32),
}

fn draw_gaussian(mean: f64, std: f64, scale: RatingScale, rng: &mut ChaCha8Rng) -> i32 {
    if std <= 0.0 {
        return scale.quantize(mean);
    }
    let normal = Normal::new(mean, std).expect("finite parameters");
    scale.quantize(normal.sample(rng))
}

/// Build one profile obeying the model's scheme. The target must exist in
/// the matrix; the rng state is a per-profile substream.
pub fn build_attack_profile(
    spec: &AttackSpec,
    m: &RatingMatrix,
    stats: &ItemStats,
    target: &str,
    rng: &mut ChaCha8Rng,
) -> Result<AttackProfile> {
    spec.validate(m.scale())?;
    let target_idx = m
        .item_index(target)
        .ok_or_else(|| Error::UnknownItem(target.into()))? as u32;
    let scale = m.scale();
    let push = spec.is_push_pattern();

    let (selected_indices, selected_rating) = match spec.model {
        AttackModel::Aop | AttackModel::Random | AttackModel::Average | AttackModel::LoveHate => {
            (Vec::new(), 0)
        }
        AttackModel::BandwagonAverage | AttackModel::BandwagonRandom => (
            select_special_indices(
                m,
                stats,
                SpecialItemKind::Popular {
                    threshold: spec.popularity_threshold,
                },
                BANDWAGON_SELECTED,
                Some(target_idx),
                rng,
            )?,
            if push { scale.max } else { scale.min },
        ),
        AttackModel::Segment => (
            select_special_indices(
                m,
                stats,
                SpecialItemKind::Segment,
                SEGMENT_SELECTED,
                Some(target_idx),
                rng,
            )?,
            if push { scale.max } else { scale.min },
        ),
        // Selected ratings run against the target direction in this scheme:
        // pushed targets pair with minimum-rated unpopular items and nuked
        // targets with maximum-rated ones.
        AttackModel::ReverseBandwagon => (
            select_special_indices(
                m,
                stats,
                SpecialItemKind::Unpopular,
                REVERSE_BANDWAGON_SELECTED,
                Some(target_idx),
                rng,
            )?,
            if push { scale.min } else { scale.max },
        ),
    };

    let filler_rule = match spec.model {
        AttackModel::Aop | AttackModel::Average | AttackModel::BandwagonAverage => {
            FillerRating::ItemGaussian
        }
        AttackModel::Random | AttackModel::BandwagonRandom | AttackModel::ReverseBandwagon => {
            FillerRating::SystemGaussian
        }
        AttackModel::Segment | AttackModel::LoveHate => {
            FillerRating::Fixed(if push { scale.min } else { scale.max })
        }
    };

    let selected_set: BTreeSet<u32> = selected_indices.iter().copied().collect();
    let filler_pool: Vec<u32> = match spec.model {
        AttackModel::Aop => {
            let fraction = spec.aop_top_fraction.expect("validated");
            let top_n = ((fraction * m.n_items() as f64).ceil() as usize).min(m.n_items());
            let mut by_popularity: Vec<u32> = (0..m.n_items() as u32).collect();
            by_popularity.sort_by(|&a, &b| {
                stats
                    .rater_count(b as usize)
                    .cmp(&stats.rater_count(a as usize))
                    .then(a.cmp(&b))
            });
            by_popularity
                .into_iter()
                .take(top_n)
                .filter(|&i| i != target_idx)
                .collect()
        }
        _ => (0..m.n_items() as u32)
            .filter(|&i| i != target_idx && !selected_set.contains(&i))
            .collect(),
    };

    let filler_count = spec.filler_count(m.n_items());
    if filler_pool.len() < filler_count {
        return Err(Error::FillerExhausted {
            requested: filler_count,
            available: filler_pool.len(),
        });
    }
    let filler_indices: Vec<u32> = rand::seq::index::sample(rng, filler_pool.len(), filler_count)
        .iter()
        .map(|k| filler_pool[k])
        .collect();

    let mut filler = BTreeMap::new();
    for &i in &filler_indices {
        let rating = match filler_rule {
            FillerRating::ItemGaussian => draw_gaussian(
                stats.item_mean(i as usize),
                stats.item_std(i as usize),
                scale,
                rng,
            ),
            FillerRating::SystemGaussian => {
                draw_gaussian(stats.system_mean(), stats.system_std(), scale, rng)
            }
            FillerRating::Fixed(r) => r,
        };
        filler.insert(m.item_id(i as usize).to_string(), rating);
    }

    let selected: BTreeMap<ItemId, i32> = selected_indices
        .iter()
        .map(|&i| (m.item_id(i as usize).to_string(), selected_rating))
        .collect();

    Ok(AttackProfile {
        target: (target.to_string(), spec.target_rating(scale)),
        selected,
        filler,
    })
}

/// Insert `round(attack_size * |users|)` fresh attack profiles, all sharing
/// one uniformly chosen target item, and return the attacked matrix with
/// ground-truth labels. Deterministic per `spec.seed`.
pub fn inject_attacks(
    genuine: &RatingMatrix,
    spec: &AttackSpec,
) -> Result<(RatingMatrix, UserLabelSet)> {
    spec.validate(genuine.scale())?;
    if genuine.n_users() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if let Some(bad) = genuine
        .users()
        .iter()
        .find(|u| u.starts_with(ATTACKER_ID_PREFIX))
    {
        return Err(Error::Config(format!(
            "genuine matrix already contains reserved user id `{bad}`"
        )));
    }
    let n_attackers = spec.attacker_count(genuine.n_users());
    if n_attackers == 0 {
        return Err(Error::ZeroAttackers(spec.attack_size));
    }
    let stats = compute_item_stats(genuine)?;

    let mut target_rng =
        ChaCha8Rng::seed_from_u64(SeedMixer::new(spec.seed).str("target").finish());
    let target_idx = target_rng.random_range(0..genuine.n_items());
    let target = genuine.item_id(target_idx).to_string();

    let mut builder = RatingMatrixBuilder::new(genuine.scale());
    for (u, i, r) in genuine.iter_ratings() {
        builder.add(genuine.user_id(u), genuine.item_id(i), r)?;
    }

    let mut attackers = BTreeSet::new();
    for k in 0..n_attackers {
        let mut profile_rng = ChaCha8Rng::seed_from_u64(
            SeedMixer::new(spec.seed).str("profile").u64(k as u64).finish(),
        );
        let profile = build_attack_profile(spec, genuine, &stats, &target, &mut profile_rng)?;
        let id = format!("{ATTACKER_ID_PREFIX}{k:05}");
        for (item, rating) in profile.iter_ratings() {
            builder.add(&id, item, rating)?;
        }
        attackers.insert(id);
    }

    let genuine_ids: BTreeSet<String> = genuine.users().iter().cloned().collect();
    let labels = UserLabelSet::new(genuine_ids, attackers)?;
    Ok((builder.build(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingScale;

    use std::collections::HashMap;

    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn matrix(rows: &[(&str, &str, i32)]) -> RatingMatrix {
        let mut b = RatingMatrixBuilder::new(RatingScale::ONE_TO_TEN);
        for &(u, i, r) in rows {
            b.add(u, i, r).unwrap();
        }
        b.build()
    }

    /// 30 users x 36 items: i00..i11 each rated by ~20 users, i20..i43 by a
    /// single user each, so every strategic pool is non-trivial.
    fn test_matrix() -> RatingMatrix {
        let mut b = RatingMatrixBuilder::new(RatingScale::ONE_TO_TEN);
        for u in 0..30usize {
            let user = format!("u{u:02}");
            for i in 0..12usize {
                if (u + i) % 3 != 0 {
                    let rating = (((u * 7 + i * 3) % 10) + 1) as i32;
                    b.add(&user, &format!("i{i:02}"), rating).unwrap();
                }
            }
        }
        for t in 0..24usize {
            let user = format!("u{:02}", t % 30);
            b.add(&user, &format!("i{:02}", 20 + t), ((t % 10) + 1) as i32)
                .unwrap();
        }
        b.build()
    }

    fn base_spec(model: AttackModel, intent: AttackIntent) -> AttackSpec {
        AttackSpec {
            model,
            intent,
            grey_rating: if intent == AttackIntent::Grey { Some(3) } else { None },
            attack_size: 0.25,
            filler_size: 0.1,
            aop_top_fraction: if model == AttackModel::Aop { Some(0.5) } else { None },
            popularity_threshold: 5,
            seed: 42,
        }
    }

    #[test]
    fn segment_selection_sorts_by_count_then_id() {
        let m = matrix(&[
            ("u1", "a", 5),
            ("u2", "a", 5),
            ("u3", "a", 5),
            ("u4", "a", 5),
            ("u5", "a", 5),
            ("u6", "a", 5),
            ("u7", "a", 5),
            ("u8", "a", 5),
            ("u9", "a", 5),
            ("u1", "b", 5),
            ("u2", "b", 5),
            ("u3", "b", 5),
            ("u4", "b", 5),
            ("u5", "b", 5),
            ("u6", "b", 5),
            ("u7", "b", 5),
            ("u1", "c", 5),
            ("u2", "c", 5),
            ("u3", "c", 5),
            ("u4", "c", 5),
            ("u5", "c", 5),
            ("u6", "c", 5),
            ("u7", "c", 5),
            ("u1", "d", 5),
        ]);
        let stats = compute_item_stats(&m).unwrap();
        let picked = select_special_items(&m, &stats, SpecialItemKind::Segment, 2, 0).unwrap();
        assert_eq!(picked, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn unpopular_singleton_pool() {
        let m = matrix(&[("u1", "a", 5), ("u1", "b", 5), ("u2", "b", 5)]);
        let stats = compute_item_stats(&m).unwrap();
        let picked = select_special_items(&m, &stats, SpecialItemKind::Unpopular, 1, 9).unwrap();
        assert_eq!(picked, vec!["a".to_string()]);
        let err =
            select_special_items(&m, &stats, SpecialItemKind::Unpopular, 2, 9).unwrap_err();
        match err {
            Error::PoolTooSmall { available, .. } => assert_eq!(available, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn popular_selection_respects_threshold() {
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        let picked = select_special_items(
            &m,
            &stats,
            SpecialItemKind::Popular { threshold: 5 },
            2,
            1,
        )
        .unwrap();
        for id in &picked {
            let idx = m.item_index(id).unwrap();
            assert!(stats.rater_count(idx) > 5);
        }
    }

    #[test]
    fn love_hate_nuke_profile() {
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        let spec = base_spec(AttackModel::LoveHate, AttackIntent::Nuke);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let profile = build_attack_profile(&spec, &m, &stats, "i01", &mut rng).unwrap();
        assert_eq!(profile.target.1, 1);
        assert!(profile.selected.is_empty());
        assert!(profile.filler.values().all(|&r| r == 10));
    }

    #[test]
    fn random_grey_profile_stays_in_scale() {
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        let spec = base_spec(AttackModel::Random, AttackIntent::Grey);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let profile = build_attack_profile(&spec, &m, &stats, "i00", &mut rng).unwrap();
        assert_eq!(profile.target.1, 3);
        assert!(profile.filler.values().all(|&r| (1..=10).contains(&r)));
    }

    #[test]
    fn zero_variance_item_draws_its_mean() {
        // Item "flat" rated 4 by everyone; Average fillers on it must be 4.
        let mut rows = vec![("u1", "flat", 4), ("u2", "flat", 4), ("u3", "flat", 4)];
        rows.push(("u1", "t", 9));
        let m = matrix(&rows);
        let stats = compute_item_stats(&m).unwrap();
        let spec = AttackSpec {
            filler_size: 0.5, // 1 of 2 items
            ..base_spec(AttackModel::Average, AttackIntent::Nuke)
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let profile = build_attack_profile(&spec, &m, &stats, "t", &mut rng).unwrap();
            if let Some(&r) = profile.filler.get("flat") {
                assert_eq!(r, 4);
            }
        }
    }

    #[test]
    fn segment_push_and_nuke_extremes() {
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        for (intent, sel, fill) in [
            (AttackIntent::Push, 10, 1),
            (AttackIntent::Nuke, 1, 10),
        ] {
            let spec = base_spec(AttackModel::Segment, intent);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let profile = build_attack_profile(&spec, &m, &stats, "i20", &mut rng).unwrap();
            assert!(profile.selected.values().all(|&r| r == sel));
            assert!(profile.filler.values().all(|&r| r == fill));
            assert_eq!(profile.selected.len(), SEGMENT_SELECTED);
        }
    }

    #[test]
    fn profile_invariants_across_models_intents_seeds() {
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        let expected_filler = (0.1 * m.n_items() as f64).round() as usize;
        for model in AttackModel::ALL {
            for intent in [AttackIntent::Push, AttackIntent::Nuke, AttackIntent::Grey] {
                let spec = base_spec(model, intent);
                for seed in 0..100 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let profile =
                        build_attack_profile(&spec, &m, &stats, "i02", &mut rng).unwrap();
                    assert!(!profile.selected.contains_key("i02"));
                    assert!(!profile.filler.contains_key("i02"));
                    assert!(profile
                        .selected
                        .keys()
                        .all(|i| !profile.filler.contains_key(i)));
                    assert_eq!(profile.filler.len(), expected_filler);
                    for (_, r) in profile.iter_ratings() {
                        assert!((1..=10).contains(&r));
                    }
                }
            }
        }
    }

    #[test]
    fn aop_full_fraction_matches_average_distribution() {
        // With the popular fraction at 1.0 the AOP filler pool equals the
        // Average pool, so item frequencies over many profiles should be
        // homogeneous (chi-square, p > 0.01).
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        let aop = AttackSpec {
            aop_top_fraction: Some(1.0),
            ..base_spec(AttackModel::Aop, AttackIntent::Nuke)
        };
        let avg = base_spec(AttackModel::Average, AttackIntent::Nuke);

        let mut counts: HashMap<String, [f64; 2]> = HashMap::new();
        for k in 0..1000u64 {
            for (which, spec) in [(0usize, &aop), (1usize, &avg)] {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * which as u64 + k);
                let profile = build_attack_profile(spec, &m, &stats, "i00", &mut rng).unwrap();
                for item in profile.filler.keys() {
                    counts.entry(item.clone()).or_default()[which] += 1.0;
                }
            }
        }
        let total: [f64; 2] = counts.values().fold([0.0, 0.0], |acc, c| {
            [acc[0] + c[0], acc[1] + c[1]]
        });
        let grand = total[0] + total[1];
        let mut statistic = 0.0;
        let mut df = 0.0;
        for c in counts.values() {
            let row_total = c[0] + c[1];
            for side in 0..2 {
                let expected = row_total * total[side] / grand;
                if expected > 0.0 {
                    statistic += (c[side] - expected).powi(2) / expected;
                }
            }
            df += 1.0;
        }
        let chi = ChiSquared::new(df - 1.0).unwrap();
        let critical = chi.inverse_cdf(0.99);
        assert!(
            statistic < critical,
            "chi-square {statistic:.1} >= critical {critical:.1} (df {})",
            df - 1.0
        );
    }

    #[test]
    fn inject_counts_and_reproducibility() {
        let m = test_matrix();
        let spec = base_spec(AttackModel::Average, AttackIntent::Nuke);
        let (attacked1, labels1) = inject_attacks(&m, &spec).unwrap();
        let (attacked2, labels2) = inject_attacks(&m, &spec).unwrap();
        assert_eq!(attacked1, attacked2);
        assert_eq!(labels1, labels2);
        assert_eq!(labels1.attackers().len(), 8); // round(0.25 * 30)
        assert_eq!(labels1.genuine().len(), 30);
        assert_eq!(attacked1.n_users(), 38);
        assert!(labels1
            .attackers()
            .iter()
            .all(|id| id.starts_with(ATTACKER_ID_PREFIX)));
    }

    #[test]
    fn filler_count_example() {
        let spec = AttackSpec {
            filler_size: 0.025,
            ..base_spec(AttackModel::Random, AttackIntent::Nuke)
        };
        assert_eq!(spec.filler_count(1000), 25);
        assert_eq!(spec.attacker_count(800), (0.25f64 * 800.0).round() as usize);
        let seventeen = AttackSpec {
            attack_size: 0.17,
            ..spec
        };
        assert_eq!(seventeen.attacker_count(800), 136);
    }

    #[test]
    fn zero_attackers_is_an_error() {
        let m = test_matrix();
        let spec = AttackSpec {
            attack_size: 0.001, // round(0.001 * 12) == 0
            ..base_spec(AttackModel::Random, AttackIntent::Nuke)
        };
        assert!(matches!(
            inject_attacks(&m, &spec),
            Err(Error::ZeroAttackers(_))
        ));
    }

    #[test]
    fn grey_requires_rating_and_aop_requires_fraction() {
        let m = test_matrix();
        let mut spec = base_spec(AttackModel::Random, AttackIntent::Grey);
        spec.grey_rating = None;
        assert!(matches!(
            inject_attacks(&m, &spec),
            Err(Error::InvalidAttackSpec(_))
        ));
        let mut spec = base_spec(AttackModel::Aop, AttackIntent::Nuke);
        spec.aop_top_fraction = None;
        assert!(matches!(
            inject_attacks(&m, &spec),
            Err(Error::InvalidAttackSpec(_))
        ));
    }

    #[test]
    fn reverse_bandwagon_selected_ratings_oppose_target() {
        let m = test_matrix();
        let stats = compute_item_stats(&m).unwrap();
        for (intent, expected) in [(AttackIntent::Push, 1), (AttackIntent::Nuke, 10)] {
            let spec = AttackSpec {
                ..base_spec(AttackModel::ReverseBandwagon, intent)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let profile = build_attack_profile(&spec, &m, &stats, "i00", &mut rng).unwrap();
            assert_eq!(profile.selected.len(), REVERSE_BANDWAGON_SELECTED);
            assert!(profile.selected.values().all(|&r| r == expected));
        }
    }
}
