//! Unsupervised detection: fit a two-component diagonal Gaussian mixture to
//! each of the three feature spaces, take the smaller cluster from each, and
//! flag the intersection.
//!
//! Features are z-score standardized per dimension before EM (the raw
//! statistics span wildly different scales) and constant dimensions are
//! dropped. Both facts are recorded in the report.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::UserId;
use crate::error::{Error, Result};
use crate::features::UserFeatureSet;
use crate::seeding::SeedMixer;
use crate::series::SeriesKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    #[default]
    Diagonal,
}

/// Configuration of one EM run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Fixed at 2: attackers versus genuine users.
    pub components: usize,
    pub max_iterations: usize,
    /// Stop once the log-likelihood improves by less than this.
    pub tolerance: f64,
    pub covariance: CovarianceKind,
    /// Lower bound applied to every variance after each M step.
    pub variance_floor: f64,
    /// Independent restarts; the best final log-likelihood wins.
    pub restarts: usize,
    pub seed: u64,
}

impl EmConfig {
    pub fn with_seed(seed: u64) -> Self {
        EmConfig {
            components: 2,
            max_iterations: 200,
            tolerance: 1e-6,
            covariance: CovarianceKind::Diagonal,
            variance_floor: 1e-6,
            restarts: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components != 2 {
            return Err(Error::Config(format!(
                "component count is fixed at 2, got {}",
                self.components
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config("variance floor must be positive".into()));
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "restarts and max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Hard two-way partition produced by one EM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    /// User ids per component, each sorted ascending.
    pub clusters: [Vec<UserId>; 2],
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each E step of the winning restart.
    pub log_likelihood_trace: Vec<f64>,
    /// Mean squared distance of each cluster from the global centroid in
    /// standardized coordinates; used to break exact size ties.
    pub mean_sq_distance: [f64; 2],
    /// Constant feature dimensions removed before fitting.
    pub dropped_dimensions: usize,
}

struct EmRun {
    assignments: Vec<usize>,
    iterations: usize,
    log_likelihood: f64,
    trace: Vec<f64>,
}

const LOG_2PI: f64 = 1.8378770664093453;

fn log_gaussian_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for d in 0..x.len() {
        let diff = x[d] - mean[d];
        acc += -0.5 * (LOG_2PI + var[d].ln() + diff * diff / var[d]);
    }
    acc
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn run_em(points: &[Vec<f64>], cfg: &EmConfig, seed: u64) -> EmRun {
    let n = points.len();
    let dims = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++-style seeding: first mean uniform, second weighted by
    // squared distance from the first.
    let first = rng.random_range(0..n);
    let sq_dist: Vec<f64> = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&points[first])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    let total: f64 = sq_dist.iter().sum();
    let second = if total > 0.0 {
        let mut draw = rng.random_range(0.0..total);
        let mut chosen = n - 1;
        for (i, &d) in sq_dist.iter().enumerate() {
            if draw < d {
                chosen = i;
                break;
            }
            draw -= d;
        }
        chosen
    } else {
        first
    };

    let mut means = [points[first].clone(), points[second].clone()];
    // Per-dimension data variance as the initial covariance (1.0 after
    // standardization), floored.
    let mut vars = [vec![1.0f64; dims], vec![1.0f64; dims]];
    for v in &mut vars {
        for d in v.iter_mut() {
            *d = d.max(cfg.variance_floor);
        }
    }
    let mut priors = [0.5f64, 0.5];

    let mut trace = Vec::new();
    let mut resp = vec![0.0f64; n]; // responsibility of component 1
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..cfg.max_iterations {
        // E step.
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let l0 = priors[0].ln() + log_gaussian_diag(p, &means[0], &vars[0]);
            let l1 = priors[1].ln() + log_gaussian_diag(p, &means[1], &vars[1]);
            let norm = log_sum_exp(l0, l1);
            resp[i] = (l1 - norm).exp();
            ll += norm;
        }
        debug_assert!(
            trace.is_empty() || ll >= prev_ll - 1e-6,
            "log-likelihood decreased: {prev_ll} -> {ll}"
        );
        trace.push(ll);
        let converged = (ll - prev_ll).abs() < cfg.tolerance;
        prev_ll = ll;
        if converged {
            break;
        }

        // M step.
        let n1: f64 = resp.iter().sum();
        let n0 = n as f64 - n1;
        let weights = [n0, n1];
        priors = [n0 / n as f64, n1 / n as f64];
        for k in 0..2 {
            if weights[k] < 1e-12 {
                continue; // empty component keeps its parameters
            }
            let mut mean = vec![0.0f64; dims];
            for (i, p) in points.iter().enumerate() {
                let w = if k == 1 { resp[i] } else { 1.0 - resp[i] };
                for d in 0..dims {
                    mean[d] += w * p[d];
                }
            }
            for d in 0..dims {
                mean[d] /= weights[k];
            }
            let mut var = vec![0.0f64; dims];
            for (i, p) in points.iter().enumerate() {
                let w = if k == 1 { resp[i] } else { 1.0 - resp[i] };
                for d in 0..dims {
                    let diff = p[d] - mean[d];
                    var[d] += w * diff * diff;
                }
            }
            for d in 0..dims {
                var[d] = (var[d] / weights[k]).max(cfg.variance_floor);
            }
            means[k] = mean;
            vars[k] = var;
        }
    }

    // Hard assignment by maximum posterior responsibility.
    let assignments: Vec<usize> = points
        .iter()
        .map(|p| {
            let l0 = priors[0].ln() + log_gaussian_diag(p, &means[0], &vars[0]);
            let l1 = priors[1].ln() + log_gaussian_diag(p, &means[1], &vars[1]);
            usize::from(l1 > l0)
        })
        .collect();

    EmRun {
        assignments,
        iterations: trace.len(),
        log_likelihood: prev_ll,
        trace,
    }
}

/// Fit a two-component diagonal Gaussian mixture and return the hard
/// partition. Deterministic per `cfg.seed`.
pub fn em_fit(points: &[(UserId, Vec<f64>)], cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if points.len() < 2 {
        return Err(Error::TooFewUsers(points.len()));
    }
    let dims = points[0].1.len();
    for (user, vector) in points {
        if vector.len() != dims {
            return Err(Error::Config(format!(
                "feature dimension mismatch for user `{user}`"
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(user.clone()));
        }
    }
    let n = points.len() as f64;

    // Standardize and drop constant dimensions.
    let mut keep = Vec::new();
    let mut means = vec![0.0f64; dims];
    let mut stds = vec![0.0f64; dims];
    for d in 0..dims {
        let mean = points.iter().map(|(_, v)| v[d]).sum::<f64>() / n;
        let var = points
            .iter()
            .map(|(_, v)| (v[d] - mean) * (v[d] - mean))
            .sum::<f64>()
            / n;
        means[d] = mean;
        stds[d] = var.sqrt();
        if stds[d] > 0.0 {
            keep.push(d);
        }
    }

    if keep.is_empty() {
        // Every point is identical: one cluster takes everything.
        let mut all: Vec<UserId> = points.iter().map(|(u, _)| u.clone()).collect();
        all.sort();
        return Ok(EmFit {
            clusters: [all, Vec::new()],
            iterations: 0,
            log_likelihood: 0.0,
            log_likelihood_trace: Vec::new(),
            mean_sq_distance: [0.0, 0.0],
            dropped_dimensions: dims,
        });
    }

    let standardized: Vec<Vec<f64>> = points
        .iter()
        .map(|(_, v)| {
            keep.iter()
                .map(|&d| (v[d] - means[d]) / stds[d])
                .collect()
        })
        .collect();

    let mut best: Option<EmRun> = None;
    for restart in 0..cfg.restarts {
        let seed = SeedMixer::new(cfg.seed).str("restart").u64(restart as u64).finish();
        let run = run_em(&standardized, cfg, seed);
        let better = match &best {
            None => true,
            Some(b) => run.log_likelihood > b.log_likelihood,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");

    let mut clusters = [Vec::new(), Vec::new()];
    let mut sq_sums = [0.0f64, 0.0];
    for (i, (user, _)) in points.iter().enumerate() {
        let k = best.assignments[i];
        clusters[k].push(user.clone());
        sq_sums[k] += standardized[i].iter().map(|v| v * v).sum::<f64>();
    }
    let mean_sq_distance = [
        if clusters[0].is_empty() { 0.0 } else { sq_sums[0] / clusters[0].len() as f64 },
        if clusters[1].is_empty() { 0.0 } else { sq_sums[1] / clusters[1].len() as f64 },
    ];
    clusters[0].sort();
    clusters[1].sort();

    Ok(EmFit {
        clusters,
        iterations: best.iterations,
        log_likelihood: best.log_likelihood,
        log_likelihood_trace: best.trace,
        mean_sq_distance,
        dropped_dimensions: dims - keep.len(),
    })
}

/// Outcome of one feature space: the suspected (smaller) cluster plus EM
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceResult {
    pub kind: SeriesKind,
    pub smaller_cluster: Vec<UserId>,
    pub cluster_sizes: [usize; 2],
    pub iterations: usize,
    pub log_likelihood: f64,
    /// True when the two clusters had equal sizes and the more anomalous
    /// one (larger mean distance from the centroid) was chosen.
    pub tie_broken: bool,
}

/// Detection outcome: flagged users and the per-space evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub flagged: Vec<UserId>,
    pub spaces: Vec<SpaceResult>,
    /// Features were z-score standardized per dimension before clustering.
    pub standardized: bool,
    pub config: EmConfig,
}

impl DetectionReport {
    pub fn flagged_set(&self) -> BTreeSet<UserId> {
        self.flagged.iter().cloned().collect()
    }

    pub fn space(&self, kind: SeriesKind) -> &SpaceResult {
        self.spaces
            .iter()
            .find(|s| s.kind == kind)
            .expect("all three spaces present")
    }
}

fn smaller_cluster(fit: &EmFit) -> (Vec<UserId>, bool) {
    let sizes = [fit.clusters[0].len(), fit.clusters[1].len()];
    if sizes[0] < sizes[1] {
        (fit.clusters[0].clone(), false)
    } else if sizes[1] < sizes[0] {
        (fit.clusters[1].clone(), false)
    } else {
        // Equal sizes: the anomalous group sits farther from the centroid.
        let k = usize::from(fit.mean_sq_distance[1] >= fit.mean_sq_distance[0]);
        (fit.clusters[k].clone(), true)
    }
}

/// Cluster the three feature spaces independently and flag the intersection
/// of their smaller clusters.
pub fn detect(features: &[UserFeatureSet], cfg: &EmConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    if features.len() < 2 {
        return Err(Error::TooFewUsers(features.len()));
    }
    let mut spaces = Vec::with_capacity(3);
    let mut flagged: Option<BTreeSet<UserId>> = None;
    for kind in SeriesKind::ALL {
        let points: Vec<(UserId, Vec<f64>)> = features
            .iter()
            .map(|set| (set.user.clone(), set.get(kind).as_array().to_vec()))
            .collect();
        let space_cfg = EmConfig {
            seed: SeedMixer::new(cfg.seed).str("space").str(kind.code()).finish(),
            ..*cfg
        };
        let fit = em_fit(&points, &space_cfg)?;
        let (smaller, tie_broken) = smaller_cluster(&fit);
        let set: BTreeSet<UserId> = smaller.iter().cloned().collect();
        flagged = Some(match flagged {
            None => set,
            Some(acc) => acc.intersection(&set).cloned().collect(),
        });
        spaces.push(SpaceResult {
            kind,
            smaller_cluster: smaller,
            cluster_sizes: [fit.clusters[0].len(), fit.clusters[1].len()],
            iterations: fit.iterations,
            log_likelihood: fit.log_likelihood,
            tie_broken,
        });
    }
    Ok(DetectionReport {
        flagged: flagged.unwrap_or_default().into_iter().collect(),
        spaces,
        standardized: true,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn named(points: &[Vec<f64>]) -> Vec<(UserId, Vec<f64>)> {
        points
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("u{i:03}"), v.clone()))
            .collect()
    }

    #[test]
    fn separates_two_obvious_groups() {
        let points = named(&[
            vec![0.0],
            vec![0.1],
            vec![-0.1],
            vec![10.0],
            vec![10.1],
            vec![9.9],
        ]);
        let fit = em_fit(&points, &EmConfig::with_seed(1)).unwrap();
        let low: Vec<String> = vec!["u000".into(), "u001".into(), "u002".into()];
        let high: Vec<String> = vec!["u003".into(), "u004".into(), "u005".into()];
        assert!(
            (fit.clusters[0] == low && fit.clusters[1] == high)
                || (fit.clusters[0] == high && fit.clusters[1] == low),
            "unexpected partition {:?}",
            fit.clusters
        );
    }

    #[test]
    fn identical_points_collapse_to_one_cluster() {
        let points = named(&vec![vec![3.0, 1.0]; 5]);
        let fit = em_fit(&points, &EmConfig::with_seed(2)).unwrap();
        assert_eq!(fit.clusters[0].len(), 5);
        assert!(fit.clusters[1].is_empty());
        assert_eq!(fit.dropped_dimensions, 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let named_points = named(&points);
        let a = em_fit(&named_points, &EmConfig::with_seed(9)).unwrap();
        let b = em_fit(&named_points, &EmConfig::with_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_users_and_bad_values_error() {
        let cfg = EmConfig::with_seed(0);
        assert!(matches!(
            em_fit(&named(&[vec![1.0]]), &cfg),
            Err(Error::TooFewUsers(1))
        ));
        let mut points = named(&[vec![1.0], vec![2.0]]);
        points[1].1[0] = f64::NAN;
        match em_fit(&points, &cfg) {
            Err(Error::NonFiniteFeature(user)) => assert_eq!(user, "u001"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..20 {
            let n = rng.random_range(10..60);
            let d = rng.random_range(1..4);
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            let centre = if rng.random_bool(0.5) { 0.0 } else { 3.0 };
                            centre + rng.random_range(-1.0..1.0)
                        })
                        .collect()
                })
                .collect();
            let fit = em_fit(&named(&points), &EmConfig::with_seed(case)).unwrap();
            for pair in fit.log_likelihood_trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-8,
                    "case {case}: trace decreased {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn standardization_makes_fit_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let points: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let centre = if i < 45 { 0.0 } else { 6.0 };
                vec![
                    centre + rng.random_range(-1.0..1.0),
                    centre + rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let base = em_fit(&named(&points), &EmConfig::with_seed(4)).unwrap();
        for trial in 0..10 {
            let mut scale_rng = ChaCha8Rng::seed_from_u64(trial);
            let scales: Vec<f64> = (0..3).map(|_| scale_rng.random_range(0.01..100.0)).collect();
            let shifts: Vec<f64> = (0..3).map(|_| scale_rng.random_range(-50.0..50.0)).collect();
            let rescaled: Vec<Vec<f64>> = points
                .iter()
                .map(|p| {
                    p.iter()
                        .enumerate()
                        .map(|(d, v)| v * scales[d] + shifts[d])
                        .collect()
                })
                .collect();
            let fit = em_fit(&named(&rescaled), &EmConfig::with_seed(4)).unwrap();
            assert_eq!(base.clusters, fit.clusters, "trial {trial}");
        }
    }

    fn feature_set(user: &str, rd: f64, p: f64, n: f64) -> UserFeatureSet {
        let vector = |v: f64| {
            crate::features::amplitude_features(&[v, v + 0.5, v - 0.5, 2.0 * v]).unwrap()
        };
        UserFeatureSet {
            user: user.to_string(),
            rating_deviation: vector(rd),
            popularity: vector(p),
            novelty: vector(n),
        }
    }

    #[test]
    fn detect_intersects_the_three_spaces() {
        // Users 0..8 sit near 0 in every space; the last two are far away in
        // all three, so they are the intersection.
        let mut sets = Vec::new();
        for i in 0..8 {
            sets.push(feature_set(&format!("g{i}"), 0.1 * i as f64, 0.1 * i as f64, 0.1));
        }
        sets.push(feature_set("x0", 30.0, 30.0, 30.0));
        sets.push(feature_set("x1", 31.0, 31.0, 31.0));
        let report = detect(&sets, &EmConfig::with_seed(3)).unwrap();
        assert_eq!(report.flagged, vec!["x0".to_string(), "x1".to_string()]);
        for space in &report.spaces {
            let smaller: BTreeSet<_> = space.smaller_cluster.iter().cloned().collect();
            for user in &report.flagged {
                assert!(smaller.contains(user));
            }
            assert!(space.cluster_sizes[0] + space.cluster_sizes[1] == 10);
        }
        assert!(report.standardized);
    }

    #[test]
    fn empty_smaller_cluster_empties_the_intersection() {
        // All users identical in every space: each space yields an empty
        // smaller cluster, so nothing is flagged.
        let sets: Vec<UserFeatureSet> = (0..6)
            .map(|i| feature_set(&format!("u{i}"), 1.0, 1.0, 1.0))
            .collect();
        let report = detect(&sets, &EmConfig::with_seed(8)).unwrap();
        assert!(report.flagged.is_empty());
        for space in &report.spaces {
            assert!(space.smaller_cluster.is_empty());
        }
    }

    #[test]
    fn smaller_cluster_tie_breaks_by_distance() {
        let fit = EmFit {
            clusters: [
                vec!["a".into(), "b".into()],
                vec!["c".into(), "d".into()],
            ],
            iterations: 1,
            log_likelihood: 0.0,
            log_likelihood_trace: vec![0.0],
            mean_sq_distance: [0.5, 4.0],
            dropped_dimensions: 0,
        };
        let (cluster, tie) = smaller_cluster(&fit);
        assert!(tie);
        assert_eq!(cluster, vec!["c".to_string(), "d".to_string()]);
    }

    #[test]
    fn report_is_label_invariant() {
        // Swapping the component order inside an EmFit must not change the
        // smaller-cluster selection.
        let fit = EmFit {
            clusters: [vec!["a".into()], vec!["b".into(), "c".into(), "d".into()]],
            iterations: 3,
            log_likelihood: -1.0,
            log_likelihood_trace: vec![-2.0, -1.0],
            mean_sq_distance: [9.0, 0.2],
            dropped_dimensions: 0,
        };
        let swapped = EmFit {
            clusters: [fit.clusters[1].clone(), fit.clusters[0].clone()],
            mean_sq_distance: [fit.mean_sq_distance[1], fit.mean_sq_distance[0]],
            ..fit.clone()
        };
        assert_eq!(smaller_cluster(&fit).0, smaller_cluster(&swapped).0);
    }
}
