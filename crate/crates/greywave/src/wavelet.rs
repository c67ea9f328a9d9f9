//! One-dimensional discrete wavelet transform as a two-channel filter bank
//! with periodic boundary extension, plus the synthesis transform used by
//! the reconstruction tests.
//!
//! Convention: the analysis step correlates the signal with the filter at
//! even offsets, `a[n] = sum_t h[t] * x[(2n + t) mod N]`, low-pass `h`
//! producing approximations and high-pass `g` producing details. The
//! high-pass filter is derived from the low-pass one as the quadrature
//! mirror `g[k] = (-1)^k h[L-1-k]`. Odd-length inputs are right-padded with
//! a single zero before filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported orthonormal wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WaveletKind {
    #[default]
    Haar,
    Db2,
    Db4,
}

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

const DB2: [f64; 4] = [
    0.482962913144690,
    0.836516303737469,
    0.224143868041857,
    -0.129409522550921,
];

const DB4: [f64; 8] = [
    0.230377813308855,
    0.714846570552542,
    0.630880767929590,
    -0.027983769416984,
    -0.187034811718881,
    0.030841381835987,
    0.032883011666983,
    -0.010597401784997,
];

/// A quadrature-mirror analysis filter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletSpec {
    kind: WaveletKind,
    low_pass: Vec<f64>,
    high_pass: Vec<f64>,
}

impl WaveletSpec {
    pub fn new(kind: WaveletKind) -> Self {
        let low_pass: Vec<f64> = match kind {
            WaveletKind::Haar => HAAR.to_vec(),
            WaveletKind::Db2 => DB2.to_vec(),
            WaveletKind::Db4 => DB4.to_vec(),
        };
        let len = low_pass.len();
        let high_pass: Vec<f64> = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * low_pass[len - 1 - k]
            })
            .collect();
        WaveletSpec {
            kind,
            low_pass,
            high_pass,
        }
    }

    pub fn haar() -> Self {
        Self::new(WaveletKind::Haar)
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn low_pass(&self) -> &[f64] {
        &self.low_pass
    }

    pub fn high_pass(&self) -> &[f64] {
        &self.high_pass
    }

    pub fn filter_len(&self) -> usize {
        self.low_pass.len()
    }
}

/// Boundary handling for the filter bank. Periodic extension keeps the
/// orthonormal energy-conservation property testable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    #[default]
    Periodic,
}

/// Output of a multi-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DwtResult {
    approximations: Vec<Vec<f64>>,
    details: Vec<Vec<f64>>,
    original_len: usize,
    boundary: BoundaryMode,
}

impl DwtResult {
    pub fn levels(&self) -> usize {
        self.approximations.len()
    }

    /// Approximation coefficients of one level (1-based).
    pub fn approximation(&self, level: usize) -> &[f64] {
        &self.approximations[level - 1]
    }

    pub fn detail(&self, level: usize) -> &[f64] {
        &self.details[level - 1]
    }

    /// The deepest approximation, the input to feature extraction.
    pub fn final_approximation(&self) -> &[f64] {
        self.approximations
            .last()
            .expect("DwtResult holds at least one level")
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }
}

fn analyze(x: &[f64], filter: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (m, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &c) in filter.iter().enumerate() {
            acc += c * x[(2 * m + t) % n];
        }
        *slot = acc;
    }
}

/// One analysis step: low-pass and high-pass filtering followed by
/// sub-sampling by 2. Output lengths are `ceil(len(x) / 2)`.
pub fn dwt_level(x: &[f64], w: &WaveletSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() < w.filter_len() {
        return Err(Error::SignalTooShort {
            len: x.len(),
            filter: w.filter_len(),
        });
    }
    let padded;
    let input: &[f64] = if x.len() % 2 == 1 {
        padded = {
            let mut v = x.to_vec();
            v.push(0.0);
            v
        };
        &padded
    } else {
        x
    };
    let half = input.len() / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    analyze(input, &w.low_pass, &mut approx);
    analyze(input, &w.high_pass, &mut detail);
    Ok((approx, detail))
}

/// Recursive decomposition of the approximation branch, `levels >= 1`.
pub fn dwt_multilevel(x: &[f64], w: &WaveletSpec, levels: usize) -> Result<DwtResult> {
    if levels == 0 {
        return Err(Error::Config("level count must be at least 1".into()));
    }
    let mut approximations = Vec::with_capacity(levels);
    let mut details = Vec::with_capacity(levels);
    let mut current = x.to_vec();
    for level in 1..=levels {
        if current.len() < w.filter_len() {
            return Err(if level == 1 {
                Error::SignalTooShort {
                    len: current.len(),
                    filter: w.filter_len(),
                }
            } else {
                Error::LevelTooDeep {
                    level,
                    len: x.len(),
                }
            });
        }
        let (approx, detail) = dwt_level(&current, w)?;
        current = approx.clone();
        approximations.push(approx);
        details.push(detail);
    }
    Ok(DwtResult {
        approximations,
        details,
        original_len: x.len(),
        boundary: BoundaryMode::Periodic,
    })
}

/// Synthesis step inverting [`dwt_level`] under periodic extension.
pub fn idwt_level(approx: &[f64], detail: &[f64], w: &WaveletSpec) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::LengthMismatch {
            approx: approx.len(),
            detail: detail.len(),
        });
    }
    let n = 2 * approx.len();
    let mut x = vec![0.0; n];
    for m in 0..approx.len() {
        for t in 0..w.filter_len() {
            x[(2 * m + t) % n] += w.low_pass[t] * approx[m] + w.high_pass[t] * detail[m];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn all_kinds() -> [WaveletSpec; 3] {
        [
            WaveletSpec::new(WaveletKind::Haar),
            WaveletSpec::new(WaveletKind::Db2),
            WaveletSpec::new(WaveletKind::Db4),
        ]
    }

    #[test]
    fn filters_are_quadrature_mirror_pairs() {
        for w in all_kinds() {
            let h = w.low_pass();
            let g = w.high_pass();
            let l = h.len();
            let sum: f64 = h.iter().sum();
            let sum_sq: f64 = h.iter().map(|c| c * c).sum();
            assert!((sum - SQRT2).abs() < 1e-10, "{:?}: sum {}", w.kind(), sum);
            assert!((sum_sq - 1.0).abs() < 1e-10);
            for (k, &gk) in g.iter().enumerate() {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(gk, sign * h[l - 1 - k]);
            }
            // Orthogonality at even shifts.
            for shift in 1..l / 2 {
                let dot: f64 = (0..l - 2 * shift).map(|k| h[k] * h[k + 2 * shift]).sum();
                assert!(dot.abs() < 1e-10, "{:?} shift {shift}: {dot}", w.kind());
            }
        }
    }

    #[test]
    fn haar_constant_signal() {
        let w = WaveletSpec::haar();
        let (a, d) = dwt_level(&[1.0, 1.0, 1.0, 1.0], &w).unwrap();
        assert!((a[0] - SQRT2).abs() < 1e-12);
        assert!((a[1] - SQRT2).abs() < 1e-12);
        assert!(d[0].abs() < 1e-12 && d[1].abs() < 1e-12);
    }

    #[test]
    fn zeros_in_zeros_out() {
        for w in all_kinds() {
            let (a, d) = dwt_level(&vec![0.0; 16], &w).unwrap();
            assert!(a.iter().chain(d.iter()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn haar_alternating_signal() {
        let w = WaveletSpec::haar();
        let (a, d) = dwt_level(&[1.0, -1.0, 1.0, -1.0], &w).unwrap();
        assert!(a[0].abs() < 1e-12 && a[1].abs() < 1e-12);
        // Sign fixed by this module's convention: d[n] = (x[2n] - x[2n+1]) / sqrt(2).
        assert!((d[0] - SQRT2).abs() < 1e-12);
        assert!((d[1] - SQRT2).abs() < 1e-12);
    }

    #[test]
    fn two_level_haar_collapses_constants() {
        let w = WaveletSpec::haar();
        let res = dwt_multilevel(&[1.0, 1.0, 1.0, 1.0], &w, 2).unwrap();
        assert_eq!(res.levels(), 2);
        assert_eq!(res.final_approximation().len(), 1);
        assert!((res.final_approximation()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_level_equals_dwt_level() {
        let w = WaveletSpec::haar();
        let x = [0.5, -1.0, 2.0, 0.0, 3.0, 1.0, -2.0, 0.25];
        let res = dwt_multilevel(&x, &w, 1).unwrap();
        let (a, d) = dwt_level(&x, &w).unwrap();
        assert_eq!(res.approximation(1), &a[..]);
        assert_eq!(res.detail(1), &d[..]);
        assert_eq!(res.original_len(), 8);
    }

    #[test]
    fn level_halving_lengths() {
        let w = WaveletSpec::haar();
        let res = dwt_multilevel(&vec![1.0; 8], &w, 1).unwrap();
        assert_eq!(res.approximation(1).len(), 4);
        assert_eq!(res.detail(1).len(), 4);
    }

    #[test]
    fn odd_length_is_zero_padded() {
        let w = WaveletSpec::haar();
        let (a, d) = dwt_level(&[1.0, 1.0, 1.0, 1.0, 1.0], &w).unwrap();
        assert_eq!(a.len(), 3); // ceil(5 / 2)
        assert_eq!(d.len(), 3);
        // The trailing half-window sees (1, 0).
        assert!((a[2] - 1.0 / SQRT2).abs() < 1e-12);
        assert!((d[2] - 1.0 / SQRT2).abs() < 1e-12);
    }

    #[test]
    fn error_cases() {
        let w = WaveletSpec::new(WaveletKind::Db2);
        assert!(matches!(
            dwt_level(&[1.0, 2.0], &w),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(matches!(
            dwt_multilevel(&[1.0, 2.0, 3.0, 4.0], &WaveletSpec::haar(), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            dwt_multilevel(&[1.0, 2.0, 3.0, 4.0], &WaveletSpec::haar(), 3),
            Err(Error::LevelTooDeep { .. })
        ));
        assert!(matches!(
            idwt_level(&[1.0], &[1.0, 2.0], &WaveletSpec::haar()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn haar_reconstruction_of_worked_example() {
        let w = WaveletSpec::haar();
        let x = idwt_level(&[SQRT2, SQRT2], &[0.0, 0.0], &w).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let zeros = idwt_level(&[0.0, 0.0], &[0.0, 0.0], &w).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    fn random_signal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn perfect_reconstruction_all_kinds() {
        for w in all_kinds() {
            for len in [8usize, 16, 30, 64, 126, 256] {
                let x = random_signal(len, len as u64);
                let (a, d) = dwt_level(&x, &w).unwrap();
                let back = idwt_level(&a, &d, &w).unwrap();
                for (orig, rec) in x.iter().zip(&back) {
                    assert!(
                        (orig - rec).abs() < 1e-9,
                        "{:?} len {len}: {orig} vs {rec}",
                        w.kind()
                    );
                }
            }
        }
    }

    #[test]
    fn shift_by_two_covariance() {
        let w = WaveletSpec::haar();
        let x = random_signal(32, 9);
        let mut shifted = x.clone();
        shifted.rotate_right(2);
        let (a, d) = dwt_level(&x, &w).unwrap();
        let (mut a2, mut d2) = dwt_level(&shifted, &w).unwrap();
        a2.rotate_left(1);
        d2.rotate_left(1);
        for (v, v2) in a.iter().zip(&a2).chain(d.iter().zip(&d2)) {
            assert!((v - v2).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn energy_conservation(seed in 0u64..500, half in 1usize..128) {
            let len = 2 * half;
            let x = random_signal(len, seed);
            for w in all_kinds() {
                if len < w.filter_len() { continue; }
                let (a, d) = dwt_level(&x, &w).unwrap();
                let ex: f64 = x.iter().map(|v| v * v).sum();
                let eout: f64 = a.iter().chain(d.iter()).map(|v| v * v).sum();
                prop_assert!((ex - eout).abs() < 1e-9);
            }
        }

        #[test]
        fn linearity(seed in 0u64..500, half in 1usize..64, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let len = 2 * half;
            let x = random_signal(len, seed);
            let y = random_signal(len, seed.wrapping_add(1));
            let combined: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let w = WaveletSpec::haar();
            let (ac, dc) = dwt_level(&combined, &w).unwrap();
            let (ax, dx) = dwt_level(&x, &w).unwrap();
            let (ay, dy) = dwt_level(&y, &w).unwrap();
            for i in 0..ac.len() {
                prop_assert!((ac[i] - (alpha * ax[i] + beta * ay[i])).abs() < 1e-9);
                prop_assert!((dc[i] - (alpha * dx[i] + beta * dy[i])).abs() < 1e-9);
            }
        }
    }
}
