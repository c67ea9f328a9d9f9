//! Temporary scale probe (deleted before release).

use std::time::Instant;

use greywave::attack::{AttackIntent, AttackModel, AttackSpec};
use greywave::detect::EmConfig;
use greywave::eval::{detection_experiment, prediction_shift_experiment};
use greywave::seeding::SeedMixer;
use greywave::synth::{generate_genuine, SyntheticConfig};
use greywave::wavelet::WaveletSpec;
use greywave::RatingMatrix;

fn spec(
    model: AttackModel,
    intent: AttackIntent,
    grey: Option<i32>,
    attack: f64,
    filler: f64,
    seed: u64,
) -> AttackSpec {
    AttackSpec {
        model,
        intent,
        grey_rating: grey,
        attack_size: attack,
        filler_size: filler,
        aop_top_fraction: None,
        popularity_threshold: 50,
        seed,
    }
}

fn mean_dr_far(genuine: &RatingMatrix, s: &AttackSpec, seeds: u64) -> (f64, f64) {
    let wavelet = WaveletSpec::haar();
    let mut dr = 0.0;
    let mut far = 0.0;
    for k in 0..seeds {
        let s = AttackSpec {
            seed: SeedMixer::new(777)
                .u64(k)
                .f64(s.attack_size)
                .f64(s.filler_size)
                .finish(),
            ..s.clone()
        };
        let em = EmConfig::with_seed(SeedMixer::new(s.seed).str("em").finish());
        let out = detection_experiment(genuine, &s, &wavelet, 1, &em).unwrap();
        if k == 0 {
            let smaller: Vec<(usize, usize)> = out
                .report
                .spaces
                .iter()
                .map(|x| {
                    let atk = x
                        .smaller_cluster
                        .iter()
                        .filter(|u| u.starts_with("attacker::"))
                        .count();
                    (atk, x.smaller_cluster.len())
                })
                .collect();
            println!("    smaller clusters (attackers/total): {smaller:?}");
        }
        dr += out.detection_rate;
        far += out.false_alarm_rate;
    }
    (dr / seeds as f64, far / seeds as f64)
}

fn base(median: f64, tilt: f64) -> SyntheticConfig {
    SyntheticConfig {
        median_profile_size: median,
        selection_tilt: tilt,
        ..SyntheticConfig::new(800, 4000, 20260809)
    }
}

#[test]
#[ignore]
fn probe_all() {
    for (median, tilt) in [(22.0, 0.6), (22.0, 0.8)] {
        let t0 = Instant::now();
        let genuine = generate_genuine(&base(median, tilt)).unwrap();
        println!(
            "== median {median} tilt {tilt}: {} items {} ratings ({:?})",
            genuine.n_items(),
            genuine.n_ratings(),
            t0.elapsed()
        );

        let t = Instant::now();
        let s = spec(AttackModel::Average, AttackIntent::Nuke, None, 0.17, 0.05, 0);
        let (dr, far) = mean_dr_far(&genuine, &s, 4);
        println!("  avg nuke 17/5: DR {dr:.3} FAR {far:.3} ({:?})", t.elapsed());

        for attack in [0.03, 0.47] {
            let s = spec(
                AttackModel::BandwagonRandom,
                AttackIntent::Grey,
                Some(3),
                attack,
                0.05,
                0,
            );
            let (dr, far) = mean_dr_far(&genuine, &s, 4);
            println!("  bwr grey3 attack {attack}: DR {dr:.3} FAR {far:.3}");
        }
        for filler in [0.01, 0.10] {
            let s = spec(
                AttackModel::BandwagonRandom,
                AttackIntent::Grey,
                Some(3),
                0.17,
                filler,
                0,
            );
            let (dr, far) = mean_dr_far(&genuine, &s, 4);
            println!("  bwr grey3 filler {filler}: DR {dr:.3} FAR {far:.3}");
        }
        for grey in [1, 7] {
            let s = spec(
                AttackModel::Average,
                AttackIntent::Grey,
                Some(grey),
                0.17,
                0.05,
                0,
            );
            let (dr, far) = mean_dr_far(&genuine, &s, 4);
            println!("  avg grey{grey}: DR {dr:.3} FAR {far:.3}");
        }

        let t = Instant::now();
        let sizes = [0.0, 0.12, 0.27, 0.47];
        for &attack in &sizes {
            let mut mae = 0.0;
            let seeds = 4u64;
            for k in 0..seeds {
                let s = spec(
                    AttackModel::Average,
                    AttackIntent::Grey,
                    Some(5),
                    if attack == 0.0 { 1e-12 } else { attack },
                    0.05,
                    SeedMixer::new(4242).u64(k).f64(attack).finish(),
                );
                let (m, _) = prediction_shift_experiment(
                    &genuine,
                    &s,
                    0.1,
                    20,
                    SeedMixer::new(55).u64(k).finish(),
                )
                .unwrap();
                mae += m;
            }
            println!("  shift attack {attack:.2}: MAE {:.4}", mae / seeds as f64);
        }
        println!("  shift block {:?}", t.elapsed());
    }
}
