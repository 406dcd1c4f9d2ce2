use statrs::distribution::{ContinuousCDF, DiscreteCDF, Poisson, StudentsT};

use drivlab::artifact::Provenance;
use drivlab::data::io::write_episodes;
use drivlab::data::types::{ANGLE_RANGE, SPEED_RANGE};
use drivlab::data::{EpisodeId, Turn};
use drivlab::simgen::world::episode_seed;
use drivlab::simgen::{generate_dataset, generate_episode, simulate_world, WorldConfig};

fn encoded(cfg: &WorldConfig, n: usize) -> Vec<u8> {
    let eps = generate_dataset(cfg, n).unwrap();
    let mut buf = Vec::new();
    write_episodes(&mut buf, &eps, &Provenance::new(cfg.seed)).unwrap();
    buf
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = WorldConfig {
        seed: 77,
        ..Default::default()
    };
    let a = encoded(&cfg, 5);
    assert_eq!(a, encoded(&cfg, 5));
    let other = WorldConfig { seed: 78, ..cfg };
    assert_ne!(a, encoded(&other, 5));
}

#[test]
fn records_respect_ranges() {
    let cfg = WorldConfig {
        seed: 3,
        congestion_level: 0.9,
        ..Default::default()
    };
    for ep in generate_dataset(&cfg, 30).unwrap() {
        for r in &ep.records {
            assert!((SPEED_RANGE.0..=SPEED_RANGE.1).contains(&r.speed));
            assert!((ANGLE_RANGE.0..=ANGLE_RANGE.1).contains(&r.angle));
            assert!(r.obs.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn calm_world_follows_the_curvature_law_exactly() {
    let base = WorldConfig {
        intersection_rate: 0.0,
        congestion_level: 0.0,
        congestion_spread: 0.0,
        visibility: 1.0,
        visibility_spread: 0.0,
        obs_noise_scale: 0.0,
        ..Default::default()
    };
    for seed in 0..20 {
        let cfg = WorldConfig { seed, ..base.clone() };
        let ep = generate_episode(&cfg, EpisodeId(seed as u32)).unwrap();
        for (r, d) in ep.records.iter().zip(&ep.meta.difficulty) {
            let law = (cfg.steer_gain * d.curvature).clamp(ANGLE_RANGE.0, ANGLE_RANGE.1);
            assert_eq!(r.angle, law);
            // the noiseless preview channel is curvature itself
            assert_eq!(r.obs[0], 100.0 * d.curvature);
        }
    }
}

#[test]
fn intersection_count_is_poisson_like() {
    let cfg = WorldConfig {
        episode_length: 200,
        intersection_rate: 2.0,
        ..Default::default()
    };
    let lambda = 4.0;
    let poisson = Poisson::new(lambda).unwrap();
    let (lo, hi) = (poisson.inverse_cdf(0.005), poisson.inverse_cdf(0.995));
    let n = 1000;
    let counts: Vec<u64> = (0..n)
        .map(|i| {
            let c = WorldConfig {
                seed: episode_seed(12, i),
                ..cfg.clone()
            };
            simulate_world(&c).arrivals.len() as u64
        })
        .collect();
    let inside = counts.iter().filter(|&&c| c >= lo && c <= hi).count();
    assert!(
        inside as f64 / n as f64 >= 0.98,
        "only {inside} of {n} counts in [{lo}, {hi}]"
    );
    let mean = counts.iter().sum::<u64>() as f64 / n as f64;
    let half_width = 2.576 * (lambda / n as f64).sqrt();
    assert!((mean - lambda).abs() <= half_width, "mean count {mean}");
}

#[test]
fn straight_passages_stay_within_five_degrees() {
    let cfg = WorldConfig {
        seed: 8,
        ..Default::default()
    };
    let mut seen = 0;
    for ep in generate_dataset(&cfg, 200).unwrap() {
        for (r, d) in ep.records.iter().zip(&ep.meta.difficulty) {
            if d.intersection == Some(Turn::Straight) {
                seen += 1;
                assert!(r.angle.abs() <= 5.0, "angle {} in a straight passage", r.angle);
            }
        }
    }
    assert!(seen > 1000);
}

#[test]
fn intersections_are_slower() {
    let cfg = WorldConfig {
        seed: 21,
        ..Default::default()
    };
    let (mut zin, mut nin, mut zout, mut nout) = (0.0, 0, 0.0, 0);
    for ep in generate_dataset(&cfg, 100).unwrap() {
        for (r, d) in ep.records.iter().zip(&ep.meta.difficulty) {
            if d.intersection.is_some() {
                zin += r.speed;
                nin += 1;
            } else {
                zout += r.speed;
                nout += 1;
            }
        }
    }
    assert!(nin > 0 && nout > 0);
    assert!(zin / (nin as f64) < zout / nout as f64);
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided Welch t-test p-value.
fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[test]
fn branch_is_not_visible_before_the_zone() {
    let base = WorldConfig {
        seed: 5,
        ..Default::default()
    };
    let lead = 3;
    let (mut left, mut right): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (Vec::new(), Vec::new());
    for i in 0..600u64 {
        let cfg = WorldConfig {
            seed: episode_seed(base.seed, i),
            ..base.clone()
        };
        let trace = simulate_world(&cfg);
        let ep = generate_episode(&cfg, EpisodeId(i as u32)).unwrap();
        for &a in &trace.arrivals {
            if a < lead {
                continue;
            }
            let obs = ep.records[a - lead].obs.clone();
            match trace.states[a].zone.map(|z| z.branch) {
                Some(Turn::Left) => left.push(obs),
                Some(Turn::Right) => right.push(obs),
                _ => {}
            }
        }
    }
    assert!(left.len() > 300 && right.len() > 300);
    let d = left[0].len();
    // familywise level 0.01 across the channels
    let alpha = 0.01 / d as f64;
    for c in 0..d {
        let a: Vec<f64> = left.iter().map(|o| o[c]).collect();
        let b: Vec<f64> = right.iter().map(|o| o[c]).collect();
        let p = welch_p(&a, &b);
        assert!(p > alpha, "channel {c} separates branches (p = {p:.2e})");
    }
}
