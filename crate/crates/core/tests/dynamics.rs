use mmwave::channel::{evolve_slot, DynamicsConfig, PathSet};
use mmwave::numerics::RngState;
use std::f64::consts::PI;

fn cfg(sigma_u: f64, arrival_rate: f64, departure_rate: f64) -> DynamicsConfig {
    DynamicsConfig { sigma_u, arrival_rate, departure_rate, slot_duration: 1e-4, gain_variance: 256.0 }
}

#[test]
fn departure_fraction_and_lifetime() {
    let c = cfg(0.0, 0.0, 200.0);
    let mut rng = RngState::new(11);
    let (mut path_slots, mut departures) = (0usize, 0usize);
    let mut paths = PathSet::random(10, 256.0, &mut rng);
    while path_slots < 100_000 {
        if paths.is_empty() {
            paths = PathSet::random(10, 256.0, &mut rng);
        }
        path_slots += paths.len();
        let step = evolve_slot(&paths, &c, &mut rng);
        departures += step.departures;
        paths = step.paths;
    }
    let frac = departures as f64 / path_slots as f64;
    assert!((frac - 0.02).abs() < 0.002, "departure fraction {frac}");
    assert!((c.mean_lifetime_slots() - 50.0).abs() < 1e-9);
}

#[test]
fn mean_absolute_drift() {
    let sigma_u = PI / 180.0;
    let c = cfg(sigma_u, 0.0, 0.0);
    let mut rng = RngState::new(12);
    // Keep the walk well inside (0, pi) so reflection never triggers.
    let mut total = 0.0;
    let mut draws = 0usize;
    while draws < 100_000 {
        let paths = PathSet::new(vec![num_complex::Complex64::new(1.0, 0.0); 5], vec![1.0, 1.2, 1.4, 1.6, 1.8, 1.1, 1.3, 1.5, 1.7, 1.9]).unwrap();
        let next = evolve_slot(&paths, &c, &mut rng).paths;
        for (a, b) in paths.angles().iter().zip(next.angles()) {
            total += (b - a).abs();
            draws += 1;
        }
    }
    let mean = total / draws as f64;
    let expected = (2.0 / PI).sqrt() * sigma_u;
    assert!((expected - 0.0139).abs() < 1e-4);
    assert!((mean - expected).abs() < 0.01 * expected, "mean drift {mean} vs {expected}");
}

#[test]
fn birth_death_mean_path_count() {
    let c = cfg(0.5 * PI / 180.0, 500.0, 200.0);
    let mut rng = RngState::new(13);
    let mut paths = PathSet::random(3, 256.0, &mut rng);
    let (mut sum, slots) = (0usize, 200_000usize);
    for _ in 0..slots {
        paths = evolve_slot(&paths, &c, &mut rng).paths;
        sum += paths.len();
        assert!(paths.angles().iter().all(|a| (0.0..=PI).contains(a)));
    }
    let mean = sum as f64 / slots as f64;
    let target = 500.0 / 200.0;
    assert!((mean - target).abs() < 0.1 * target, "mean path count {mean}");
}

#[test]
fn no_births_or_deaths_keeps_count() {
    let c = cfg(0.02, 0.0, 0.0);
    let mut rng = RngState::new(14);
    let mut paths = PathSet::random(4, 256.0, &mut rng);
    let gains = paths.gains().to_vec();
    for _ in 0..5_000 {
        let step = evolve_slot(&paths, &c, &mut rng);
        assert!(!step.abrupt_change());
        paths = step.paths;
    }
    assert_eq!(paths.gains(), &gains[..]);
}
