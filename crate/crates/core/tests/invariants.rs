use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use lgwalk_core::classical::{classical_k, TrajectoryDistribution};
use lgwalk_core::lattice::{Walker, WalkerState, Window};
use lgwalk_core::pipeline::{exact_correlators, simulate_events, EventSet};
use lgwalk_core::stats::{analyze, bootstrap_k, clopper_pearson, ONE_SIGMA};
use lgwalk_core::walk::{dephasing_map, evolve, run_walk};
use lgwalk_core::{CoinParams, ProtocolConfig, QScheme, Spin, StreamSeed, WalkSpec};

fn localized(steps: usize, spin: Spin) -> Walker {
    WalkerState::new_localized(0, spin, Window::for_walk(steps, 0))
        .unwrap()
        .into()
}

#[test]
fn norm_is_preserved_over_long_walks() {
    for theta in [0.3, FRAC_PI_2, 2.9] {
        let spec = WalkSpec::new(150, CoinParams::new(theta).unwrap(), 0.0).unwrap();
        let trace = run_walk(&spec, &localized(150, Spin::Up)).unwrap();
        for state in trace.states() {
            assert!((state.weight() - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parity_and_light_cone(theta in 0.0..PI, steps in 1usize..30, down in any::<bool>()) {
        let spin = if down { Spin::Down } else { Spin::Up };
        let spec = WalkSpec::new(steps, CoinParams::new(theta).unwrap(), 0.0).unwrap();
        let dist = evolve(&localized(steps, spin), &spec, steps).unwrap().position_distribution();
        for (x, p) in dist.iter() {
            if p > 1e-14 {
                prop_assert!(x.unsigned_abs() as usize <= steps);
                prop_assert_eq!((x - steps as i64).rem_euclid(2), 0);
            }
        }
        prop_assert!((dist.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_tracks_pure_state(theta in 0.0..PI, steps in 1usize..8) {
        let spec = WalkSpec::new(steps, CoinParams::new(theta).unwrap(), 0.0).unwrap();
        let start = localized(steps, Spin::Up);
        let pure = evolve(&start, &spec, steps).unwrap();
        let mixed = evolve(&Walker::Mixed(start.to_density()), &spec, steps).unwrap();
        let defect = (pure.to_density().matrix() - mixed.to_density().matrix()).camax();
        prop_assert!(defect < 1e-10);
    }

    #[test]
    fn dephasing_keeps_density_valid(theta in 0.0..PI, p in 0.0..=1.0f64, steps in 1usize..6) {
        let spec = WalkSpec::new(steps, CoinParams::new(theta).unwrap(), p).unwrap();
        let Walker::Mixed(rho) = evolve(&localized(steps, Spin::Up), &spec, steps).unwrap() else {
            unreachable!("dephasing promotes to a density matrix");
        };
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.hermiticity_defect() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn dephasing_is_completely_positive(p in 0.0..=1.0f64) {
        // Choi matrix of the channel on one site, two spin states
        let window = Window::new(0, 0).unwrap();
        let mut choi = DMatrix::<Complex64>::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                let mut unit = DMatrix::<Complex64>::zeros(2, 2);
                unit[(i, j)] = Complex64::new(1.0, 0.0);
                let image = dephasing_map(&window, p, &unit);
                for a in 0..2 {
                    for b in 0..2 {
                        choi[(2 * i + a, 2 * j + b)] = image[(a, b)];
                    }
                }
            }
        }
        let min = choi.symmetric_eigenvalues().min();
        prop_assert!(min > -1e-12, "{min}");
    }

    #[test]
    fn classical_k_never_exceeds_one(
        weights in prop::collection::vec(0.0..1.0f64, 16),
        xi in -1.0..=1.0f64,
    ) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 1e-6);
        let dist = TrajectoryDistribution::new(4, weights.iter().map(|w| w / total).collect()).unwrap();
        prop_assert!(classical_k(&dist, &QScheme::dichotomic(xi).unwrap()).unwrap() <= 1.0 + 1e-12);
        prop_assert!((classical_k(&dist, &QScheme::ConstantOne).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn violation_decreases_with_dephasing() {
    let mut previous = f64::INFINITY;
    for i in 0..=20 {
        let config = ProtocolConfig {
            dephasing: i as f64 / 20.0,
            ..ProtocolConfig::default()
        };
        let k = exact_correlators(&config).unwrap().k();
        assert!(
            k <= previous + 1e-12,
            "K rose to {k} at p = {}",
            config.dephasing
        );
        previous = k;
    }
    assert!((previous - 1.0).abs() < 0.2);
}

#[test]
fn clopper_pearson_covers() {
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};
    let n = 404;
    let intervals: Vec<_> = (0..=n)
        .map(|k| clopper_pearson(k, n, ONE_SIGMA).unwrap())
        .collect();
    for p in [0.1, 0.5, 0.9] {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let binomial = Binomial::new(n, p).unwrap();
        let covered = (0..10_000)
            .filter(|_| intervals[binomial.sample(&mut rng) as usize].contains(p))
            .count();
        assert!(covered as f64 / 1e4 >= 0.68, "p = {p}: {covered}");
    }
}

#[test]
fn analysis_is_deterministic() {
    let config = ProtocolConfig {
        dephasing: 0.06,
        detection_error: 0.02,
        seed: 77,
        bootstrap_resamples: 2000,
        monte_carlo_draws: 2000,
        ..ProtocolConfig::default()
    };
    let first = EventSet::new(simulate_events(&config).unwrap());
    let second = EventSet::new(simulate_events(&config).unwrap());
    assert_eq!(first, second);
    let a = analyze(&first, &config).unwrap();
    let b = analyze(&second, &config).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let threaded =
        pool.install(|| bootstrap_k(&first, &config.q2_scheme, 2000, StreamSeed::new(4)).unwrap());
    let single = bootstrap_k(&first, &config.q2_scheme, 2000, StreamSeed::new(4)).unwrap();
    assert_eq!(threaded, single);
}
