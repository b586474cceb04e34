use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unzipseq_core::inference::{self, Prior};
use unzipseq_core::oracle::{compare_with_exhaustive, global_information, Exhaustive};
use unzipseq_core::rate_theory::{inv_pbar_all, ln_pair_pmf};
use unzipseq_core::walker::{simulate_ensemble, Walker};
use unzipseq_core::{AggregateStats, Base, BaseSequence, Environment, Execution, Mode, SeedSpec};

fn random_sequence(rng: &mut ChaCha8Rng, m: usize) -> BaseSequence {
    BaseSequence::new((0..m).map(|_| Base::from_index(rng.random_range(0..4))).collect()).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, m: usize, mode: Mode) -> (Environment, AggregateStats) {
    let beta = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let replicas = [1, 10][rng.random_range(0..2)];
    // Reject landscapes whose walks would take too long to finish.
    let env = loop {
        let g1 = rng.random_range(1.5..3.5);
        let env = Environment::with_constant_force(random_sequence(rng, m), g1, beta, 1.0).unwrap();
        if inv_pbar_all(&env.landscape()).iter().sum::<f64>() < 1e3 {
            break env;
        }
    };
    let stats = simulate_ensemble(&env.landscape(), replicas, mode, SeedSpec::new(rng.random())).unwrap();
    (env, stats)
}

#[test]
fn dynamic_programming_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..40 {
        let mode = if i % 2 == 0 { Mode::Discrete } else { Mode::Continuous };
        let m = rng.random_range(2..=if mode == Mode::Discrete { 7 } else { 6 });
        let (env, stats) = random_instance(&mut rng, m, mode);
        let prior = Prior::uniform(m);
        let cmp = compare_with_exhaustive(&stats, &env.model, &prior, mode, env.seq.at(1), 3).unwrap();
        assert!(cmp.argmin_matches, "instance {i}");
        assert!(cmp.max_relative_error < 1e-10, "instance {i}: {cmp:?}");
    }
}

#[test]
fn potentials_sum_to_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for mode in [Mode::Discrete, Mode::Continuous] {
        for _ in 0..20 {
            let m = rng.random_range(2..12);
            let (env, stats) = random_instance(&mut rng, m, mode);
            let w: Vec<[f64; 4]> = (0..m)
                .map(|_| {
                    let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.1..1.0));
                    let t: f64 = raw.iter().sum();
                    raw.map(|v| v / t)
                })
                .collect();
            let prior = Prior::new(w).unwrap();
            let pot = inference::build_edge_potentials(&stats, &env.model, &prior, mode).unwrap();
            for _ in 0..10 {
                let alpha = random_sequence(&mut rng, m);
                let direct = global_information(&stats, &env.model, &prior, mode, alpha.bases());
                let summed = pot.cost(alpha.bases());
                assert!((direct - summed).abs() <= 1e-10 * direct.abs().max(1.0));
            }
        }
    }
}

#[test]
fn continuous_potentials_hand_expanded() {
    let env = Environment::with_constant_force("TGCA".parse().unwrap(), 2.2, 1.3, 0.7).unwrap();
    let stats = simulate_ensemble(&env.landscape(), 1, Mode::Continuous, SeedSpec::new(3)).unwrap();
    let pot = inference::build_edge_potentials(&stats, &env.model, &Prior::uniform(4), Mode::Continuous).unwrap();
    let ln4 = 4f64.ln();
    for x in 1..4 {
        for u in Base::ALL {
            for v in Base::ALL {
                let g0 = env.table().get(u, v);
                let mut expect =
                    1.3 * g0 * stats.up[x - 1] as f64 + 0.7 * stats.sojourn[x - 1] * (-1.3 * g0).exp() + ln4;
                if x == 1 {
                    expect += ln4;
                }
                assert!((pot.get(x, u, v) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn site_posterior_is_the_global_conditional() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for mode in [Mode::Discrete, Mode::Continuous] {
        for _ in 0..10 {
            let m = rng.random_range(3..=6);
            let (env, stats) = random_instance(&mut rng, m, mode);
            let prior = Prior::uniform(m);
            let ex = Exhaustive::enumerate(&stats, &env.model, &prior, mode, Some(env.seq.at(1)));
            for x in 2..m {
                let post = inference::site_posterior(&stats, &env, x, &prior, mode).unwrap();
                let cond = ex.site_conditional(env.seq.bases(), x);
                assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (a, b) in post.probs.iter().zip(cond) {
                    assert!((a - b).abs() < 1e-10, "{post:?} vs {cond:?}");
                }
            }
        }
    }
}

#[test]
fn sequence_posterior_normalizes_and_peaks_at_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for mode in [Mode::Discrete, Mode::Continuous] {
        for _ in 0..10 {
            let m = rng.random_range(2..=6);
            let (env, stats) = random_instance(&mut rng, m, mode);
            let b1 = env.seq.at(1);
            let prior = Prior::uniform(m);
            let pot = inference::build_edge_potentials(&stats, &env.model, &prior, mode).unwrap();
            let ex = Exhaustive::enumerate(&stats, &env.model, &prior, mode, Some(b1));
            let map = inference::decode_map(&pot, b1);
            let p_map = inference::sequence_posterior(&map.map_sequence, &pot, b1).unwrap();
            let mut total = 0.0;
            for (alpha, _) in &ex.candidates {
                let p = inference::sequence_posterior(&BaseSequence::new(alpha.clone()).unwrap(), &pot, b1).unwrap();
                assert!(p <= p_map * (1.0 + 1e-12));
                total += p;
            }
            assert!((total - 1.0).abs() < 1e-10);
            let marg = inference::marginals(&pot, b1);
            for row in &marg {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }
}

// In a three-site molecule one discrete walk is determined by its down-count
// at site 2, whose law is the pair distribution with one up-crossing.
#[test]
fn three_site_bayes_by_pair_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for trial in 0..30 {
        let beta = [0.5, 1.0, 2.0][trial % 3];
        let env = Environment::with_constant_force(random_sequence(&mut rng, 3), rng.random_range(1.5..3.0), beta, 1.0)
            .unwrap();
        let replicas = 1 + trial as u64 % 3;
        let land = env.landscape();
        let walker = Walker::new(&land, Mode::Discrete);
        let seed = SeedSpec::new(trial as u64);
        let walks: Vec<_> = (0..replicas).map(|i| walker.walk(seed, i).unwrap()).collect();
        let stats = walker.ensemble(seed, replicas, Execution::Sequential).unwrap();
        let mut lw = [0.0; 4];
        for g in Base::ALL {
            let mut alt = env.clone();
            let mut bases = alt.seq.bases().to_vec();
            bases[1] = g;
            alt.seq = BaseSequence::new(bases).unwrap();
            let land = alt.landscape();
            lw[g.index()] = walks
                .iter()
                .map(|w| ln_pair_pmf(&land, 2, w.up[1], w.down[1]).unwrap())
                .sum();
        }
        let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = lw.iter().map(|v| (v - mx).exp()).sum();
        let oracle = lw.map(|v| (v - mx).exp() / z);
        let post = inference::site_posterior(&stats, &env, 2, &Prior::uniform(3), Mode::Discrete).unwrap();
        for (a, b) in post.probs.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12, "{:?} vs {oracle:?}", post.probs);
        }
        let best = oracle.iter().cloned().fold(0.0, f64::max);
        let (est, _) = inference::site_map_estimate(&post);
        assert!((oracle[est.index()] - best).abs() < 1e-12);
        assert!((inference::site_error_probability(&post) - (1.0 - best)).abs() < 1e-12);
    }
}

#[test]
fn decoding_converges_at_moderate_replica_counts() {
    let m = 20;
    let mut wrong = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let env = Environment::with_constant_force(random_sequence(&mut rng, m), 2.8, 1.0, 1.0).unwrap();
        let land = env.landscape();
        let stats = Walker::new(&land, Mode::Continuous)
            .ensemble(SeedSpec::new(seed), 5000, Execution::default())
            .unwrap();
        let pot = inference::build_edge_potentials(&stats, &env.model, &Prior::uniform(m), Mode::Continuous).unwrap();
        let decoded = inference::decode_map(&pot, env.seq.at(1));
        wrong += decoded
            .map_sequence
            .bases()
            .iter()
            .zip(env.seq.bases())
            .filter(|(a, b)| a != b)
            .count();
    }
    assert_eq!(wrong, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_shift_changes_nothing(seed in any::<u64>(), m in 2usize..7, shift in -500.0f64..500.0, disc in any::<bool>()) {
        let mode = if disc { Mode::Discrete } else { Mode::Continuous };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (env, stats) = random_instance(&mut rng, m, mode);
        let b1 = env.seq.at(1);
        let pot = inference::build_edge_potentials(&stats, &env.model, &Prior::uniform(m), mode).unwrap();
        let moved = pot.shifted(shift);
        let (a, b) = (inference::decode_map(&pot, b1), inference::decode_map(&moved, b1));
        prop_assert_eq!(&a.map_sequence, &b.map_sequence);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1e-300) || (x - y).abs() < 1e-14;
        prop_assert!(close(inference::prob_any_error(&pot, b1), inference::prob_any_error(&moved, b1)));
        for h in 1..4 {
            prop_assert!(close(
                inference::prob_nonsuccessive_errors(&pot, b1, h).unwrap(),
                inference::prob_nonsuccessive_errors(&moved, b1, h).unwrap()
            ));
        }
        prop_assert!(close(
            inference::sequence_posterior(&a.map_sequence, &pot, b1).unwrap(),
            inference::sequence_posterior(&a.map_sequence, &moved, b1).unwrap()
        ));
        for (p, q) in inference::marginals(&pot, b1).iter().zip(inference::marginals(&moved, b1)) {
            for (x, y) in p.iter().zip(q) {
                prop_assert!(close(*x, y));
            }
        }
    }

    #[test]
    fn error_blocks_are_monotone(seed in any::<u64>(), m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (env, stats) = random_instance(&mut rng, m, Mode::Continuous);
        let pot = inference::build_edge_potentials(&stats, &env.model, &Prior::uniform(m), Mode::Continuous).unwrap();
        let report = inference::error_report(&pot, env.seq.at(1), 5);
        prop_assert!((report.p_h_errors[0] - report.p_any_error).abs() <= 1e-15 * report.p_any_error);
        for w in report.p_h_errors.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        prop_assert!(report.p_h_errors.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
