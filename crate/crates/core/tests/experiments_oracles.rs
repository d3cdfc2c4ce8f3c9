mod common;

use common::*;
use model_features::abstraction::*;
use model_features::experiments::*;
use model_features::learner::LearnerConfig;
use model_features::mdp::*;
use proptest::prelude::*;

/// Pearson statistic of observed counts against a uniform expectation.
fn chi_square(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

#[test]
fn perturbation_is_uniform_over_eligible_moves() {
    // State 9 is a singleton and must never move.
    let p = Partition::new(vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]).unwrap();
    let mut moved = vec![0usize; 10];
    let mut offsets = vec![0usize; 3];
    for seed in 0..1000 {
        let (q, s) = perturb_partition(&p, seed).unwrap();
        moved[s] += 1;
        let (from, to) = (p.cluster_of(s), q.cluster_of(s));
        offsets[(to + 4 - from) % 4 - 1] += 1;
    }
    assert_eq!(moved[9], 0);
    // 1% critical values of the chi-square distribution with 8 and 2 degrees of freedom.
    assert!(chi_square(&moved[..9]) < 20.090, "{moved:?}");
    assert!(chi_square(&offsets) < 9.210, "{offsets:?}");
}

#[test]
fn planted_partition_is_exact_bisimulation() {
    for seed in 0..20 {
        let spec = PlantedMdpSpec {
            rng_seed: seed,
            balanced: seed % 2 == 0,
            ..PlantedMdpSpec::default()
        };
        let planted = make_planted_mdp(&spec).unwrap();
        assert!(is_bisimulation(&planted.mdp, &planted.partition, 1e-12).is_ok());
        for (_, pi) in standard_policies(&planted.mdp).unwrap() {
            let v = evaluate_policy_exact(&planted.mdp, &pi, EVAL_TOL).unwrap();
            assert!(v
                .state_values
                .iter()
                .all(|&x| (-1e-9..=10.0 + 1e-9).contains(&x)));
        }
    }
}

#[test]
fn derived_seeds_are_distinct() {
    let mut seeds: Vec<u64> = (0..3)
        .flat_map(|s| (0..200).map(move |i| derive_seed(0, s, i)))
        .collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 600);
}

fn small_spec() -> PlantedMdpSpec {
    PlantedMdpSpec {
        num_states: 12,
        num_clusters: 3,
        num_actions: 2,
        ..PlantedMdpSpec::default()
    }
}

#[test]
fn transfer_does_not_depend_on_thread_count() {
    let spec = small_spec();
    let source = make_planted_mdp(&spec).unwrap();
    let phi = partition_to_matrix(&source.partition).into_inner();
    let config = LearnerConfig {
        total_updates: 500,
        ..LearnerConfig::transfer_defaults()
    };
    for perturb in [false, true] {
        let one = run_transfer(&phi, &source, &spec, 5, perturb, &config, None, 1).unwrap();
        let three = run_transfer(&phi, &source, &spec, 5, perturb, &config, None, 3).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.csv_rows().len(), 15);
        assert_eq!(one.tasks.iter().all(|t| t.moved_state.is_some()), perturb);
    }
}

#[test]
fn ground_truth_features_transfer_exactly() {
    let spec = small_spec();
    let source = make_planted_mdp(&spec).unwrap();
    let phi = partition_to_matrix(&source.partition).into_inner();
    // The protocol's learning rate of 0.1 leaves an Adam noise floor of a few
    // hundredths even with exact features, so this control uses 1e-3.
    let config = LearnerConfig {
        learning_rate: 1e-3,
        ..LearnerConfig::transfer_defaults()
    };
    let result = run_transfer(&phi, &source, &spec, 3, false, &config, None, 3).unwrap();
    assert!(result.all_converged());
    let worst = result.errors().into_iter().fold(0.0, f64::max);
    assert!(worst <= 1e-3, "worst transfer error {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbation_moves_one_state(seed in any::<u64>(), ns in 3usize..30, m in 2usize..5) {
        prop_assume!(m < ns);
        let mut rng = rng(seed);
        let p = random_partition(ns, m, &mut rng);
        let (q, moved) = perturb_partition(&p, seed).unwrap();
        prop_assert_eq!(q.num_clusters(), m);
        let diff: Vec<usize> = (0..ns).filter(|&s| p.assignment()[s] != q.assignment()[s]).collect();
        prop_assert_eq!(diff, vec![moved]);
        prop_assert!(p.cluster_sizes()[p.cluster_of(moved)] >= 2);
    }

    #[test]
    fn lifted_mdp_is_bisimilar_for_any_partition(seed in any::<u64>(), ns in 2usize..20, m in 1usize..5) {
        prop_assume!(m <= ns);
        let mut rng = rng(seed);
        let p = random_partition(ns, m, &mut rng);
        let abs = sample_abstract_mdp(m, 2, 0.5, 0.9, &mut rng).unwrap();
        let mdp = lift_abstract_mdp(&abs, &p).unwrap();
        prop_assert!(is_bisimulation(&mdp, &p, 1e-12).is_ok());
        let phi = partition_to_matrix(&p);
        let back = build_abstract_mdp(&mdp, &phi, &uniform_weights(&p)).unwrap();
        for a in 0..2 {
            prop_assert!((back.transition(a) - abs.transition(a)).amax() <= 1e-12);
            prop_assert!((back.reward(a) - abs.reward(a)).amax() <= 1e-12);
        }
    }
}
