use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use transec_core::attack::{extreme_assignments, lattice_assignments};
use transec_core::ctm_lp::TrafficModel;
use transec_core::gp;
use transec_core::netgen::{generate_gre, GreParams};
use transec_core::network::Network;
use transec_core::proportions::{Proportions, NORMALIZATION_TOL};
use transec_core::trace::TrafficTrace;

fn small_gre(seed: u64, p_extra: f64) -> Network {
    generate_gre(&GreParams {
        width: 3,
        height: 3,
        p_extra,
        ..GreParams::with_seed(seed)
    })
    .unwrap()
}

fn assert_normalized(values: &std::collections::BTreeMap<String, f64>) {
    let sum: f64 = values.values().sum();
    assert!((sum - 1.0).abs() <= NORMALIZATION_TOL, "sum {sum}");
    assert!(values.values().all(|&v| (0.0..=1.0).contains(&v)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_networks_are_valid_and_reproducible(seed in 0u64..10_000, p in 0.0f64..0.5) {
        let a = small_gre(seed, p);
        prop_assert!(a.validate().is_pass(), "{}", a.validate());
        let b = small_gre(seed, p);
        prop_assert_eq!(a.to_json(), b.to_json());
        let again = Network::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(again.to_json(), a.to_json());
    }

    #[test]
    fn candidate_assignments_are_normalized(seed in 0u64..10_000, levels in 2usize..5) {
        let net = small_gre(seed, 0.2);
        for merge in net.signalized() {
            let preds = net.predecessors(merge).len();
            let extreme = extreme_assignments(&net, merge).unwrap();
            prop_assert_eq!(extreme.len(), preds);
            extreme.iter().for_each(assert_normalized);
            for a in lattice_assignments(&net, merge, levels).unwrap() {
                assert_normalized(&a);
            }
        }
        Proportions::uniform(&net).check_complete(&net).unwrap();
    }

    #[test]
    fn extracted_control_is_normalized(seed in 0u64..10_000) {
        let net = small_gre(seed, 0.2);
        let model = TrafficModel::new(&net).unwrap();
        let (h, _) = model.solve_tight(&Proportions::new(), model.horizon_lower_bound()).unwrap();
        let (props, _) = model.system_optimal_control(&Proportions::new(), h).unwrap();
        props.check_complete(&net).unwrap();
        for (_, values) in props.iter() {
            assert_normalized(values);
        }
    }

    #[test]
    fn malformed_proportions_are_rejected(seed in 0u64..10_000, bump in 0.01f64..0.5) {
        let net = small_gre(seed, 0.2);
        let merge = net.signalized()[0].clone();
        let mut props = Proportions::uniform(&net);
        let mut values = props.get(&merge).unwrap().clone();
        *values.values_mut().next().unwrap() += bump;
        props.set(merge, values);
        prop_assert!(props.check(&net).is_err());
    }

    #[test]
    fn trained_covariance_is_positive_definite_after_jitter(
        seed in 0u64..10_000,
        sensors in 1usize..4,
        period in 2usize..6,
        periods in 2usize..20,
        constant_sensor in any::<bool>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Vec<f64>> = (0..period * periods)
            .map(|r| {
                (0..sensors)
                    .map(|s| {
                        if constant_sensor && s == 0 {
                            3.0
                        } else if r % period == 0 && s == sensors - 1 {
                            0.0
                        } else {
                            rng.gen_range(0..10) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let names = (0..sensors).map(|s| format!("s{s}")).collect();
        let trace = TrafficTrace::new(names, 15.0, 0.0, values).unwrap();
        let model = gp::train(&trace, period).unwrap();
        let sigma = model.window_covariance();
        prop_assert!((&sigma - sigma.transpose()).abs().max() <= 1e-9);
        let prepared = model.prepare().unwrap();
        let mut jittered = sigma.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += prepared.jitter;
        }
        let eig = jittered.symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&v| v > 0.0), "{:?}", eig.eigenvalues);
        for w in prepared.score(&trace).unwrap() {
            prop_assert!(w.log_likelihood.is_finite());
        }
    }
}
