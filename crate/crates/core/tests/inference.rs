mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskbn::inference::{
    posterior_enumeration, posterior_lw, posterior_ve, InferenceError, LikelihoodWeighting, Query,
};
use riskbn::models::scenario;
use riskbn::{build_network, Cpt, Evidence, Network, NodeSpec};

fn p_true(net: &Network, q: &Query, node: &str) -> f64 {
    posterior_ve(net, q)
        .unwrap()
        .probability(node, "TRUE")
        .unwrap()
}

#[test]
fn fixed_parents_reproduce_loss_table() {
    let net = scenario("confined").unwrap().static_network;
    let ev = Evidence::new()
        .with("failure_of_autonomous_control", "TRUE")
        .with("failure_of_remote_control", "FALSE");
    let q = Query::new(["loss_of_eely"], ev);
    assert!((p_true(&net, &q, "loss_of_eely") - 0.75).abs() < 1e-15);
}

#[test]
fn full_parent_instantiation_gives_cpt_column() {
    let net = scenario("seabed").unwrap().static_network;
    let i = net.index_of("failure_of_navigation").unwrap();
    for column in [0, 17, 63] {
        let states = net.parent_states(i, column);
        let mut ev = Evidence::new();
        for (&p, s) in net.parents(i).iter().zip(states) {
            ev = ev.with(net.id(p).clone(), net.spec(p).states[s].clone());
        }
        let got = p_true(
            &net,
            &Query::new(["failure_of_navigation"], ev),
            "failure_of_navigation",
        );
        assert!((got - net.cpt(i).get(0, column)).abs() < 1e-12);
    }
}

#[test]
fn prior_queries_match_test_oracle() {
    for label in ["seabed", "confined"] {
        let net = scenario(label).unwrap().static_network;
        let joint = common::joint(&net);
        let t = net.index_of("loss_of_eely").unwrap();
        let (oracle, z) = joint.marginal(t, &[]);
        let post = posterior_ve(&net, &Query::single("loss_of_eely")).unwrap();
        assert!((post.marginals[0].probabilities[0] - oracle[0]).abs() <= 1e-12);
        assert!((z - 1.0).abs() < 1e-12);
        let lib = posterior_enumeration(&net, &Query::single("loss_of_eely")).unwrap();
        assert!(lib.max_abs_diff(&post) <= 1e-12);
    }
}

#[test]
fn single_node_prior() {
    let net = build_network(
        vec![NodeSpec::binary("a", Vec::<&str>::new())],
        vec![Cpt::binary(&[0.3])],
    )
    .unwrap();
    let post = posterior_enumeration(&net, &Query::single("a")).unwrap();
    assert_eq!(post.marginals[0].probabilities, vec![0.3, 0.7]);
}

#[test]
fn zero_probability_evidence_is_an_error() {
    let net = scenario("confined").unwrap().static_network;
    // A failed thruster always fails propulsion.
    let ev = Evidence::new()
        .with("failure_of_thruster_module", "TRUE")
        .with("failure_of_propulsion_system", "FALSE");
    let q = Query::new(["loss_of_eely"], ev);
    assert_eq!(
        posterior_ve(&net, &q).unwrap_err(),
        InferenceError::InconsistentEvidence
    );
    assert_eq!(
        posterior_enumeration(&net, &q).unwrap_err(),
        InferenceError::InconsistentEvidence
    );
    assert_eq!(
        posterior_lw(&net, &q, 1000, 1).unwrap_err(),
        InferenceError::AllWeightsZero
    );
}

#[test]
fn invalid_queries() {
    let net = scenario("seabed").unwrap().static_network;
    let observed = Query::new(["leakage"], Evidence::new().with("leakage", "TRUE"));
    assert!(matches!(
        posterior_ve(&net, &observed),
        Err(InferenceError::InvalidQuery(_))
    ));
    let empty = Query::new(Vec::<&str>::new(), Evidence::new());
    assert!(matches!(
        posterior_ve(&net, &empty),
        Err(InferenceError::InvalidQuery(_))
    ));
    assert!(matches!(
        posterior_lw(&net, &Query::single("leakage"), 0, 1),
        Err(InferenceError::NoSamples)
    ));
}

#[test]
fn enumeration_guard() {
    // 27 binary roots exceed the 2^26 joint-space limit.
    let specs: Vec<NodeSpec> = (0..27)
        .map(|i| NodeSpec::binary(format!("r{i}"), Vec::<&str>::new()))
        .collect();
    let cpts = (0..27).map(|_| Cpt::binary(&[0.5])).collect();
    let net = build_network(specs, cpts).unwrap();
    assert!(matches!(
        posterior_enumeration(&net, &Query::single("r0")),
        Err(InferenceError::StateSpaceTooLarge { .. })
    ));
    assert!((p_true(&net, &Query::single("r0"), "r0") - 0.5).abs() < 1e-15);
}

#[test]
fn sampler_converges_without_evidence() {
    let net = scenario("confined").unwrap().static_network;
    let q = Query::single("loss_of_eely");
    let exact = p_true(&net, &q, "loss_of_eely");
    let est = posterior_lw(&net, &q, 1_000_000, 7).unwrap();
    assert!((est.probability("loss_of_eely", "TRUE").unwrap() - exact).abs() < 0.01);
}

#[test]
fn root_evidence_gives_constant_weights() {
    let net = scenario("seabed").unwrap().static_network;
    let q = Query::new(
        ["loss_of_eely"],
        Evidence::new().with("dvl_failure", "TRUE"),
    );
    let est = LikelihoodWeighting::new(20_000, 3).run(&net, &q).unwrap();
    assert_eq!(est.min_weight, est.max_weight);
    assert!((est.min_weight - 0.1).abs() < 1e-15);
    assert!((est.effective_sample_size - 20_000.0).abs() < 1e-6);
}

#[test]
fn sampler_is_deterministic_for_a_seed() {
    let net = scenario("confined").unwrap().static_network;
    let q = Query::new(
        ["loss_of_eely", "failure_of_navigation"],
        Evidence::new().with("failure_of_remote_control", "TRUE"),
    );
    let a = posterior_lw(&net, &q, 50_000, 11).unwrap();
    let b = posterior_lw(&net, &q, 50_000, 11).unwrap();
    assert_eq!(a, b);
    let c = posterior_lw(&net, &q, 50_000, 12).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sampler_mean_over_seeds_is_unbiased() {
    let net = scenario("seabed").unwrap().static_network;
    let q = Query::new(
        ["loss_of_eely"],
        Evidence::new().with("failure_of_navigation", "TRUE"),
    );
    let exact = p_true(&net, &q, "loss_of_eely");
    let runs: Vec<(f64, f64)> = (0..50)
        .map(|seed| {
            let m = posterior_lw(&net, &q, 20_000, seed)
                .unwrap()
                .marginals
                .remove(0);
            (m.probabilities[0], m.std_errors.unwrap()[0])
        })
        .collect();
    let mean = runs.iter().map(|r| r.0).sum::<f64>() / 50.0;
    // Standard error of the mean of 50 independent estimates.
    let se = (runs.iter().map(|r| r.1 * r.1).sum::<f64>()).sqrt() / 50.0;
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "mean {mean} exact {exact} se {se}"
    );
}

#[test]
fn raising_thruster_prior_never_lowers_loss() {
    for label in ["seabed", "confined"] {
        let doc = scenario(label).unwrap().document;
        let mut last = f64::NEG_INFINITY;
        for k in 0..11 {
            let p = k as f64 / 10.0;
            let mut d = doc.clone();
            let node = d
                .nodes
                .iter_mut()
                .find(|n| n.id.as_str() == "failure_of_thruster_module")
                .unwrap();
            node.cpt = vec![p, 1.0 - p];
            let net = d.network().unwrap();
            let loss = p_true(&net, &Query::single("loss_of_eely"), "loss_of_eely");
            assert!(loss >= last - 1e-15, "{label}: {loss} < {last} at p={p}");
            last = loss;
        }
    }
}

fn check_against_oracle(
    net: &Network,
    rng: &mut ChaCha8Rng,
    queries: usize,
    max_evidence: usize,
) -> Result<(), TestCaseError> {
    let joint = common::joint(net);
    for _ in 0..queries {
        let t = rng.gen_range(0..net.len());
        let ev = common::random_evidence(net, rng, max_evidence, t);
        let (oracle, z) = joint.marginal(t, &common::indices(net, &ev));
        let q = Query::new([net.id(t).clone()], ev);
        match posterior_ve(net, &q) {
            Ok(post) => {
                for (a, b) in post.marginals[0].probabilities.iter().zip(&oracle) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
                prop_assert!((post.log_evidence - z.ln()).abs() <= 1e-10);
                let lib = posterior_enumeration(net, &q).unwrap();
                prop_assert!(lib.max_abs_diff(&post) <= 1e-12);
                prop_assert!((lib.log_evidence - post.log_evidence).abs() <= 1e-10);
            }
            Err(InferenceError::InconsistentEvidence) => prop_assert!(z == 0.0),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ve_matches_oracle_on_random_networks(seed in any::<u64>()) {
        let net = common::random_network(seed, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        check_against_oracle(&net, &mut rng, 8, 4)?;
    }

    #[test]
    fn posteriors_are_normalized(seed in any::<u64>()) {
        let net = common::random_network(seed, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = common::random_evidence(&net, &mut rng, 3, usize::MAX);
        let targets: Vec<_> = (0..net.len()).filter(|&i| !ev.contains(net.id(i).as_str())).map(|i| net.id(i).clone()).collect();
        let post = posterior_ve(&net, &Query::new(targets, ev)).unwrap();
        for m in &post.marginals {
            prop_assert!((m.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        prop_assert!(post.log_evidence <= 1e-12);
    }
}

#[test]
fn ve_matches_oracle_on_bundled_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for label in ["seabed", "confined"] {
        let net = scenario(label).unwrap().static_network;
        check_against_oracle(&net, &mut rng, 25, 5).unwrap();
    }
}
