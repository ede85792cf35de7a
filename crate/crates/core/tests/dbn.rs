mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskbn::dbn::{
    annual_to_step, filter, filter_with_cap, slice_name, unroll, DbnError, TwoSliceNetwork,
};
use riskbn::inference::{posterior_ve, Query};
use riskbn::model_file::ModelDocument;
use riskbn::models::{bundled_failure_rates, component_nodes, scenario, two_slice};
use riskbn::{build_network, Cpt, Network, NodeId, NodeSpec};

fn persistence(p: f64) -> TwoSliceNetwork {
    let net = build_network(
        vec![NodeSpec::binary("fail", Vec::<&str>::new())],
        vec![Cpt::binary(&[p])],
    )
    .unwrap();
    TwoSliceNetwork::absorbing(net, &[("fail".into(), p)]).unwrap()
}

fn unrolled_probability(net: &Network, node: &NodeId, t: usize, state: &str) -> f64 {
    let name = slice_name(node, t);
    posterior_ve(net, &Query::single(name.clone()))
        .unwrap()
        .probability(name.as_str(), state)
        .unwrap()
}

#[test]
fn absorbing_chain_after_three_steps() {
    let tsn = persistence(0.1);
    let net = unroll(&tsn, 3).unwrap();
    let closed_form = 1.0 - 0.9f64.powi(3);
    assert!((unrolled_probability(&net, &"fail".into(), 2, "TRUE") - closed_form).abs() < 1e-15);
}

#[test]
fn one_step_unroll_is_the_initial_slice() {
    let b = scenario("confined").unwrap();
    let net = unroll(&b.two_slice, 1).unwrap();
    let (specs, cpts) = b.static_network.to_parts();
    let (uspecs, ucpts) = net.to_parts();
    assert_eq!(specs.len(), uspecs.len());
    for ((s, c), (us, uc)) in specs.iter().zip(&cpts).zip(uspecs.iter().zip(&ucpts)) {
        assert_eq!(slice_name(&s.id, 0), us.id);
        assert_eq!(s.states, us.states);
        let parents: Vec<NodeId> = s.parents.iter().map(|p| slice_name(p, 0)).collect();
        assert_eq!(parents, us.parents);
        assert_eq!(c, uc);
    }
}

#[test]
fn step_cap() {
    let b = scenario("confined").unwrap();
    assert!(matches!(
        unroll(&b.two_slice, 1001),
        Err(DbnError::StepCapExceeded {
            steps: 1001,
            cap: 1000
        })
    ));
    assert!(matches!(
        filter(&b.two_slice, 1001, &["loss_of_eely".into()], 1.0),
        Err(DbnError::StepCapExceeded { .. })
    ));
    assert!(filter_with_cap(&b.two_slice, 1001, &["loss_of_eely".into()], 1.0, 1500).is_ok());
}

#[test]
fn annual_conversion() {
    assert_eq!(annual_to_step(0.0, 1.0).unwrap(), 0.0);
    assert!((annual_to_step(0.125, 8760.0).unwrap() - 0.125).abs() < 1e-15);
    let direct = 1.0 - 0.9f64.powf(1.0 / 8760.0);
    // -ln(1 - p) h / 8760 expanded to third order.
    let x = -(0.9f64.ln()) / 8760.0;
    let series = x - x * x / 2.0 + x * x * x / 6.0;
    let got = annual_to_step(0.1, 1.0).unwrap();
    assert!((got - direct).abs() < 1e-15);
    assert!((got - series).abs() < 1e-18);
    assert!((got - 1.2027e-5).abs() < 1e-9);
    assert_eq!(annual_to_step(1.0, 2.0).unwrap(), 1.0);
}

fn monitored(net: &Network) -> Vec<NodeId> {
    let mut m: Vec<NodeId> = [
        "loss_of_eely",
        "environmental_complexity",
        "failure_of_autonomous_control",
    ]
    .iter()
    .map(|&s| s.into())
    .collect();
    m.extend(component_nodes(net).into_keys().take(3));
    m
}

#[test]
fn filtering_matches_unrolled_inference() {
    for label in ["seabed", "confined"] {
        let b = scenario(label).unwrap();
        let nodes = monitored(&b.static_network);
        let steps = 20;
        let traj = filter(&b.two_slice, steps, &nodes, 1.0).unwrap();
        let net = unroll(&b.two_slice, steps).unwrap();
        for s in &traj.series {
            for t in [0, 1, 2, 7, 13, 19] {
                let exact = unrolled_probability(&net, &s.node, t, "TRUE");
                assert!(
                    (s.probabilities[t][0] - exact).abs() <= 1e-10,
                    "{label} {} @{t}",
                    s.node
                );
            }
        }
    }
}

#[test]
fn first_step_equals_static_posterior() {
    for label in ["seabed", "confined"] {
        let b = scenario(label).unwrap();
        let nodes = monitored(&b.static_network);
        let traj = filter(&b.two_slice, 1, &nodes, 1.0).unwrap();
        for s in &traj.series {
            let post = posterior_ve(&b.static_network, &Query::single(s.node.clone())).unwrap();
            assert!((post.marginals[0].probabilities[0] - s.probabilities[0][0]).abs() < 1e-12);
            assert!((s.probabilities[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn components_and_loss_never_recover() {
    for label in ["seabed", "confined"] {
        let b = scenario(label).unwrap();
        let mut nodes: Vec<NodeId> = component_nodes(&b.static_network).into_keys().collect();
        nodes.push("loss_of_eely".into());
        let traj = filter(&b.two_slice, 100, &nodes, 1.0).unwrap();
        for s in &traj.series {
            let p = s.state_series("TRUE").unwrap();
            assert!(p.windows(2).all(|w| w[1] >= w[0]), "{label} {}", s.node);
        }
    }
}

#[test]
fn shifting_the_start_leaves_marginals_unchanged() {
    let b = scenario("confined").unwrap();
    let comps: Vec<NodeId> = component_nodes(&b.static_network).into_keys().collect();
    let mut nodes = comps.clone();
    nodes.push("loss_of_eely".into());
    let shift = 5;
    let base = filter(&b.two_slice, 20, &nodes, 1.0).unwrap();

    // Restart from the step-`shift` component marginals; components stay
    // independent without evidence, so their product is the exact joint.
    let mut doc = b.document.clone();
    for c in &comps {
        let p = base.node(c.as_str()).unwrap().probabilities[shift][0];
        doc.nodes.iter_mut().find(|n| &n.id == c).unwrap().cpt = vec![p, 1.0 - p];
    }
    let restarted = two_slice(&doc.network().unwrap(), &bundled_failure_rates(), 1.0).unwrap();
    let shifted = filter(&restarted, 20 - shift, &nodes, 1.0).unwrap();
    for s in &shifted.series {
        let orig = base.node(s.node.as_str()).unwrap();
        for t in 0..20 - shift {
            assert!((s.probabilities[t][0] - orig.probabilities[t + shift][0]).abs() < 1e-12);
        }
    }
}

#[test]
fn document_round_trip_keeps_the_template() {
    let b = scenario("seabed").unwrap();
    let doc = ModelDocument::parse(&b.document.to_json()).unwrap();
    let tsn = two_slice(&doc.network().unwrap(), &bundled_failure_rates(), 1.0).unwrap();
    let a = filter(&b.two_slice, 10, &["loss_of_eely".into()], 1.0).unwrap();
    let c = filter(&tsn, 10, &["loss_of_eely".into()], 1.0).unwrap();
    assert_eq!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_templates_filter_exactly(seed in any::<u64>()) {
        let net = common::random_network(seed, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roots: Vec<(NodeId, f64)> = (0..net.len())
            .filter(|&i| net.parents(i).is_empty() && net.cardinality(i) == 2)
            .map(|i| (net.id(i).clone(), rng.gen_range(0.0..0.3)))
            .collect();
        let tsn = TwoSliceNetwork::absorbing(net.clone(), &roots).unwrap();
        let nodes: Vec<NodeId> = (0..net.len()).map(|i| net.id(i).clone()).collect();
        let steps = 5;
        let traj = filter(&tsn, steps, &nodes, 1.0).unwrap();
        let flat = unroll(&tsn, steps).unwrap();
        for s in &traj.series {
            for t in 0..steps {
                let name = slice_name(&s.node, t);
                let post = posterior_ve(&flat, &Query::single(name)).unwrap();
                for (a, b) in post.marginals[0].probabilities.iter().zip(&s.probabilities[t]) {
                    prop_assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }
}
