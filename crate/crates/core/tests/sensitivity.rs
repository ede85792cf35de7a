mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use riskbn::inference::{posterior_ve, Query};
use riskbn::models::scenario;
use riskbn::report::tornado_svg;
use riskbn::sensitivity::{
    node_importance, rank_entries, tornado, SensitivityTarget, TornadoEntry, TornadoOptions,
};
use riskbn::{build_network, Cpt, Evidence, Network, NodeSpec};

fn all_cpts() -> TornadoOptions {
    TornadoOptions {
        include_target: true,
        ..TornadoOptions::default()
    }
}

/// Target probability from the brute-force joint with one column replaced.
fn oracle_target(
    net: &Network,
    node: usize,
    column: usize,
    values: &[f64],
    target: usize,
    state: usize,
    ev: &[(usize, usize)],
) -> f64 {
    let (specs, mut cpts) = net.to_parts();
    let pos = specs.iter().position(|s| &s.id == net.id(node)).unwrap();
    let cols = cpts[pos].columns();
    let mut flat = cpts[pos].values().to_vec();
    for (s, v) in values.iter().enumerate() {
        flat[s * cols + column] = *v;
    }
    cpts[pos] = Cpt::from_flat(values.len(), flat);
    let perturbed = build_network(specs, cpts).unwrap();
    let t = perturbed.index_of(net.id(target).as_str()).unwrap();
    let ev: Vec<(usize, usize)> = ev
        .iter()
        .map(|&(v, s)| (perturbed.index_of(net.id(v).as_str()).unwrap(), s))
        .collect();
    let (m, z) = common::joint(&perturbed).marginal(t, &ev);
    if z > 0.0 {
        m[state]
    } else {
        f64::NAN
    }
}

fn oracle_column(column: &[f64], state: usize, x: f64) -> Vec<f64> {
    let rest = 1.0 - column[state];
    column
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            if s == state {
                x
            } else if rest > 0.0 {
                v / rest * (1.0 - x)
            } else {
                (1.0 - x) / (column.len() - 1) as f64
            }
        })
        .collect()
}

fn check_entry(
    net: &Network,
    e: &TornadoEntry,
    target: usize,
    state: usize,
    ev: &[(usize, usize)],
    points: usize,
) {
    let node = net.index_of(e.node.as_str()).unwrap();
    let column = net.cpt(node).column(e.config_index);
    let half = points / 2;
    let (lo, hi) = (e.parameter_low, e.parameter_high);
    let mut values = Vec::new();
    for i in 0..points {
        let x = if i < half {
            lo + (e.parameter - lo) * i as f64 / half as f64
        } else {
            e.parameter + (hi - e.parameter) * (i - half) as f64 / half as f64
        };
        let col = oracle_column(&column, e.state_index, x);
        assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        values.push(oracle_target(
            net,
            node,
            e.config_index,
            &col,
            target,
            state,
            ev,
        ));
    }
    let defined = values.iter().cloned().filter(|v| !v.is_nan());
    let low = defined.clone().fold(f64::INFINITY, f64::min);
    let high = defined.fold(f64::NEG_INFINITY, f64::max);
    assert!(
        (e.low - low).abs() < 1e-10,
        "{} low {} vs {}",
        e.node,
        e.low,
        low
    );
    assert!(
        (e.high - high).abs() < 1e-10,
        "{} high {} vs {}",
        e.node,
        e.high,
        high
    );
    assert!(e.spread >= 0.0);
}

fn chain() -> Network {
    build_network(
        vec![
            NodeSpec::binary("a", Vec::<&str>::new()),
            NodeSpec::binary("b", ["a"]),
        ],
        vec![Cpt::binary(&[0.3]), Cpt::binary(&[0.8, 0.1])],
    )
    .unwrap()
}

#[test]
fn child_entry_under_observed_parent_is_the_identity() {
    let net = chain();
    let target =
        SensitivityTarget::new("b", "TRUE").with_evidence(Evidence::new().with("a", "TRUE"));
    let entries = tornado(&net, &target, &all_cpts()).unwrap();
    let e = entries
        .iter()
        .find(|e| e.node.as_str() == "b" && e.config_index == 0)
        .unwrap();
    assert_eq!(e.parameter_high - e.parameter_low, e.spread);
    assert!((e.spread - 0.16).abs() < 1e-12);
    assert!((e.low - 0.72).abs() < 1e-12 && (e.high - 0.88).abs() < 1e-12);
}

#[test]
fn unconditioned_two_node_chain_matches_closed_form() {
    let net = chain();
    let entries = tornado(&net, &SensitivityTarget::new("b", "TRUE"), &all_cpts()).unwrap();
    let get = |node: &str, col: usize| {
        entries
            .iter()
            .find(|e| e.node.as_str() == node && e.config_index == col)
            .unwrap()
            .spread
    };
    // P(b) = pa * 0.8 + (1 - pa) * 0.1, linear in each parameter.
    assert!((get("a", 0) - 0.06 * 0.7).abs() < 1e-12);
    assert!((get("b", 0) - 0.3 * 0.16).abs() < 1e-12);
    assert!((get("b", 1) - 0.7 * 0.02).abs() < 1e-12);
}

#[test]
fn separated_nodes_have_zero_spread() {
    // a -> b -> c with b observed cuts a off from c.
    let net = build_network(
        vec![
            NodeSpec::binary("a", Vec::<&str>::new()),
            NodeSpec::binary("b", ["a"]),
            NodeSpec::binary("c", ["b"]),
            NodeSpec::new("d", ["x", "y", "z"], Vec::<&str>::new()),
        ],
        vec![
            Cpt::binary(&[0.4]),
            Cpt::binary(&[0.7, 0.2]),
            Cpt::binary(&[0.9, 0.05]),
            Cpt::from_flat(3, vec![0.2, 0.3, 0.5]),
        ],
    )
    .unwrap();
    let target =
        SensitivityTarget::new("c", "TRUE").with_evidence(Evidence::new().with("b", "FALSE"));
    let entries = tornado(&net, &target, &TornadoOptions::default()).unwrap();
    for e in &entries {
        assert_eq!(e.spread, 0.0, "{}", e.node);
    }
    // Ternary roots contribute one parameter per state.
    assert_eq!(entries.iter().filter(|e| e.node.as_str() == "d").count(), 3);
}

#[test]
fn baseline_is_the_posterior() {
    for label in ["seabed", "confined"] {
        let b = scenario(label).unwrap();
        let ev = Evidence::new().with("leakage", "FALSE");
        let target = SensitivityTarget::new("loss_of_eely", "TRUE").with_evidence(ev.clone());
        let entries = tornado(
            &b.static_network,
            &target,
            &TornadoOptions {
                roots_only: true,
                ..Default::default()
            },
        )
        .unwrap();
        let post = posterior_ve(&b.static_network, &Query::new(["loss_of_eely"], ev)).unwrap();
        let p = post.probability("loss_of_eely", "TRUE").unwrap();
        assert!(entries.iter().all(|e| e.baseline == p));
        assert!(entries
            .iter()
            .all(|e| e.low <= p + 1e-15 && e.high >= p - 1e-15));
    }
}

#[test]
fn tiny_sweep_gives_tiny_spreads() {
    for label in ["seabed", "confined"] {
        let b = scenario(label).unwrap();
        let options = TornadoOptions {
            sweep: 1e-6,
            ..TornadoOptions::default()
        };
        let entries = tornado(
            &b.static_network,
            &SensitivityTarget::new("loss_of_eely", "TRUE"),
            &options,
        )
        .unwrap();
        assert!(!entries.is_empty());
        assert!(entries.iter().all(|e| e.spread < 1e-4), "{label}");
    }
}

fn top5(label: &str) -> (Vec<String>, BTreeSet<String>) {
    let b = scenario(label).unwrap();
    let entries = tornado(
        &b.static_network,
        &SensitivityTarget::new("loss_of_eely", "TRUE"),
        &TornadoOptions::default(),
    )
    .unwrap();
    let imp = node_importance(&entries);
    let ranked: Vec<String> = imp.iter().map(|n| n.node.to_string()).collect();
    let set = ranked.iter().take(5).cloned().collect();
    (ranked, set)
}

#[test]
fn seabed_ranking() {
    let (ranked, set) = top5("seabed");
    assert_eq!(ranked[0], "failure_of_autonomous_control");
    for n in [
        "failure_of_thruster_module",
        "failure_of_altitude_control",
        "mission_complexity",
        "dvl_failure",
    ] {
        assert!(set.contains(n), "{n} missing from {set:?}");
    }
}

#[test]
fn confined_ranking() {
    let (ranked, set) = top5("confined");
    assert_eq!(ranked[0], "failure_of_autonomous_control");
    for n in [
        "environmental_complexity",
        "failure_of_propulsion_system",
        "failure_of_altitude_control",
        "mission_complexity",
    ] {
        assert!(set.contains(n), "{n} missing from {set:?}");
    }
}

#[test]
fn single_entry_importance() {
    let net = chain();
    let entries = tornado(
        &net,
        &SensitivityTarget::new("b", "TRUE"),
        &TornadoOptions::default(),
    )
    .unwrap();
    assert_eq!(entries.len(), 1);
    let imp = node_importance(&entries);
    assert_eq!(imp.len(), 1);
    assert_eq!(imp[0].spread, entries[0].spread);
    assert!(node_importance(&[]).is_empty());
}

#[test]
fn svg_tops_with_autonomous_control_and_is_stable() {
    let b = scenario("confined").unwrap();
    let target = SensitivityTarget::new("loss_of_eely", "TRUE");
    let entries = tornado(&b.static_network, &target, &TornadoOptions::default()).unwrap();
    let top10 = &entries[..10];
    let svg = tornado_svg(top10, "loss_of_eely = TRUE");
    let first_label = svg
        .lines()
        .find(|l| l.contains(r#"text-anchor="end""#))
        .unwrap();
    assert!(
        first_label.contains(">failure_of_autonomous_control<"),
        "{first_label}"
    );
    let again = tornado(&b.static_network, &target, &TornadoOptions::default()).unwrap();
    assert_eq!(svg, tornado_svg(&again[..10], "loss_of_eely = TRUE"));
    assert_eq!(svg.matches("<rect x=").count(), 10);
}

fn entry(node: &str, declaration: usize, config: usize, spread: f64) -> TornadoEntry {
    TornadoEntry {
        node: node.into(),
        state: "TRUE".into(),
        parent_config: String::new(),
        declaration,
        config_index: config,
        state_index: 0,
        parameter: 0.5,
        parameter_low: 0.45,
        parameter_high: 0.55,
        additive: false,
        baseline: 0.5,
        low: 0.5 - spread / 2.0,
        high: 0.5 + spread / 2.0,
        spread,
    }
}

#[test]
fn equal_spreads_follow_declaration_then_configuration() {
    let mut entries = vec![
        entry("c", 2, 0, 0.1),
        entry("b", 1, 1, 0.1),
        entry("z", 0, 0, 0.05),
        entry("b", 1, 0, 0.1),
        entry("a", 0, 3, 0.1),
    ];
    rank_entries(&mut entries);
    let order: Vec<(String, usize)> = entries
        .iter()
        .map(|e| (e.node.to_string(), e.config_index))
        .collect();
    assert_eq!(
        order,
        [("a", 3), ("b", 0), ("b", 1), ("c", 0), ("z", 0)].map(|(n, c)| (n.to_string(), c))
    );
    let svg = tornado_svg(&entries, "t");
    let labels: Vec<&str> = svg
        .lines()
        .filter(|l| l.contains(r#"text-anchor="end""#))
        .collect();
    assert!(labels[0].contains(">a<") && labels[3].contains(">c<"));
}

#[test]
fn declaration_order_does_not_change_spreads() {
    let b = scenario("seabed").unwrap();
    let (mut specs, mut cpts) = b.static_network.to_parts();
    specs.reverse();
    cpts.reverse();
    let reversed = build_network(specs, cpts).unwrap();
    let target = SensitivityTarget::new("loss_of_eely", "TRUE");
    let key = |e: &TornadoEntry| (e.node.to_string(), e.parent_config.clone(), e.state.clone());
    let a: BTreeMap<_, f64> = tornado(&b.static_network, &target, &TornadoOptions::default())
        .unwrap()
        .iter()
        .map(|e| (key(e), e.spread))
        .collect();
    let r: BTreeMap<_, f64> = tornado(&reversed, &target, &TornadoOptions::default())
        .unwrap()
        .iter()
        .map(|e| (key(e), e.spread))
        .collect();
    assert_eq!(a.len(), r.len());
    for (k, v) in &a {
        assert!((v - r[k]).abs() < 1e-12, "{k:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tornado_matches_oracle_sweep(seed in any::<u64>(), sweep in 0.01f64..0.5) {
        let net = common::random_network(seed, 5);
        let target = net.len() - 1;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let evidence = common::random_evidence(&net, &mut rng, 2, target);
        let ev = common::indices(&net, &evidence);
        if common::joint(&net).marginal(target, &ev).1 <= 0.0 {
            return Ok(());
        }
        let options = TornadoOptions { sweep, points: 5, roots_only: false, include_target: true };
        let t = SensitivityTarget::new(net.id(target).clone(), net.spec(target).states[0].clone())
            .with_evidence(evidence);
        let entries = tornado(&net, &t, &options).unwrap();
        for w in entries.windows(2) {
            prop_assert!(w[0].spread >= w[1].spread);
        }
        for e in &entries {
            check_entry(&net, e, target, 0, &ev, options.points);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn non_requisite_cpts_do_not_move_the_posterior(seed in any::<u64>()) {
        use rand::Rng;
        let net = common::random_network(seed, 6);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ 0x5eed);
        let target = rng.gen_range(0..net.len());
        let evidence = common::random_evidence(&net, &mut rng, 3, target);
        let ev = common::indices(&net, &evidence);
        let (base, z) = common::joint(&net).marginal(target, &ev);
        prop_assume!(z > 0.0);
        let observed: Vec<usize> = ev.iter().map(|&(v, _)| v).collect();
        let requisite = net.requisite_cpts(&[target], &observed);
        prop_assert!(requisite[target]);
        for node in (0..net.len()).filter(|&n| !requisite[n]) {
            let card = net.cardinality(node);
            let cols = net.cpt(node).columns();
            let mut flat = vec![0.0; card * cols];
            for c in 0..cols {
                let w: Vec<f64> = (0..card).map(|_| rng.gen_range(0.05..1.0)).collect();
                let sum: f64 = w.iter().sum();
                for s in 0..card {
                    flat[s * cols + c] = w[s] / sum;
                }
            }
            let (specs, mut cpts) = net.to_parts();
            let pos = specs.iter().position(|s| &s.id == net.id(node)).unwrap();
            cpts[pos] = Cpt::from_flat(card, flat);
            let other = build_network(specs, cpts).unwrap();
            let t = other.index_of(net.id(target).as_str()).unwrap();
            let ev2: Vec<(usize, usize)> = ev
                .iter()
                .map(|&(v, s)| (other.index_of(net.id(v).as_str()).unwrap(), s))
                .collect();
            let (m, z2) = common::joint(&other).marginal(t, &ev2);
            prop_assert!(z2 > 0.0);
            for (a, b) in base.iter().zip(&m) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
