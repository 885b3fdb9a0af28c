mod common;

use common::*;
use netnewton::auxgraph::{build_auxiliary_graph, distributed_sum};
use netnewton::direction::direction_delta;
use netnewton::dual::{build_splitting, DistributedDual};
use netnewton::gen::random_network;
use netnewton::model::{BarrierProblem, Network};
use netnewton::solver::{newton_solve, SolverConfig};
use proptest::prelude::*;

fn network_strategy() -> impl Strategy<Value = (Network, u64)> {
    (1usize..12, 1usize..7, 0.3f64..0.9, any::<u64>())
        .prop_filter_map("valid routing", |(l, s, p, seed)| {
            random_network(l, s, p, seed).ok().map(|n| (n, seed))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn direction_preserves_feasibility((n, seed) in network_strategy(), wscale in 0.1f64..100.0) {
        let mut r = rng(seed);
        let x = interior_point(&mut r, &n);
        let (hess, grad) = derivatives(&n, &x);
        let w: Vec<f64> = (0..n.num_links()).map(|k| wscale * ((k as f64).sin())).collect();
        let d = direction_delta(&n, &hess, &grad, &w);
        let ad = n.apply_constraints(&d);
        let scale = sup_norm(&d).max(1.0);
        prop_assert!(sup_norm(&ad) <= 1e-12 * scale);
    }

    #[test]
    fn per_link_update_matches_matrix((n, seed) in network_strategy()) {
        let mut r = rng(seed);
        let x = interior_point(&mut r, &n);
        let (hess, grad) = derivatives(&n, &x);
        let split = build_splitting(&n, &hess, &grad).unwrap();
        let dd = DistributedDual::new(&n, &hess, &grad).unwrap();
        let w: Vec<f64> = (0..n.num_links()).map(|k| (k as f64 * 0.7).cos()).collect();
        let a = split.step(&w);
        let b = dd.step(&dd.start(w)).w;
        prop_assert!(sup_norm_diff(&a, &b) <= 1e-12 * sup_norm(&a).max(1.0));
    }

    #[test]
    fn splitting_is_diagonally_dominant((n, seed) in network_strategy()) {
        let mut r = rng(seed);
        let x = interior_point(&mut r, &n);
        let (hess, grad) = derivatives(&n, &x);
        prop_assert!(build_splitting(&n, &hess, &grad).unwrap().q_is_diagonally_dominant());
    }

    #[test]
    fn summation_is_exact((n, _seed) in network_strategy(), base in 0.0f64..3.0) {
        let aux = build_auxiliary_graph(&n).unwrap();
        prop_assert!(aux.validate(&n).is_empty());
        let y: Vec<f64> = (0..n.num_sources()).map(|i| base + i as f64).collect();
        let z: Vec<f64> = (0..n.num_links()).map(|l| base * 0.5 + l as f64).collect();
        let direct: f64 = y.iter().sum::<f64>() + (0..n.num_links()).map(|l| n.users(l).len() as f64 * z[l]).sum::<f64>();
        let out = distributed_sum(&n, &aux, &y, &z);
        for v in out.source_values.iter().chain(&out.link_values) {
            prop_assert!((v - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn generator_is_valid_and_deterministic(l in 1usize..16, s in 1usize..9, seed in any::<u64>()) {
        if let Ok(n) = random_network(l, s, 0.5, seed) {
            prop_assert!((0..l).all(|k| !n.users(k).is_empty()));
            prop_assert!((0..s).all(|i| !n.route(i).is_empty()));
            prop_assert_eq!(n.to_toml_string(), random_network(l, s, 0.5, seed).unwrap().to_toml_string());
            prop_assert_eq!(Network::from_toml_str(&n.to_toml_string()).unwrap(), n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn newton_iterates_stay_interior((n, _seed) in network_strategy()) {
        let p = BarrierProblem::new(&n, 1.0, 1.0).unwrap();
        let (_, t) = newton_solve(&p, &SolverConfig::default()).unwrap();
        for r in &t.records {
            prop_assert!(r.x.iter().all(|&v| v > 0.0));
            prop_assert!(r.min_slack > 0.0);
            prop_assert!(r.feas_residual <= 1e-9);
        }
        let f: Vec<f64> = t.records.iter().map(|r| r.f).collect();
        prop_assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)));
    }
}
