use proptest::prelude::*;
use srpo_core::envs::{EnvKind, EnvSpec, PendulumGrid, PendulumParam};
use srpo_core::mdp::{self, HipMdpFamily};
use srpo_core::TabularMdp;

fn all_pairs_homomorphous(f: &HipMdpFamily) -> bool {
    f.members().iter().all(|a| f.members().iter().all(|b| mdp::is_homomorphous(a, b).unwrap()))
}

/// Rows are distributions and the reward is shared by all members.
fn check_tabular_invariants(f: &HipMdpFamily) {
    let first = f.member(0);
    for m in f.members() {
        let (ns, na) = (m.n_states(), m.n_actions());
        for s in 0..ns {
            for a in 0..na {
                let total: f64 = (0..ns).map(|sn| m.p(s, a, sn)).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!((0..ns).all(|sn| m.p(s, a, sn) >= 0.0));
            }
        }
        assert_eq!(m.reward(), first.reward());
        assert!((m.rho0().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_parameter_gives_single_member() {
    for spec in [EnvSpec::gridworld(vec![0.1]), EnvSpec::pendulum(vec![10.0])] {
        let f = spec.build().unwrap();
        assert_eq!(f.len(), 1);
        assert!(all_pairs_homomorphous(&f));
    }
}

#[test]
fn slip_families_are_homomorphous() {
    for obstacles in 0..5 {
        let f = EnvSpec { n_obstacles: obstacles, seed: obstacles as u64, ..EnvSpec::gridworld(vec![0.0, 0.1, 0.2]) }
            .build()
            .unwrap();
        assert!(all_pairs_homomorphous(&f));
        check_tabular_invariants(&f);
    }
}

#[test]
fn same_seed_same_family() {
    let spec = EnvSpec { n_obstacles: 4, seed: 17, ..EnvSpec::gridworld(vec![0.0, 0.3]) };
    assert_eq!(spec.build().unwrap().to_json().unwrap(), spec.build().unwrap().to_json().unwrap());
    let other = EnvSpec { seed: 18, ..spec.clone() };
    assert_ne!(spec.build().unwrap().to_json().unwrap(), other.build().unwrap().to_json().unwrap());
}

#[test]
fn gravity_pair_is_homomorphous_with_finite_shift() {
    let f = EnvSpec::pendulum(vec![5.0, 10.0]).build().unwrap();
    assert!(mdp::is_homomorphous(f.member(0), f.member(1)).unwrap());
    let eps = mdp::dynamics_distance(f.member(0), f.member(1)).unwrap();
    assert!(eps.is_finite() && eps > 0.0);
    assert!(f.members().iter().all(TabularMdp::is_deterministic));
    check_tabular_invariants(&f);
}

#[test]
fn no_action_cost_means_zero_reward_lipschitz() {
    let f = EnvSpec::pendulum(vec![6.0]).build().unwrap();
    assert_eq!(mdp::estimate_lipschitz(f.member(0), 500, 2.0, 0).unwrap().lambda1, 0.0);
    assert_eq!(mdp::reward_lipschitz_scan(f.member(0)).unwrap(), 0.0);
}

#[test]
fn declared_reward_lipschitz_bounds_the_scan() {
    let f = EnvSpec { action_cost_coeff: 0.4, ..EnvSpec::pendulum(vec![6.0]) }.build().unwrap();
    let m = f.member(0);
    assert!(mdp::reward_lipschitz_scan(m).unwrap() <= m.declared_lambda1().unwrap() + 1e-12);
}

#[test]
fn upright_rest_is_a_fixed_point_without_gravity() {
    let spec = EnvSpec::pendulum(vec![0.0]);
    let grid = PendulumGrid::new(&spec).unwrap();
    let f = spec.build().unwrap();
    let upright = grid.state(spec.n_angle / 2, spec.n_velocity / 2);
    let m = f.member(0);
    assert_eq!(m.state_coords().unwrap()[upright], vec![0.0, 0.0]);
    let zero_torque = spec.n_torque / 2;
    assert_eq!(m.action_coords().unwrap()[zero_torque], vec![0.0]);
    assert_eq!(m.successor(upright, zero_torque), Some(upright));
}

/// Velocity offsets wrap inside the torque window, so the shift is only monotone
/// while the offset gap stays below half the window (gravity gaps up to about 7 here).
#[test]
fn shift_grows_with_gravity_gap() {
    let gravities: Vec<f64> = (0..15).map(|k| 2.0 + 0.5 * k as f64).collect();
    let f = EnvSpec::pendulum(gravities).build().unwrap();
    let mut prev = 0.0;
    for j in 1..f.len() {
        let d = mdp::dynamics_distance(f.member(0), f.member(j)).unwrap();
        assert!(d >= prev, "member {j}: {d} < {prev}");
        prev = d;
    }
}

#[test]
fn friction_variant_builds() {
    let spec = EnvSpec { pendulum_param: PendulumParam::Friction, ..EnvSpec::pendulum(vec![0.5, 2.0]) };
    let f = spec.build().unwrap();
    assert!(all_pairs_homomorphous(&f));
    assert_eq!(f.theta_labels(), &[0.5, 2.0]);
}

#[test]
fn corridor_members_disagree_only_at_the_bottleneck() {
    let f = EnvSpec::opposite_action().build().unwrap();
    assert_eq!(f.member(0).n_states(), 6);
    assert!(all_pairs_homomorphous(&f));
    check_tabular_invariants(&f);
    let opt: Vec<Vec<usize>> = f
        .members()
        .iter()
        .map(|m| {
            let vt = srpo_core::solvers::solve_optimal(m).unwrap();
            (0..m.n_states()).map(|s| srpo_core::solvers::argmax(&vt.q[s])).collect()
        })
        .collect();
    // right at the bottleneck for member 0, left for member 1
    assert_eq!(opt[0][4], 1);
    assert_eq!(opt[1][4], 0);
    assert_eq!(opt[0][..3], opt[1][..3]);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(EnvSpec::gridworld(vec![1.5]).build().is_err());
    assert!(EnvSpec::gridworld(vec![]).build().is_err());
    assert!(EnvSpec { n_angle: 4, ..EnvSpec::pendulum(vec![1.0]) }.build().is_err());
    assert!(EnvSpec { kind: EnvKind::OppositeAction, dynamics_params: vec![0.0], ..EnvSpec::default() }.build().is_err());
    assert!(EnvSpec { gamma: 1.0, ..EnvSpec::gridworld(vec![0.1]) }.build().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_gridworlds_are_homomorphous(slips in proptest::collection::vec(0.0f64..1.0, 1..5), obstacles in 0usize..6, seed in any::<u64>()) {
        let spec = EnvSpec { n_obstacles: obstacles, seed, ..EnvSpec::gridworld(slips) };
        if let Ok(f) = spec.build() {
            prop_assert!(all_pairs_homomorphous(&f));
        }
    }

    #[test]
    fn generated_pendulums_are_homomorphous(g in proptest::collection::vec(0.0f64..15.0, 1..4)) {
        let f = EnvSpec::pendulum(g).build().unwrap();
        prop_assert!(all_pairs_homomorphous(&f));
    }
}
