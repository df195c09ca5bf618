//! Randomized invariants over graphs, dynamics, censuses and policies.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparse_mfc::census::{empirical_distribution, tv_distance, KeyMode};
use sparse_mfc::dp::{bellman_solve_from, evaluate_from, ObservationPolicy, PolicyClass, RewardTarget};
use sparse_mfc::env::{act_with, observe, rollout, step, Action, ConstantPolicy, EnvParams, Penalty};
use sparse_mfc::graph::{generate, permute_decoration, Decoration, Graph, GraphKind, GraphSpec, NodeState};
use sparse_mfc::mpnn::{mpnn_forward, pooled_readout, MpnnParams};
use sparse_mfc::noise::NoiseStreams;
use sparse_mfc::policy::{joint_log_prob, LocalPolicyParams, MetaPolicy, ObservationMode};
use sparse_mfc::rl::DepthSchedule;

fn kind() -> impl Strategy<Value = GraphKind> {
    prop_oneof![
        (1usize..8, 1usize..8).prop_map(|(width, height)| GraphKind::Grid { width, height }),
        (1usize..6, 1usize..6).prop_map(|(count, size)| GraphKind::Cliques { count, size }),
        (5usize..40, 0.5f64..4.0).prop_map(|(n, d)| GraphKind::Er { n, d }),
        (1usize..30).prop_map(|n| GraphKind::Path { n }),
        (3usize..30).prop_map(|n| GraphKind::Cycle { n }),
        (1usize..30).prop_map(|n| GraphKind::Tree { n }),
    ]
}

fn instance() -> impl Strategy<Value = (Graph, Decoration, u64)> {
    (kind(), any::<u64>(), any::<u64>()).prop_map(|(k, gseed, dseed)| {
        let g = generate(&GraphSpec::new(k, gseed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(dseed);
        let deco = Decoration(
            (0..g.node_count())
                .map(|_| NodeState::from_index(rand::Rng::random_range(&mut rng, 0..4)))
                .collect(),
        );
        (g, deco, dseed)
    })
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

fn uniform_psi() -> impl Strategy<Value = LocalPolicyParams> {
    proptest::collection::vec(-3.0f64..3.0, 18).prop_map(|v| LocalPolicyParams::new(v, ObservationMode::Local6).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn census_is_relabeling_invariant((g, deco, seed) in instance(), k in 0usize..3) {
        let perm = permutation(g.node_count(), seed);
        let a = empirical_distribution(&g, &deco, k, KeyMode::Exact).unwrap();
        let b = empirical_distribution(&g.permute(&perm), &permute_decoration(&deco, &perm), k, KeyMode::Exact).unwrap();
        prop_assert_eq!(a.masses(), b.masses());
        let total: f64 = a.masses().iter().map(|(_, m)| m).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(tv_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn grid_degrees_follow_closed_form(width in 1usize..12, height in 1usize..12) {
        let g = generate(&GraphSpec::new(GraphKind::Grid { width, height }, 0)).unwrap();
        prop_assert_eq!(g.node_count(), width * height);
        prop_assert_eq!(g.edge_count(), (width - 1) * height + width * (height - 1));
        for x in 0..width {
            for y in 0..height {
                let expect = usize::from(x > 0) + usize::from(x + 1 < width) + usize::from(y > 0) + usize::from(y + 1 < height);
                prop_assert_eq!(g.degree(y * width + x), expect);
            }
        }
    }

    #[test]
    fn cliques_are_complete_and_disjoint(count in 1usize..8, size in 1usize..7) {
        let g = generate(&GraphSpec::new(GraphKind::Cliques { count, size }, 0)).unwrap();
        prop_assert_eq!(g.edge_count(), count * size * (size - 1) / 2);
        prop_assert!(g.degrees().iter().all(|&d| d == size - 1));
        let comps = g.components();
        let mut distinct = comps.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), count);
    }

    #[test]
    fn rollouts_are_reproducible((g, deco, seed) in instance(), psi in uniform_psi()) {
        let params = EnvParams { horizon: 4, ..EnvParams::grid_experiment() };
        let a = rollout(&g, &deco, &psi, &params, &NoiseStreams::new(seed), None).unwrap();
        let b = rollout(&g, &deco, &psi, &params, &NoiseStreams::new(seed), None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn recovered_and_vaccinated_are_absorbing((g, deco, seed) in instance(), psi in uniform_psi()) {
        let params = EnvParams { horizon: 5, ..EnvParams::grid_experiment() };
        let r = rollout(&g, &deco, &psi, &params, &NoiseStreams::new(seed), None).unwrap();
        for w in r.states.windows(2) {
            for (before, after) in w[0].states().iter().zip(w[1].states()) {
                if before.is_absorbing() {
                    prop_assert_eq!(before, after);
                }
            }
        }
    }

    #[test]
    fn no_transmission_means_no_new_infections((g, deco, seed) in instance(), psi in uniform_psi()) {
        let params = EnvParams { beta: 0.0, horizon: 5, ..EnvParams::grid_experiment() };
        let r = rollout(&g, &deco, &psi, &params, &NoiseStreams::new(seed), None).unwrap();
        for w in r.states.windows(2) {
            prop_assert!(w[1].count(NodeState::Infected) <= w[0].count(NodeState::Infected));
            for (before, after) in w[0].states().iter().zip(w[1].states()) {
                prop_assert!(!(*before != NodeState::Infected && *after == NodeState::Infected));
            }
        }
    }

    #[test]
    fn vaccinate_all_clears_susceptibles((g, deco, seed) in instance()) {
        let params = EnvParams::grid_experiment();
        let noise = NoiseStreams::new(seed);
        let actions = act_with(&ConstantPolicy(Action::Vaccinate), &g, &deco, &noise, 0);
        let o = step(&g, &deco, &actions, &params, &noise, 0).unwrap();
        prop_assert_eq!(o.next.count(NodeState::Susceptible), 0);
        prop_assert_eq!(o.next.count(NodeState::Vaccinated), deco.count(NodeState::Susceptible) + deco.count(NodeState::Vaccinated));
    }

    #[test]
    fn joint_policy_factorizes((g, deco, seed) in instance(), psi in uniform_psi()) {
        let noise = NoiseStreams::new(seed);
        let actions = act_with(&psi, &g, &deco, &noise, 0);
        let terms: Vec<f64> = actions.iter().enumerate().map(|(i, a)| psi.probs(observe(&g, &deco, i))[a.index()].ln()).collect();
        let total = joint_log_prob(&psi, &g, &deco, &actions);
        prop_assert!((terms.iter().sum::<f64>() - total).abs() < 1e-9);
        prop_assert!(terms.iter().all(|x| *x <= 0.0));
    }

    #[test]
    fn mpnn_is_permutation_equivariant((g, deco, seed) in instance(), passes in 0usize..4) {
        let p = MpnnParams::random(6, 18, seed);
        let perm = permutation(g.node_count(), seed ^ 1);
        let h = mpnn_forward(&p, &g, &deco, passes).unwrap();
        let hp = mpnn_forward(&p, &g.permute(&perm), &permute_decoration(&deco, &perm), passes).unwrap();
        for (v, &pv) in perm.iter().enumerate() {
            for (a, b) in h.row(v).iter().zip(hp.row(pv)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        let a = pooled_readout(&p, &g, &deco, passes).unwrap();
        let b = pooled_readout(&p, &g.permute(&perm), &permute_decoration(&deco, &perm), passes).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rewards_to_go_are_causal(rewards in proptest::collection::vec(-5.0f64..1.0, 1..12), discount in 0.0f64..=1.0, cut in 0usize..12) {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 1 }, 0)).unwrap();
        let traj = trajectory(&g, &rewards);
        let base = traj.rewards_to_go(discount);
        let cut = cut % rewards.len();
        let mut changed = rewards.clone();
        changed[cut] -= 10.0;
        let other = trajectory(&g, &changed).rewards_to_go(discount);
        for t in cut + 1..rewards.len() {
            prop_assert_eq!(base[t], other[t]);
        }
        prop_assert!(other[cut] < base[cut]);
    }

    #[test]
    fn depth_schedule_counts_down(horizon in 1usize..20) {
        for t in 0..horizon {
            prop_assert_eq!(DepthSchedule::Horizon.passes(t, horizon), horizon - t);
        }
        prop_assert_eq!(DepthSchedule::Fixed(3).passes(0, horizon), 3);
    }
}

fn trajectory(g: &Graph, rewards: &[f64]) -> sparse_mfc::rl::EpisodeTrajectory {
    let deco = Decoration::uniform(g.node_count(), NodeState::Susceptible);
    sparse_mfc::rl::EpisodeTrajectory {
        seed: 0,
        scenario: None,
        graph_tag: g.tag().to_string(),
        steps: rewards
            .iter()
            .enumerate()
            .map(|(t, &r)| sparse_mfc::rl::StepRecord {
                t,
                passes: 0,
                state: deco.clone(),
                psi: Vec::new(),
                log_density: 0.0,
                mean_reward: r,
            })
            .collect(),
        final_state: deco,
    }
}

#[test]
fn census_identical_states_get_identical_means() {
    let g = generate(&GraphSpec::new(GraphKind::Cliques { count: 4, size: 3 }, 0)).unwrap();
    let a = Decoration::parse("ISSSSSISSSSS").unwrap();
    let b = Decoration::parse("SSSISSSSSISS").unwrap();
    let c = Decoration::parse("IISSSSSSSSSS").unwrap();
    let meta = MetaPolicy::new(MpnnParams::random(8, 18, 4), 3.0, ObservationMode::Local6).unwrap();
    for passes in 0..3 {
        let (x, y) = (meta.mean(&g, &a, passes).unwrap(), meta.mean(&g, &b, passes).unwrap());
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-12));
    }
    assert_ne!(meta.mean(&g, &a, 1).unwrap(), meta.mean(&g, &c, 1).unwrap());
}

#[test]
fn optimal_value_dominates_every_deterministic_policy() {
    let g = generate(&GraphSpec::new(GraphKind::Cliques { count: 2, size: 2 }, 0)).unwrap();
    let params = EnvParams {
        beta: 0.6,
        gamma: 0.3,
        penalty: Penalty::CliquesWithTwoInfected(0.5),
        horizon: 3,
        ..EnvParams::triangles_experiment()
    };
    let x0 = Decoration::parse("ISIS").unwrap();
    let table = bellman_solve_from(&g, PolicyClass::Deterministic6, &params, params.horizon, std::slice::from_ref(&x0)).unwrap();
    let best = table.value(0, sparse_mfc::dp::encode_state(&x0)).unwrap();
    for id in 0..729 {
        let v = evaluate_from(&g, &ObservationPolicy::deterministic(id), &params, params.horizon, &x0, RewardTarget::Mean).unwrap();
        assert!(v <= best + 1e-9, "policy {id}: {v} > {best}");
    }
}
