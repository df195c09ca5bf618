//! Every file format the crate writes parses back to the same values.

use std::path::Path;

use sparse_mfc::census::{empirical_distribution, KeyMode, NeighborhoodDistribution};
use sparse_mfc::config::ExperimentConfig;
use sparse_mfc::dp::{exact_policy_eval, parse_dp_csv, parse_sweep_csv, sweep_to_csv, ObservationPolicy, RewardTarget, SweepRow};
use sparse_mfc::env::{parse_trajectory_csv, rollout, EnvParams};
use sparse_mfc::graph::{generate, parse_edge_list, write_edge_list, Decoration, GraphKind, GraphSpec};
use sparse_mfc::mpnn::{Checkpoint, MpnnParams};
use sparse_mfc::noise::NoiseStreams;
use sparse_mfc::policy::{LocalPolicyParams, MetaPolicy, ObservationMode};
use sparse_mfc::rl::{curve_to_csv, parse_curve_csv, CurveRow};

const MEM: &str = "memory";

#[test]
fn edge_list_with_states() {
    let g = generate(&GraphSpec::new(GraphKind::Er { n: 50, d: 2.5 }, 3)).unwrap();
    let deco = Decoration::parse(&"SIRV".repeat(13)[..50]).unwrap();
    let (h, states) = parse_edge_list(&write_edge_list(&g, Some(&deco)), Path::new(MEM)).unwrap();
    assert_eq!(h.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
    assert_eq!(states, Some(deco));
}

#[test]
fn census_csv() {
    let g = generate(&GraphSpec::new(GraphKind::Grid { width: 6, height: 5 }, 0)).unwrap();
    let deco = Decoration::parse(&"SSISRSVS".repeat(4)[..30]).unwrap();
    for mode in [KeyMode::Exact, KeyMode::WlHash] {
        let c = empirical_distribution(&g, &deco, 2, mode).unwrap();
        let back = NeighborhoodDistribution::from_csv(&c.to_csv(), Path::new(MEM)).unwrap();
        assert_eq!(back.masses(), c.masses());
        assert_eq!(back.radius(), 2);
    }
}

#[test]
fn local_policy_csv() {
    for mode in [ObservationMode::Local6, ObservationMode::OwnState] {
        let psi: Vec<f64> = (0..mode.psi_len()).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        let p = LocalPolicyParams::new(psi, mode).unwrap();
        assert_eq!(LocalPolicyParams::from_csv(&p.to_csv(), Path::new(MEM)).unwrap(), p);
    }
}

#[test]
fn checkpoint_bytes_and_files() {
    let meta = MetaPolicy::new(MpnnParams::random(5, 18, 11), 2.5, ObservationMode::Local6).unwrap();
    let ckpt = meta.to_checkpoint();
    let back = Checkpoint::from_bytes(&ckpt.to_bytes(), Path::new(MEM)).unwrap();
    assert_eq!(back.data, ckpt.data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.ckpt");
    meta.save(&path).unwrap();
    let loaded = MetaPolicy::load(&path).unwrap();
    assert_eq!(loaded.mpnn.flatten(), meta.mpnn.flatten());
    assert_eq!(loaded.sigma, meta.sigma);
    assert!(Checkpoint::from_bytes(&ckpt.to_bytes()[..20], Path::new(MEM)).is_err());
}

#[test]
fn trajectory_csv() {
    let g = generate(&GraphSpec::new(GraphKind::Grid { width: 8, height: 8 }, 0)).unwrap();
    let mut deco = Decoration::uniform(64, sparse_mfc::graph::NodeState::Susceptible);
    deco.0[27] = sparse_mfc::graph::NodeState::Infected;
    let psi = LocalPolicyParams::zeros(ObservationMode::Local6);
    let r = rollout(&g, &deco, &psi, &EnvParams::grid_experiment(), &NoiseStreams::new(5), None).unwrap();
    let rows = parse_trajectory_csv(&r.to_csv(), Path::new(MEM)).unwrap();
    assert_eq!(rows.len(), r.mean_rewards.len());
    for (row, (t, &m)) in rows.iter().zip(r.mean_rewards.iter().enumerate()) {
        assert_eq!((row.t, row.mean_reward, row.counts), (t, m, r.states[t].counts()));
    }
}

#[test]
fn learning_curve_csv() {
    let rows: Vec<CurveRow> = (0..4)
        .map(|b| CurveRow {
            batch: b,
            mean_return: -1.0 / (b as f64 + 3.0),
            actor_obj: 0.1 * b as f64,
            critic_loss: 2.0f64.powi(-(b as i32)),
            wallclock_s: 0.5 * b as f64,
        })
        .collect();
    assert_eq!(parse_curve_csv(&curve_to_csv(&rows), Path::new(MEM)).unwrap(), rows);
}

#[test]
fn value_table_csv() {
    let g = generate(&GraphSpec::new(GraphKind::Cliques { count: 2, size: 2 }, 0)).unwrap();
    let params = EnvParams {
        horizon: 2,
        ..EnvParams::triangles_experiment()
    };
    let table = exact_policy_eval(&g, &ObservationPolicy::deterministic(17), &params, 2, RewardTarget::Mean).unwrap();
    let rows = parse_dp_csv(&table.to_csv(&g).unwrap(), Path::new(MEM)).unwrap();
    assert_eq!(rows.len(), table.len());
    for r in rows {
        assert_eq!(table.value(r.t, r.state_id), Some(r.value));
    }
}

#[test]
fn sweep_csv() {
    let rows = vec![
        SweepRow { k: 0, best_j: -1.25, gap: 0.5, log_gap: Some(0.5f64.ln()) },
        SweepRow { k: 1, best_j: -0.75, gap: 0.0, log_gap: None },
    ];
    assert_eq!(parse_sweep_csv(&sweep_to_csv(&rows), Path::new(MEM)).unwrap(), rows);
}

#[test]
fn shipped_configs_survive_toml() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back.to_toml().unwrap(), cfg.to_toml().unwrap(), "{}", path.display());
        }
    }
}
