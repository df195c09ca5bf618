use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_mfc::census::{empirical_distribution, KeyMode};
use sparse_mfc::config::{ExperimentConfig, ExperimentKind};
use sparse_mfc::dp::random_locality_cases;
use sparse_mfc::env::{rollout, LocalPolicy};
use sparse_mfc::graph::{generate, read_edge_list, write_edge_list, Decoration, GraphKind, GraphSpec, NodeState};
use sparse_mfc::mpnn::write_atomic;
use sparse_mfc::noise::{derive_seed, NoiseStreams};
use sparse_mfc::policy::{LocalPolicyParams, MetaPolicy};
use sparse_mfc::rl::{curve_to_csv, episode_seed, evaluate, train, TrainConfig, TrainEnv};
use sparse_mfc::studies::{mean_se, run_experiment, scenario_separation, RunSummary};
use sparse_mfc::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-mfc", version, about = "Sparse mean-field control on sparse graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GraphArgs {
    /// Generated family: grid, cliques, er, path, cycle or tree.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, default_value_t = 20)]
    width: usize,
    #[arg(long, default_value_t = 20)]
    height: usize,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 3)]
    size: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Mean degree of the Erdős–Rényi family.
    #[arg(long, default_value_t = 3.0)]
    d: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GraphArgs {
    fn spec(&self, kind: &str) -> Result<GraphSpec> {
        let kind = match kind {
            "grid" => GraphKind::Grid { width: self.width, height: self.height },
            "cliques" | "triangles" => GraphKind::Cliques { count: self.count, size: self.size },
            "er" => GraphKind::Er { n: self.n, d: self.d },
            "path" => GraphKind::Path { n: self.n },
            "cycle" => GraphKind::Cycle { n: self.n },
            "tree" => GraphKind::Tree { n: self.n },
            other => return Err(Error::InvalidParameter(format!("unknown graph kind {other:?}"))),
        };
        Ok(GraphSpec::new(kind, self.seed))
    }
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a graph as an edge list: one generated family to `--out`, or
    /// the configured graph and a sampled start per seed.
    Graph {
        #[arg(long, required_unless_present = "kind")]
        config: Option<PathBuf>,
        #[command(flatten)]
        family: GraphArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Census of an edge-list file, or of the sampled start per seed.
    Census {
        #[arg(long, required_unless_present = "graph")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        graph: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long, default_value = "exact")]
        mode: KeyMode,
    },
    /// Roll out a local policy table, or a trained meta-policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Local policy CSV; the uniform policy when absent.
        #[arg(long, conflicts_with = "meta")]
        policy: Option<PathBuf>,
        /// Meta-policy checkpoint.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Train one meta-policy per seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on seeds `0..n` instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Evaluate a meta-policy checkpoint on every seed.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        meta: PathBuf,
    },
    /// Run the full configured study.
    Run(Common),
    /// Exact values of the configured policies against Monte Carlo estimates.
    DpCertify(Common),
    /// Coupled rollouts that differ only beyond the horizon radius.
    LocalityTest {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
    /// Optimality gap of radius-k policies for each configured k.
    TruncationSweep(Common),
    /// Census distance between random graphs of growing size.
    LwcSweep(Common),
    /// Tape gradients against finite differences and quadrature.
    GradientCheck(Common),
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let out = cfg.output_dir(common.out.as_deref());
    Ok((cfg, out))
}

fn put(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())
}

fn env_for(cfg: &ExperimentConfig, seed: u64) -> Result<TrainEnv> {
    Ok(TrainEnv {
        graph: cfg.build_graph(seed)?,
        params: cfg.env_params()?,
        init: cfg.initial_condition(),
    })
}

fn study(common: &Common, kind: Option<ExperimentKind>) -> Result<()> {
    let (mut cfg, out) = load(common)?;
    if let Some(k) = kind {
        cfg.experiment = k;
        cfg.validate()?;
    }
    let sum = run_experiment(&cfg, &out)?;
    report(&sum);
    Ok(())
}

fn report(sum: &RunSummary) {
    for a in &sum.arms {
        println!("{:<12} runs={} mean={:.4} se={:.4}", a.arm, a.runs, a.mean, a.std_error);
    }
    for s in &sum.scenarios {
        println!(
            "seed {} {:<6} p_vacc scattered={:.3} concentrated={:.3}",
            s.seed, s.arm, s.p_vacc_scattered, s.p_vacc_concentrated
        );
    }
    for c in &sum.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Graph { config, family, out } => match config {
            None => {
                let kind = family.kind.as_deref().unwrap_or("grid");
                let g = generate(&family.spec(kind)?)?;
                emit(out.as_deref(), &write_edge_list(&g, None))?;
            }
            Some(config) => {
                let (cfg, out) = load(&Common { config, out })?;
                for &seed in &cfg.seeds {
                    let env = env_for(&cfg, seed)?;
                    let (deco, _) = env.init.sample(&env.graph, &NoiseStreams::new(seed))?;
                    put(&out, &format!("graph_seed{seed}.txt"), &write_edge_list(&env.graph, Some(&deco)))?;
                    println!("seed {seed}: {} nodes, {} edges", env.graph.node_count(), env.graph.edge_count());
                }
            }
        },
        Command::Census { config, graph, out, radius, mode } => match config {
            None => {
                let path = graph.expect("clap requires --graph without --config");
                let (g, deco) = read_edge_list(&path)?;
                let deco = deco.unwrap_or_else(|| Decoration(vec![NodeState::Susceptible; g.node_count()]));
                let c = empirical_distribution(&g, &deco, radius, mode)?;
                emit(out.as_deref(), &c.to_csv())?;
            }
            Some(config) => {
                let (cfg, out) = load(&Common { config, out })?;
                for &seed in &cfg.seeds {
                    let env = env_for(&cfg, seed)?;
                    let (deco, _) = env.init.sample(&env.graph, &NoiseStreams::new(seed))?;
                    let c = empirical_distribution(&env.graph, &deco, radius, mode)?;
                    put(&out, &format!("census_r{radius}_seed{seed}.csv"), &c.to_csv())?;
                    println!("seed {seed}: {} classes over {} roots", c.len(), c.total());
                }
            }
        },
        Command::Simulate { common, policy, meta } => {
            let (cfg, out) = load(&common)?;
            let meta = meta.map(|p| MetaPolicy::load(&p)).transpose()?;
            let local = match &policy {
                Some(p) => LocalPolicyParams::from_csv(&std::fs::read_to_string(p)?, p)?,
                None => LocalPolicyParams::zeros(cfg.policy.obs_mode),
            };
            for &seed in &cfg.seeds {
                let env = env_for(&cfg, seed)?;
                match &meta {
                    Some(m) => {
                        let ep = sparse_mfc::rl::run_episode(m, &env, cfg.train.depth, seed)?;
                        let mut csv = String::from("t,mean_reward,passes\n");
                        for s in &ep.steps {
                            let _ = writeln!(csv, "{},{:.17e},{}", s.t, s.mean_reward, s.passes);
                        }
                        put(&out, &format!("episode_seed{seed}.csv"), &csv)?;
                        println!("seed {seed}: return {:.4}", ep.total_return());
                    }
                    None => {
                        let noise = NoiseStreams::new(seed);
                        let (deco, _) = env.init.sample(&env.graph, &noise)?;
                        let pol: &dyn LocalPolicy = &local;
                        let r = rollout(&env.graph, &deco, pol, &env.params, &noise, None)?;
                        put(&out, &format!("trajectory_seed{seed}.csv"), &r.to_csv())?;
                        println!("seed {seed}: return {:.4}", r.total_return());
                    }
                }
            }
        }
        Command::Train { common, seeds } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(n) = seeds {
                cfg.seeds = (0..n).collect();
                cfg.validate()?;
            }
            for &seed in &cfg.seeds {
                let env = env_for(&cfg, seed)?;
                let meta = MetaPolicy::zero_init(cfg.policy.width, cfg.policy.obs_mode, derive_seed(&[seed, 0x1417]));
                let meta = MetaPolicy { sigma: cfg.policy.sigma, ..meta }.with_noop_prior(cfg.policy.noop_prior);
                let tc = TrainConfig {
                    seed,
                    ..cfg.train.clone()
                };
                let o = train(meta, &env, &tc)?;
                put(&out, &format!("curve_seed{seed}.csv"), &curve_to_csv(&o.curve))?;
                o.meta.save(&out.join(format!("meta_seed{seed}.ckpt")))?;
                if let Some(c) = &o.critic {
                    c.to_checkpoint().save(&out.join(format!("critic_seed{seed}.ckpt")))?;
                }
                let last = o.curve.last().map_or(f64::NAN, |r| r.mean_return);
                println!("seed {seed}: final batch return {last:.4}");
            }
        }
        Command::Eval { common, meta } => {
            let (cfg, out) = load(&common)?;
            let m = MetaPolicy::load(&meta)?;
            let mut csv = String::from("seed,mean_return,std_error\n");
            for &seed in &cfg.seeds {
                let env = env_for(&cfg, seed)?;
                let seeds: Vec<u64> = (0..cfg.eval.episodes).map(|e| episode_seed(seed, usize::MAX, e)).collect();
                let (mean, se) = mean_se(&evaluate(&m, &env, cfg.train.depth, &seeds)?);
                let _ = writeln!(csv, "{seed},{mean:.17e},{se:.17e}");
                print!("seed {seed}: return {mean:.4} +/- {se:.4}");
                if let Ok((ps, pc)) = scenario_separation(&m, &env, cfg.train.depth, cfg.eval.separation_draws, seed) {
                    print!("  p_vacc scattered={ps:.3} concentrated={pc:.3}");
                }
                println!();
            }
            put(&out, "eval.csv", &csv)?;
        }
        Command::Run(common) => study(&common, None)?,
        Command::DpCertify(common) => study(&common, Some(ExperimentKind::DpCertify))?,
        Command::TruncationSweep(common) => study(&common, Some(ExperimentKind::Truncation))?,
        Command::LwcSweep(common) => study(&common, Some(ExperimentKind::LwcSweep))?,
        Command::GradientCheck(common) => study(&common, Some(ExperimentKind::GradientCheck))?,
        Command::LocalityTest { common, cases } => {
            let (cfg, out) = load(&common)?;
            let params = cfg.env_params()?;
            let mut csv = String::from("case,graph,nodes,root,far_nodes,identical,max_deviation,first_divergence\n");
            let mut failures = 0;
            for &seed in &cfg.seeds {
                for (i, c) in random_locality_cases(cases, &params, params.horizon, seed)?.iter().enumerate() {
                    failures += usize::from(!c.report.identical);
                    let first = c.report.first_divergence.map(|t| t.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        csv,
                        "{seed}:{i},{},{},{},{},{},{:e},{first}",
                        c.graph_tag, c.nodes, c.root, c.far_nodes, c.report.identical, c.report.max_deviation
                    );
                }
            }
            put(&out, "locality.csv", &csv)?;
            println!("{} cases, {failures} divergent", cases * cfg.seeds.len());
            if failures > 0 {
                return Err(Error::Numerical(format!("{failures} coupling cases diverged")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                e if e.is_validation() => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
