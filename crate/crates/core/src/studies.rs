//! Experiment orchestration: runs a configured study over its seed list and
//! writes CSV tables, minimal SVG charts and a JSON summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::census::{degree_distribution, empirical_distribution, lwc_sweep, poisson_tv, tv_distance, KeyMode};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::dp::{
    bellman_solve, encode_state, evaluate_from, log_gap_slope, monte_carlo_value, product_initial_law, sufficiency_of_table, sweep_to_csv,
    truncation_sweep, ObservationPolicy, PolicyClass, RewardTarget,
};
use crate::env::{clique_scenario, Action, InitialCondition, LocalObservation, OwnClass, Scenario};
use crate::error::{Error, Result};
use crate::gradcheck::{log_density_check, one_step_gradient_check};
use crate::graph::{Decoration, GraphKind, GraphSpec};
use crate::mpnn::{write_atomic, MpnnParams};
use crate::noise::{derive_seed, NoiseStreams, StreamKind};
use crate::policy::{expected_action_prob, MetaPolicy, ObservationMode};
use crate::rl::{curve_to_csv, evaluate, episode_seed, train, CurveRow, DepthSchedule, TrainConfig, TrainEnv};

/// Final return of one trained arm on one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub arm: String,
    pub final_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub arm: String,
    pub runs: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Vaccination probability for a susceptible node with an infected neighbor
/// at the first step, by scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub seed: u64,
    pub arm: String,
    pub p_vacc_scattered: f64,
    pub p_vacc_concentrated: f64,
}

impl ScenarioStats {
    pub fn separation(&self) -> f64 {
        self.p_vacc_scattered - self.p_vacc_concentrated
    }
}

/// One named pass/fail check with a short detail string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub results: Vec<SeedResult>,
    pub arms: Vec<ArmStats>,
    pub scenarios: Vec<ScenarioStats>,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    fn new(cfg: &ExperimentConfig) -> Self {
        RunSummary {
            experiment: cfg.experiment.as_str().into(),
            seeds: cfg.seeds.clone(),
            ..Default::default()
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    /// Per-arm mean and standard error over seeds.
    fn aggregate(&mut self) {
        let mut names: Vec<String> = self.results.iter().map(|r| r.arm.clone()).collect();
        names.dedup();
        names.sort();
        names.dedup();
        self.arms = names
            .into_iter()
            .map(|arm| {
                let xs: Vec<f64> = self.results.iter().filter(|r| r.arm == arm).map(|r| r.final_return).collect();
                let (mean, std_error) = mean_se(&xs);
                ArmStats {
                    arm,
                    runs: xs.len(),
                    mean,
                    std_error,
                }
            })
            .collect();
    }

    pub fn returns(&self, arm: &str) -> Vec<f64> {
        self.results.iter().filter(|r| r.arm == arm).map(|r| r.final_return).collect()
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from("seed,arm,final_return\n");
        for r in &self.results {
            let _ = writeln!(out, "{},{},{:.17e}", r.seed, r.arm, r.final_return);
        }
        out
    }

    pub fn scenarios_csv(&self) -> String {
        let mut out = String::from("seed,arm,p_vacc_scattered,p_vacc_concentrated,separation\n");
        for s in &self.scenarios {
            let _ = writeln!(
                out,
                "{},{},{:.17e},{:.17e},{:.17e}",
                s.seed,
                s.arm,
                s.p_vacc_scattered,
                s.p_vacc_concentrated,
                s.separation()
            );
        }
        out
    }
}

pub fn parse_results_csv(text: &str, origin: &Path) -> Result<Vec<SeedResult>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("seed,arm,final_return") {
        return Err(Error::parse(origin, "missing results header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(origin, format!("bad results row {line:?}"));
            if c.len() != 3 {
                return Err(bad());
            }
            Ok(SeedResult {
                seed: c[0].parse().map_err(|_| bad())?,
                arm: c[1].to_string(),
                final_return: c[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// A named polyline for [`line_chart_svg`].
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal standalone SVG line chart with axis ranges and a legend.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m},{m} L{m},{} L{},{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (v, x, y, anchor) in [
        (x0, sx(x0), h - m + 16.0, "middle"),
        (x1, sx(x1), h - m + 16.0, "middle"),
        (y0, m - 6.0, sy(y0) + 4.0, "end"),
        (y1, m - 6.0, sy(y1) + 4.0, "end"),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !d.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        }
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            w - m,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        write_atomic(&p, text.as_bytes())?;
        self.files.push(p);
        Ok(())
    }
}

/// Mean first-step vaccination probability of a susceptible node with an
/// infected neighbor, under scattered and under concentrated starts.
/// Each of the `draws` evaluations places both starts from one seed and
/// shares the Gaussian draws between them.
pub fn scenario_separation(meta: &MetaPolicy, env: &TrainEnv, depth: DepthSchedule, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let (infected, conc) = match env.init {
        InitialCondition::CliqueScenarios {
            infected,
            concentrated_cliques,
        } => (infected, concentrated_cliques),
        _ => return Err(Error::Precondition("scenario separation needs a clique-scenario start".into())),
    };
    if draws == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let obs = LocalObservation {
        own: OwnClass::S,
        infected_neighbor: true,
    };
    let passes = depth.passes(0, env.params.horizon);
    let mut sums = [0.0, 0.0];
    for d in 0..draws {
        let s = derive_seed(&[seed, d as u64]);
        let z = NoiseStreams::new(s).standard_normals(0, 0, StreamKind::Meta, meta.mode.psi_len());
        for (slot, scenario) in [Scenario::Scattered, Scenario::Concentrated].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let deco = clique_scenario(&env.graph, infected, conc, scenario, &mut rng)?;
            let mean = meta.mean(&env.graph, &deco, passes)?;
            sums[slot] += expected_action_prob(&mean, meta.sigma, meta.mode, obs, Action::Vaccinate, std::slice::from_ref(&z));
        }
    }
    Ok((sums[0] / draws as f64, sums[1] / draws as f64))
}

/// Total-variation distances between the scattered and concentrated
/// starts' censuses at radius 0 and 1.
pub fn scenario_census_tv(env: &TrainEnv, seed: u64) -> Result<(f64, f64)> {
    let (infected, conc) = match env.init {
        InitialCondition::CliqueScenarios {
            infected,
            concentrated_cliques,
        } => (infected, concentrated_cliques),
        _ => return Err(Error::Precondition("census comparison needs a clique-scenario start".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = clique_scenario(&env.graph, infected, conc, Scenario::Scattered, &mut rng)?;
    let b = clique_scenario(&env.graph, infected, conc, Scenario::Concentrated, &mut rng)?;
    let tv = |k| -> Result<f64> {
        tv_distance(
            &empirical_distribution(&env.graph, &a, k, KeyMode::Exact)?,
            &empirical_distribution(&env.graph, &b, k, KeyMode::Exact)?,
        )
    };
    Ok((tv(0)?, tv(1)?))
}

fn eval_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes).map(|e| episode_seed(derive_seed(&[seed, 0xE7A1]), usize::MAX, e)).collect()
}

/// Trains one arm from a zero-output initialization and evaluates it.
fn train_arm(cfg: &ExperimentConfig, env: &TrainEnv, seed: u64, mode: ObservationMode, depth: DepthSchedule) -> Result<(MetaPolicy, Vec<CurveRow>, f64)> {
    let meta = MetaPolicy::zero_init(cfg.policy.width, mode, derive_seed(&[seed, 0x1417]));
    let meta = MetaPolicy { sigma: cfg.policy.sigma, ..meta }.with_noop_prior(cfg.policy.noop_prior);
    let tc = TrainConfig {
        seed,
        depth,
        ..cfg.train.clone()
    };
    let out = train(meta, env, &tc)?;
    let returns = evaluate(&out.meta, env, depth, &eval_seeds(seed, cfg.eval.episodes))?;
    let (mean, _) = mean_se(&returns);
    Ok((out.meta, out.curve, mean))
}

fn curve_series(name: String, curve: &[CurveRow]) -> Series {
    Series {
        name,
        points: curve.iter().map(|r| (r.batch as f64, r.mean_return)).collect(),
    }
}

fn train_env(cfg: &ExperimentConfig, seed: u64) -> Result<TrainEnv> {
    Ok(TrainEnv {
        graph: cfg.build_graph(seed)?,
        params: cfg.env_params()?,
        init: cfg.initial_condition(),
    })
}

fn run_grid(cfg: &ExperimentConfig, w: &mut Writer, sum: &mut RunSummary) -> Result<()> {
    let arms = [cfg.policy.obs_mode, cfg.policy.ablation_obs_mode];
    let mut series = Vec::new();
    for &seed in &cfg.seeds {
        let env = train_env(cfg, seed)?;
        for mode in arms {
            let (meta, curve, final_return) = train_arm(cfg, &env, seed, mode, cfg.train.depth)?;
            w.put(&format!("curve_{}_seed{seed}.csv", mode.as_str()), &curve_to_csv(&curve))?;
            meta.save(&w.dir.join(format!("meta_{}_seed{seed}.ckpt", mode.as_str())))?;
            series.push(curve_series(format!("{} seed {seed}", mode.as_str()), &curve));
            sum.results.push(SeedResult {
                seed,
                arm: mode.as_str().into(),
                final_return,
            });
        }
    }
    let a = sum.returns(arms[0].as_str());
    let b = sum.returns(arms[1].as_str());
    let wins = a.iter().zip(&b).filter(|(x, y)| x > y).count();
    sum.check(
        "local_beats_ablation",
        wins * 10 >= 8 * a.len(),
        format!("{wins}/{} seeds", a.len()),
    );
    w.put("curves.svg", &line_chart_svg("Training curves", "batch", "mean return", &series))?;
    Ok(())
}

fn run_triangles(cfg: &ExperimentConfig, w: &mut Writer, sum: &mut RunSummary) -> Result<()> {
    let gnn_depth = cfg.train.depth;
    let base_depth = DepthSchedule::Fixed(cfg.policy.baseline_passes);
    let arms = [("gnn", gnn_depth), ("local", base_depth)];
    let mut series = Vec::new();
    let mut census_rows = String::from("seed,tv_radius0,tv_radius1\n");
    let mut census_ok = true;
    for &seed in &cfg.seeds {
        let env = train_env(cfg, seed)?;
        let (tv0, tv1) = scenario_census_tv(&env, seed)?;
        census_ok &= tv0 == 0.0 && tv1 > 0.0;
        let _ = writeln!(census_rows, "{seed},{tv0:.17e},{tv1:.17e}");
        for (arm, depth) in arms {
            let (meta, curve, final_return) = train_arm(cfg, &env, seed, cfg.policy.obs_mode, depth)?;
            w.put(&format!("curve_{arm}_seed{seed}.csv"), &curve_to_csv(&curve))?;
            meta.save(&w.dir.join(format!("meta_{arm}_seed{seed}.ckpt")))?;
            series.push(curve_series(format!("{arm} seed {seed}"), &curve));
            let (ps, pc) = scenario_separation(&meta, &env, depth, cfg.eval.separation_draws, derive_seed(&[seed, 0x5E9]))?;
            sum.scenarios.push(ScenarioStats {
                seed,
                arm: arm.into(),
                p_vacc_scattered: ps,
                p_vacc_concentrated: pc,
            });
            sum.results.push(SeedResult {
                seed,
                arm: arm.into(),
                final_return,
            });
        }
    }
    sum.check("census_radius0_equal_radius1_differs", census_ok, "see census_tv.csv".into());
    let g = sum.returns("gnn");
    let l = sum.returns("local");
    let wins = g.iter().zip(&l).filter(|(x, y)| x > y).count();
    sum.check("gnn_beats_local", wins * 10 >= 8 * g.len(), format!("{wins}/{} seeds", g.len()));
    let sep = |arm: &str| -> Vec<f64> { sum.scenarios.iter().filter(|s| s.arm == arm).map(ScenarioStats::separation).collect() };
    let gs = sep("gnn").iter().filter(|&&s| s >= 0.3).count();
    let ls = sep("local").iter().filter(|&&s| s.abs() <= 0.1).count();
    sum.check("gnn_separates", gs * 10 >= 8 * g.len(), format!("{gs}/{} seeds with separation >= 0.3", g.len()));
    sum.check("local_does_not_separate", ls * 10 >= 8 * g.len(), format!("{ls}/{} seeds with |separation| <= 0.1", g.len()));
    w.put("census_tv.csv", &census_rows)?;
    w.put("scenarios.csv", &sum.scenarios_csv())?;
    w.put("curves.svg", &line_chart_svg("Training curves", "batch", "mean return", &series))?;
    Ok(())
}

/// Radius-`k` TV between consecutive sizes for one seed.
pub fn lwc_rows(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<crate::census::LwcRow>> {
    let d = cfg.lwc.mean_degree;
    lwc_sweep(|n, s| GraphSpec::new(GraphKind::Er { n, d }, s), &cfg.lwc.n_list, cfg.lwc.radius, &[seed], if cfg.lwc.radius <= 1 { KeyMode::Exact } else { KeyMode::WlHash })
}

fn run_lwc(cfg: &ExperimentConfig, w: &mut Writer, sum: &mut RunSummary) -> Result<()> {
    let n_list = &cfg.lwc.n_list;
    let mut csv = String::from("seed,n,keys,tv_to_next,poisson_tv\n");
    let mut tv_next = vec![Vec::new(); n_list.len()];
    let mut poisson = vec![Vec::new(); n_list.len()];
    for &seed in &cfg.seeds {
        let rows = lwc_rows(cfg, seed)?;
        for (i, r) in rows.iter().enumerate() {
            let g = crate::graph::generate(&GraphSpec::new(GraphKind::Er { n: r.n, d: cfg.lwc.mean_degree }, seed))?;
            let ptv = poisson_tv(&degree_distribution(&g), cfg.lwc.mean_degree, cfg.lwc.max_degree);
            poisson[i].push(ptv);
            let next = r.tv_to_next.map(|x| format!("{x:.17e}")).unwrap_or_default();
            if let Some(x) = r.tv_to_next {
                tv_next[i].push(x);
            }
            let _ = writeln!(csv, "{seed},{},{},{next},{ptv:.17e}", r.n, r.keys);
        }
    }
    let mut agg = String::from("n,mean_tv_to_next,mean_poisson_tv\n");
    let mut means = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let (m, _) = mean_se(&tv_next[i]);
        let (p, _) = mean_se(&poisson[i]);
        let _ = writeln!(agg, "{n},{},{p:.17e}", if m.is_finite() { format!("{m:.17e}") } else { String::new() });
        if m.is_finite() {
            means.push((n as f64, m));
        }
    }
    let decreasing = means.windows(2).all(|w| w[1].1 < w[0].1);
    sum.check("tv_decreasing", decreasing, format!("{means:?}"));
    w.put("lwc.csv", &csv)?;
    w.put("lwc_mean.csv", &agg)?;
    w.put(
        "lwc.svg",
        &line_chart_svg(
            "Census distance between consecutive sizes",
            "N",
            "mean TV",
            &[Series {
                name: "TV(N, next N)".into(),
                points: means,
            }],
        ),
    )?;
    Ok(())
}

fn run_truncation(cfg: &ExperimentConfig, w: &mut Writer, sum: &mut RunSummary) -> Result<()> {
    let g = cfg.build_graph(cfg.seeds[0])?;
    let params = cfg.env_params()?;
    let init = product_initial_law(g.node_count(), cfg.truncation.marginal)?;
    let rows = truncation_sweep(&g, &params, params.horizon, &cfg.truncation.k_list, &init)?;
    let monotone = rows.windows(2).all(|w| w[1].gap <= w[0].gap);
    let slope = log_gap_slope(&rows);
    sum.check("gap_non_increasing", monotone, format!("{:?}", rows.iter().map(|r| r.gap).collect::<Vec<_>>()));
    sum.check("log_gap_slope_negative", slope.is_some_and(|s| s < 0.0), format!("{slope:?}"));
    w.put("sweep.csv", &sweep_to_csv(&rows))?;
    w.put(
        "sweep.svg",
        &line_chart_svg(
            "Truncation gap",
            "k",
            "log gap",
            &[Series {
                name: "log gap".into(),
                points: rows.iter().filter_map(|r| r.log_gap.map(|l| (r.k as f64, l))).collect(),
            }],
        ),
    )?;
    Ok(())
}

fn run_dp(cfg: &ExperimentConfig, w: &mut Writer, sum: &mut RunSummary) -> Result<()> {
    let g = cfg.build_graph(cfg.seeds[0])?;
    let params = cfg.env_params()?;
    let class = match cfg.dp.policy_class.as_str() {
        "radius_k" => PolicyClass::RadiusK(cfg.dp.radius),
        _ => PolicyClass::Deterministic6,
    };
    let table = bellman_solve(&g, class, &params, params.horizon)?;
    w.put("dp_report.csv", &table.to_csv(&g)?)?;
    match sufficiency_of_table(&g, &table) {
        Ok(rep) => sum.check(
            "lifted_sufficiency",
            rep.holds(),
            format!("{} states, {} groups, {} violations", rep.states, rep.groups, rep.violations.len()),
        ),
        Err(Error::Precondition(msg)) => sum.check("lifted_sufficiency", true, format!("skipped: {msg}")),
        Err(e) => return Err(e),
    }
    let x0 = match cfg.initial_condition() {
        InitialCondition::Fixed { states } => Decoration::parse(&states).ok_or_else(|| Error::Config(format!("bad start {states:?}")))?,
        _ => return Err(Error::Config("dp_certify needs a fixed start".into())),
    };
    x0.check_len(&g)?;
    let mc_params = crate::env::EnvParams {
        beta: cfg.dp.mc_beta,
        gamma: cfg.dp.mc_gamma,
        ..params.clone()
    };
    let mut csv = String::from("policy,exact,mc_mean,mc_se,z\n");
    let mut all_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds[0]);
    for p in 0..cfg.dp.mc_policies {
        let pol = random_observation_policy(&mut rng);
        let exact = evaluate_from(&g, &pol, &mc_params, params.horizon, &x0, RewardTarget::Mean)?;
        let (mean, se) = monte_carlo_value(&g, &pol, &mc_params, params.horizon, &x0, cfg.dp.mc_episodes, derive_seed(&[cfg.seeds[0], p as u64]))?;
        let z = if se > 0.0 { (mean - exact) / se } else { 0.0 };
        all_ok &= z.abs() <= 3.0;
        let _ = writeln!(csv, "{p},{exact:.17e},{mean:.17e},{se:.17e},{z:.4}");
    }
    sum.check("dp_matches_monte_carlo", all_ok, "see mc_check.csv".into());
    let v0 = table.value(0, encode_state(&x0));
    sum.check("start_value", v0.is_some(), format!("{v0:?}"));
    w.put("mc_check.csv", &csv)?;
    Ok(())
}

/// Independent uniform-simplex rows.
pub fn random_observation_policy<R: Rng>(rng: &mut R) -> ObservationPolicy {
    let mut rows = [[0.0; 3]; 6];
    for r in rows.iter_mut() {
        let e: Vec<f64> = (0..3).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        let s: f64 = e.iter().sum();
        *r = [e[0] / s, e[1] / s, e[2] / s];
    }
    ObservationPolicy(rows)
}

fn run_gradient(cfg: &ExperimentConfig, w: &mut Writer, sum: &mut RunSummary) -> Result<()> {
    let seed = cfg.seeds[0];
    let env = train_env(cfg, seed)?;
    let x0 = Decoration::parse(&cfg.gradient.start).ok_or_else(|| Error::Config("bad gradient start".into()))?;
    let meta = MetaPolicy::new(
        MpnnParams::random(cfg.policy.width, cfg.policy.obs_mode.psi_len(), seed),
        cfg.policy.sigma,
        cfg.policy.obs_mode,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi: Vec<f64> = (0..cfg.policy.obs_mode.psi_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
    let blocks = log_density_check(&meta, &env.graph, &x0, env.params.horizon, &psi, cfg.gradient.step)?;
    let mut csv = String::from("block,autodiff_norm,rel_error\n");
    for b in &blocks {
        let _ = writeln!(csv, "{},{:.6e},{:.6e}", b.name, b.autodiff_norm, b.rel_error);
    }
    let worst = blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max);
    sum.check("autodiff_vs_fd", worst < 1e-4, format!("max block relative error {worst:.3e}"));
    w.put("blocks.csv", &csv)?;
    let r = one_step_gradient_check(&meta, &env, &x0, cfg.gradient.episodes, seed, cfg.gradient.quadrature_order, cfg.gradient.step)?;
    sum.check("policy_gradient_cosine", r.cosine > 0.95, format!("cosine {:.4}, objective {:.6}", r.cosine, r.objective));
    let mut g = String::from("param,monte_carlo,finite_difference\n");
    for (i, (a, b)) in r.monte_carlo.iter().zip(&r.finite_difference).enumerate() {
        let _ = writeln!(g, "{i},{a:.17e},{b:.17e}");
    }
    w.put("policy_gradient.csv", &g)?;
    Ok(())
}

/// Runs the configured study, writing into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let mut w = Writer {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut sum = RunSummary::new(cfg);
    match cfg.experiment {
        ExperimentKind::GridEpidemic => run_grid(cfg, &mut w, &mut sum)?,
        ExperimentKind::TrianglesScenario => run_triangles(cfg, &mut w, &mut sum)?,
        ExperimentKind::LwcSweep => run_lwc(cfg, &mut w, &mut sum)?,
        ExperimentKind::Truncation => run_truncation(cfg, &mut w, &mut sum)?,
        ExperimentKind::DpCertify => run_dp(cfg, &mut w, &mut sum)?,
        ExperimentKind::GradientCheck => run_gradient(cfg, &mut w, &mut sum)?,
    }
    sum.aggregate();
    if !sum.results.is_empty() {
        w.put("results.csv", &sum.results_csv())?;
    }
    w.put("config.toml", &cfg.to_toml()?)?;
    sum.files = w.files.clone();
    let json = serde_json::to_string_pretty(&sum).map_err(|e| Error::Config(e.to_string()))?;
    w.put("summary.json", &json)?;
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate;

    fn tiny_triangles() -> TrainEnv {
        TrainEnv {
            graph: generate(&GraphSpec::new(GraphKind::Cliques { count: 6, size: 3 }, 0)).unwrap(),
            params: crate::env::EnvParams {
                horizon: 3,
                ..crate::env::EnvParams::triangles_experiment()
            },
            init: InitialCondition::CliqueScenarios {
                infected: 3,
                concentrated_cliques: 2,
            },
        }
    }

    #[test]
    fn zero_init_policy_does_not_separate() {
        let env = tiny_triangles();
        let meta = MetaPolicy::zero_init(8, ObservationMode::Local6, 0);
        let (a, b) = scenario_separation(&meta, &env, DepthSchedule::Horizon, 50, 1).unwrap();
        assert_eq!(a, b);
        assert!((a - 1.0 / 3.0).abs() < 0.1, "{a}");
    }

    #[test]
    fn radius_zero_censuses_match() {
        let env = tiny_triangles();
        for seed in 0..5 {
            let (tv0, tv1) = scenario_census_tv(&env, seed).unwrap();
            assert_eq!(tv0, 0.0);
            assert!(tv1 > 0.0);
        }
    }

    #[test]
    fn svg_is_well_formed() {
        let s = line_chart_svg(
            "a<b",
            "x",
            "y",
            &[Series {
                name: "s".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert!(s.contains("<polyline"));
    }

    #[test]
    fn results_round_trip() {
        let mut sum = RunSummary::default();
        sum.results.push(SeedResult {
            seed: 3,
            arm: "gnn".into(),
            final_return: -1.25,
        });
        let back = parse_results_csv(&sum.results_csv(), Path::new("mem")).unwrap();
        assert_eq!(back, sum.results);
    }

    #[test]
    fn empty_seed_list_is_a_validation_error() {
        let cfg = ExperimentConfig::new(ExperimentKind::Truncation, vec![]);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_experiment(&cfg, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn truncation_study_writes_outputs() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Truncation, vec![0]);
        cfg.graph = Some(crate::config::GraphSource::Spec(GraphSpec::new(GraphKind::Cycle { n: 4 }, 0)));
        cfg.truncation.k_list = vec![0, 1, 2];
        let dir = tempfile::tempdir().unwrap();
        let sum = run_experiment(&cfg, dir.path()).unwrap();
        assert!(sum.checks.iter().any(|c| c.name == "gap_non_increasing" && c.passed));
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(crate::dp::parse_sweep_csv(&text, Path::new("sweep.csv")).unwrap().len(), 3);
        assert!(dir.path().join("summary.json").is_file());
    }
}
