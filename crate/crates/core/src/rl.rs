//! Episode collection, score-function policy gradients with reward-to-go,
//! a pooled-readout critic and the training loop.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::{step, EnvParams, InitialCondition, Scenario};
use crate::error::{Error, Result};
use crate::graph::{Decoration, Graph};
use crate::mpnn::{self, Checkpoint, MpnnParams};
use crate::noise::{derive_seed, NoiseStreams};
use crate::policy::{act_all, MetaPolicy};
use crate::autodiff::Tape;

/// Number of message passes used at step `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSchedule {
    /// `T − t` passes at step `t`.
    #[default]
    Horizon,
    Fixed(usize),
}

impl DepthSchedule {
    pub fn passes(self, t: usize, horizon: usize) -> usize {
        match self {
            DepthSchedule::Horizon => horizon - t,
            DepthSchedule::Fixed(k) => k,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    /// Learned value of the pooled feature plus a per-step offset.
    #[default]
    Critic,
    /// Mean reward-to-go of the other episodes in the batch at the same step.
    LeaveOneOut,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes_per_batch: usize,
    pub batches: usize,
    pub learning_rate: f64,
    pub critic_learning_rate: f64,
    pub critic_steps: usize,
    pub optimizer: OptimizerKind,
    pub baseline: Baseline,
    /// Clip range of the surrogate ratio; `None` gives plain REINFORCE.
    pub clip: Option<f64>,
    pub ppo_epochs: usize,
    pub discount: f64,
    pub depth: DepthSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes_per_batch: 16,
            batches: 50,
            learning_rate: 0.05,
            critic_learning_rate: 0.01,
            critic_steps: 1,
            optimizer: OptimizerKind::Sgd,
            baseline: Baseline::Critic,
            clip: None,
            ppo_epochs: 1,
            discount: 1.0,
            depth: DepthSchedule::Horizon,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_batch == 0 {
            return Err(Error::Config("episodes_per_batch must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.critic_learning_rate >= 0.0 && self.critic_learning_rate.is_finite()) {
            return Err(Error::Config("critic_learning_rate must be finite and non-negative".into()));
        }
        if let Some(eps) = self.clip {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::Config(format!("clip must lie in (0, 1), got {eps}")));
            }
            if self.ppo_epochs == 0 {
                return Err(Error::Config("ppo_epochs must be positive".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::Config("discount must lie in [0, 1]".into()));
        }
        if self.baseline == Baseline::LeaveOneOut && self.episodes_per_batch < 2 {
            return Err(Error::Config("leave-one-out baseline needs at least two episodes per batch".into()));
        }
        Ok(())
    }
}

/// Graph, dynamics and initial-state law shared by all episodes.
#[derive(Clone, Debug)]
pub struct TrainEnv {
    pub graph: Graph,
    pub params: EnvParams,
    pub init: InitialCondition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub passes: usize,
    /// Decoration the meta-policy observed.
    pub state: Decoration,
    pub psi: Vec<f64>,
    pub log_density: f64,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrajectory {
    pub seed: u64,
    pub scenario: Option<Scenario>,
    pub graph_tag: String,
    pub steps: Vec<StepRecord>,
    pub final_state: Decoration,
}

impl EpisodeTrajectory {
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.mean_reward).sum()
    }

    /// `G_t = Σ_{k≥t} discount^{k−t} r̄_k`.
    pub fn rewards_to_go(&self, discount: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (t, s) in self.steps.iter().enumerate().rev() {
            acc = s.mean_reward + discount * acc;
            out[t] = acc;
        }
        out
    }
}

/// Seed of episode `episode` in batch `batch`.
pub fn episode_seed(master: u64, batch: usize, episode: usize) -> u64 {
    derive_seed(&[master, batch as u64, episode as u64])
}

pub fn run_episode(meta: &MetaPolicy, env: &TrainEnv, depth: DepthSchedule, seed: u64) -> Result<EpisodeTrajectory> {
    let noise = NoiseStreams::new(seed);
    let (mut deco, scenario) = env.init.sample(&env.graph, &noise)?;
    let horizon = env.params.horizon;
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let passes = depth.passes(t, horizon);
        let s = meta.sample(&env.graph, &deco, passes, &noise, t)?;
        let actions = act_all(&s.psi, &env.graph, &deco, &noise, t);
        let o = step(&env.graph, &deco, &actions, &env.params, &noise, t)?;
        steps.push(StepRecord {
            t,
            passes,
            state: std::mem::replace(&mut deco, o.next),
            psi: s.psi.psi,
            log_density: s.log_density,
            mean_reward: o.mean_reward,
        });
    }
    Ok(EpisodeTrajectory {
        seed,
        scenario,
        graph_tag: env.graph.tag().to_string(),
        steps,
        final_state: deco,
    })
}

pub fn collect_batch(meta: &MetaPolicy, env: &TrainEnv, config: &TrainConfig, batch: usize) -> Result<Vec<EpisodeTrajectory>> {
    (0..config.episodes_per_batch)
        .map(|e| run_episode(meta, env, config.depth, episode_seed(config.seed, batch, e)))
        .collect()
}

/// Value estimate `V(state, t) = MLP(mean Φ) + b_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub mpnn: MpnnParams,
    pub time_bias: Vec<f64>,
}

impl Critic {
    pub fn zero_init(width: usize, horizon: usize, seed: u64) -> Self {
        Critic {
            mpnn: MpnnParams::zero_output(width, 1, seed),
            time_bias: vec![0.0; horizon.max(1)],
        }
    }

    pub fn num_params(&self) -> usize {
        self.mpnn.num_params() + self.time_bias.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut f = self.mpnn.flatten();
        f.extend_from_slice(&self.time_bias);
        f
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let m = self.mpnn.num_params();
        self.mpnn.set_flat(&flat[..m])?;
        self.time_bias.copy_from_slice(&flat[m..]);
        Ok(())
    }

    fn bias(&self, t: usize) -> f64 {
        self.time_bias.get(t).copied().unwrap_or(0.0)
    }

    pub fn value(&self, g: &Graph, deco: &Decoration, passes: usize, t: usize) -> Result<f64> {
        Ok(mpnn::pooled_readout(&self.mpnn, g, deco, passes)?[0] + self.bias(t))
    }

    /// `(V, ∇V)` over the flat critic parameters.
    pub fn value_grad(&self, g: &Graph, deco: &Decoration, passes: usize, t: usize) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let pv = self.mpnn.attach(&mut tape);
        let (_, y) = mpnn::forward_var(&mut tape, &pv, g, deco, passes)?;
        let grads = tape.backward(y)?;
        let mut flat = pv.flat_grad(&tape, &grads);
        let mut tb = vec![0.0; self.time_bias.len()];
        if t < tb.len() {
            tb[t] = 1.0;
        }
        flat.extend(tb);
        Ok((tape.value(y).get(0, 0) + self.bias(t), flat))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = self.mpnn.to_checkpoint();
        c.header.attrs.insert("role".into(), "critic".into());
        c.push_block("time_bias", 1, self.time_bias.len(), &self.time_bias);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let tb = c
            .block("time_bias")
            .ok_or_else(|| Error::Config("critic checkpoint lacks time_bias".into()))?;
        Ok(Critic {
            mpnn: MpnnParams::from_checkpoint(c)?,
            time_bias: tb.to_vec(),
        })
    }
}

/// Plain gradient steps or Adam moments.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, len: usize) -> Self {
        Optimizer {
            kind,
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    /// Moves `params` along `+grad` (ascent).
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => params.iter_mut().zip(grad).for_each(|(p, g)| *p += self.lr * g),
            OptimizerKind::Adam => {
                self.steps += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.steps);
                let c2 = 1.0 - Self::BETA2.powi(self.steps);
                for k in 0..params.len() {
                    self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
                    self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
                    params[k] += self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Baseline value for every (episode, step).
pub fn baselines(batch: &[EpisodeTrajectory], env: &TrainEnv, kind: Baseline, critic: Option<&Critic>, discount: f64) -> Result<Vec<Vec<f64>>> {
    let rtg: Vec<Vec<f64>> = batch.iter().map(|e| e.rewards_to_go(discount)).collect();
    match (kind, critic) {
        (Baseline::Critic, Some(c)) => batch
            .iter()
            .map(|e| {
                e.steps
                    .iter()
                    .map(|s| c.value(&env.graph, &s.state, s.passes, s.t))
                    .collect()
            })
            .collect(),
        (Baseline::LeaveOneOut, _) if batch.len() > 1 => {
            let m = batch.len() as f64;
            let horizon = rtg.iter().map(Vec::len).max().unwrap_or(0);
            let sums: Vec<f64> = (0..horizon)
                .map(|t| rtg.iter().filter_map(|g| g.get(t)).sum())
                .collect();
            Ok(rtg
                .iter()
                .map(|g| g.iter().enumerate().map(|(t, &x)| (sums[t] - x) / (m - 1.0)).collect())
                .collect())
        }
        _ => Ok(rtg.iter().map(|g| vec![0.0; g.len()]).collect()),
    }
}

/// `(1/M) Σ_episodes Σ_t (G_t − b_t) ∇_θ log π(ψ_t | state_t)` and the
/// matching surrogate value `(1/M) Σ (G_t − b_t) log π`.
pub fn reinforce_gradient(
    meta: &MetaPolicy,
    env: &TrainEnv,
    batch: &[EpisodeTrajectory],
    baseline: &[Vec<f64>],
    discount: f64,
) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let mut grad = vec![0.0; meta.mpnn.num_params()];
    let mut obj = 0.0;
    for (e, b) in batch.iter().zip(baseline) {
        let rtg = e.rewards_to_go(discount);
        for (s, (g_t, b_t)) in e.steps.iter().zip(rtg.iter().zip(b)) {
            let adv = g_t - b_t;
            if adv == 0.0 {
                continue;
            }
            let (lp, gr) = meta.log_density_grad(&env.graph, &s.state, s.passes, &s.psi)?;
            obj += adv * lp;
            grad.iter_mut().zip(&gr).for_each(|(a, g)| *a += adv * g);
        }
    }
    let m = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok((grad, obj / m))
}

/// Clipped-ratio surrogate gradient against the log-densities stored at
/// collection time.
pub fn clipped_gradient(
    meta: &MetaPolicy,
    env: &TrainEnv,
    batch: &[EpisodeTrajectory],
    baseline: &[Vec<f64>],
    discount: f64,
    clip: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut grad = vec![0.0; meta.mpnn.num_params()];
    let mut obj = 0.0;
    for (e, b) in batch.iter().zip(baseline) {
        let rtg = e.rewards_to_go(discount);
        for (s, (g_t, b_t)) in e.steps.iter().zip(rtg.iter().zip(b)) {
            let adv = g_t - b_t;
            let (lp, gr) = meta.log_density_grad(&env.graph, &s.state, s.passes, &s.psi)?;
            let ratio = (lp - s.log_density).exp();
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
            obj += (ratio * adv).min(clipped * adv);
            let active = !((adv > 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip));
            if active {
                grad.iter_mut().zip(&gr).for_each(|(a, g)| *a += ratio * adv * g);
            }
        }
    }
    let m = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok((grad, obj / m))
}

/// One gradient step on `mean (V − G_t)²` over the batch; returns the loss
/// before the step.
pub fn critic_update(critic: &mut Critic, opt: &mut Optimizer, env: &TrainEnv, batch: &[EpisodeTrajectory], discount: f64) -> Result<f64> {
    let mut grad = vec![0.0; critic.num_params()];
    let mut loss = 0.0;
    let mut count = 0usize;
    for e in batch {
        for (s, g_t) in e.steps.iter().zip(e.rewards_to_go(discount)) {
            let (v, gv) = critic.value_grad(&env.graph, &s.state, s.passes, s.t)?;
            let err = v - g_t;
            loss += err * err;
            grad.iter_mut().zip(&gv).for_each(|(a, g)| *a -= 2.0 * err * g);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    grad.iter_mut().for_each(|g| *g /= count as f64);
    let mut flat = critic.flatten();
    opt.ascend(&mut flat, &grad);
    critic.set_flat(&flat)?;
    Ok(loss / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub batch: usize,
    pub mean_return: f64,
    pub actor_obj: f64,
    pub critic_loss: f64,
    pub wallclock_s: f64,
}

pub const CURVE_HEADER: &str = "batch,mean_return,actor_obj,critic_loss,wallclock_s";

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e},{:.6}",
            r.batch, r.mean_return, r.actor_obj, r.critic_loss, r.wallclock_s
        );
    }
    out
}

pub fn parse_curve_csv(text: &str, origin: &Path) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CURVE_HEADER) {
        return Err(Error::parse(origin, "missing learning-curve header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 5 {
                return Err(Error::parse(origin, format!("bad curve row {line:?}")));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(origin, format!("bad float {s:?}")));
            Ok(CurveRow {
                batch: c[0].parse().map_err(|_| Error::parse(origin, "bad batch index"))?,
                mean_return: f(c[1])?,
                actor_obj: f(c[2])?,
                critic_loss: f(c[3])?,
                wallclock_s: f(c[4])?,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub meta: MetaPolicy,
    pub critic: Option<Critic>,
    pub curve: Vec<CurveRow>,
}

fn check_finite(what: &str, xs: &[f64], batch: usize) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::Numerical(format!("{what} entry {k} is {} at batch {batch}", xs[k]))),
        None => Ok(()),
    }
}

/// Runs `config.batches` collect-and-update iterations.
pub fn train(mut meta: MetaPolicy, env: &TrainEnv, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    env.params.validate()?;
    let start = Instant::now();
    let mut critic = (config.baseline == Baseline::Critic)
        .then(|| Critic::zero_init(meta.mpnn.width, env.params.horizon, derive_seed(&[config.seed, 0xC817])));
    let mut actor_opt = Optimizer::new(config.optimizer, config.learning_rate, meta.mpnn.num_params());
    let mut critic_opt = critic
        .as_ref()
        .map(|c| Optimizer::new(config.optimizer, config.critic_learning_rate, c.num_params()));
    let mut curve = Vec::with_capacity(config.batches);
    for b in 0..config.batches {
        let batch = collect_batch(&meta, env, config, b)?;
        let mean_return = batch.iter().map(EpisodeTrajectory::total_return).sum::<f64>() / batch.len() as f64;
        if !mean_return.is_finite() {
            return Err(Error::Numerical(format!("non-finite return at batch {b}")));
        }
        let base = baselines(&batch, env, config.baseline, critic.as_ref(), config.discount)?;
        let mut actor_obj = 0.0;
        let epochs = if config.clip.is_some() { config.ppo_epochs } else { 1 };
        for _ in 0..epochs {
            let (grad, obj) = match config.clip {
                Some(eps) => clipped_gradient(&meta, env, &batch, &base, config.discount, eps)?,
                None => reinforce_gradient(&meta, env, &batch, &base, config.discount)?,
            };
            check_finite("actor gradient", &grad, b)?;
            actor_obj = obj;
            let mut flat = meta.mpnn.flatten();
            actor_opt.ascend(&mut flat, &grad);
            check_finite("actor parameter", &flat, b)?;
            meta.mpnn.set_flat(&flat)?;
        }
        let mut critic_loss = 0.0;
        if let (Some(c), Some(opt)) = (critic.as_mut(), critic_opt.as_mut()) {
            for k in 0..config.critic_steps.max(1) {
                let loss = critic_update(c, opt, env, &batch, config.discount)?;
                if k == 0 {
                    critic_loss = loss;
                }
            }
            check_finite("critic parameter", &c.flatten(), b)?;
        }
        curve.push(CurveRow {
            batch: b,
            mean_return,
            actor_obj,
            critic_loss,
            wallclock_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { meta, critic, curve })
}

/// Returns of the stochastic meta-policy on the given episode seeds.
pub fn evaluate(meta: &MetaPolicy, env: &TrainEnv, depth: DepthSchedule, seeds: &[u64]) -> Result<Vec<f64>> {
    seeds
        .iter()
        .map(|&s| run_episode(meta, env, depth, s).map(|e| e.total_return()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Penalty;
    use crate::graph::{generate, GraphKind, GraphSpec};
    use crate::policy::ObservationMode;

    fn triangles_env(count: usize, horizon: usize) -> TrainEnv {
        let graph = generate(&GraphSpec::new(GraphKind::Cliques { count, size: 3 }, 0)).unwrap();
        let params = EnvParams {
            horizon,
            ..EnvParams::triangles_experiment()
        };
        TrainEnv {
            graph,
            params,
            init: if count >= 5 {
                InitialCondition::triangles()
            } else {
                InitialCondition::CliqueScenarios {
                    infected: 2,
                    concentrated_cliques: 1,
                }
            },
        }
    }

    fn meta(seed: u64) -> MetaPolicy {
        MetaPolicy::new(MpnnParams::random(6, 18, seed), 3.0, ObservationMode::Local6).unwrap()
    }

    #[test]
    fn zero_horizon_episode_is_empty() {
        let mut env = triangles_env(20, 5);
        env.params.horizon = 0;
        let e = run_episode(&meta(1), &env, DepthSchedule::Horizon, 3).unwrap();
        assert!(e.steps.is_empty());
        assert_eq!(e.total_return(), 0.0);
    }

    #[test]
    fn episodes_are_reproducible_and_follow_depth_schedule() {
        let env = triangles_env(20, 5);
        let a = run_episode(&meta(1), &env, DepthSchedule::Horizon, 42).unwrap();
        let b = run_episode(&meta(1), &env, DepthSchedule::Horizon, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 5);
        for s in &a.steps {
            assert_eq!(s.passes, 5 - s.t);
        }
        let c = run_episode(&meta(1), &env, DepthSchedule::Fixed(0), 42).unwrap();
        assert!(c.steps.iter().all(|s| s.passes == 0));
    }

    #[test]
    fn rewards_to_go_are_causal() {
        let env = triangles_env(20, 5);
        let mut e = run_episode(&meta(2), &env, DepthSchedule::Horizon, 9).unwrap();
        for (t, s) in e.steps.iter_mut().enumerate() {
            s.mean_reward = t as f64 + 1.0;
        }
        assert_eq!(e.rewards_to_go(1.0), vec![15.0, 14.0, 12.0, 9.0, 5.0]);
        let before = e.rewards_to_go(1.0)[3];
        e.steps[0].mean_reward = -1000.0;
        e.steps[2].mean_reward = 77.0;
        assert_eq!(e.rewards_to_go(1.0)[3], before);
        assert_eq!(e.rewards_to_go(0.5)[3], 4.0 + 0.5 * 5.0);
    }

    #[test]
    fn zero_rewards_give_zero_gradient_and_scaling_is_linear() {
        let env = triangles_env(4, 3);
        let m = meta(3);
        let cfg = TrainConfig {
            episodes_per_batch: 4,
            ..TrainConfig::default()
        };
        let mut batch = collect_batch(&m, &env, &cfg, 0).unwrap();
        for e in &mut batch {
            for (t, s) in e.steps.iter_mut().enumerate() {
                s.mean_reward = -(t as f64) - 0.5;
            }
        }
        let zero = baselines(&batch, &env, Baseline::None, None, 1.0).unwrap();
        let (g1, _) = reinforce_gradient(&m, &env, &batch, &zero, 1.0).unwrap();
        let mut scaled = batch.clone();
        scaled.iter_mut().flat_map(|e| e.steps.iter_mut()).for_each(|s| s.mean_reward *= 3.0);
        let (g3, _) = reinforce_gradient(&m, &env, &scaled, &zero, 1.0).unwrap();
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(g1.iter().any(|&x| x != 0.0));
        scaled.iter_mut().flat_map(|e| e.steps.iter_mut()).for_each(|s| s.mean_reward = 0.0);
        let (g0, _) = reinforce_gradient(&m, &env, &scaled, &zero, 1.0).unwrap();
        assert!(g0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_critic_on_zero_returns_has_no_loss_or_update() {
        let env = triangles_env(4, 3);
        let m = meta(4);
        let cfg = TrainConfig {
            episodes_per_batch: 3,
            ..TrainConfig::default()
        };
        let mut batch = collect_batch(&m, &env, &cfg, 0).unwrap();
        batch.iter_mut().flat_map(|e| e.steps.iter_mut()).for_each(|s| s.mean_reward = 0.0);
        let mut critic = Critic::zero_init(6, 3, 1);
        let before = critic.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, critic.num_params());
        let loss = critic_update(&mut critic, &mut opt, &env, &batch, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(critic, before);
    }

    #[test]
    fn critic_fits_constant_returns() {
        let env = triangles_env(4, 3);
        let m = meta(5);
        let cfg = TrainConfig {
            episodes_per_batch: 4,
            ..TrainConfig::default()
        };
        let mut batch = collect_batch(&m, &env, &cfg, 0).unwrap();
        for e in &mut batch {
            let n = e.steps.len();
            for (t, s) in e.steps.iter_mut().enumerate() {
                s.mean_reward = if t + 1 == n { -2.5 } else { 0.0 };
            }
        }
        let mut critic = Critic::zero_init(6, 3, 2);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.05, critic.num_params());
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            loss = critic_update(&mut critic, &mut opt, &env, &batch, 1.0).unwrap();
        }
        assert!(loss < 1e-4, "loss {loss}");
        let s = &batch[0].steps[1];
        assert!((critic.value(&env.graph, &s.state, s.passes, 1).unwrap() + 2.5).abs() < 1e-2);
    }

    #[test]
    fn zero_step_size_gives_flat_parameters() {
        let env = triangles_env(4, 2);
        let m = meta(6);
        let cfg = TrainConfig {
            episodes_per_batch: 2,
            batches: 3,
            learning_rate: 0.0,
            optimizer: OptimizerKind::Sgd,
            baseline: Baseline::None,
            ..TrainConfig::default()
        };
        let out = train(m.clone(), &env, &cfg).unwrap();
        assert_eq!(out.meta, m);
        assert_eq!(out.curve.len(), 3);
    }

    #[test]
    fn clipped_update_runs_and_curve_round_trips() {
        let env = triangles_env(4, 2);
        let cfg = TrainConfig {
            episodes_per_batch: 3,
            batches: 2,
            clip: Some(0.2),
            ppo_epochs: 2,
            ..TrainConfig::default()
        };
        let out = train(meta(7), &env, &cfg).unwrap();
        let csv = curve_to_csv(&out.curve);
        let back = parse_curve_csv(&csv, Path::new("mem")).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].mean_return, out.curve[1].mean_return);
        assert!(TrainConfig { clip: Some(1.5), ..cfg }.validate().is_err());
    }

    #[test]
    fn nan_parameters_abort() {
        let env = triangles_env(4, 2);
        let mut m = meta(8);
        let mut flat = m.mpnn.flatten();
        flat[0] = f64::NAN;
        m.mpnn.set_flat(&flat).unwrap();
        let cfg = TrainConfig {
            episodes_per_batch: 2,
            batches: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(train(m, &env, &cfg), Err(Error::Numerical(_))));
    }

    #[test]
    fn penalty_variant_is_respected() {
        let env = triangles_env(20, 5);
        assert!(matches!(env.params.penalty, Penalty::CliquesWithTwoInfected(_)));
    }
}
