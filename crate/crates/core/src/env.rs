//! The finite N-agent epidemic system: SIR dynamics with vaccination and
//! isolation, per-agent rewards and synchronous stepping.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Decoration, Graph, NodeState};
use crate::noise::{NoiseStreams, StreamKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    NoOp = 0,
    Vaccinate = 1,
    Isolate = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::NoOp, Action::Vaccinate, Action::Isolate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }
}

/// Global penalty predicate, evaluated on pre-step states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    /// Fraction of infected nodes strictly above `tau`.
    InfectionRateAbove(f64),
    /// Fraction of connected components (cliques) holding at least two
    /// infected nodes is at least `tau`.
    CliquesWithTwoInfected(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub beta: f64,
    pub gamma: f64,
    pub f_iso: f64,
    pub c_i: f64,
    pub c_v: f64,
    pub c_q: f64,
    pub c_global: f64,
    pub penalty: Penalty,
    pub horizon: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self::grid_experiment()
    }
}

impl EnvParams {
    /// Lattice outbreak control setup.
    pub fn grid_experiment() -> Self {
        EnvParams {
            beta: 0.25,
            gamma: 0.2,
            f_iso: 0.9,
            c_i: 0.5,
            c_v: 1.0,
            c_q: 0.2,
            c_global: 100.0,
            penalty: Penalty::None,
            horizon: 10,
        }
    }

    /// Disjoint-triangles setup with the clique penalty.
    pub fn triangles_experiment() -> Self {
        EnvParams {
            beta: 1.0,
            gamma: 0.0,
            f_iso: 0.0,
            c_i: 0.0,
            c_v: 50.0,
            c_q: 0.2,
            c_global: 100.0,
            penalty: Penalty::CliquesWithTwoInfected(0.25),
            horizon: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {x} is not a probability")))
            }
        };
        prob("beta", self.beta)?;
        prob("gamma", self.gamma)?;
        prob("f_iso", self.f_iso)?;
        for (name, c) in [("c_i", self.c_i), ("c_v", self.c_v), ("c_q", self.c_q), ("c_global", self.c_global)] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {c} must be a finite non-negative cost")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if let Penalty::InfectionRateAbove(tau) | Penalty::CliquesWithTwoInfected(tau) = self.penalty {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::InvalidParameter(format!("tau = {tau} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Probability that one infected neighbor transmits to a node taking `action`.
    pub fn transmission(&self, action: Action) -> f64 {
        let iso = if action == Action::Isolate { self.f_iso } else { 0.0 };
        self.beta * (1.0 - iso)
    }
}

/// Own state as seen by the local policy: recovered and vaccinated collapse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OwnClass {
    S = 0,
    I = 1,
    Removed = 2,
}

impl From<NodeState> for OwnClass {
    fn from(s: NodeState) -> Self {
        match s {
            NodeState::Susceptible => OwnClass::S,
            NodeState::Infected => OwnClass::I,
            NodeState::Recovered | NodeState::Vaccinated => OwnClass::Removed,
        }
    }
}

/// One of the six functional local states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocalObservation {
    pub own: OwnClass,
    pub infected_neighbor: bool,
}

impl LocalObservation {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        2 * self.own as usize + self.infected_neighbor as usize
    }

    pub fn from_index(i: usize) -> Self {
        let own = [OwnClass::S, OwnClass::I, OwnClass::Removed][i / 2];
        LocalObservation {
            own,
            infected_neighbor: i % 2 == 1,
        }
    }

    pub fn all() -> impl Iterator<Item = LocalObservation> {
        (0..Self::COUNT).map(Self::from_index)
    }

    pub fn label(self) -> String {
        let own = match self.own {
            OwnClass::S => "S",
            OwnClass::I => "I",
            OwnClass::Removed => "RV",
        };
        format!("{own}{}", if self.infected_neighbor { "+i" } else { "" })
    }
}

pub fn observe(g: &Graph, deco: &Decoration, i: usize) -> LocalObservation {
    LocalObservation {
        own: deco.0[i].into(),
        infected_neighbor: g.neighbors(i).iter().any(|&j| deco.0[j] == NodeState::Infected),
    }
}

/// Probability that susceptible node `i` becomes infected this step.
pub fn infection_probability(g: &Graph, deco: &Decoration, i: usize, action: Action, params: &EnvParams) -> f64 {
    let per_edge = params.transmission(action);
    let mut escape = 1.0;
    for &j in g.neighbors(i) {
        if deco.0[j] == NodeState::Infected {
            escape *= 1.0 - per_edge;
        }
    }
    1.0 - escape
}

/// Whether the global penalty applies to the given pre-step states.
pub fn penalty_active(g: &Graph, deco: &Decoration, params: &EnvParams) -> bool {
    match params.penalty {
        Penalty::None => false,
        Penalty::InfectionRateAbove(tau) => {
            deco.count(NodeState::Infected) as f64 / deco.len() as f64 > tau
        }
        Penalty::CliquesWithTwoInfected(tau) => clique_fraction_with_two_infected(&g.components(), deco) >= tau,
    }
}

/// Fraction of components containing at least two infected nodes.
pub fn clique_fraction_with_two_infected(components: &[usize], deco: &Decoration) -> f64 {
    let count = components.iter().copied().max().map_or(0, |m| m + 1);
    if count == 0 {
        return 0.0;
    }
    let mut infected = vec![0usize; count];
    for (v, &c) in components.iter().enumerate() {
        if deco.0[v] == NodeState::Infected {
            infected[c] += 1;
        }
    }
    infected.iter().filter(|&&x| x >= 2).count() as f64 / count as f64
}

/// Reward of one agent, excluding the global penalty term.
pub fn local_reward(state: NodeState, action: Action, params: &EnvParams) -> f64 {
    let mut cost = 0.0;
    if state == NodeState::Infected {
        cost += params.c_i;
    }
    if action == Action::Vaccinate && state == NodeState::Susceptible {
        cost += params.c_v;
    }
    if action == Action::Isolate {
        cost += params.c_q;
    }
    -cost
}

pub fn agent_rewards(g: &Graph, deco: &Decoration, actions: &[Action], params: &EnvParams) -> Vec<f64> {
    let global = if penalty_active(g, deco, params) { params.c_global } else { 0.0 };
    deco.0
        .iter()
        .zip(actions)
        .map(|(&s, &a)| local_reward(s, a, params) - global)
        .collect()
}

/// Mean per-agent reward, computed from integer counts so that it does not
/// depend on node order.
pub fn mean_reward(g: &Graph, deco: &Decoration, actions: &[Action], params: &EnvParams) -> f64 {
    let counts = CostCounts::tally(deco, actions);
    counts.mean_reward(deco.len(), penalty_active(g, deco, params), params)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostCounts {
    pub infected: usize,
    pub vaccinations: usize,
    pub isolations: usize,
}

impl CostCounts {
    pub fn tally(deco: &Decoration, actions: &[Action]) -> Self {
        let mut c = CostCounts::default();
        for (&s, &a) in deco.0.iter().zip(actions) {
            c.infected += (s == NodeState::Infected) as usize;
            c.vaccinations += (a == Action::Vaccinate && s == NodeState::Susceptible) as usize;
            c.isolations += (a == Action::Isolate) as usize;
        }
        c
    }

    pub fn mean_reward(&self, n: usize, penalty: bool, params: &EnvParams) -> f64 {
        let local = params.c_i * self.infected as f64 + params.c_v * self.vaccinations as f64 + params.c_q * self.isolations as f64;
        let global = if penalty { params.c_global } else { 0.0 };
        -(local / n as f64 + global)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: Decoration,
    pub rewards: Vec<f64>,
    pub mean_reward: f64,
    pub actions: Vec<Action>,
}

/// Advances every node synchronously. Vaccination takes effect first; the
/// remaining susceptible nodes are infected by the pre-step infected set;
/// infected nodes recover. Rewards use the pre-step states.
pub fn step(
    g: &Graph,
    deco: &Decoration,
    actions: &[Action],
    params: &EnvParams,
    noise: &NoiseStreams,
    t: usize,
) -> Result<StepOutcome> {
    deco.check_len(g)?;
    if actions.len() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            got: actions.len(),
        });
    }
    let rewards = agent_rewards(g, deco, actions, params);
    let mean = mean_reward(g, deco, actions, params);
    let next = transition(g, deco, actions, params, noise, t);
    Ok(StepOutcome {
        next,
        rewards,
        mean_reward: mean,
        actions: actions.to_vec(),
    })
}

fn transition(g: &Graph, deco: &Decoration, actions: &[Action], params: &EnvParams, noise: &NoiseStreams, t: usize) -> Decoration {
    let next = (0..g.node_count())
        .map(|i| match deco.0[i] {
            NodeState::Susceptible => {
                if actions[i] == Action::Vaccinate {
                    return NodeState::Vaccinated;
                }
                let p = infection_probability(g, deco, i, actions[i], params);
                if p == 0.0 {
                    return NodeState::Susceptible;
                }
                let (u, _) = noise.draw_uniform_pair(i, t, StreamKind::Transition);
                if u < p {
                    NodeState::Infected
                } else {
                    NodeState::Susceptible
                }
            }
            NodeState::Infected => {
                if params.gamma == 0.0 {
                    return NodeState::Infected;
                }
                let (_, u) = noise.draw_uniform_pair(i, t, StreamKind::Transition);
                if u < params.gamma {
                    NodeState::Recovered
                } else {
                    NodeState::Infected
                }
            }
            s => s,
        })
        .collect();
    Decoration(next)
}

/// A local decision rule shared by all agents.
pub trait LocalPolicy {
    /// Action probabilities in `NoOp, Vaccinate, Isolate` order.
    fn action_probs(&self, g: &Graph, deco: &Decoration, i: usize, t: usize) -> [f64; 3];
}

impl<F> LocalPolicy for F
where
    F: Fn(&Graph, &Decoration, usize, usize) -> [f64; 3],
{
    fn action_probs(&self, g: &Graph, deco: &Decoration, i: usize, t: usize) -> [f64; 3] {
        self(g, deco, i, t)
    }
}

/// Always plays the same action.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(pub Action);

impl LocalPolicy for ConstantPolicy {
    fn action_probs(&self, _: &Graph, _: &Decoration, _: usize, _: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[self.0.index()] = 1.0;
        p
    }
}

/// Inverse-CDF sample from a 3-way distribution.
pub fn sample_action(probs: &[f64; 3], u: f64) -> Action {
    if u < probs[0] {
        Action::NoOp
    } else if u < probs[0] + probs[1] {
        Action::Vaccinate
    } else {
        Action::Isolate
    }
}

/// Every agent draws its action from its own `(node, t, action)` stream.
pub fn act_with(policy: &dyn LocalPolicy, g: &Graph, deco: &Decoration, noise: &NoiseStreams, t: usize) -> Vec<Action> {
    (0..g.node_count())
        .map(|i| {
            let probs = policy.action_probs(g, deco, i, t);
            sample_action(&probs, noise.draw_uniform(i, t, StreamKind::Action))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `states[t]` for `t = 0..=T`.
    pub states: Vec<Decoration>,
    pub actions: Vec<Vec<Action>>,
    pub rewards: Vec<Vec<f64>>,
    pub mean_rewards: Vec<f64>,
}

impl Rollout {
    pub fn total_return(&self) -> f64 {
        self.mean_rewards.iter().sum()
    }

    /// CSV with columns `t,mean_reward,n_S,n_I,n_R,n_V,n_vaccinate,n_isolate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_reward,n_S,n_I,n_R,n_V,n_vaccinate,n_isolate\n");
        for (t, r) in self.mean_rewards.iter().enumerate() {
            let c = self.states[t].counts();
            let nv = self.actions[t].iter().filter(|&&a| a == Action::Vaccinate).count();
            let ni = self.actions[t].iter().filter(|&&a| a == Action::Isolate).count();
            let _ = writeln!(out, "{t},{r:.17e},{},{},{},{},{nv},{ni}", c[0], c[1], c[2], c[3]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub mean_reward: f64,
    pub counts: [usize; 4],
    pub n_vaccinate: usize,
    pub n_isolate: usize,
}

pub fn parse_trajectory_csv(text: &str, origin: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,mean_reward,n_S,n_I,n_R,n_V,n_vaccinate,n_isolate") {
        return Err(Error::parse(origin, "missing trajectory header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(Error::parse(origin, format!("bad trajectory row {line:?}")));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(origin, format!("bad integer {s:?}")));
            Ok(TrajectoryRow {
                t: int(cols[0])?,
                mean_reward: cols[1].parse().map_err(|_| Error::parse(origin, "bad reward"))?,
                counts: [int(cols[2])?, int(cols[3])?, int(cols[4])?, int(cols[5])?],
                n_vaccinate: int(cols[6])?,
                n_isolate: int(cols[7])?,
            })
        })
        .collect()
}

/// Runs `params.horizon` steps (or `horizon` when given) under a fixed local policy.
pub fn rollout(
    g: &Graph,
    deco0: &Decoration,
    policy: &dyn LocalPolicy,
    params: &EnvParams,
    noise: &NoiseStreams,
    horizon: Option<usize>,
) -> Result<Rollout> {
    deco0.check_len(g)?;
    let horizon = horizon.unwrap_or(params.horizon);
    let mut out = Rollout {
        states: vec![deco0.clone()],
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        mean_rewards: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let deco = out.states.last().unwrap();
        let actions = act_with(policy, g, deco, noise, t);
        let o = step(g, deco, &actions, params, noise, t)?;
        out.states.push(o.next);
        out.actions.push(o.actions);
        out.rewards.push(o.rewards);
        out.mean_rewards.push(o.mean_reward);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Scattered,
    Concentrated,
}

/// How episodes start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `count` distinct nodes chosen uniformly start infected.
    RandomInfected { count: usize },
    /// With probability ½ each: `infected` nodes in distinct cliques, or the
    /// same number packed into `concentrated_cliques` cliques (one clique
    /// takes the surplus, the others one each).
    CliqueScenarios { infected: usize, concentrated_cliques: usize },
    Fixed { states: String },
}

impl InitialCondition {
    pub fn triangles() -> Self {
        InitialCondition::CliqueScenarios {
            infected: 5,
            concentrated_cliques: 4,
        }
    }

    pub fn sample(&self, g: &Graph, noise: &NoiseStreams) -> Result<(Decoration, Option<Scenario>)> {
        let n = g.node_count();
        let mut rng = noise.stream(0, 0, StreamKind::Init);
        match self {
            InitialCondition::RandomInfected { count } => {
                if *count > n {
                    return Err(Error::InvalidParameter(format!("{count} infected nodes on a {n}-node graph")));
                }
                let mut ids: Vec<usize> = (0..n).collect();
                ids.shuffle(&mut rng);
                let mut deco = Decoration::uniform(n, NodeState::Susceptible);
                for &v in &ids[..*count] {
                    deco.0[v] = NodeState::Infected;
                }
                Ok((deco, None))
            }
            InitialCondition::CliqueScenarios {
                infected,
                concentrated_cliques,
            } => {
                let scenario = if rng.random::<f64>() < 0.5 {
                    Scenario::Scattered
                } else {
                    Scenario::Concentrated
                };
                let deco = clique_scenario(g, *infected, *concentrated_cliques, scenario, &mut rng)?;
                Ok((deco, Some(scenario)))
            }
            InitialCondition::Fixed { states } => {
                let deco = Decoration::parse(states)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad state string {states:?}")))?;
                deco.check_len(g)?;
                Ok((deco, None))
            }
        }
    }
}

/// Places infections over cliques for one scenario; `rng` picks which cliques
/// and which members.
pub fn clique_scenario<R: Rng>(
    g: &Graph,
    infected: usize,
    concentrated_cliques: usize,
    scenario: Scenario,
    rng: &mut R,
) -> Result<Decoration> {
    let comps = g.components();
    let count = comps.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); count];
    for (v, &c) in comps.iter().enumerate() {
        members[c].push(v);
    }
    let per_clique: Vec<usize> = match scenario {
        Scenario::Scattered => vec![1; infected],
        Scenario::Concentrated => {
            if concentrated_cliques == 0 || concentrated_cliques > infected {
                return Err(Error::InvalidParameter("concentrated_cliques must lie in 1..=infected".into()));
            }
            let mut v = vec![1; concentrated_cliques];
            v[0] += infected - concentrated_cliques;
            v
        }
    };
    if per_clique.len() > count {
        return Err(Error::InvalidParameter(format!("need {} cliques, graph has {count}", per_clique.len())));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let mut deco = Decoration::uniform(g.node_count(), NodeState::Susceptible);
    for (&c, &k) in order.iter().zip(&per_clique) {
        let mut m = members[c].clone();
        if k > m.len() {
            return Err(Error::InvalidParameter(format!("clique of size {} cannot hold {k} infected", m.len())));
        }
        m.shuffle(rng);
        for &v in &m[..k] {
            deco.0[v] = NodeState::Infected;
        }
    }
    Ok(deco)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphKind, GraphSpec};

    fn triangle() -> Graph {
        generate(&GraphSpec::new(GraphKind::Cliques { count: 1, size: 3 }, 0)).unwrap()
    }

    fn quiet(params: EnvParams) -> EnvParams {
        EnvParams {
            penalty: Penalty::None,
            ..params
        }
    }

    #[test]
    fn observations() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 3 }, 0)).unwrap();
        let iso = Graph::from_edges(1, &[], "iso").unwrap();
        assert_eq!(
            observe(&iso, &Decoration::parse("S").unwrap(), 0),
            LocalObservation { own: OwnClass::S, infected_neighbor: false }
        );
        let deco = Decoration::parse("RSV").unwrap();
        assert_eq!(
            observe(&g, &deco, 1),
            LocalObservation { own: OwnClass::S, infected_neighbor: false }
        );
        let deco = Decoration::parse("SIV").unwrap();
        assert_eq!(observe(&g, &deco, 0), LocalObservation { own: OwnClass::S, infected_neighbor: true });
        assert_eq!(
            observe(&g, &deco, 2),
            LocalObservation { own: OwnClass::Removed, infected_neighbor: true }
        );
        for i in 0..6 {
            assert_eq!(LocalObservation::from_index(i).index(), i);
        }
    }

    #[test]
    fn certain_infection_on_triangle() {
        let g = triangle();
        let params = EnvParams {
            beta: 1.0,
            gamma: 0.0,
            ..quiet(EnvParams::triangles_experiment())
        };
        let deco = Decoration::parse("ISS").unwrap();
        let o = step(&g, &deco, &[Action::NoOp; 3], &params, &NoiseStreams::new(1), 0).unwrap();
        assert_eq!(o.next, Decoration::parse("III").unwrap());

        let acts = [Action::NoOp, Action::Vaccinate, Action::Vaccinate];
        let o = step(&g, &deco, &acts, &params, &NoiseStreams::new(1), 0).unwrap();
        assert_eq!(o.next, Decoration::parse("IVV").unwrap());
        assert_eq!(o.rewards, vec![-0.0, -50.0, -50.0]);
        assert!((o.mean_reward + 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let g = triangle();
        let r = step(&g, &Decoration::parse("ISS").unwrap(), &[Action::NoOp; 2], &EnvParams::default(), &NoiseStreams::new(0), 0);
        assert!(matches!(r, Err(Error::DimensionMismatch { expected: 3, got: 2 })));
    }

    #[test]
    fn infection_probability_matches_monte_carlo() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 3 }, 0)).unwrap();
        let deco = Decoration::parse("ISI").unwrap();
        let params = EnvParams {
            beta: 0.25,
            gamma: 0.0,
            ..quiet(EnvParams::grid_experiment())
        };
        let p = infection_probability(&g, &deco, 1, Action::NoOp, &params);
        assert!((p - 0.4375).abs() < 1e-15);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|&s| {
                let o = step(&g, &deco, &[Action::NoOp; 3], &params, &NoiseStreams::new(s), 0).unwrap();
                o.next.0[1] == NodeState::Infected
            })
            .count();
        let freq = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p}");
        let iso = infection_probability(&g, &deco, 1, Action::Isolate, &params);
        assert!((iso - (1.0 - (1.0 - 0.025f64).powi(2))).abs() < 1e-15);
    }

    #[test]
    fn mean_reward_examples() {
        let g = generate(&GraphSpec::new(GraphKind::Cliques { count: 20, size: 3 }, 0)).unwrap();
        let params = EnvParams::triangles_experiment();
        let all_s = Decoration::uniform(60, NodeState::Susceptible);
        assert_eq!(mean_reward(&g, &all_s, &[Action::NoOp; 60], &params), 0.0);

        let mut scattered = all_s.clone();
        for c in 0..5 {
            scattered.0[3 * c] = NodeState::Infected;
        }
        assert_eq!(mean_reward(&g, &scattered, &[Action::NoOp; 60], &params), 0.0);

        let mut six = all_s.clone();
        for c in 0..6 {
            six.0[3 * c] = NodeState::Infected;
            six.0[3 * c + 1] = NodeState::Infected;
        }
        assert_eq!(mean_reward(&g, &six, &[Action::NoOp; 60], &params), -100.0);
        let rewards = agent_rewards(&g, &six, &[Action::NoOp; 60], &params);
        assert!(rewards.iter().all(|&r| r == -100.0));
    }

    #[test]
    fn mean_reward_is_average_of_agent_rewards() {
        let g = generate(&GraphSpec::new(GraphKind::Grid { width: 4, height: 4 }, 0)).unwrap();
        let params = EnvParams {
            penalty: Penalty::InfectionRateAbove(0.1),
            ..EnvParams::grid_experiment()
        };
        let deco = Decoration::parse("SIRVSSIISSVRSSSI").unwrap();
        let actions: Vec<Action> = (0..16).map(|i| Action::from_index(i % 3)).collect();
        let r = agent_rewards(&g, &deco, &actions, &params);
        let avg = r.iter().sum::<f64>() / 16.0;
        assert!((mean_reward(&g, &deco, &actions, &params) - avg).abs() < 1e-12);
    }

    #[test]
    fn deterministic_two_step_rollout() {
        let g = triangle();
        let params = EnvParams {
            beta: 1.0,
            gamma: 0.0,
            c_i: 0.5,
            ..quiet(EnvParams::triangles_experiment())
        };
        let r = rollout(&g, &Decoration::parse("ISS").unwrap(), &ConstantPolicy(Action::NoOp), &params, &NoiseStreams::new(3), Some(2))
            .unwrap();
        assert_eq!(r.mean_rewards, vec![-0.5 / 3.0, -1.5 / 3.0]);
        let empty = rollout(&g, &Decoration::parse("ISS").unwrap(), &ConstantPolicy(Action::NoOp), &params, &NoiseStreams::new(3), Some(0))
            .unwrap();
        assert!(empty.mean_rewards.is_empty());
        assert_eq!(empty.total_return(), 0.0);
    }

    #[test]
    fn vaccinate_everyone_contains_outbreak() {
        let g = generate(&GraphSpec::new(GraphKind::Grid { width: 3, height: 3 }, 0)).unwrap();
        let params = EnvParams { c_v: 1.0, ..EnvParams::grid_experiment() };
        for seed in 0..50 {
            let deco = Decoration::parse("SSSSISSSS").unwrap();
            let r = rollout(&g, &deco, &ConstantPolicy(Action::Vaccinate), &params, &NoiseStreams::new(seed), None).unwrap();
            assert_eq!(r.states[1].count(NodeState::Susceptible), 0);
            assert_eq!(r.states[1].count(NodeState::Vaccinated), 8);
            for s in &r.states {
                assert_eq!(s.count(NodeState::Infected) + s.count(NodeState::Recovered), 1);
            }
        }
    }

    #[test]
    fn absorbing_and_monotone() {
        let g = generate(&GraphSpec::new(GraphKind::Grid { width: 5, height: 5 }, 0)).unwrap();
        let uniform = |_: &Graph, _: &Decoration, _: usize, _: usize| [1.0 / 3.0; 3];
        for seed in 0..30 {
            let params = EnvParams::grid_experiment();
            let (deco, _) = InitialCondition::RandomInfected { count: 4 }
                .sample(&g, &NoiseStreams::new(seed))
                .unwrap();
            let r = rollout(&g, &deco, &uniform, &params, &NoiseStreams::new(seed), None).unwrap();
            for w in r.states.windows(2) {
                for v in 0..25 {
                    if w[0].0[v].is_absorbing() {
                        assert_eq!(w[0].0[v], w[1].0[v]);
                    }
                }
            }
            let no_spread = EnvParams { beta: 0.0, ..params.clone() };
            let r = rollout(&g, &deco, &ConstantPolicy(Action::NoOp), &no_spread, &NoiseStreams::new(seed), None).unwrap();
            for w in r.states.windows(2) {
                assert!(w[1].count(NodeState::Infected) <= w[0].count(NodeState::Infected));
            }
            let no_recovery = EnvParams { gamma: 0.0, ..params.clone() };
            let r = rollout(&g, &deco, &ConstantPolicy(Action::NoOp), &no_recovery, &NoiseStreams::new(seed), None).unwrap();
            for w in r.states.windows(2) {
                for v in 0..25 {
                    if w[0].0[v] == NodeState::Infected {
                        assert_eq!(w[1].0[v], NodeState::Infected);
                    }
                }
            }
        }
    }

    #[test]
    fn scenarios_have_equal_counts() {
        let g = generate(&GraphSpec::new(GraphKind::Cliques { count: 20, size: 3 }, 0)).unwrap();
        let comps = g.components();
        let mut seen = [false; 2];
        for seed in 0..40 {
            let (deco, sc) = InitialCondition::triangles().sample(&g, &NoiseStreams::new(seed)).unwrap();
            assert_eq!(deco.count(NodeState::Infected), 5);
            let mut per = [0usize; 20];
            for v in 0..60 {
                if deco.0[v] == NodeState::Infected {
                    per[comps[v]] += 1;
                }
            }
            let touched = per.iter().filter(|&&x| x > 0).count();
            match sc.unwrap() {
                Scenario::Scattered => {
                    seen[0] = true;
                    assert_eq!(touched, 5);
                }
                Scenario::Concentrated => {
                    seen[1] = true;
                    assert_eq!(touched, 4);
                }
            }
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let g = triangle();
        let r = rollout(&g, &Decoration::parse("ISS").unwrap(), &ConstantPolicy(Action::Isolate), &EnvParams::grid_experiment(), &NoiseStreams::new(0), Some(3))
            .unwrap();
        let rows = parse_trajectory_csv(&r.to_csv(), Path::new("mem")).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].n_isolate, 3);
        assert_eq!(rows[0].counts, [2, 1, 0, 0]);
        assert_eq!(rows[2].mean_reward, r.mean_rewards[2]);
    }

    #[test]
    fn invalid_params() {
        let mut p = EnvParams::default();
        p.beta = 1.5;
        assert!(p.validate().is_err());
        let mut p = EnvParams::default();
        p.horizon = 0;
        assert!(p.validate().is_err());
        assert!(EnvParams::triangles_experiment().validate().is_ok());
    }
}
