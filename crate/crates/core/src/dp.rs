//! Exact finite-horizon dynamic programming on small instances, plus the
//! checks built on it: lifted-state sufficiency on disjoint cliques,
//! locality coupling, the truncation sweep and the `d_λ` diagnostic.
//!
//! Joint states are packed base 4 into a `u64` (node `i` in digits
//! `2i..2i+2`). Every expectation is summed over sorted terms and every
//! transition probability is a product of sorted factors, so two states that
//! differ by a relabeling produce bit-identical values.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::census::{canonical_key, empirical_distribution, CanonicalKey, KeyMode};
use crate::env::{local_reward, observe, penalty_active, rollout, Action, EnvParams, LocalObservation, LocalPolicy, OwnClass};
use crate::error::{Error, Result};
use crate::graph::{extract_neighborhood, Decoration, Graph, NodeState};
use crate::noise::{derive_seed, NoiseStreams};
use crate::policy::LocalPolicyParams;

/// Largest instance enumerated over every joint state.
pub const FULL_STATE_CAP: usize = 10;
/// Largest instance for memoized evaluation with stochastic transitions.
pub const STOCHASTIC_NODE_CAP: usize = 12;
/// Largest instance for memoized evaluation with deterministic transitions.
pub const DETERMINISTIC_NODE_CAP: usize = 20;

pub fn encode_state(deco: &Decoration) -> u64 {
    deco.0
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, s)| acc | ((s.index() as u64) << (2 * i)))
}

pub fn decode_state(id: u64, n: usize) -> Decoration {
    Decoration((0..n).map(|i| NodeState::from_index(((id >> (2 * i)) & 3) as usize)).collect())
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

/// Action probabilities for each of the six functional observations.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPolicy(pub [[f64; 3]; 6]);

impl ObservationPolicy {
    pub const CLASS_SIZE: u64 = 729;

    /// Deterministic table number `id` in base 3, observation 0 as the least
    /// significant digit.
    pub fn deterministic(id: u64) -> Self {
        let mut p = [[0.0; 3]; 6];
        for (c, row) in p.iter_mut().enumerate() {
            row[((id / 3u64.pow(c as u32)) % 3) as usize] = 1.0;
        }
        ObservationPolicy(p)
    }

    pub fn from_params(psi: &LocalPolicyParams) -> Self {
        let mut p = [[0.0; 3]; 6];
        for (c, row) in p.iter_mut().enumerate() {
            *row = psi.probs(LocalObservation::from_index(c));
        }
        ObservationPolicy(p)
    }

    pub fn is_deterministic(&self) -> bool {
        self.0.iter().flatten().all(|&p| p == 0.0 || p == 1.0)
    }

    pub fn probs(&self, obs: LocalObservation) -> [f64; 3] {
        self.0[obs.index()]
    }
}

impl LocalPolicy for ObservationPolicy {
    fn action_probs(&self, g: &Graph, deco: &Decoration, i: usize, _t: usize) -> [f64; 3] {
        self.probs(observe(g, deco, i))
    }
}

/// Whose reward the value function accumulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardTarget {
    /// Mean reward including the global penalty.
    Mean,
    /// One node's local reward, without the global penalty.
    Node(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyClass {
    /// All 729 maps from the six observations to actions.
    Deterministic6,
    /// Maps from canonical radius-`k` neighborhood keys to actions, over the
    /// keys realized in the current state.
    RadiusK(usize),
}

/// Values `V_t(x)` for the states visited; `argmax` is filled by
/// [`bellman_solve`].
#[derive(Clone, Debug, Default)]
pub struct ValueTable {
    pub node_count: usize,
    pub horizon: usize,
    values: Vec<HashMap<u64, f64>>,
    argmax: Vec<HashMap<u64, u64>>,
}

impl ValueTable {
    fn new(node_count: usize, horizon: usize) -> Self {
        ValueTable {
            node_count,
            horizon,
            values: vec![HashMap::new(); horizon + 1],
            argmax: vec![HashMap::new(); horizon + 1],
        }
    }

    pub fn value(&self, t: usize, state: u64) -> Option<f64> {
        if t == self.horizon {
            return Some(0.0);
        }
        self.values.get(t)?.get(&state).copied()
    }

    pub fn argmax(&self, t: usize, state: u64) -> Option<u64> {
        self.argmax.get(t)?.get(&state).copied()
    }

    /// `(t, state)` pairs in ascending order.
    pub fn entries(&self) -> Vec<(usize, u64, f64)> {
        let mut out: Vec<(usize, u64, f64)> = self
            .values
            .iter()
            .enumerate()
            .flat_map(|(t, m)| m.iter().map(move |(&s, &v)| (t, s, v)))
            .collect();
        out.sort_by_key(|&(t, s, _)| (t, s));
        out
    }

    pub fn len(&self) -> usize {
        self.values.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with columns `t,state_id,census_hash,value,argmax_policy_id`;
    /// the census hash digests the radius-1 census of the state.
    pub fn to_csv(&self, g: &Graph) -> Result<String> {
        let mut out = String::from("t,state_id,census_hash,value,argmax_policy_id\n");
        let mut hashes: HashMap<u64, u64> = HashMap::new();
        for (t, s, v) in self.entries() {
            let h = match hashes.get(&s) {
                Some(&h) => h,
                None => {
                    let h = census_hash(g, &decode_state(s, self.node_count))?;
                    hashes.insert(s, h);
                    h
                }
            };
            let arg = self.argmax(t, s).map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{t},{s},{h:016x},{v:.17e},{arg}");
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpRow {
    pub t: usize,
    pub state_id: u64,
    pub census_hash: u64,
    pub value: f64,
    pub argmax_policy_id: Option<u64>,
}

pub fn parse_dp_csv(text: &str, origin: &std::path::Path) -> Result<Vec<DpRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,state_id,census_hash,value,argmax_policy_id") {
        return Err(Error::parse(origin, "missing DP report header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(origin, format!("bad DP row {line:?}"));
            if c.len() != 5 {
                return Err(bad());
            }
            Ok(DpRow {
                t: c[0].parse().map_err(|_| bad())?,
                state_id: c[1].parse().map_err(|_| bad())?,
                census_hash: u64::from_str_radix(c[2], 16).map_err(|_| bad())?,
                value: c[3].parse().map_err(|_| bad())?,
                argmax_policy_id: if c[4].is_empty() { None } else { Some(c[4].parse().map_err(|_| bad())?) },
            })
        })
        .collect()
}

/// Order-independent digest of the radius-1 census.
pub fn census_hash(g: &Graph, deco: &Decoration) -> Result<u64> {
    let census = empirical_distribution(g, deco, 1, KeyMode::Exact)?;
    let mut words = vec![census.total() as u64];
    for (k, e) in census.iter() {
        words.push(k.digest());
        words.push(e.count as u64);
    }
    Ok(derive_seed(&words))
}


#[derive(Clone, Debug)]
enum Mode {
    Fixed(ObservationPolicy),
    Optimal(PolicyClass),
}

/// Memoized backward induction over joint states.
struct Solver<'a> {
    g: &'a Graph,
    params: &'a EnvParams,
    target: RewardTarget,
    mode: Mode,
    table: ValueTable,
}

impl<'a> Solver<'a> {
    fn new(g: &'a Graph, params: &'a EnvParams, horizon: usize, target: RewardTarget, mode: Mode) -> Self {
        Solver {
            g,
            params,
            target,
            mode,
            table: ValueTable::new(g.node_count(), horizon),
        }
    }

    fn n(&self) -> usize {
        self.g.node_count()
    }

    fn infection(&self, i: usize, x: &Decoration, a: Action) -> f64 {
        let k = self.g.neighbors(i).iter().filter(|&&j| x.0[j] == NodeState::Infected).count();
        1.0 - (1.0 - self.params.transmission(a)).powi(k as i32)
    }

    /// Expected immediate reward and per-node outcome lists when node `i`
    /// plays with `probs[i]`.
    fn expand(&self, x: &Decoration, probs: &[[f64; 3]]) -> (f64, Vec<Vec<(NodeState, f64)>>) {
        let p = self.params;
        let mut outcomes = Vec::with_capacity(self.n());
        let mut vacc_terms = Vec::new();
        let mut iso_terms = Vec::new();
        let mut node_reward = 0.0;
        for i in 0..self.n() {
            let pr = probs[i];
            let s = x.0[i];
            if self.target == RewardTarget::Node(i) {
                node_reward = sorted_sum(
                    (0..3)
                        .filter(|&a| pr[a] > 0.0)
                        .map(|a| pr[a] * local_reward(s, Action::from_index(a), p))
                        .collect(),
                );
            }
            if s == NodeState::Susceptible {
                vacc_terms.push(pr[1]);
            }
            iso_terms.push(pr[2]);
            let list: Vec<(NodeState, f64)> = match s {
                NodeState::Susceptible => {
                    let q0 = self.infection(i, x, Action::NoOp);
                    let q2 = self.infection(i, x, Action::Isolate);
                    let pi = pr[0] * q0 + pr[2] * q2;
                    let ps = pr[0] * (1.0 - q0) + pr[2] * (1.0 - q2);
                    [(NodeState::Susceptible, ps), (NodeState::Infected, pi), (NodeState::Vaccinated, pr[1])]
                        .into_iter()
                        .filter(|&(_, q)| q > 0.0)
                        .collect()
                }
                NodeState::Infected => [(NodeState::Infected, 1.0 - p.gamma), (NodeState::Recovered, p.gamma)]
                    .into_iter()
                    .filter(|&(_, q)| q > 0.0)
                    .collect(),
                other => vec![(other, 1.0)],
            };
            outcomes.push(list);
        }
        let reward = match self.target {
            RewardTarget::Node(_) => node_reward,
            RewardTarget::Mean => {
                let infected = x.count(NodeState::Infected) as f64;
                let local = p.c_i * infected + p.c_v * sorted_sum(vacc_terms) + p.c_q * sorted_sum(iso_terms);
                let global = if penalty_active(self.g, x, p) { p.c_global } else { 0.0 };
                -(local / self.n() as f64 + global)
            }
        };
        (reward, outcomes)
    }

    /// `(probability, next state)` pairs of the product kernel.
    fn successors(outcomes: &[Vec<(NodeState, f64)>]) -> Vec<(f64, u64)> {
        let mut partial: Vec<(Vec<f64>, u64)> = vec![(Vec::new(), 0)];
        for (i, list) in outcomes.iter().enumerate() {
            let shift = 2 * i;
            if let [(s, q)] = list[..] {
                for (fs, id) in partial.iter_mut() {
                    if q != 1.0 {
                        fs.push(q);
                    }
                    *id |= (s.index() as u64) << shift;
                }
                continue;
            }
            let mut next = Vec::with_capacity(partial.len() * list.len());
            for (fs, id) in &partial {
                for &(s, q) in list {
                    let mut f2 = fs.clone();
                    f2.push(q);
                    next.push((f2, id | ((s.index() as u64) << shift)));
                }
            }
            partial = next;
        }
        partial
            .into_iter()
            .map(|(mut fs, id)| {
                fs.sort_by(f64::total_cmp);
                (fs.into_iter().product(), id)
            })
            .collect()
    }

    fn backup(&mut self, t: usize, x: &Decoration, probs: &[[f64; 3]]) -> f64 {
        let (reward, outcomes) = self.expand(x, probs);
        let terms: Vec<f64> = Self::successors(&outcomes)
            .into_iter()
            .map(|(q, id)| q * self.value(t + 1, id))
            .collect();
        reward + sorted_sum(terms)
    }

    fn value(&mut self, t: usize, id: u64) -> f64 {
        if t >= self.table.horizon {
            return 0.0;
        }
        if let Some(&v) = self.table.values[t].get(&id) {
            return v;
        }
        let x = decode_state(id, self.n());
        let v = match self.mode.clone() {
            Mode::Fixed(pol) => {
                let probs: Vec<[f64; 3]> = (0..self.n()).map(|i| pol.probs(observe(self.g, &x, i))).collect();
                self.backup(t, &x, &probs)
            }
            Mode::Optimal(class) => {
                let (v, arg) = self.optimize(t, &x, class);
                self.table.argmax[t].insert(id, arg);
                v
            }
        };
        self.table.values[t].insert(id, v);
        v
    }

    /// Best shared decision at `(t, x)`. Only susceptible nodes carry a
    /// decision variable: for the other states every action is dynamically
    /// inert and NoOp is never more costly.
    fn optimize(&mut self, t: usize, x: &Decoration, class: PolicyClass) -> (f64, u64) {
        let n = self.n();
        let susceptible = (0..n).filter(|&i| x.0[i] == NodeState::Susceptible);
        let groups: Vec<Vec<usize>> = match class {
            PolicyClass::Deterministic6 => {
                let mut g = vec![Vec::new(); 2];
                for i in susceptible {
                    g[observe(self.g, x, i).index()].push(i);
                }
                g
            }
            PolicyClass::RadiusK(k) => {
                let mut by_key: BTreeMap<CanonicalKey, Vec<usize>> = BTreeMap::new();
                for i in susceptible {
                    let nb = extract_neighborhood(self.g, x, i, k).expect("node in range");
                    let key = canonical_key(&nb, KeyMode::Exact).expect("checked against the exact cap");
                    by_key.entry(key).or_default().push(i);
                }
                by_key.into_values().collect()
            }
        };
        let mut best = (f64::NEG_INFINITY, 0u64);
        let mut probs = vec![[1.0, 0.0, 0.0]; n];
        'ids: for id in 0..3u64.pow(groups.len() as u32) {
            for (d, members) in groups.iter().enumerate() {
                let a = ((id / 3u64.pow(d as u32)) % 3) as usize;
                if members.is_empty() && a != 0 {
                    continue 'ids;
                }
                for &i in members {
                    probs[i] = [0.0; 3];
                    probs[i][a] = 1.0;
                }
            }
            let v = self.backup(t, x, &probs);
            if v > best.0 {
                best = (v, id);
            }
        }
        best
    }
}

fn transitions_deterministic(params: &EnvParams, policy: Option<&ObservationPolicy>) -> bool {
    let unit = |x: f64| x == 0.0 || x == 1.0;
    unit(params.beta)
        && unit(params.gamma)
        && unit(params.transmission(Action::Isolate))
        && policy.is_none_or(ObservationPolicy::is_deterministic)
}

fn check_cap(g: &Graph, deterministic: bool) -> Result<()> {
    let cap = if deterministic { DETERMINISTIC_NODE_CAP } else { STOCHASTIC_NODE_CAP };
    if g.node_count() > cap {
        return Err(Error::EnumerationCap {
            nodes: g.node_count(),
            cap,
        });
    }
    Ok(())
}

fn check_full(g: &Graph) -> Result<()> {
    if g.node_count() > FULL_STATE_CAP {
        return Err(Error::EnumerationCap {
            nodes: g.node_count(),
            cap: FULL_STATE_CAP,
        });
    }
    Ok(())
}

fn check_radius(g: &Graph, class: PolicyClass) -> Result<()> {
    if let PolicyClass::RadiusK(_) = class {
        if g.node_count() > crate::census::DEFAULT_EXACT_CAP {
            return Err(Error::EnumerationCap {
                nodes: g.node_count(),
                cap: crate::census::DEFAULT_EXACT_CAP,
            });
        }
    }
    Ok(())
}

/// Value of a fixed shared policy at every joint state and every step.
pub fn exact_policy_eval(g: &Graph, policy: &ObservationPolicy, params: &EnvParams, horizon: usize, target: RewardTarget) -> Result<ValueTable> {
    check_full(g)?;
    let mut s = Solver::new(g, params, horizon, target, Mode::Fixed(policy.clone()));
    for t in 0..horizon {
        for id in 0..4u64.pow(g.node_count() as u32) {
            s.value(t, id);
        }
    }
    Ok(s.table)
}

/// `V_0(x0)` of a fixed shared policy, visiting only states reachable from `x0`.
pub fn evaluate_from(g: &Graph, policy: &ObservationPolicy, params: &EnvParams, horizon: usize, x0: &Decoration, target: RewardTarget) -> Result<f64> {
    x0.check_len(g)?;
    check_cap(g, transitions_deterministic(params, Some(policy)))?;
    let mut s = Solver::new(g, params, horizon, target, Mode::Fixed(policy.clone()));
    Ok(s.value(0, encode_state(x0)))
}

/// Optimal values over every joint state, with the argmax decision recorded
/// per `(t, state)`. Ties go to the smallest decision id.
pub fn bellman_solve(g: &Graph, class: PolicyClass, params: &EnvParams, horizon: usize) -> Result<ValueTable> {
    check_full(g)?;
    check_radius(g, class)?;
    let mut s = Solver::new(g, params, horizon, RewardTarget::Mean, Mode::Optimal(class));
    for t in 0..horizon {
        for id in 0..4u64.pow(g.node_count() as u32) {
            s.value(t, id);
        }
    }
    Ok(s.table)
}

/// Optimal values on the states reachable from `starts`.
pub fn bellman_solve_from(g: &Graph, class: PolicyClass, params: &EnvParams, horizon: usize, starts: &[Decoration]) -> Result<ValueTable> {
    check_cap(g, transitions_deterministic(params, None))?;
    check_radius(g, class)?;
    let mut s = Solver::new(g, params, horizon, RewardTarget::Mean, Mode::Optimal(class));
    for x in starts {
        x.check_len(g)?;
        s.value(0, encode_state(x));
    }
    Ok(s.table)
}

/// Per-observation action table of a [`PolicyClass::Deterministic6`] id.
pub fn deterministic_table(id: u64) -> [Action; 6] {
    let mut out = [Action::NoOp; 6];
    for (c, a) in out.iter_mut().enumerate() {
        *a = Action::from_index(((id / 3u64.pow(c as u32)) % 3) as usize);
    }
    out
}

/// Sorted per-clique state multisets; equal for states related by clique
/// permutations and relabelings within cliques.
pub fn clique_histogram(components: &[usize], deco: &Decoration) -> Vec<[u8; 4]> {
    let count = components.iter().copied().max().map_or(0, |m| m + 1);
    let mut h = vec![[0u8; 4]; count];
    for (v, &c) in components.iter().enumerate() {
        h[c][deco.0[v].index()] += 1;
    }
    h.sort();
    h
}

fn check_disjoint_cliques(g: &Graph) -> Result<Vec<usize>> {
    let comps = g.components();
    let count = comps.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; count];
    let mut edges = vec![0usize; count];
    for (v, &c) in comps.iter().enumerate() {
        sizes[c] += 1;
        edges[c] += g.degree(v);
    }
    for c in 0..count {
        if edges[c] != sizes[c] * (sizes[c] - 1) {
            return Err(Error::Precondition("graph is not a disjoint union of cliques".into()));
        }
    }
    Ok(comps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SufficiencyViolation {
    pub t: usize,
    pub state_a: u64,
    pub state_b: u64,
    pub value_a: f64,
    pub value_b: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SufficiencyReport {
    pub states: usize,
    pub groups: usize,
    /// Groups with at least two states, summed over steps.
    pub nontrivial_groups: usize,
    pub violations: Vec<SufficiencyViolation>,
}

impl SufficiencyReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares values bit-for-bit within every group of equal clique histograms.
pub fn sufficiency_of_table(g: &Graph, table: &ValueTable) -> Result<SufficiencyReport> {
    let comps = check_disjoint_cliques(g)?;
    let n = g.node_count();
    let mut report = SufficiencyReport::default();
    for t in 0..table.horizon {
        let mut groups: BTreeMap<Vec<[u8; 4]>, (u64, f64, usize)> = BTreeMap::new();
        for (_, id, v) in table.entries().into_iter().filter(|e| e.0 == t) {
            report.states += 1;
            let key = clique_histogram(&comps, &decode_state(id, n));
            match groups.get_mut(&key) {
                Some((rep, rv, size)) => {
                    *size += 1;
                    if rv.to_bits() != v.to_bits() {
                        report.violations.push(SufficiencyViolation {
                            t,
                            state_a: *rep,
                            state_b: id,
                            value_a: *rv,
                            value_b: v,
                        });
                    }
                }
                None => {
                    groups.insert(key, (id, v, 1));
                }
            }
        }
        report.groups += groups.len();
        report.nontrivial_groups += groups.values().filter(|g| g.2 > 1).count();
    }
    Ok(report)
}

/// Optimal-value sufficiency of the clique-configuration histogram.
pub fn lifted_sufficiency_check(g: &Graph, params: &EnvParams, horizon: usize, class: PolicyClass) -> Result<SufficiencyReport> {
    check_disjoint_cliques(g)?;
    sufficiency_of_table(g, &bellman_solve(g, class, params, horizon)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootStep {
    pub state: NodeState,
    pub action: Action,
    pub local_reward: f64,
}

/// The root's state, action and local reward at `t = 0..T−1`, plus its state
/// at `T`.
pub fn root_trace(
    g: &Graph,
    deco: &Decoration,
    root: usize,
    policy: &LocalPolicyParams,
    params: &EnvParams,
    horizon: usize,
    noise: &NoiseStreams,
) -> Result<(Vec<RootStep>, NodeState)> {
    if root >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            node: root,
            node_count: g.node_count(),
        });
    }
    let r = rollout(g, deco, policy, params, noise, Some(horizon))?;
    let steps = (0..horizon)
        .map(|t| {
            let state = r.states[t].0[root];
            let action = r.actions[t][root];
            RootStep {
                state,
                action,
                local_reward: local_reward(state, action, params),
            }
        })
        .collect();
    Ok((steps, r.states[horizon].0[root]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalityReport {
    pub identical: bool,
    pub max_deviation: f64,
    /// First step at which the root's state or action differs.
    pub first_divergence: Option<usize>,
}

/// Paired rollouts with shared noise from two decorations that differ only on
/// `far_set`, every node of which lies farther than `T` from `root`.
#[allow(clippy::too_many_arguments)]
pub fn locality_coupling_test(
    g: &Graph,
    params: &EnvParams,
    horizon: usize,
    root: usize,
    far_set: &[usize],
    deco_a: &Decoration,
    deco_b: &Decoration,
    policy: &LocalPolicyParams,
    noise: &NoiseStreams,
) -> Result<LocalityReport> {
    deco_a.check_len(g)?;
    deco_b.check_len(g)?;
    let dist = g.distances_from(root);
    for &v in far_set {
        if v >= g.node_count() {
            return Err(Error::NodeOutOfRange {
                node: v,
                node_count: g.node_count(),
            });
        }
        if matches!(dist[v], Some(d) if d <= horizon) {
            return Err(Error::Precondition(format!("node {v} lies within distance {horizon} of the root")));
        }
    }
    for v in 0..g.node_count() {
        if deco_a.0[v] != deco_b.0[v] && !far_set.contains(&v) {
            return Err(Error::Precondition(format!("decorations differ at node {v} outside the far set")));
        }
    }
    let (a, end_a) = root_trace(g, deco_a, root, policy, params, horizon, noise)?;
    let (b, end_b) = root_trace(g, deco_b, root, policy, params, horizon, noise)?;
    let mut max_dev: f64 = 0.0;
    let mut first = None;
    for (t, (x, y)) in a.iter().zip(&b).enumerate() {
        max_dev = max_dev.max((x.local_reward - y.local_reward).abs());
        if first.is_none() && (x.state != y.state || x.action != y.action || x.local_reward.to_bits() != y.local_reward.to_bits()) {
            first = Some(t);
        }
    }
    if first.is_none() && end_a != end_b {
        first = Some(horizon);
    }
    Ok(LocalityReport {
        identical: first.is_none(),
        max_deviation: max_dev,
        first_divergence: first,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalityCase {
    pub graph_tag: String,
    pub nodes: usize,
    pub root: usize,
    pub far_nodes: usize,
    pub report: LocalityReport,
}

/// Random coupling cases on paths and random trees: the far set is every
/// node beyond distance `horizon` from a random root, redrawn in the second
/// decoration; policies and noise are random per case.
pub fn random_locality_cases(cases: usize, params: &EnvParams, horizon: usize, seed: u64) -> Result<Vec<LocalityCase>> {
    use crate::graph::{generate, GraphKind, GraphSpec};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cases);
    while out.len() < cases {
        let n = rng.random_range(2 * horizon + 3..=2 * horizon + 12);
        let kind = if rng.random::<bool>() { GraphKind::Path { n } } else { GraphKind::Tree { n } };
        let g = generate(&GraphSpec::new(kind, rng.random()))?;
        let root = rng.random_range(0..n);
        let dist = g.distances_from(root);
        let far: Vec<usize> = (0..n).filter(|&v| dist[v].is_none_or(|d| d > horizon)).collect();
        if far.is_empty() {
            continue;
        }
        let a = Decoration((0..n).map(|_| NodeState::from_index(rng.random_range(0..4))).collect());
        let mut b = a.clone();
        for &v in &far {
            b.0[v] = NodeState::from_index(rng.random_range(0..4));
        }
        let forced = far[rng.random_range(0..far.len())];
        b.0[forced] = NodeState::from_index((a.0[forced].index() + rng.random_range(1..4)) % 4);
        let psi: Vec<f64> = (0..18).map(|_| rng.random_range(-3.0..3.0)).collect();
        let policy = LocalPolicyParams::new(psi, crate::policy::ObservationMode::Local6)?;
        let noise = NoiseStreams::new(rng.random());
        let report = locality_coupling_test(&g, params, horizon, root, &far, &a, &b, &policy, &noise)?;
        out.push(LocalityCase {
            graph_tag: g.tag().to_string(),
            nodes: n,
            root,
            far_nodes: far.len(),
            report,
        });
    }
    Ok(out)
}

/// `Σ_{v : x(v) ≠ x'(v)} λ^{dist(root, v)}`; unreachable nodes contribute 0.
pub fn d_lambda(g: &Graph, root: usize, a: &Decoration, b: &Decoration, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    a.check_len(g)?;
    b.check_len(g)?;
    if root >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            node: root,
            node_count: g.node_count(),
        });
    }
    let dist = g.distances_from(root);
    Ok(sorted_sum(
        (0..g.node_count())
            .filter(|&v| a.0[v] != b.0[v])
            .filter_map(|v| dist[v].map(|d| lambda.powi(d as i32)))
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    pub pairs: usize,
    /// Smallest `L` with `|W_0(S) − W_0(S′)| ≤ L·d_λ(S, S′)` on the sample.
    pub fitted_l: f64,
    pub mean_ratio: f64,
}

/// Samples decoration pairs and fits the Lipschitz constant of the root's
/// local value `W_0` with respect to `d_λ`.
pub fn lipschitz_diagnostic(
    g: &Graph,
    root: usize,
    policy: &ObservationPolicy,
    params: &EnvParams,
    horizon: usize,
    lambda: f64,
    pairs: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.node_count();
    let mut s = Solver::new(g, params, horizon, RewardTarget::Node(root), Mode::Fixed(policy.clone()));
    check_cap(g, transitions_deterministic(params, Some(policy)))?;
    let mut ratios = Vec::with_capacity(pairs);
    while ratios.len() < pairs {
        let a = Decoration((0..n).map(|_| NodeState::from_index(rng.random_range(0..4))).collect());
        let mut b = a.clone();
        let flips = rng.random_range(1..=n);
        for _ in 0..flips {
            let v = rng.random_range(0..n);
            b.0[v] = NodeState::from_index(rng.random_range(0..4));
        }
        let d = d_lambda(g, root, &a, &b, lambda)?;
        if d == 0.0 {
            continue;
        }
        let wa = s.value(0, encode_state(&a));
        let wb = s.value(0, encode_state(&b));
        ratios.push((wa - wb).abs() / d);
    }
    Ok(LipschitzReport {
        pairs,
        fitted_l: ratios.iter().copied().fold(0.0, f64::max),
        mean_ratio: ratios.iter().sum::<f64>() / pairs.max(1) as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub best_j: f64,
    pub gap: f64,
    pub log_gap: Option<f64>,
}

/// Product initial law: every node independently drawn from `marginal`
/// (indexed by [`NodeState::index`]). Zero-mass states are skipped.
pub fn product_initial_law(n: usize, marginal: [f64; 4]) -> Result<Vec<(Decoration, f64)>> {
    let total: f64 = marginal.iter().sum();
    if marginal.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("initial marginal {marginal:?} is not a distribution")));
    }
    if n > STOCHASTIC_NODE_CAP {
        return Err(Error::EnumerationCap { nodes: n, cap: STOCHASTIC_NODE_CAP });
    }
    let mut out = Vec::new();
    for id in 0..4u64.pow(n as u32) {
        let deco = decode_state(id, n);
        let mut factors: Vec<f64> = deco.0.iter().map(|s| marginal[s.index()]).collect();
        factors.sort_by(f64::total_cmp);
        let p: f64 = factors.into_iter().product();
        if p > 0.0 {
            out.push((deco, p));
        }
    }
    Ok(out)
}

/// Best closed-loop value of each radius-`k` class under `init`, and its gap
/// to the largest `k` in `k_list`.
pub fn truncation_sweep(g: &Graph, params: &EnvParams, horizon: usize, k_list: &[usize], init: &[(Decoration, f64)]) -> Result<Vec<SweepRow>> {
    if k_list.is_empty() {
        return Err(Error::InvalidParameter("empty radius list".into()));
    }
    let k_max = *k_list.iter().max().unwrap();
    let mut best = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let starts: Vec<Decoration> = init.iter().map(|(d, _)| d.clone()).collect();
        let table = bellman_solve_from(g, PolicyClass::RadiusK(k), params, horizon, &starts)?;
        let j = sorted_sum(
            init.iter()
                .map(|(d, p)| p * table.value(0, encode_state(d)).expect("solved start"))
                .collect(),
        );
        best.push((k, j));
    }
    let j_max = best.iter().find(|(k, _)| *k == k_max).unwrap().1;
    Ok(best
        .into_iter()
        .map(|(k, j)| {
            let gap = j_max - j;
            SweepRow {
                k,
                best_j: j,
                gap,
                log_gap: (gap > 0.0).then(|| gap.ln()),
            }
        })
        .collect())
}

/// Least-squares slope of `log gap` against `k` over strictly positive gaps.
pub fn log_gap_slope(rows: &[SweepRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.log_gap.map(|l| (r.k as f64, l))).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,best_J,gap,log_gap\n");
    for r in rows {
        let lg = r.log_gap.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.17e},{:.17e},{lg}", r.k, r.best_j, r.gap);
    }
    out
}

pub fn parse_sweep_csv(text: &str, origin: &std::path::Path) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("k,best_J,gap,log_gap") {
        return Err(Error::parse(origin, "missing sweep header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(origin, format!("bad sweep row {line:?}"));
            if c.len() != 4 {
                return Err(bad());
            }
            Ok(SweepRow {
                k: c[0].parse().map_err(|_| bad())?,
                best_j: c[1].parse().map_err(|_| bad())?,
                gap: c[2].parse().map_err(|_| bad())?,
                log_gap: if c[3].is_empty() { None } else { Some(c[3].parse().map_err(|_| bad())?) },
            })
        })
        .collect()
}

/// Human-readable action table of a deterministic policy id.
pub fn describe_table(id: u64) -> String {
    deterministic_table(id)
        .iter()
        .enumerate()
        .map(|(c, a)| format!("{}={a:?}", LocalObservation::from_index(c).label()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Own class of every observation index, for callers reading tables.
pub fn observation_owner(c: usize) -> OwnClass {
    LocalObservation::from_index(c).own
}

/// Mean and standard error of the episode return of `policy` from `x0`.
pub fn monte_carlo_value(
    g: &Graph,
    policy: &ObservationPolicy,
    params: &EnvParams,
    horizon: usize,
    x0: &Decoration,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if episodes < 2 {
        return Err(Error::InvalidParameter("need at least two episodes".into()));
    }
    let mut sum = 0.0;
    let mut sq = 0.0;
    for e in 0..episodes {
        let noise = NoiseStreams::new(derive_seed(&[seed, e as u64]));
        let r = rollout(g, x0, policy, params, &noise, Some(horizon))?;
        let ret = r.total_return();
        sum += ret;
        sq += ret * ret;
    }
    let m = episodes as f64;
    let mean = sum / m;
    let var = ((sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Penalty;
    use crate::graph::{generate, GraphKind, GraphSpec};

    fn cliques(count: usize) -> Graph {
        generate(&GraphSpec::new(GraphKind::Cliques { count, size: 3 }, 0)).unwrap()
    }

    fn deco(s: &str) -> Decoration {
        Decoration::parse(s).unwrap()
    }

    fn plain(beta: f64, gamma: f64) -> EnvParams {
        EnvParams {
            beta,
            gamma,
            f_iso: 0.5,
            c_i: 0.5,
            c_v: 1.0,
            c_q: 0.2,
            c_global: 0.0,
            penalty: Penalty::None,
            horizon: 3,
        }
    }

    fn miniature() -> EnvParams {
        EnvParams {
            penalty: Penalty::CliquesWithTwoInfected(0.75),
            horizon: 3,
            ..EnvParams::triangles_experiment()
        }
    }

    const NOOP: u64 = 0;

    #[test]
    fn zero_horizon_is_zero() {
        let g = cliques(1);
        let t = exact_policy_eval(&g, &ObservationPolicy::deterministic(NOOP), &plain(0.5, 0.2), 0, RewardTarget::Mean).unwrap();
        assert_eq!(t.value(0, 5), Some(0.0));
        assert!(t.is_empty());
    }

    #[test]
    fn triangle_hand_value() {
        let g = cliques(1);
        let mut p = plain(1.0, 0.0);
        p.c_v = 0.0;
        p.c_q = 0.0;
        let v = evaluate_from(&g, &ObservationPolicy::deterministic(NOOP), &p, 2, &deco("ISS"), RewardTarget::Mean).unwrap();
        assert!((v + 2.0 / 3.0).abs() < 1e-15, "{v}");
    }

    #[test]
    fn state_codec_round_trip() {
        let d = deco("SIRVIS");
        assert_eq!(decode_state(encode_state(&d), 6), d);
    }

    #[test]
    fn full_table_covers_all_states() {
        let g = cliques(1);
        let t = exact_policy_eval(&g, &ObservationPolicy::deterministic(NOOP), &plain(0.5, 0.2), 2, RewardTarget::Mean).unwrap();
        assert_eq!(t.len(), 2 * 64);
        let csv = t.to_csv(&g).unwrap();
        let rows = parse_dp_csv(&csv, std::path::Path::new("mem")).unwrap();
        assert_eq!(rows.len(), 128);
        assert_eq!(rows[7].value.to_bits(), t.value(rows[7].t, rows[7].state_id).unwrap().to_bits());
    }

    #[test]
    fn caps_are_enforced() {
        let g = cliques(4);
        let pol = ObservationPolicy::deterministic(NOOP);
        assert!(matches!(
            exact_policy_eval(&g, &pol, &plain(0.5, 0.2), 1, RewardTarget::Mean),
            Err(Error::EnumerationCap { .. })
        ));
        let big = cliques(5);
        let x = Decoration::uniform(15, NodeState::Susceptible);
        assert!(evaluate_from(&big, &pol, &plain(0.5, 0.2), 1, &x, RewardTarget::Mean).is_err());
        let mut det = plain(1.0, 0.0);
        det.f_iso = 1.0;
        assert!(evaluate_from(&big, &pol, &det, 1, &x, RewardTarget::Mean).is_ok());
    }

    #[test]
    fn dp_matches_monte_carlo() {
        let g = cliques(2);
        let mut p = EnvParams::triangles_experiment();
        p.beta = 0.5;
        p.gamma = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = [[0.0; 3]; 6];
        for r in rows.iter_mut() {
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let z: f64 = w.iter().sum();
            *r = [w[0] / z, w[1] / z, w[2] / z];
        }
        let pol = ObservationPolicy(rows);
        let x0 = deco("ISSISS");
        let exact = evaluate_from(&g, &pol, &p, 4, &x0, RewardTarget::Mean).unwrap();
        let (mean, se) = monte_carlo_value(&g, &pol, &p, 4, &x0, 20_000, 11).unwrap();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn costly_vaccination_is_never_chosen() {
        let g = cliques(2);
        let mut p = plain(1.0, 0.0);
        p.c_v = 1e6;
        p.f_iso = 0.0;
        let x0 = deco("ISSISS");
        let opt = bellman_solve(&g, PolicyClass::Deterministic6, &p, 3).unwrap();
        for (t, s, _) in opt.entries() {
            let table = deterministic_table(opt.argmax(t, s).unwrap());
            assert!(!table.contains(&Action::Vaccinate));
        }
        let never = (0..729u64)
            .filter(|id| !deterministic_table(*id).contains(&Action::Vaccinate))
            .map(|id| evaluate_from(&g, &ObservationPolicy::deterministic(id), &p, 3, &x0, RewardTarget::Mean).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let v = opt.value(0, encode_state(&x0)).unwrap();
        assert_eq!(v, never);
        assert!((v + (2.0 + 6.0 + 6.0) * 0.5 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn miniature_scattered_vaccinates_concentrated_waits() {
        let g = cliques(2);
        let p = miniature();
        let opt = bellman_solve(&g, PolicyClass::Deterministic6, &p, 3).unwrap();
        let s_inf = LocalObservation { own: OwnClass::S, infected_neighbor: true }.index();
        let scattered = opt.argmax(0, encode_state(&deco("ISSISS"))).unwrap();
        let concentrated = opt.argmax(0, encode_state(&deco("IISSSS"))).unwrap();
        assert_eq!(deterministic_table(scattered)[s_inf], Action::Vaccinate, "{}", describe_table(scattered));
        assert_eq!(deterministic_table(concentrated)[s_inf], Action::NoOp, "{}", describe_table(concentrated));
    }

    #[test]
    fn optimum_dominates_fixed_policies() {
        let g = cliques(2);
        let mut p = EnvParams::triangles_experiment();
        p.beta = 0.5;
        p.gamma = 0.2;
        let x0 = deco("ISSSIS");
        let opt = bellman_solve_from(&g, PolicyClass::Deterministic6, &p, 3, std::slice::from_ref(&x0)).unwrap();
        let best = opt.value(0, encode_state(&x0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let id = rng.random_range(0..ObservationPolicy::CLASS_SIZE);
            let v = evaluate_from(&g, &ObservationPolicy::deterministic(id), &p, 3, &x0, RewardTarget::Mean).unwrap();
            assert!(best >= v, "policy {id}: {v} > {best}");
        }
    }

    #[test]
    fn radius_classes_match_on_cliques() {
        let g = cliques(2);
        let p = miniature();
        let x0 = deco("ISSISS");
        let a = bellman_solve_from(&g, PolicyClass::Deterministic6, &p, 3, std::slice::from_ref(&x0)).unwrap();
        let b = bellman_solve_from(&g, PolicyClass::RadiusK(1), &p, 3, std::slice::from_ref(&x0)).unwrap();
        let s = encode_state(&x0);
        assert!(b.value(0, s).unwrap() >= a.value(0, s).unwrap());
    }

    #[test]
    fn histogram_groups_carry_equal_values() {
        let g = cliques(2);
        let opt = bellman_solve(&g, PolicyClass::Deterministic6, &miniature(), 3).unwrap();
        let a = opt.value(0, encode_state(&deco("ISSSSS"))).unwrap();
        let b = opt.value(0, encode_state(&deco("SSSSIS"))).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let rep = sufficiency_of_table(&g, &opt).unwrap();
        assert!(rep.holds(), "{:?}", rep.violations.first());
        assert!(rep.nontrivial_groups > 0);
        let x = opt.value(0, encode_state(&deco("ISSISS"))).unwrap();
        let y = opt.value(0, encode_state(&deco("IISSSS"))).unwrap();
        assert_ne!(x, y);
    }

    #[test]
    fn fixed_policy_tables_are_sufficient_too() {
        let g = cliques(2);
        let mut p = miniature();
        p.beta = 0.5;
        p.gamma = 0.2;
        let t = exact_policy_eval(&g, &ObservationPolicy::deterministic(3), &p, 2, RewardTarget::Mean).unwrap();
        assert!(sufficiency_of_table(&g, &t).unwrap().holds());
    }

    #[test]
    fn sufficiency_needs_cliques() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 4 }, 0)).unwrap();
        assert!(matches!(
            lifted_sufficiency_check(&g, &plain(0.5, 0.2), 2, PolicyClass::Deterministic6),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn d_lambda_examples() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 4 }, 0)).unwrap();
        let a = deco("SSSS");
        assert_eq!(d_lambda(&g, 0, &a, &a, 0.5).unwrap(), 0.0);
        assert_eq!(d_lambda(&g, 0, &a, &deco("SSIS"), 0.5).unwrap(), 0.25);
        assert_eq!(d_lambda(&g, 0, &a, &deco("ISSS"), 0.5).unwrap(), 1.0);
        assert!(d_lambda(&g, 0, &a, &a, 1.0).is_err());
        assert!(d_lambda(&g, 0, &a, &a, 0.0).is_err());
    }

    fn vaccinate_on_alarm() -> LocalPolicyParams {
        let mut psi = vec![0.0; 18];
        psi[0] = 60.0;
        psi[4] = 60.0;
        LocalPolicyParams::new(psi, crate::policy::ObservationMode::Local6).unwrap()
    }

    #[test]
    fn far_changes_leave_the_root_alone() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 9 }, 0)).unwrap();
        let p = plain(0.7, 0.3);
        let a = deco("ISSSSSSSI");
        let b = deco("SSSSSSSSR");
        let rep = locality_coupling_test(&g, &p, 3, 4, &[0, 8], &a, &b, &vaccinate_on_alarm(), &NoiseStreams::new(5)).unwrap();
        assert!(rep.identical);
        assert_eq!(rep.max_deviation, 0.0);
        let none = locality_coupling_test(&g, &p, 3, 4, &[], &a, &a, &vaccinate_on_alarm(), &NoiseStreams::new(5)).unwrap();
        assert!(none.identical);
        assert!(matches!(
            locality_coupling_test(&g, &p, 4, 4, &[0, 8], &a, &b, &vaccinate_on_alarm(), &NoiseStreams::new(5)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn random_cases_are_identical() {
        let cases = random_locality_cases(30, &plain(0.6, 0.3), 3, 7).unwrap();
        assert_eq!(cases.len(), 30);
        assert!(cases.iter().all(|c| c.report.identical));
        assert!(cases.iter().any(|c| c.far_nodes > 0));
    }

    #[test]
    fn boundary_change_reaches_the_last_reward() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 3 }, 0)).unwrap();
        let mut p = plain(1.0, 0.0);
        p.f_iso = 0.0;
        let mut psi = vec![0.0; 18];
        psi[0] = 60.0;
        psi[5] = 60.0;
        let pol = LocalPolicyParams::new(psi, crate::policy::ObservationMode::Local6).unwrap();
        let noise = NoiseStreams::new(1);
        let (a, _) = root_trace(&g, &deco("SSI"), 0, &pol, &p, 2, &noise).unwrap();
        let (b, _) = root_trace(&g, &deco("SSS"), 0, &pol, &p, 2, &noise).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.state == y.state));
        assert_eq!(a[0], b[0]);
        assert_ne!(a[1].action, b[1].action);
        assert_ne!(a[1].local_reward, b[1].local_reward);
    }

    #[test]
    fn truncation_gaps_shrink() {
        let g = generate(&GraphSpec::new(GraphKind::Cycle { n: 4 }, 0)).unwrap();
        let p = plain(0.1, 0.2);
        let init = product_initial_law(4, [0.7, 0.3, 0.0, 0.0]).unwrap();
        let rows = truncation_sweep(&g, &p, 2, &[0, 1, 2], &init).unwrap();
        assert_eq!(rows.last().unwrap().gap, 0.0);
        for w in rows.windows(2) {
            assert!(w[1].gap <= w[0].gap);
        }
        let csv = sweep_to_csv(&rows);
        assert_eq!(parse_sweep_csv(&csv, std::path::Path::new("mem")).unwrap(), rows);
    }

    #[test]
    fn slope_of_geometric_gaps() {
        let rows: Vec<SweepRow> = (0..3)
            .map(|k| {
                let gap = 0.5f64.powi(k as i32);
                SweepRow { k, best_j: -gap, gap, log_gap: Some(gap.ln()) }
            })
            .collect();
        assert!((log_gap_slope(&rows).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_ratio_is_finite() {
        let g = generate(&GraphSpec::new(GraphKind::Path { n: 5 }, 0)).unwrap();
        let rep = lipschitz_diagnostic(&g, 2, &ObservationPolicy::deterministic(NOOP), &plain(0.3, 0.2), 2, 0.5, 40, 1).unwrap();
        assert!(rep.fitted_l.is_finite() && rep.fitted_l >= rep.mean_ratio);
    }
}
