//! Canonical keys for decorated rooted neighborhoods and the empirical
//! distribution of neighborhoods over a graph.
//!
//! Exact keys come from layer-aware color refinement followed by
//! individualization search; the smallest certificate over all leaves of the
//! search tree is the key. Twin vertices (same neighborhood up to each other)
//! are interchangeable by an automorphism, so only one per twin class is
//! branched on. WL keys are a 64-bit hash of rooted 1-WL colors and may merge
//! non-isomorphic neighborhoods.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    extract_neighborhood, parse_edge_list, write_edge_list, Decoration, DecoratedRootedNeighborhood, Graph, GraphSpec,
    NodeState,
};
use crate::noise::derive_seed;

pub const DEFAULT_EXACT_CAP: usize = 24;

const EXACT_TAG: u8 = b'E';
const WL_TAG: u8 = b'W';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    Exact,
    WlHash,
}

impl std::str::FromStr for KeyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(KeyMode::Exact),
            "wl" | "wlhash" | "wl_hash" => Ok(KeyMode::WlHash),
            other => Err(Error::InvalidParameter(format!("unknown key mode {other:?}"))),
        }
    }
}

/// Canonical serialization of a rooted decorated neighborhood. The first
/// byte records the mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(Vec<u8>);

impl CanonicalKey {
    pub fn mode(&self) -> KeyMode {
        if self.0.first() == Some(&WL_TAG) {
            KeyMode::WlHash
        } else {
            KeyMode::Exact
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.0.len() * 2);
        for b in &self.0 {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        if hex.len() % 2 != 0 || hex.is_empty() {
            return None;
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).ok())
            .collect::<Option<Vec<_>>>()?;
        matches!(bytes[0], EXACT_TAG | WL_TAG).then_some(CanonicalKey(bytes))
    }

    /// Stable 64-bit digest, handy for report columns.
    pub fn digest(&self) -> u64 {
        let words: Vec<u64> = self
            .0
            .chunks(8)
            .map(|c| {
                let mut w = [0u8; 8];
                w[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(w)
            })
            .collect();
        derive_seed(&words)
    }
}

pub fn canonical_key(n: &DecoratedRootedNeighborhood, mode: KeyMode) -> Result<CanonicalKey> {
    canonical_key_with_cap(n, mode, DEFAULT_EXACT_CAP)
}

pub fn canonical_key_with_cap(n: &DecoratedRootedNeighborhood, mode: KeyMode, cap: usize) -> Result<CanonicalKey> {
    match mode {
        KeyMode::Exact => {
            if n.node_count() > cap {
                return Err(Error::CanonicalCapExceeded {
                    nodes: n.node_count(),
                    cap,
                });
            }
            Ok(CanonicalKey(exact_certificate(n)))
        }
        KeyMode::WlHash => Ok(CanonicalKey(wl_hash(n))),
    }
}

fn adjacency(n: &DecoratedRootedNeighborhood) -> Vec<Vec<usize>> {
    (0..n.node_count()).map(|v| n.graph.neighbors(v).to_vec()).collect()
}

/// Replaces colors by their rank among distinct values.
fn compress<T: Ord + Clone>(keys: &[T]) -> (Vec<u32>, usize) {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    let colors = keys.iter().map(|k| sorted.binary_search(k).unwrap() as u32).collect();
    (colors, sorted.len())
}

/// Iterated refinement to the coarsest equitable partition finer than
/// `colors`. Colors stay ordered consistently with the input.
fn refine(adj: &[Vec<usize>], colors: &mut Vec<u32>) {
    let mut classes = {
        let mut c = colors.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    loop {
        let sigs: Vec<(u32, Vec<u32>)> = adj
            .iter()
            .enumerate()
            .map(|(v, nb)| {
                let mut s: Vec<u32> = nb.iter().map(|&w| colors[w]).collect();
                s.sort_unstable();
                (colors[v], s)
            })
            .collect();
        let (next, count) = compress(&sigs);
        *colors = next;
        if count == classes {
            return;
        }
        classes = count;
    }
}

fn are_twins(adj: &[Vec<usize>], u: usize, v: usize) -> bool {
    let a = adj[u].iter().filter(|&&w| w != v);
    let b = adj[v].iter().filter(|&&w| w != u);
    a.eq(b)
}

fn certificate(adj: &[Vec<usize>], states: &[NodeState], colors: &[u32]) -> Vec<u8> {
    let n = adj.len();
    let mut order = vec![0usize; n];
    for (v, &c) in colors.iter().enumerate() {
        order[c as usize] = v;
    }
    let mut out = Vec::with_capacity(2 + n + n * n / 16 + 1);
    out.push(EXACT_TAG);
    out.push(n as u8);
    out.extend(order.iter().map(|&v| states[v].index() as u8));
    let mut bits = vec![0u8; (n * n.saturating_sub(1) / 2).div_ceil(8)];
    let mut idx = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (u, v) = (order[i], order[j]);
            if adj[u].binary_search(&v).is_ok() {
                bits[idx / 8] |= 1 << (idx % 8);
            }
            idx += 1;
        }
    }
    out.extend(bits);
    out
}

fn search(adj: &[Vec<usize>], states: &[NodeState], mut colors: Vec<u32>, best: &mut Option<Vec<u8>>) {
    refine(adj, &mut colors);
    let n = adj.len();
    let mut size = vec![0usize; n];
    for &c in &colors {
        size[c as usize] += 1;
    }
    let Some(target) = (0..n).find(|&c| size[c] > 1) else {
        let cert = certificate(adj, states, &colors);
        if best.as_ref().is_none_or(|b| cert < *b) {
            *best = Some(cert);
        }
        return;
    };
    let cell: Vec<usize> = (0..n).filter(|&v| colors[v] as usize == target).collect();
    let mut chosen: Vec<usize> = Vec::new();
    for &v in &cell {
        if chosen.iter().any(|&u| are_twins(adj, u, v)) {
            continue;
        }
        chosen.push(v);
        let split: Vec<u32> = colors
            .iter()
            .enumerate()
            .map(|(w, &c)| if w == v { 2 * c } else { 2 * c + 1 })
            .collect();
        let (next, _) = compress(&split);
        search(adj, states, next, best);
    }
}

fn exact_certificate(n: &DecoratedRootedNeighborhood) -> Vec<u8> {
    let adj = adjacency(n);
    let init: Vec<(usize, usize)> = n.layer.iter().zip(&n.states).map(|(&l, s)| (l, s.index())).collect();
    let (colors, _) = compress(&init);
    let mut best = None;
    search(&adj, &n.states, colors, &mut best);
    best.expect("search visits at least one leaf")
}

fn wl_hash(n: &DecoratedRootedNeighborhood) -> Vec<u8> {
    let adj = adjacency(n);
    let mut colors: Vec<u64> = n
        .layer
        .iter()
        .zip(&n.states)
        .map(|(&l, s)| derive_seed(&[1, l as u64, s.index() as u64]))
        .collect();
    for _ in 0..=n.radius {
        colors = adj
            .iter()
            .enumerate()
            .map(|(v, nb)| {
                let mut words: Vec<u64> = nb.iter().map(|&w| colors[w]).collect();
                words.sort_unstable();
                words.insert(0, colors[v]);
                derive_seed(&words)
            })
            .collect();
    }
    let mut all = colors.clone();
    all.sort_unstable();
    all.insert(0, colors[0]);
    all.insert(0, n.node_count() as u64);
    let h = derive_seed(&all);
    let mut out = vec![WL_TAG];
    out.extend_from_slice(&h.to_le_bytes());
    out
}

#[derive(Clone, Debug)]
pub struct CensusEntry {
    pub count: usize,
    pub representative: DecoratedRootedNeighborhood,
}

/// Probability mass over neighborhood classes at a fixed radius. Masses are
/// kept as integer counts over a common total.
#[derive(Clone, Debug)]
pub struct NeighborhoodDistribution {
    radius: usize,
    mode: KeyMode,
    total: usize,
    entries: BTreeMap<CanonicalKey, CensusEntry>,
}

impl NeighborhoodDistribution {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self, key: &CanonicalKey) -> f64 {
        self.entries
            .get(key)
            .map_or(0.0, |e| e.count as f64 / self.total as f64)
    }

    pub fn count(&self, key: &CanonicalKey) -> usize {
        self.entries.get(key).map_or(0, |e| e.count)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CanonicalKey, &CensusEntry)> {
        self.entries.iter()
    }

    /// `(key, mass)` pairs in key order.
    pub fn masses(&self) -> Vec<(CanonicalKey, f64)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.count as f64 / self.total as f64))
            .collect()
    }

    /// Pools counts with another census of equal radius and mode.
    pub fn merge(&mut self, other: &NeighborhoodDistribution) -> Result<()> {
        check_compatible(self, other)?;
        self.total += other.total;
        for (k, e) in &other.entries {
            self.entries
                .entry(k.clone())
                .and_modify(|x| x.count += e.count)
                .or_insert_with(|| e.clone());
        }
        Ok(())
    }

    /// CSV with columns `key_hex,mass,count,radius,representative`. The
    /// representative is the edge-list serialization (root = node 0) with
    /// line breaks written as `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key_hex,mass,count,radius,representative\n");
        for (k, e) in &self.entries {
            let rep = write_edge_list(&e.representative.graph, Some(&e.representative.decoration()));
            let rep = rep.trim_end().replace('\n', ";");
            let _ = writeln!(
                out,
                "{},{:.17e},{},{},{}",
                k.to_hex(),
                e.count as f64 / self.total as f64,
                e.count,
                self.radius,
                rep
            );
        }
        out
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("key_hex,mass,count,radius,representative") {
            return Err(Error::parse(origin, "missing census header"));
        }
        let mut entries = BTreeMap::new();
        let mut radius = None;
        let mut mode = None;
        let mut total = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.splitn(5, ',').collect();
            if cols.len() != 5 {
                return Err(Error::parse(origin, format!("bad census row {line:?}")));
            }
            let key = CanonicalKey::from_hex(cols[0]).ok_or_else(|| Error::parse(origin, "bad key hex"))?;
            let count: usize = cols[2].parse().map_err(|_| Error::parse(origin, "bad count"))?;
            let r: usize = cols[3].parse().map_err(|_| Error::parse(origin, "bad radius"))?;
            if radius.is_some_and(|x| x != r) {
                return Err(Error::parse(origin, "mixed radii"));
            }
            radius = Some(r);
            mode = Some(key.mode());
            let (g, deco) = parse_edge_list(&cols[4].replace(';', "\n"), origin)?;
            let deco = deco.ok_or_else(|| Error::parse(origin, "representative without states"))?;
            let representative = extract_neighborhood(&g, &deco, 0, r)?;
            total += count;
            entries.insert(key, CensusEntry { count, representative });
        }
        Ok(NeighborhoodDistribution {
            radius: radius.unwrap_or(0),
            mode: mode.unwrap_or(KeyMode::Exact),
            total,
            entries,
        })
    }
}

fn check_compatible(a: &NeighborhoodDistribution, b: &NeighborhoodDistribution) -> Result<()> {
    if a.radius != b.radius {
        return Err(Error::RadiusMismatch(a.radius, b.radius));
    }
    if a.mode != b.mode {
        return Err(Error::ModeMismatch);
    }
    Ok(())
}

/// Distribution of the radius-`k` neighborhood of a uniformly chosen root.
pub fn empirical_distribution(g: &Graph, deco: &Decoration, k: usize, mode: KeyMode) -> Result<NeighborhoodDistribution> {
    deco.check_len(g)?;
    let mut entries: BTreeMap<CanonicalKey, CensusEntry> = BTreeMap::new();
    for root in 0..g.node_count() {
        let nb = extract_neighborhood(g, deco, root, k)?;
        let key = canonical_key(&nb, mode)?;
        match entries.get_mut(&key) {
            Some(e) => e.count += 1,
            None => {
                entries.insert(key, CensusEntry { count: 1, representative: nb });
            }
        }
    }
    Ok(NeighborhoodDistribution {
        radius: k,
        mode,
        total: g.node_count(),
        entries,
    })
}

/// Total variation distance `½ Σ |a − b|` over the union of keys.
pub fn tv_distance(a: &NeighborhoodDistribution, b: &NeighborhoodDistribution) -> Result<f64> {
    check_compatible(a, b)?;
    let mut sum = 0.0;
    for (k, _) in a.iter() {
        sum += (a.mass(k) - b.mass(k)).abs();
    }
    for (k, _) in b.iter() {
        if !a.entries.contains_key(k) {
            sum += b.mass(k);
        }
    }
    Ok(0.5 * sum)
}

/// Empirical root-degree distribution, indexed by degree.
pub fn degree_distribution(g: &Graph) -> Vec<f64> {
    let degs = g.degrees();
    let max = degs.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0.0; max + 1];
    for d in degs {
        hist[d] += 1.0;
    }
    let n = g.node_count() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    hist
}

/// TV distance between a degree histogram and Poisson(`lambda`) on bins
/// `0..=max_degree` plus one tail bin for larger degrees.
pub fn poisson_tv(hist: &[f64], lambda: f64, max_degree: usize) -> f64 {
    let mut pmf = (-lambda).exp();
    let mut sum = 0.0;
    let mut emp_head = 0.0;
    let mut poi_head = 0.0;
    for d in 0..=max_degree {
        if d > 0 {
            pmf *= lambda / d as f64;
        }
        let e = hist.get(d).copied().unwrap_or(0.0);
        sum += (e - pmf).abs();
        emp_head += e;
        poi_head += pmf;
    }
    sum += ((1.0 - emp_head) - (1.0 - poi_head)).abs();
    0.5 * sum
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LwcRow {
    pub n: usize,
    pub keys: usize,
    /// TV to the census at the largest N of the sweep.
    pub tv_to_reference: f64,
    /// TV to the census at the next N of the sweep.
    pub tv_to_next: Option<f64>,
}

/// Pooled radius-`k` censuses of undecorated (all-susceptible) graphs over
/// seeds, for each N, compared against the largest N.
pub fn lwc_sweep(
    family: impl Fn(usize, u64) -> GraphSpec,
    n_list: &[usize],
    k: usize,
    seeds: &[u64],
    mode: KeyMode,
) -> Result<Vec<LwcRow>> {
    if n_list.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParameter("lwc sweep needs at least one N and one seed".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("N list must be strictly increasing".into()));
    }
    let mut censuses = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut pooled: Option<NeighborhoodDistribution> = None;
        for &seed in seeds {
            let g = crate::graph::generate(&family(n, seed))?;
            let deco = Decoration::uniform(g.node_count(), NodeState::Susceptible);
            let c = empirical_distribution(&g, &deco, k, mode)?;
            match pooled.as_mut() {
                Some(p) => p.merge(&c)?,
                None => pooled = Some(c),
            }
        }
        censuses.push(pooled.unwrap());
    }
    let reference = censuses.last().unwrap();
    let mut rows = Vec::new();
    for (i, c) in censuses.iter().enumerate() {
        rows.push(LwcRow {
            n: n_list[i],
            keys: c.len(),
            tv_to_reference: tv_distance(c, reference)?,
            tv_to_next: censuses.get(i + 1).map(|next| tv_distance(c, next)).transpose()?,
        });
    }
    Ok(rows)
}
