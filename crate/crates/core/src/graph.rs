//! Undirected simple graphs, deterministic generators and rooted
//! neighborhood extraction.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epidemic state of a single node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeState {
    Susceptible,
    Infected,
    Recovered,
    /// Immune like `Recovered`; only the reward tells them apart.
    Vaccinated,
}

impl NodeState {
    pub const ALL: [NodeState; 4] = [
        NodeState::Susceptible,
        NodeState::Infected,
        NodeState::Recovered,
        NodeState::Vaccinated,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> NodeState {
        Self::ALL[i]
    }

    pub fn as_char(self) -> char {
        match self {
            NodeState::Susceptible => 'S',
            NodeState::Infected => 'I',
            NodeState::Recovered => 'R',
            NodeState::Vaccinated => 'V',
        }
    }

    pub fn from_char(c: char) -> Option<NodeState> {
        match c {
            'S' => Some(NodeState::Susceptible),
            'I' => Some(NodeState::Infected),
            'R' => Some(NodeState::Recovered),
            'V' => Some(NodeState::Vaccinated),
            _ => None,
        }
    }

    /// Recovered and vaccinated nodes never change state again.
    pub fn is_absorbing(self) -> bool {
        matches!(self, NodeState::Recovered | NodeState::Vaccinated)
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Per-node state labels for a graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decoration(pub Vec<NodeState>);

impl Decoration {
    pub fn uniform(n: usize, state: NodeState) -> Self {
        Decoration(vec![state; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn states(&self) -> &[NodeState] {
        &self.0
    }

    pub fn count(&self, state: NodeState) -> usize {
        self.0.iter().filter(|&&s| s == state).count()
    }

    /// Counts in `S, I, R, V` order.
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for s in &self.0 {
            c[s.index()] += 1;
        }
        c
    }

    pub fn check_len(&self, g: &Graph) -> Result<()> {
        if self.len() != g.node_count() {
            return Err(Error::DimensionMismatch {
                expected: g.node_count(),
                got: self.len(),
            });
        }
        Ok(())
    }

    /// Parses a whitespace-free string such as `"ISSRV"`.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars().map(NodeState::from_char).collect::<Option<Vec<_>>>().map(Decoration)
    }
}

impl fmt::Display for Decoration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

/// Undirected simple graph in compressed adjacency form. Neighbor lists are
/// sorted, symmetric and free of self-loops and duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    tag: String,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops are rejected; duplicate
    /// edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], tag: impl Into<String>) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::NodeOutOfRange {
                    node: u.max(v),
                    node_count: n,
                });
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop at node {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self::from_adjacency(adj, tag))
    }

    fn from_adjacency(mut adj: Vec<Vec<usize>>, tag: impl Into<String>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Graph {
            offsets,
            targets,
            tag: tag.into(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count())
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|v| self.degree(v)).collect()
    }

    /// Raw CSR arrays, used by message passing.
    pub fn csr(&self) -> (&[usize], &[usize]) {
        (&self.offsets, &self.targets)
    }

    /// Connected component id per node, numbered in order of first node.
    pub fn components(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u) {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// BFS distances from `root`; unreachable nodes get `None`.
    pub fn distances_from(&self, root: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[root] = Some(0);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Relabels node `v` to `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Graph {
        let n = self.node_count();
        let mut adj = vec![Vec::new(); n];
        for u in 0..n {
            for &v in self.neighbors(u) {
                adj[perm[u]].push(perm[v]);
            }
        }
        Graph::from_adjacency(adj, self.tag.clone())
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                node: v,
                node_count: self.node_count(),
            });
        }
        Ok(())
    }
}

/// Applies the relabeling `v -> perm[v]` to a decoration.
pub fn permute_decoration(deco: &Decoration, perm: &[usize]) -> Decoration {
    let mut out = deco.0.clone();
    for (v, &s) in deco.0.iter().enumerate() {
        out[perm[v]] = s;
    }
    Decoration(out)
}

/// Graph family and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Grid { width: usize, height: usize },
    /// `count` disjoint cliques of `size` nodes each.
    Cliques { count: usize, size: usize },
    /// G(N, d/N) with mean degree `d`.
    Er { n: usize, d: f64 },
    Path { n: usize },
    Cycle { n: usize },
    /// Uniform random recursive tree.
    Tree { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    #[serde(flatten)]
    pub kind: GraphKind,
    #[serde(default)]
    pub seed: u64,
}

impl GraphSpec {
    pub fn new(kind: GraphKind, seed: u64) -> Self {
        GraphSpec { kind, seed }
    }
}

/// Builds the graph described by `spec`. Deterministic in the seed.
pub fn generate(spec: &GraphSpec) -> Result<Graph> {
    match spec.kind {
        GraphKind::Grid { width, height } => {
            if width == 0 || height == 0 {
                return Err(Error::InvalidParameter("grid width and height must be >= 1".into()));
            }
            let id = |x: usize, y: usize| y * width + x;
            let mut edges = Vec::new();
            for y in 0..height {
                for x in 0..width {
                    if x + 1 < width {
                        edges.push((id(x, y), id(x + 1, y)));
                    }
                    if y + 1 < height {
                        edges.push((id(x, y), id(x, y + 1)));
                    }
                }
            }
            Graph::from_edges(width * height, &edges, format!("grid{width}x{height}"))
        }
        GraphKind::Cliques { count, size } => {
            if count == 0 || size == 0 {
                return Err(Error::InvalidParameter("clique count and size must be >= 1".into()));
            }
            let mut edges = Vec::new();
            for c in 0..count {
                let base = c * size;
                for i in 0..size {
                    for j in i + 1..size {
                        edges.push((base + i, base + j));
                    }
                }
            }
            let tag = if size == 3 {
                format!("triangles{count}")
            } else {
                format!("cliques{count}x{size}")
            };
            Graph::from_edges(count * size, &edges, tag)
        }
        GraphKind::Er { n, d } => erdos_renyi(n, d, spec.seed),
        GraphKind::Path { n } => {
            if n == 0 {
                return Err(Error::InvalidParameter("path needs n >= 1".into()));
            }
            let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            Graph::from_edges(n, &edges, format!("path{n}"))
        }
        GraphKind::Cycle { n } => {
            if n < 3 {
                return Err(Error::InvalidParameter("cycle needs n >= 3".into()));
            }
            let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            Graph::from_edges(n, &edges, format!("cycle{n}"))
        }
        GraphKind::Tree { n } => {
            if n == 0 {
                return Err(Error::InvalidParameter("tree needs n >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let edges: Vec<_> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
            Graph::from_edges(n, &edges, format!("tree{n}"))
        }
    }
}

/// Erdős–Rényi G(n, d/n). Candidate pairs are visited in the fixed order
/// (0,1), (0,2), (1,2), (0,3), ... and each is kept independently with
/// probability p; geometric skips jump directly between kept pairs.
fn erdos_renyi(n: usize, d: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("er needs n >= 1".into()));
    }
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("er mean degree must be >= 0, got {d}")));
    }
    let p = d / n as f64;
    if p > 1.0 {
        return Err(Error::InvalidParameter(format!("er edge probability d/N = {p} exceeds 1")));
    }
    let mut edges = Vec::new();
    if p >= 1.0 {
        for v in 1..n {
            for w in 0..v {
                edges.push((w, v));
            }
        }
    } else if p > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_q = (1.0 - p).ln();
        let mut v: usize = 1;
        let mut w: i64 = -1;
        while v < n {
            let r: f64 = rng.random();
            let skip = ((1.0 - r).ln() / log_q).floor() as i64;
            w += 1 + skip;
            while v < n && w >= v as i64 {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((w as usize, v));
            }
        }
    }
    Graph::from_edges(n, &edges, "er")
}

/// Induced subgraph of all nodes within distance `radius` of a root, with
/// nodes relabeled in BFS order so the root is local node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoratedRootedNeighborhood {
    pub graph: Graph,
    pub layer: Vec<usize>,
    pub states: Vec<NodeState>,
    pub radius: usize,
    /// Original node ids, indexed by local id.
    pub origin: Vec<usize>,
}

impl DecoratedRootedNeighborhood {
    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    pub fn decoration(&self) -> Decoration {
        Decoration(self.states.clone())
    }
}

pub fn extract_neighborhood(
    g: &Graph,
    deco: &Decoration,
    root: usize,
    radius: usize,
) -> Result<DecoratedRootedNeighborhood> {
    g.check_node(root)?;
    deco.check_len(g)?;
    let mut local = vec![usize::MAX; g.node_count()];
    let mut origin = vec![root];
    let mut layer = vec![0];
    local[root] = 0;
    let mut head = 0;
    while head < origin.len() {
        let u = origin[head];
        let du = layer[head];
        head += 1;
        if du == radius {
            continue;
        }
        for &w in g.neighbors(u) {
            if local[w] == usize::MAX {
                local[w] = origin.len();
                origin.push(w);
                layer.push(du + 1);
            }
        }
    }
    let mut adj = vec![Vec::new(); origin.len()];
    for (lu, &u) in origin.iter().enumerate() {
        for &w in g.neighbors(u) {
            let lw = local[w];
            if lw != usize::MAX {
                adj[lu].push(lw);
            }
        }
    }
    let states = origin.iter().map(|&u| deco.0[u]).collect();
    Ok(DecoratedRootedNeighborhood {
        graph: Graph::from_adjacency(adj, format!("ball{radius}")),
        layer,
        states,
        radius,
        origin,
    })
}

/// Writes the edge-list text format: `N <n>`, one `u v` line per edge, then an
/// optional `states ...` line.
pub fn write_edge_list(g: &Graph, deco: Option<&Decoration>) -> String {
    let mut out = format!("N {}\n", g.node_count());
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    if let Some(d) = deco {
        out.push_str("states");
        for s in &d.0 {
            out.push(' ');
            out.push(s.as_char());
        }
        out.push('\n');
    }
    out
}

pub fn parse_edge_list(text: &str, origin: &Path) -> Result<(Graph, Option<Decoration>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::parse(origin, "empty file"))?;
    let n: usize = header
        .strip_prefix("N ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(origin, format!("bad header line {header:?}")))?;
    let mut edges = Vec::new();
    let mut deco = None;
    for line in lines {
        if let Some(rest) = line.strip_prefix("states") {
            let states = rest
                .split_whitespace()
                .map(|tok| {
                    let mut chars = tok.chars();
                    match (chars.next().and_then(NodeState::from_char), chars.next()) {
                        (Some(s), None) => Ok(s),
                        _ => Err(Error::parse(origin, format!("bad state token {tok:?}"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if states.len() != n {
                return Err(Error::parse(origin, format!("expected {n} states, found {}", states.len())));
            }
            deco = Some(Decoration(states));
            continue;
        }
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a.parse::<usize>(), b.parse::<usize>()),
            _ => return Err(Error::parse(origin, format!("bad edge line {line:?}"))),
        };
        match (u, v) {
            (Ok(u), Ok(v)) => edges.push((u, v)),
            _ => return Err(Error::parse(origin, format!("bad edge line {line:?}"))),
        }
    }
    let g = Graph::from_edges(n, &edges, "file")?;
    Ok((g, deco))
}

pub fn read_edge_list(path: &Path) -> Result<(Graph, Option<Decoration>)> {
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, path)
}
