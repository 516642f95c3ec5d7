//! Problem instances: undirected simple graphs, Erdős–Rényi sampling and the
//! largest-first greedy coloring that fixes the color budget `k`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform};

/// Undirected simple graph with canonically ordered edges.
///
/// Edges are stored once as `(min, max)` and kept sorted, so two graphs with
/// the same edge set compare and serialize identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        Graph::new(file.n, file.edges.into_iter().map(|[u, v]| (u, v)))
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        GraphFile {
            n: g.n_vertices,
            edges: g.edges.into_iter().map(|(u, v)| [u, v]).collect(),
        }
    }
}

impl Graph {
    /// Builds a graph, canonicalizing edge order and dropping duplicates.
    /// Self-loops and out-of-range endpoints are rejected.
    pub fn new(n_vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::param("n_vertices", "graph needs at least one vertex"));
        }
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::param("edges", format!("self-loop at vertex {u}")));
            }
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::param(
                    "edges",
                    format!("edge ({u}, {v}) has an endpoint >= {n_vertices}"),
                ));
            }
            canonical.push((u.min(v), u.max(v)));
        }
        canonical.sort_unstable();
        canonical.dedup();
        Ok(Graph {
            n_vertices,
            edges: canonical,
        })
    }

    pub fn empty(n_vertices: usize) -> Result<Self> {
        Graph::new(n_vertices, [])
    }

    /// Path (open chain) on `n` vertices: `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Result<Self> {
        Graph::new(n, (1..n).map(|v| (v - 1, v)))
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::param("n", "a simple cycle needs at least 3 vertices"));
        }
        Graph::new(n, (0..n).map(|v| (v, (v + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Graph::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_vertices];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// True iff no edge joins two vertices of the same color.
    pub fn is_proper_coloring(&self, coloring: &[usize]) -> bool {
        coloring.len() == self.n_vertices
            && self.edges.iter().all(|&(u, v)| coloring[u] != coloring[v])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|source| Error::Json {
            context: "graph".into(),
            source,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Samples G(n, p): each of the `n(n-1)/2` candidate pairs, visited in
/// lexicographic order, is kept when a fresh uniform draw is below `p`.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("edge probability {p} not in [0, 1]")));
    }
    if n == 0 {
        return Err(Error::param("n", "graph needs at least one vertex"));
    }
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if uniform(&mut rng) < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges)
}

/// Result of the greedy coloring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyColoring {
    pub k: usize,
    pub coloring: Vec<usize>,
}

/// Largest-first greedy coloring.
///
/// Vertices are visited by non-increasing degree (ties by ascending index);
/// each takes the smallest color not used by an already-colored neighbor.
pub fn greedy_color_largest_first(g: &Graph) -> GreedyColoring {
    let deg = g.degrees();
    let adj = g.adjacency();
    let mut order: Vec<usize> = (0..g.n_vertices()).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));

    let mut coloring: Vec<Option<usize>> = vec![None; g.n_vertices()];
    let mut used = Vec::new();
    for &v in &order {
        used.clear();
        used.resize(adj[v].len() + 1, false);
        for &u in &adj[v] {
            if let Some(c) = coloring[u] {
                if c < used.len() {
                    used[c] = true;
                }
            }
        }
        let color = used.iter().position(|&taken| !taken).unwrap();
        coloring[v] = Some(color);
    }
    let coloring: Vec<usize> = coloring.into_iter().map(Option::unwrap).collect();
    let k = coloring.iter().max().map_or(1, |&m| m + 1);
    GreedyColoring { k, coloring }
}
