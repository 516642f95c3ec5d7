//! k-coloring as a feasibility QUBO, its Ising image, and exhaustive oracles.
//!
//! Energy convention: `E(x) = Σ_i Q_ii x_i + Σ_{i<j} Q_ij x_i x_j + offset`,
//! with `Q` stored upper-triangular and the diagonal holding linear terms.
//! The coloring QUBO
//!
//! ```text
//! E(x) = P · Σ_v (1 - Σ_c x_{v,c})² + P · Σ_{(u,v)∈E} Σ_c x_{u,c} x_{v,c}
//! ```
//!
//! expands to `Q_{vc,vc} = -P`, `Q_{vc,vc'} = 2P` (`c < c'`),
//! `Q_{uc,vc} = P` per edge and `offset = P · |V|`, so proper one-hot
//! colorings sit at exactly zero.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::graphs::Graph;

pub const DEFAULT_PENALTY: f64 = 1.0;
pub const BRUTE_FORCE_MAX_VARS: usize = 24;
pub const ISING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    graph: Graph,
    k: usize,
    penalty: f64,
    linear: Vec<f64>,
    /// `(i, j, Q_ij)` with `i < j`, sorted.
    quadratic: Vec<(usize, usize, f64)>,
    offset: f64,
}

/// QUBO interchange file: `{"n_vars", "offset", "entries", "var_map"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboFile {
    pub n_vars: usize,
    pub offset: f64,
    pub entries: Vec<(usize, usize, f64)>,
    pub var_map: Vec<(usize, usize, usize)>,
}

/// Outcome of decoding a bitstring as a one-hot coloring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Coloring(Vec<usize>),
    /// First vertex whose color bits are not exactly one-hot.
    OneHotViolation { vertex: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Bits,
    pub energy: f64,
    pub valid: bool,
}

pub fn build_coloring_qubo(g: &Graph, k: usize, penalty: f64) -> Result<QuboProblem> {
    if k == 0 {
        return Err(Error::param("k", "need at least one color"));
    }
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::param("penalty", format!("must be positive, got {penalty}")));
    }
    let n_vars = g.n_vertices() * k;
    let idx = |v: usize, c: usize| v * k + c;
    let mut linear = vec![0.0; n_vars];
    let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in 0..g.n_vertices() {
        for c in 0..k {
            linear[idx(v, c)] -= penalty;
            for c2 in c + 1..k {
                *quad.entry((idx(v, c), idx(v, c2))).or_default() += 2.0 * penalty;
            }
        }
    }
    for &(u, v) in g.edges() {
        for c in 0..k {
            *quad.entry((idx(u, c), idx(v, c))).or_default() += penalty;
        }
    }
    Ok(QuboProblem {
        graph: g.clone(),
        k,
        penalty,
        linear,
        quadratic: quad.into_iter().map(|((i, j), q)| (i, j, q)).collect(),
        offset: penalty * g.n_vertices() as f64,
    })
}

impl QuboProblem {
    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[(usize, usize, f64)] {
        &self.quadratic
    }

    pub fn var_index(&self, vertex: usize, color: usize) -> usize {
        vertex * self.k + color
    }

    /// `(vertex, color)` of a variable index.
    pub fn var_of(&self, index: usize) -> (usize, usize) {
        (index / self.k, index % self.k)
    }

    /// All nonzero upper-triangular entries, diagonal included, row-major.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<_> = self
            .linear
            .iter()
            .enumerate()
            .filter(|(_, &q)| q != 0.0)
            .map(|(i, &q)| (i, i, q))
            .chain(self.quadratic.iter().copied())
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    /// One-hot encoding of a vertex coloring.
    pub fn encode(&self, coloring: &[usize]) -> Result<Bits> {
        if coloring.len() != self.graph.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: self.graph.n_vertices(),
                actual: coloring.len(),
            });
        }
        let mut bits = Bits::zeros(self.n_vars());
        for (v, &c) in coloring.iter().enumerate() {
            if c >= self.k {
                return Err(Error::param("coloring", format!("color {c} >= k = {}", self.k)));
            }
            bits.set(self.var_index(v, c), true);
        }
        Ok(bits)
    }

    fn check_len(&self, bits: &Bits) -> Result<()> {
        if bits.len() != self.n_vars() {
            return Err(Error::LengthMismatch {
                expected: self.n_vars(),
                actual: bits.len(),
            });
        }
        Ok(())
    }

    pub fn energy(&self, bits: &Bits) -> Result<f64> {
        self.check_len(bits)?;
        Ok(self.energy_unchecked(bits.as_slice()))
    }

    pub(crate) fn energy_unchecked(&self, x: &[u8]) -> f64 {
        let lin: f64 = self
            .linear
            .iter()
            .zip(x)
            .filter(|(_, &b)| b == 1)
            .map(|(q, _)| q)
            .sum();
        let quad: f64 = self
            .quadratic
            .iter()
            .filter(|&&(i, j, _)| x[i] == 1 && x[j] == 1)
            .map(|&(_, _, q)| q)
            .sum();
        lin + quad + self.offset
    }

    pub fn decode(&self, bits: &Bits) -> Result<Decoded> {
        self.check_len(bits)?;
        let mut coloring = Vec::with_capacity(self.graph.n_vertices());
        for v in 0..self.graph.n_vertices() {
            let mut set = (0..self.k).filter(|&c| bits.get(self.var_index(v, c)));
            match (set.next(), set.next()) {
                (Some(c), None) => coloring.push(c),
                _ => return Ok(Decoded::OneHotViolation { vertex: v }),
            }
        }
        Ok(Decoded::Coloring(coloring))
    }

    /// True iff `bits` is one-hot per vertex and no edge is monochromatic.
    pub fn validate(&self, bits: &Bits) -> Result<bool> {
        Ok(match self.decode(bits)? {
            Decoded::Coloring(c) => self.graph.is_proper_coloring(&c),
            Decoded::OneHotViolation { .. } => false,
        })
    }

    pub fn sample(&self, bits: Bits) -> Result<Sample> {
        let energy = self.energy(&bits)?;
        let valid = self.validate(&bits)?;
        Ok(Sample { bits, energy, valid })
    }

    pub fn to_file(&self) -> QuboFile {
        QuboFile {
            n_vars: self.n_vars(),
            offset: self.offset,
            entries: self.entries(),
            var_map: (0..self.n_vars())
                .map(|i| {
                    let (v, c) = self.var_of(i);
                    (v, c, i)
                })
                .collect(),
        }
    }

    /// Rebuilds a problem from its file form and the source graph. The
    /// variable map must follow the `vertex * k + color` layout.
    pub fn from_file(file: &QuboFile, graph: &Graph) -> Result<QuboProblem> {
        let n = graph.n_vertices();
        if file.n_vars == 0 || file.n_vars % n != 0 {
            return Err(Error::Config(format!(
                "n_vars {} is not a multiple of the vertex count {n}",
                file.n_vars
            )));
        }
        let k = file.n_vars / n;
        for &(v, c, i) in &file.var_map {
            if v >= n || c >= k || i != v * k + c {
                return Err(Error::Config(format!("var_map entry ({v}, {c}, {i}) is not canonical")));
            }
        }
        let mut linear = vec![0.0; file.n_vars];
        let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, q) in &file.entries {
            if i > j || j >= file.n_vars {
                return Err(Error::Config(format!("entry ({i}, {j}) is not upper-triangular in range")));
            }
            if i == j {
                linear[i] += q;
            } else {
                *quad.entry((i, j)).or_default() += q;
            }
        }
        let penalty = linear.iter().map(|q| -q).fold(0.0, f64::max);
        Ok(QuboProblem {
            graph: graph.clone(),
            k,
            penalty,
            linear,
            quadratic: quad.into_iter().map(|((i, j), q)| (i, j, q)).collect(),
            offset: file.offset,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file()).map_err(|source| Error::Json {
            context: "qubo".into(),
            source,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Spin-form energy `Σ h_i s_i + Σ_{i<j} J_ij s_i s_j + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingProblem {
    pub h: Vec<f64>,
    pub j: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

impl IsingProblem {
    pub fn n_spins(&self) -> usize {
        self.h.len()
    }

    pub fn energy(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.n_spins() {
            return Err(Error::LengthMismatch {
                expected: self.n_spins(),
                actual: spins.len(),
            });
        }
        let z: Vec<f64> = spins.iter().map(|&s| s as f64).collect();
        Ok(self.energy_continuous(&z))
    }

    /// Multilinear extension of the spin energy to `z_i ∈ [-1, 1]`.
    pub fn energy_continuous(&self, z: &[f64]) -> f64 {
        let field: f64 = self.h.iter().zip(z).map(|(h, z)| h * z).sum();
        let coupling: f64 = self.j.iter().map(|&(a, b, j)| j * z[a] * z[b]).sum();
        field + coupling + self.offset
    }

    /// Per-spin neighbor lists `(other, J)` for local-field updates.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_spins()];
        for &(a, b, j) in &self.j {
            adj[a].push((b, j));
            adj[b].push((a, j));
        }
        adj
    }
}

/// Substitutes `x_i = (1 - s_i) / 2`.
pub fn qubo_to_ising(q: &QuboProblem) -> IsingProblem {
    let mut h = vec![0.0; q.n_vars()];
    let mut offset = q.offset;
    for (i, &qi) in q.linear.iter().enumerate() {
        h[i] -= qi / 2.0;
        offset += qi / 2.0;
    }
    let mut j = Vec::with_capacity(q.quadratic.len());
    for &(a, b, qab) in &q.quadratic {
        j.push((a, b, qab / 4.0));
        h[a] -= qab / 4.0;
        h[b] -= qab / 4.0;
        offset += qab / 4.0;
    }
    IsingProblem { h, j, offset }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub min_energy: f64,
    /// Ground bitstrings, sorted lexicographically.
    pub ground: Vec<Bits>,
}

/// Exhaustive minimization over all `2^n` assignments. Energies within
/// `1e-9` of the minimum count as ground.
pub fn brute_force_solve(q: &QuboProblem) -> Result<BruteForce> {
    let n = q.n_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(Error::SizeLimit {
            what: "brute force",
            n_vars: n,
            limit: BRUTE_FORCE_MAX_VARS,
        });
    }
    let mut min_energy = f64::INFINITY;
    let mut ground = Vec::new();
    let mut x = vec![0u8; n];
    for index in 0..(1usize << n) {
        for (j, b) in x.iter_mut().enumerate() {
            *b = ((index >> j) & 1) as u8;
        }
        let e = q.energy_unchecked(&x);
        if e < min_energy - 1e-9 {
            min_energy = e;
            ground.clear();
        }
        if (e - min_energy).abs() <= 1e-9 {
            ground.push(index);
        }
    }
    let mut ground: Vec<Bits> = ground.into_iter().map(|i| Bits::from_index(i, n)).collect();
    ground.sort();
    Ok(BruteForce { min_energy, ground })
}
