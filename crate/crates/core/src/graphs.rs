//! Simple undirected graphs: Chung-Lu sampling, edge-list I/O and the
//! partition of nodes into degree classes.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::degree::DegreeDistribution;
use crate::error::{Error, Result};

/// Simple undirected graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
}

impl Graph {
    /// Builds a graph on `n` nodes, dropping self-loops and duplicates.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::param(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                continue;
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, node: usize) -> u32 {
        self.adjacency[node].len() as u32
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.adjacency.iter().map(|a| a.len() as u32).collect()
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            list.iter()
                .filter(move |&&v| (u as u32) < v)
                .map(move |&v| (u as u32, v))
        })
    }

    /// Empirical degree law; isolated nodes are counted separately.
    pub fn degree_distribution(&self) -> Result<DegreeDistribution> {
        DegreeDistribution::from_degrees(self.degrees())
    }

    /// Verifies symmetry, absence of loops and duplicates, and sortedness.
    pub fn check_invariants(&self) -> Result<()> {
        for (u, list) in self.adjacency.iter().enumerate() {
            for w in list.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::param(format!("node {u}: adjacency not strictly sorted")));
                }
            }
            for &v in list {
                if v as usize == u {
                    return Err(Error::param(format!("self-loop at {u}")));
                }
                if self.adjacency[v as usize].binary_search(&(u as u32)).is_err() {
                    return Err(Error::param(format!("edge ({u}, {v}) not symmetric")));
                }
            }
        }
        Ok(())
    }

    /// Relabels node `i` as `labels[i]`; `labels` must be a permutation.
    pub fn permuted(&self, labels: &[u32]) -> Result<Self> {
        if labels.len() != self.node_count() {
            return Err(Error::dims("permutation length differs from node count"));
        }
        let edges: Vec<(u32, u32)> = self
            .edges()
            .map(|(u, v)| (labels[u as usize], labels[v as usize]))
            .collect();
        Self::from_edges(self.node_count(), edges)
    }
}

/// Samples a Chung-Lu graph: each pair `{i, j}` is an edge independently
/// with probability `min(1, w_i w_j / Σ w)`.
///
/// Uses the weight-sorted skipping sampler, expected time `O(n + m)`.
pub fn sample_chung_lu(weights: &[f64], rng_seed: u64) -> Result<Graph> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::param(format!("Chung-Lu weights must be non-negative, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::param("Chung-Lu weights are all zero"));
    }
    let n = weights.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| weights[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut edges = Vec::new();
    for u in 0..n {
        let wu = sorted[u];
        if wu == 0.0 {
            break;
        }
        let mut v = u + 1;
        if v >= n {
            break;
        }
        let mut p = (wu * sorted[v] / total).min(1.0);
        while v < n && p > 0.0 {
            if p < 1.0 {
                let r: f64 = 1.0 - rng.random::<f64>();
                v += (r.ln() / (1.0 - p).ln()).floor() as usize;
            }
            if v < n {
                let q = (wu * sorted[v] / total).min(1.0);
                if rng.random::<f64>() < q / p {
                    edges.push((order[u] as u32, order[v] as u32));
                }
                p = q;
                v += 1;
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Chung-Lu graph whose weights are i.i.d. draws from `dist`.
pub fn sample_chung_lu_from(dist: &DegreeDistribution, n: usize, rng_seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::param("node count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng) as f64).collect();
    sample_chung_lu(&weights, rng_seed)
}

/// Graph read from an edge-list file together with the original identifier
/// of every compacted node id.
#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub node_ids: Vec<u64>,
}

/// Reads a whitespace-separated edge list (KONECT layout).
///
/// Lines whose first non-blank character is `%` or `#` are comments; fields
/// after the first two are ignored. Identifiers are compacted to `0..n` in
/// order of first appearance.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut index: HashMap<u64, u32> = HashMap::new();
    let mut node_ids = Vec::new();
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('%') || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected at least two fields".into(),
            });
        };
        let mut id = |tok: &str| -> Result<u32> {
            let raw: u64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("invalid node identifier {tok:?}"),
            })?;
            Ok(*index.entry(raw).or_insert_with(|| {
                node_ids.push(raw);
                (node_ids.len() - 1) as u32
            }))
        };
        let u = id(a)?;
        let v = id(b)?;
        edges.push((u, v));
    }
    let graph = Graph::from_edges(node_ids.len(), edges)?;
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph(path.display().to_string()));
    }
    Ok(LoadedGraph { graph, node_ids })
}

/// Writes one `u v` line per edge with `u < v`, preceded by a comment
/// header recording node and edge counts.
pub fn write_edge_list(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "% sym unweighted")?;
    writeln!(out, "% {} {} {}", graph.edge_count(), graph.node_count(), graph.node_count())?;
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Class label of a node relative to `k*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DegreeClass {
    Finite(u32),
    Infinite,
    Isolated,
}

impl DegreeClass {
    /// Row of this class in a per-class ensemble, `None` for isolated nodes.
    pub fn row(self, k_star: u32) -> Option<usize> {
        match self {
            DegreeClass::Finite(k) => Some(k as usize - 1),
            DegreeClass::Infinite => Some(k_star as usize),
            DegreeClass::Isolated => None,
        }
    }
}

impl fmt::Display for DegreeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegreeClass::Finite(k) => write!(f, "{k}"),
            DegreeClass::Infinite => f.write_str("inf"),
            DegreeClass::Isolated => f.write_str("isolated"),
        }
    }
}

/// Label for ensemble row `row` under threshold `k_star`.
pub fn row_label(row: usize, k_star: u32) -> String {
    if row == k_star as usize {
        "inf".to_string()
    } else {
        (row + 1).to_string()
    }
}

/// Assignment of every node to a degree class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPartition {
    pub k_star: u32,
    pub class_of: Vec<DegreeClass>,
    /// Sizes of rows `0..=k*` (classes `1..=k*`, then ∞).
    pub class_sizes: Vec<usize>,
    pub isolated: usize,
}

impl ClassPartition {
    pub fn row_of(&self, node: usize) -> Option<usize> {
        self.class_of[node].row(self.k_star)
    }

    pub fn rows(&self) -> usize {
        self.k_star as usize + 1
    }

    /// Fraction of non-isolated nodes in each class row.
    pub fn node_fractions(&self) -> Vec<f64> {
        let counted: usize = self.class_sizes.iter().sum();
        self.class_sizes
            .iter()
            .map(|&c| if counted == 0 { 0.0 } else { c as f64 / counted as f64 })
            .collect()
    }
}

pub fn partition_classes(g: &Graph, k_star: u32) -> Result<ClassPartition> {
    if k_star == 0 {
        return Err(Error::param("k_star must be at least 1"));
    }
    let mut class_sizes = vec![0usize; k_star as usize + 1];
    let mut isolated = 0;
    let class_of = g
        .degrees()
        .into_iter()
        .map(|d| {
            let c = match d {
                0 => DegreeClass::Isolated,
                d if d <= k_star => DegreeClass::Finite(d),
                _ => DegreeClass::Infinite,
            };
            match c.row(k_star) {
                Some(r) => class_sizes[r] += 1,
                None => isolated += 1,
            }
            c
        })
        .collect();
    Ok(ClassPartition {
        k_star,
        class_of,
        class_sizes,
        isolated,
    })
}
