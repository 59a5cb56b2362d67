//! Graph snapshots, class assignments and block-level sufficient statistics.
//!
//! Snapshots are dense directed adjacency matrices over a fixed node set with
//! no self-edges. Block matrices (`m`, `n`, densities) are stored row-major as
//! `k x k`; the vectorized form used by the state-space code stacks columns,
//! so block `(a, b)` maps to index `b * k + a`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Column-stacked index of block `(a, b)` in a `k x k` matrix.
#[inline]
pub fn vec_index(a: usize, b: usize, k: usize) -> usize {
    b * k + a
}

/// Inverse of [`vec_index`].
#[inline]
pub fn block_of(index: usize, k: usize) -> (usize, usize) {
    (index % k, index / k)
}

/// One directed graph observed at a single time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    node_count: usize,
    adjacency: Vec<bool>,
}

impl Snapshot {
    pub fn empty(node_count: usize) -> Self {
        Self {
            node_count,
            adjacency: vec![false; node_count * node_count],
        }
    }

    /// Builds a snapshot from directed edges. Duplicates collapse to a single edge.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut snapshot = Self::empty(node_count);
        for (i, j) in edges {
            snapshot.insert(i, j)?;
        }
        Ok(snapshot)
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        let n = self.node_count;
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "edge ({i}, {j}) out of range for node_count {n}"
            )));
        }
        if i == j {
            return Err(Error::InvalidArgument(format!("self-edge ({i}, {i})")));
        }
        self.adjacency[i * n + j] = true;
        Ok(())
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.node_count + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        let n = self.node_count;
        &self.adjacency[i * n..(i + 1) * n]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&w| w).count()
    }

    /// Directed edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.node_count;
        self.adjacency
            .iter()
            .enumerate()
            .filter(|(_, &w)| w)
            .map(move |(idx, _)| (idx / n, idx % n))
    }

    /// Adjacency as a dense `f64` matrix.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.node_count;
        nalgebra::DMatrix::from_fn(n, n, |i, j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
    }
}

/// Time-ordered snapshots sharing one node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotSequence {
    node_count: usize,
    snapshots: Vec<Snapshot>,
}

impl SnapshotSequence {
    pub fn new(node_count: usize, snapshots: Vec<Snapshot>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument("node_count must be positive".into()));
        }
        if let Some(bad) = snapshots.iter().position(|s| s.node_count != node_count) {
            return Err(Error::Dimension(format!(
                "snapshot {bad} has {} nodes, expected {node_count}",
                snapshots[bad].node_count
            )));
        }
        Ok(Self {
            node_count,
            snapshots,
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn get(&self, t: usize) -> Option<&Snapshot> {
        self.snapshots.get(t)
    }

    /// The first `len` snapshots (the history up to that step).
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            node_count: self.node_count,
            snapshots: self.snapshots[..len.min(self.snapshots.len())].to_vec(),
        }
    }

    /// Writes the sequence in the `t i j` edge-list format.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# t i j")?;
        for (t, snapshot) in self.snapshots.iter().enumerate() {
            for (i, j) in snapshot.edges() {
                writeln!(out, "{t} {i} {j}")?;
            }
        }
        Ok(())
    }
}

/// Node-to-class labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClassAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "class count k must be at least 1".into(),
            ));
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::InvalidArgument(format!(
                "node {i} has label {c}, outside 0..{k}"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Every node in class 0.
    pub fn single(node_count: usize) -> Self {
        Self {
            labels: vec![0; node_count],
            k: 1,
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Copy with `node` relabeled to `class`.
    pub fn with_label(&self, node: usize, class: usize) -> Self {
        let mut labels = self.labels.clone();
        labels[node] = class;
        Self { labels, k: self.k }
    }

    /// Applies `perm` to every label (`c -> perm[c]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::Dimension(format!(
                "permutation of length {} for k = {}",
                perm.len(),
                self.k
            )));
        }
        Self::new(self.labels.iter().map(|&c| perm[c]).collect(), self.k)
    }
}

/// Observed and possible edge counts per block, with densities.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    k: usize,
    sizes: Vec<usize>,
    m: Vec<u64>,
    n: Vec<u64>,
}

impl BlockStats {
    /// Builds block statistics from raw counts and class sizes. `n` is derived from the sizes.
    pub fn from_counts(m: Vec<u64>, sizes: Vec<usize>) -> Result<Self> {
        let k = sizes.len();
        if k == 0 || m.len() != k * k {
            return Err(Error::Dimension(format!(
                "{} observed counts for {k} classes",
                m.len()
            )));
        }
        let n = possible_counts(&sizes);
        if let Some(idx) = (0..k * k).find(|&idx| m[idx] > n[idx]) {
            return Err(Error::Domain(format!(
                "block ({}, {}) has {} observed edges but only {} possible",
                idx / k,
                idx % k,
                m[idx],
                n[idx]
            )));
        }
        Ok(Self { k, sizes, m, n })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn m(&self, a: usize, b: usize) -> u64 {
        self.m[a * self.k + b]
    }

    #[inline]
    pub fn n(&self, a: usize, b: usize) -> u64 {
        self.n[a * self.k + b]
    }

    /// Block density `m / n`, or `None` when the block has no possible edges.
    #[inline]
    pub fn density(&self, a: usize, b: usize) -> Option<f64> {
        let n = self.n(a, b);
        (n > 0).then(|| self.m(a, b) as f64 / n as f64)
    }

    pub fn is_observed(&self, a: usize, b: usize) -> bool {
        self.n(a, b) > 0
    }

    /// Column-stacked densities; unobserved blocks are `None`.
    pub fn vectorized_density(&self) -> Vec<Option<f64>> {
        (0..self.k * self.k)
            .map(|idx| {
                let (a, b) = block_of(idx, self.k);
                self.density(a, b)
            })
            .collect()
    }

    /// Column-stacked `(m, n)` pairs.
    pub fn vectorized_counts(&self) -> Vec<(u64, u64)> {
        (0..self.k * self.k)
            .map(|idx| {
                let (a, b) = block_of(idx, self.k);
                (self.m(a, b), self.n(a, b))
            })
            .collect()
    }

    pub fn total_observed(&self) -> u64 {
        self.m.iter().sum()
    }

    pub fn total_possible(&self) -> u64 {
        self.n.iter().sum()
    }

    /// Statistics after moving `node` from its current class to `to`, in `O(node_count + k^2)`.
    ///
    /// `classes` must be the assignment these statistics were computed from.
    pub fn with_move(
        &self,
        snapshot: &Snapshot,
        classes: &ClassAssignment,
        node: usize,
        to: usize,
    ) -> Self {
        let k = self.k;
        let from = classes.label(node);
        if from == to {
            return self.clone();
        }
        let mut out_counts = vec![0u64; k];
        let mut in_counts = vec![0u64; k];
        let row = snapshot.row(node);
        for (u, &c) in classes.labels().iter().enumerate() {
            if u == node {
                continue;
            }
            if row[u] {
                out_counts[c] += 1;
            }
            if snapshot.has_edge(u, node) {
                in_counts[c] += 1;
            }
        }
        let mut m = self.m.clone();
        for c in 0..k {
            m[from * k + c] -= out_counts[c];
            m[to * k + c] += out_counts[c];
            m[c * k + from] -= in_counts[c];
            m[c * k + to] += in_counts[c];
        }
        let mut sizes = self.sizes.clone();
        sizes[from] -= 1;
        sizes[to] += 1;
        let n = possible_counts(&sizes);
        Self { k, sizes, m, n }
    }
}

fn possible_counts(sizes: &[usize]) -> Vec<u64> {
    let k = sizes.len();
    let mut n = vec![0u64; k * k];
    for a in 0..k {
        for b in 0..k {
            let (sa, sb) = (sizes[a] as u64, sizes[b] as u64);
            n[a * k + b] = if a == b {
                sa * sa.saturating_sub(1)
            } else {
                sa * sb
            };
        }
    }
    n
}

/// Counts observed and possible edges in every block of `snapshot` under `classes`.
pub fn block_counts(snapshot: &Snapshot, classes: &ClassAssignment) -> Result<BlockStats> {
    if snapshot.node_count() != classes.len() {
        return Err(Error::Dimension(format!(
            "snapshot has {} nodes but assignment has {} labels",
            snapshot.node_count(),
            classes.len()
        )));
    }
    let k = classes.k();
    let labels = classes.labels();
    let mut m = vec![0u64; k * k];
    for (i, j) in snapshot.edges() {
        m[labels[i] * k + labels[j]] += 1;
    }
    let sizes = classes.sizes();
    let n = possible_counts(&sizes);
    Ok(BlockStats { k, sizes, m, n })
}

/// Parses the `t i j` edge-list format. Time indices are sorted and re-indexed densely.
pub fn parse_snapshots<R: BufRead>(
    reader: R,
    node_count: usize,
    source: &Path,
) -> Result<SnapshotSequence> {
    let mut by_time: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_error(
                source,
                lineno,
                format!("expected 3 fields `t i j`, found {}", fields.len()),
            ));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|e| parse_error(source, lineno, format!("bad {what} `{s}`: {e}")))
        };
        let t = parse(fields[0], "time index")?;
        let i = parse(fields[1], "source node")? as usize;
        let j = parse(fields[2], "target node")? as usize;
        for index in [i, j] {
            if index >= node_count {
                return Err(Error::NodeOutOfRange {
                    line: lineno,
                    index,
                    node_count,
                });
            }
        }
        if i == j {
            return Err(Error::SelfEdge {
                line: lineno,
                node: i,
            });
        }
        by_time.entry(t).or_default().push((i, j));
    }
    let snapshots = by_time
        .into_values()
        .map(|edges| Snapshot::from_edges(node_count, edges))
        .collect::<Result<Vec<_>>>()?;
    SnapshotSequence::new(node_count, snapshots)
}

pub fn load_snapshots(path: impl AsRef<Path>, node_count: usize) -> Result<SnapshotSequence> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_snapshots(BufReader::new(file), node_count, path)
}

/// Parses the `i c_i` class file. When `k` is `None` it is taken as the largest label plus one.
pub fn parse_classes<R: BufRead>(
    reader: R,
    node_count: usize,
    k: Option<usize>,
    source: &Path,
) -> Result<ClassAssignment> {
    let mut labels: Vec<Option<usize>> = vec![None; node_count];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_error(
                source,
                lineno,
                format!("expected 2 fields `i c_i`, found {}", fields.len()),
            ));
        }
        let node: usize = fields[0]
            .parse()
            .map_err(|e| parse_error(source, lineno, format!("bad node `{}`: {e}", fields[0])))?;
        let class: usize = fields[1]
            .parse()
            .map_err(|e| parse_error(source, lineno, format!("bad class `{}`: {e}", fields[1])))?;
        if node >= node_count {
            return Err(Error::NodeOutOfRange {
                line: lineno,
                index: node,
                node_count,
            });
        }
        if labels[node].replace(class).is_some() {
            return Err(parse_error(
                source,
                lineno,
                format!("node {node} listed twice"),
            ));
        }
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| parse_error(source, 0, format!("node {i} has no class"))))
        .collect::<Result<_>>()?;
    let k = k.unwrap_or_else(|| labels.iter().max().map_or(1, |&c| c + 1));
    ClassAssignment::new(labels, k)
}

pub fn load_classes(
    path: impl AsRef<Path>,
    node_count: usize,
    k: Option<usize>,
) -> Result<ClassAssignment> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_classes(BufReader::new(file), node_count, k, path)
}

fn parse_error(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    }
}
