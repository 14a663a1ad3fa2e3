//! Precomputed diffusion sequences `P⁰X, P¹X, …, PᵏX`.
//!
//! All sparse products a model ever needs happen here, once, before
//! training. The cache can be persisted in a small binary container:
//!
//! ```text
//! magic      "SPGC1"                 5 bytes
//! operator   u8 (0 laplacian, 1 renormalized_adjacency, 2 normalized_adjacency)
//! n          u64 LE   graph node count
//! c          u64 LE   feature dimension
//! k          u64 LE   max hop
//! m          u64 LE   stored row count; m == n means every node in order,
//!                     otherwise m node indices (u64 LE) follow
//! terms      (k+1) · m · c f64 LE, row-major, term by term
//! ```

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::{spmm, SparseMatrix};

const CACHE_MAGIC: &[u8; 5] = b"SPGC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Laplacian,
    RenormalizedAdjacency,
    NormalizedAdjacency,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 3] =
        [OperatorKind::Laplacian, OperatorKind::RenormalizedAdjacency, OperatorKind::NormalizedAdjacency];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Laplacian => "laplacian",
            OperatorKind::RenormalizedAdjacency => "renormalized_adjacency",
            OperatorKind::NormalizedAdjacency => "normalized_adjacency",
        }
    }

    fn tag(self) -> u8 {
        match self {
            OperatorKind::Laplacian => 0,
            OperatorKind::RenormalizedAdjacency => 1,
            OperatorKind::NormalizedAdjacency => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == t)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "laplacian" | "l" => Ok(OperatorKind::Laplacian),
            "renormalized_adjacency" | "renormalized" | "s" => Ok(OperatorKind::RenormalizedAdjacency),
            "normalized_adjacency" | "adjacency" | "a" => Ok(OperatorKind::NormalizedAdjacency),
            other => Err(Error::InvalidInput(format!("unknown operator '{other}'"))),
        }
    }
}

/// A square symmetric propagation matrix together with its kind.
#[derive(Clone, Debug)]
pub struct PropagationOperator {
    kind: OperatorKind,
    matrix: SparseMatrix,
}

impl PropagationOperator {
    pub fn from_graph(kind: OperatorKind, graph: &Graph) -> Self {
        let matrix = match kind {
            OperatorKind::Laplacian => graph.normalized_laplacian(),
            OperatorKind::RenormalizedAdjacency => graph.renormalized_adjacency(),
            OperatorKind::NormalizedAdjacency => graph.normalized_adjacency(),
        };
        Self { kind, matrix }
    }

    /// Wraps an arbitrary matrix; it must be square and exactly symmetric.
    pub fn new(kind: OperatorKind, matrix: SparseMatrix) -> Result<Self> {
        if matrix.n_rows() != matrix.n_cols() {
            return Err(Error::dims(
                "PropagationOperator",
                "square matrix",
                format!("{}x{}", matrix.n_rows(), matrix.n_cols()),
            ));
        }
        let asym = matrix.max_asymmetry();
        if asym != 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { kind, matrix })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }
}

/// The sequence `terms[i] = Pⁱ X` for `i = 0..=k`.
///
/// A cache may keep only a subset of node rows (`rows`), e.g. the labeled
/// nodes; the full rows are still propagated during the build.
#[derive(Clone, Debug)]
pub struct DiffusionCache {
    operator: OperatorKind,
    n_nodes: usize,
    rows: Option<Vec<usize>>,
    terms: Vec<DenseMatrix>,
    build_time: Duration,
}

impl DiffusionCache {
    /// Full cache over every node.
    pub fn build(op: &PropagationOperator, x: &DenseMatrix, k: usize) -> Result<Self> {
        Self::build_inner(op, x, k, None)
    }

    /// Cache that stores only the given node rows (sorted and deduplicated
    /// internally).
    pub fn build_for_rows(op: &PropagationOperator, x: &DenseMatrix, k: usize, rows: &[usize]) -> Result<Self> {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::OutOfRange { what: "cache row", index: bad, limit: x.rows() });
        }
        let rows = if rows.len() == x.rows() { None } else { Some(rows) };
        Self::build_inner(op, x, k, rows)
    }

    fn build_inner(op: &PropagationOperator, x: &DenseMatrix, k: usize, rows: Option<Vec<usize>>) -> Result<Self> {
        let n = op.matrix.n_rows();
        if x.rows() != n {
            return Err(Error::dims("build_diffusion_cache", format!("features with {n} rows"), x.rows()));
        }
        let start = Instant::now();
        let keep = |m: &DenseMatrix| match &rows {
            Some(r) => m.select_rows(r),
            None => m.clone(),
        };
        let mut terms = Vec::with_capacity(k + 1);
        terms.push(keep(x));
        let mut current = x.clone();
        for _ in 0..k {
            current = spmm(&op.matrix, &current)?;
            terms.push(keep(&current));
        }
        Ok(Self { operator: op.kind, n_nodes: n, rows, terms, build_time: start.elapsed() })
    }

    pub fn k(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn operator(&self) -> OperatorKind {
        self.operator
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.terms[0].cols()
    }

    /// Number of rows held per term.
    pub fn n_rows(&self) -> usize {
        self.terms[0].rows()
    }

    /// Node index of each stored row, `None` when every node is stored.
    pub fn rows(&self) -> Option<&[usize]> {
        self.rows.as_deref()
    }

    /// Stored row position of `node`, if present.
    pub fn row_of(&self, node: usize) -> Option<usize> {
        match &self.rows {
            None => (node < self.n_nodes).then_some(node),
            Some(r) => r.binary_search(&node).ok(),
        }
    }

    pub fn build_time(&self) -> Duration {
        self.build_time
    }

    /// `Pⁱ X`, served from the cache.
    pub fn propagated(&self, i: usize) -> Result<&DenseMatrix> {
        self.terms.get(i).ok_or(Error::OutOfRange { what: "hop", index: i, limit: self.k() })
    }

    pub fn terms(&self) -> &[DenseMatrix] {
        &self.terms
    }

    /// The first `k + 1` terms as a new cache.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::OutOfRange { what: "hop", index: k, limit: self.k() });
        }
        Ok(Self {
            operator: self.operator,
            n_nodes: self.n_nodes,
            rows: self.rows.clone(),
            terms: self.terms[..=k].to_vec(),
            build_time: self.build_time,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let m = self.n_rows();
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&[self.operator.tag()])?;
        for v in [self.n_nodes, self.feature_dim(), self.k(), m] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        if let Some(rows) = &self.rows {
            for &r in rows {
                w.write_all(&(r as u64).to_le_bytes())?;
            }
        }
        let mut buf = Vec::with_capacity(m * self.feature_dim() * 8);
        for t in &self.terms {
            buf.clear();
            for v in t.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let fmt_err = |m: &str| Error::Format { what: "diffusion cache", message: m.to_string() };
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let operator = OperatorKind::from_tag(tag[0]).ok_or_else(|| fmt_err("unknown operator tag"))?;
        let n = read_u64(&mut r)? as usize;
        let c = read_u64(&mut r)? as usize;
        let k = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        if m > n {
            return Err(fmt_err("more stored rows than nodes"));
        }
        let rows = if m == n {
            None
        } else {
            let mut rows = Vec::with_capacity(m);
            for _ in 0..m {
                rows.push(read_u64(&mut r)? as usize);
            }
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.last().is_some_and(|&l| l >= n) {
                return Err(fmt_err("row index list not strictly increasing within range"));
            }
            Some(rows)
        };
        let mut terms = Vec::with_capacity(k + 1);
        let mut bytes = vec![0u8; m * c * 8];
        for _ in 0..=k {
            r.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
            terms.push(DenseMatrix::from_vec(m, c, data)?);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(fmt_err("trailing bytes"));
        }
        Ok(Self { operator, n_nodes: n, rows, terms, build_time: Duration::ZERO })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

// build_time is a measurement, not part of the cache contents
impl PartialEq for DiffusionCache {
    fn eq(&self, other: &Self) -> bool {
        self.operator == other.operator
            && self.n_nodes == other.n_nodes
            && self.rows == other.rows
            && self.terms == other.terms
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Canonical cache file name for a `(dataset, operator, k)` key.
pub fn cache_file_name(dataset: &str, operator: OperatorKind, k: usize, labeled_only: bool) -> String {
    let dataset: String =
        dataset.chars().map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' || ch == '_' { ch } else { '_' }).collect();
    let scope = if labeled_only { "-labeled" } else { "" };
    format!("{dataset}-{operator}-k{k}{scope}.spgc")
}

/// `Σ θ_i Pⁱ x` evaluated in the graph domain with repeated sparse products.
pub fn polynomial_filter_spatial(p: &SparseMatrix, theta: &[f64], x: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    let mut power = x.clone();
    for (i, &t) in theta.iter().enumerate() {
        if i > 0 {
            power = spmm(p, &power)?;
        }
        out.add_scaled(t, &power)?;
    }
    Ok(out)
}
