//! Undirected attributed graphs and the propagation operators derived from
//! their adjacency matrix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Train / validation / test node index lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &[usize])> {
        [("train", self.train.as_slice()), ("val", self.val.as_slice()), ("test", self.test.as_slice())].into_iter()
    }

    /// Sorted union of all three splits.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.train.iter().chain(&self.val).chain(&self.test).copied().collect();
        set.into_iter().collect()
    }
}

/// Immutable undirected graph with node features, labels and splits.
///
/// Edges are stored once per unordered pair as `(u, v)` with `u < v`, sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: DenseMatrix,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    splits: Splits,
}

impl Graph {
    /// Validates and canonicalises the inputs: edges are symmetrised and
    /// deduplicated, self-loops dropped. `num_classes` is `1 + max label`.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: DenseMatrix,
        labels: Vec<Option<usize>>,
        splits: Splits,
    ) -> Result<Self> {
        if features.rows() != n {
            return Err(Error::dims("Graph::new features", format!("{n} rows"), features.rows()));
        }
        if labels.len() != n {
            return Err(Error::dims("Graph::new labels", n, labels.len()));
        }
        if !features.is_finite() {
            return Err(Error::InvalidInput("features contain non-finite values".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n {
                return Err(Error::OutOfRange { what: "edge endpoint", index: u, limit: n });
            }
            if v >= n {
                return Err(Error::OutOfRange { what: "edge endpoint", index: v, limit: n });
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let num_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);

        let mut seen = vec![None::<&'static str>; n];
        let mut overlap = BTreeSet::new();
        for (name, idx) in splits.iter() {
            for &i in idx {
                if i >= n {
                    return Err(Error::OutOfRange { what: "split node", index: i, limit: n });
                }
                if seen[i].is_some() {
                    overlap.insert(i);
                }
                seen[i] = Some(name);
                if labels[i].is_none() {
                    return Err(Error::UnlabeledSplitNode { node: i, split: name });
                }
            }
        }
        if !overlap.is_empty() {
            return Err(Error::OverlappingSplits { indices: overlap.into_iter().collect() });
        }

        Ok(Self { n, edges: set.into_iter().collect(), features, labels, num_classes, splits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Symmetric 0/1 adjacency matrix with zero diagonal.
    pub fn adjacency(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.n, self.n, self.directed_edges(1.0))
            .expect("graph invariants guarantee a valid adjacency")
    }

    /// `I − D^{-1/2} A D^{-1/2}`; isolated nodes keep an identity row.
    pub fn normalized_laplacian(&self) -> SparseMatrix {
        let off = self.scaled_edges(self.degrees(), -1.0);
        let diag = (0..self.n).map(|i| (i, i, 1.0));
        SparseMatrix::from_triplets(self.n, self.n, off.chain(diag)).expect("valid laplacian")
    }

    /// `D^{-1/2} A D^{-1/2}`; isolated nodes get a zero row.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.n, self.n, self.scaled_edges(self.degrees(), 1.0))
            .expect("valid normalized adjacency")
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degrees of `A + I`.
    pub fn renormalized_adjacency(&self) -> SparseMatrix {
        let tilde: Vec<usize> = self.degrees().into_iter().map(|d| d + 1).collect();
        let diag: Vec<_> = tilde.iter().enumerate().map(|(i, &d)| (i, i, 1.0 / d as f64)).collect();
        SparseMatrix::from_triplets(self.n, self.n, self.scaled_edges(tilde, 1.0).chain(diag))
            .expect("valid renormalized adjacency")
    }

    fn directed_edges(&self, w: f64) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().flat_map(move |&(u, v)| [(u, v, w), (v, u, w)])
    }

    /// Edge weights `sign / sqrt(d_u d_v)`. Taking one square root of the
    /// integer product keeps regular graphs exact (e.g. 1/2, 1/3).
    fn scaled_edges(&self, deg: Vec<usize>, sign: f64) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.directed_edges(sign).map(move |(u, v, s)| (u, v, s / ((deg[u] as f64) * (deg[v] as f64)).sqrt()))
    }
}
