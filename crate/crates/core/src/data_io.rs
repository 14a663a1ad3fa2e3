//! Plain-text dataset bundles.
//!
//! A bundle is a directory with five UTF-8 files:
//!
//! | file          | content                                               |
//! |---------------|-------------------------------------------------------|
//! | `edges.tsv`   | one `u<TAB>v` pair per line, 0-indexed                |
//! | `features.csv`| `n` lines of `c` comma-separated reals                |
//! | `labels.txt`  | `n` integers, one per line; `-1` marks unlabeled      |
//! | `splits.json` | `{"train": [...], "val": [...], "test": [...]}`       |
//! | `meta.json`   | `{"name", "n", "c", "C"}` plus optional `provenance`   |
//!
//! Edges may appear in either or both directions and may repeat; loading
//! symmetrises, deduplicates and drops self-loops. Lines starting with `#`
//! in `edges.tsv` are ignored.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, Splits};

/// Larger graphs are outside the intended scale of this loader.
pub const MAX_NODES: usize = 250_000;

pub const FILES: [&str; 5] = ["edges.tsv", "features.csv", "labels.txt", "splits.json", "meta.json"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub n: usize,
    pub c: usize,
    #[serde(rename = "C")]
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: Graph,
    pub class_count: usize,
    pub provenance: String,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, graph: Graph, provenance: impl Into<String>) -> Self {
        let class_count = graph.num_classes();
        Self { name: name.into(), graph, class_count, provenance: provenance.into() }
    }

    pub fn meta(&self) -> Meta {
        Meta {
            name: self.name.clone(),
            n: self.graph.n(),
            c: self.graph.feature_dim(),
            num_classes: self.class_count,
            provenance: self.provenance.clone(),
        }
    }
}

fn open_lines(dir: &Path, file: &str) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let path = dir.join(file);
    let f = fs::File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
        _ => Error::Io(e),
    })?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<T> {
    let path = dir.join(file);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
        _ => Error::Io(e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { file: file.into(), line: e.line(), message: e.to_string() })
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { file: file.into(), line, message: message.into() }
}

fn node_index(file: &str, what: &str, raw: i64, n: usize) -> Result<usize> {
    if raw < 0 || raw as u64 >= n as u64 {
        return Err(Error::IndexOutOfRange { file: file.into(), what: what.into(), index: raw, n });
    }
    Ok(raw as usize)
}

#[derive(Deserialize)]
struct RawSplits {
    train: Vec<i64>,
    val: Vec<i64>,
    test: Vec<i64>,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    for f in FILES {
        if !dir.join(f).is_file() {
            return Err(Error::MissingFile(dir.join(f)));
        }
    }
    let meta: Meta = read_json(dir, "meta.json")?;
    if meta.n > MAX_NODES {
        return Err(Error::TooLarge { n: meta.n, limit: MAX_NODES });
    }
    let n = meta.n;

    let mut data = Vec::with_capacity(n * meta.c);
    let mut rows = 0;
    for (line, text) in open_lines(dir, "features.csv")? {
        let text = text?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let before = data.len();
        for field in text.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err("features.csv", line, format!("not a number: '{}'", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err("features.csv", line, "non-finite feature value"));
            }
            data.push(v);
        }
        if data.len() - before != meta.c {
            return Err(Error::CountMismatch { what: "feature columns", expected: meta.c, found: data.len() - before });
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::CountMismatch { what: "feature rows", expected: n, found: rows });
    }
    let features = DenseMatrix::from_vec(n, meta.c, data)?;

    let mut labels = Vec::with_capacity(n);
    for (line, text) in open_lines(dir, "labels.txt")? {
        let text = text?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let y: i64 = text.parse().map_err(|_| parse_err("labels.txt", line, format!("not an integer: '{text}'")))?;
        if y == -1 {
            labels.push(None);
        } else if y < 0 || y as u64 >= meta.num_classes as u64 {
            return Err(Error::IndexOutOfRange {
                file: "labels.txt".into(),
                what: "class".into(),
                index: y,
                n: meta.num_classes,
            });
        } else {
            labels.push(Some(y as usize));
        }
    }
    if labels.len() != n {
        return Err(Error::CountMismatch { what: "labels", expected: n, found: labels.len() });
    }

    let mut edges = Vec::new();
    for (line, text) in open_lines(dir, "edges.tsv")? {
        let text = text?;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut it = text.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err("edges.tsv", line, format!("expected two node indices, got '{text}'")));
        };
        let parse = |s: &str| -> Result<i64> {
            s.parse().map_err(|_| parse_err("edges.tsv", line, format!("not an integer: '{s}'")))
        };
        let u = node_index("edges.tsv", "node", parse(a)?, n)?;
        let v = node_index("edges.tsv", "node", parse(b)?, n)?;
        edges.push((u, v));
    }

    let raw: RawSplits = read_json(dir, "splits.json")?;
    let conv = |v: Vec<i64>, what: &str| -> Result<Vec<usize>> {
        v.into_iter().map(|i| node_index("splits.json", what, i, n)).collect()
    };
    let splits = Splits { train: conv(raw.train, "train")?, val: conv(raw.val, "val")?, test: conv(raw.test, "test")? };

    let graph = Graph::new(n, edges, features, labels, splits)?;
    if graph.num_classes() != meta.num_classes {
        return Err(Error::CountMismatch {
            what: "classes (1 + max label)",
            expected: meta.num_classes,
            found: graph.num_classes(),
        });
    }
    Ok(DatasetBundle { name: meta.name, graph, class_count: meta.num_classes, provenance: meta.provenance })
}

/// Writes the five bundle files. Reals use Rust's shortest representation
/// that parses back to the same double.
pub fn save_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let g = &bundle.graph;

    let mut w = BufWriter::new(fs::File::create(dir.join("edges.tsv"))?);
    for &(u, v) in g.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("features.csv"))?);
    for i in 0..g.n() {
        let row = g.features().row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("labels.txt"))?);
    for y in g.labels() {
        match y {
            Some(y) => writeln!(w, "{y}")?,
            None => writeln!(w, "-1")?,
        }
    }
    w.flush()?;

    let mut splits = serde_json::to_string(g.splits())?;
    splits.push('\n');
    fs::write(dir.join("splits.json"), splits)?;
    let mut meta = serde_json::to_string_pretty(&bundle.meta())?;
    meta.push('\n');
    fs::write(dir.join("meta.json"), meta)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassBalance {
    pub class: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BundleDiagnostics {
    pub name: String,
    pub n: usize,
    pub c: usize,
    pub num_classes: usize,
    /// Each undirected edge counted twice, as in the stored adjacency.
    pub directed_edges: usize,
    pub isolated_nodes: usize,
    pub unlabeled_nodes: usize,
    /// Fraction of nonzero feature entries.
    pub feature_density: f64,
    pub split_sizes: [usize; 3],
    pub class_balance: Vec<ClassBalance>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

/// Summary statistics and soft warnings; a loaded bundle is already valid,
/// so `errors` only fills if the bundle was assembled inconsistently.
pub fn validate_bundle(bundle: &DatasetBundle) -> BundleDiagnostics {
    let g = &bundle.graph;
    let isolated = g.degrees().iter().filter(|&&d| d == 0).count();
    let unlabeled = g.labels().iter().filter(|y| y.is_none()).count();
    let total = g.features().as_slice().len();
    let nonzero = g.features().as_slice().iter().filter(|&&v| v != 0.0).count();
    let s = g.splits();

    let mut class_balance: Vec<ClassBalance> =
        (0..bundle.class_count).map(|class| ClassBalance { class, train: 0, val: 0, test: 0 }).collect();
    let mut errors = Vec::new();
    for (name, idx) in s.iter() {
        for &i in idx {
            match g.labels()[i] {
                Some(y) if y < class_balance.len() => {
                    let b = &mut class_balance[y];
                    match name {
                        "train" => b.train += 1,
                        "val" => b.val += 1,
                        _ => b.test += 1,
                    }
                }
                other => {
                    errors.push(format!("node {i} in {name} has label {other:?} outside [0, {})", bundle.class_count))
                }
            }
        }
    }
    if bundle.class_count != g.num_classes() {
        errors.push(format!("class_count {} differs from 1 + max label = {}", bundle.class_count, g.num_classes()));
    }

    let mut warnings = Vec::new();
    if isolated > 0 {
        warnings.push(format!("{isolated} isolated nodes propagate nothing"));
    }
    if unlabeled > 0 {
        warnings.push(format!("{unlabeled} nodes are unlabeled"));
    }
    for b in &class_balance {
        if b.train == 0 {
            warnings.push(format!("class {} has no training nodes", b.class));
        }
    }
    for (name, idx) in s.iter() {
        if idx.is_empty() {
            warnings.push(format!("{name} split is empty"));
        }
    }

    BundleDiagnostics {
        name: bundle.name.clone(),
        n: g.n(),
        c: g.feature_dim(),
        num_classes: bundle.class_count,
        directed_edges: 2 * g.edges().len(),
        isolated_nodes: isolated,
        unlabeled_nodes: unlabeled,
        feature_density: if total == 0 { 0.0 } else { nonzero as f64 / total as f64 },
        split_sizes: [s.train.len(), s.val.len(), s.test.len()],
        class_balance,
        errors,
        warnings,
    }
}
