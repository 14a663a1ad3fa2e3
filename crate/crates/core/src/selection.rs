//! Hyperparameter grid search with repeated runs per cell and two ways of
//! picking the winning cell.
//!
//! Grid files are plain `key = v1, v2, ...` lines; `#` starts a comment and
//! trailing commas are ignored:
//!
//! ```text
//! learning_rate = 0.2, 0.05, 0.001
//! weight_decay = 5e-3, 5e-4, 5e-6,
//! dropout = 0.0, 0.2, 0.5
//! k = 2, 5, 10
//! hidden = 4, 8, 16, 24
//! n_runs = 5
//! protocol = validated
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::Variant;
use crate::propagation::{DiffusionCache, OperatorKind, PropagationOperator};
use crate::seed::derive_seed;
use crate::training::{train, TrainConfig, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Pick the cell with the best mean validation accuracy.
    #[default]
    Validated,
    /// Pick by mean test accuracy. Optimistically biased.
    TestSelected,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Validated => "validated",
            Protocol::TestSelected => "test_selected",
        }
    }

    pub fn is_biased(self) -> bool {
        self == Protocol::TestSelected
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "validated" => Ok(Protocol::Validated),
            "test_selected" => Ok(Protocol::TestSelected),
            other => Err(Error::InvalidInput(format!("unknown selection protocol '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rate: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub dropout: Vec<f64>,
    pub k: Vec<usize>,
    /// Carried for completeness; none of the single-layer models has
    /// hidden units, so it does not multiply the cells.
    pub hidden: Vec<usize>,
    pub n_runs: usize,
    pub protocol: Protocol,
    pub seed: u64,
    /// Overrides the variant's default operator.
    pub operator: Option<OperatorKind>,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            learning_rate: vec![0.2],
            weight_decay: vec![5e-4],
            dropout: vec![0.0],
            k: vec![2],
            hidden: Vec::new(),
            n_runs: 5,
            protocol: Protocol::Validated,
            seed: 0,
            operator: None,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
        }
    }
}

fn dedup_f64(v: Vec<f64>) -> Vec<f64> {
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|x| seen.insert(x.to_bits())).collect()
}

fn dedup_usize(v: Vec<usize>) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|x| seen.insert(*x)).collect()
}

fn parse_list<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::Parse {
                file: "grid".into(),
                line,
                message: format!("bad value '{s}' for {key}"),
            })
        })
        .collect()
}

fn parse_single<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    let mut v: Vec<T> = parse_list(line, key, raw)?;
    if v.len() != 1 {
        return Err(Error::Parse { file: "grid".into(), line, message: format!("{key} takes exactly one value") });
    }
    Ok(v.remove(0))
}

impl GridSpec {
    /// The per-dataset grids used for the citation benchmarks.
    pub fn table2(dataset: &str) -> Result<Self> {
        let (lr, wd, k) = match dataset.to_ascii_lowercase().as_str() {
            "citeseer" => (vec![0.2, 0.02, 0.001], vec![1e-2, 5e-3, 5e-4], vec![2, 5, 10, 20, 40, 50, 60]),
            "cora" | "pubmed" => (vec![0.2, 0.05, 0.001], vec![5e-3, 5e-4, 5e-6], vec![2, 5, 10, 20, 40, 60, 80]),
            other => return Err(Error::InvalidInput(format!("no built-in grid for dataset '{other}'"))),
        };
        Ok(Self {
            learning_rate: lr,
            weight_decay: wd,
            dropout: vec![0.0, 0.2, 0.5],
            k,
            hidden: vec![4, 8, 16, 24],
            ..Default::default()
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = GridSpec { hidden: Vec::new(), ..Default::default() };
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once(['=', ':']) else {
                return Err(Error::Parse {
                    file: "grid".into(),
                    line,
                    message: format!("expected 'key = values', got '{content}'"),
                });
            };
            let key = key.trim().to_ascii_lowercase().replace([' ', '-'], "_");
            if !seen.insert(key.clone()) {
                return Err(Error::Parse { file: "grid".into(), line, message: format!("duplicate key {key}") });
            }
            match key.as_str() {
                "learning_rate" | "lr" => spec.learning_rate = dedup_f64(parse_list(line, &key, value)?),
                "weight_decay" | "wd" => spec.weight_decay = dedup_f64(parse_list(line, &key, value)?),
                "dropout" | "drop_out" => spec.dropout = dedup_f64(parse_list(line, &key, value)?),
                "k" => spec.k = dedup_usize(parse_list(line, &key, value)?),
                "hidden" => spec.hidden = dedup_usize(parse_list(line, &key, value)?),
                "n_runs" | "runs" => spec.n_runs = parse_single(line, &key, value)?,
                "seed" => spec.seed = parse_single(line, &key, value)?,
                "max_epochs" => spec.max_epochs = parse_single(line, &key, value)?,
                "patience" => spec.patience = parse_single(line, &key, value)?,
                "protocol" => {
                    spec.protocol = value.parse().map_err(|e: Error| Error::Parse {
                        file: "grid".into(),
                        line,
                        message: e.to_string(),
                    })?
                }
                "operator" => {
                    spec.operator = Some(value.trim().parse().map_err(|e: Error| Error::Parse {
                        file: "grid".into(),
                        line,
                        message: e.to_string(),
                    })?)
                }
                other => {
                    return Err(Error::Parse { file: "grid".into(), line, message: format!("unknown key {other}") });
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Text form accepted by [`GridSpec::parse`].
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let mut s = format!(
            "learning_rate = {}\nweight_decay = {}\ndropout = {}\nk = {}\n",
            join(&self.learning_rate),
            join(&self.weight_decay),
            join(&self.dropout),
            join(&self.k)
        );
        if !self.hidden.is_empty() {
            s += &format!("hidden = {}\n", join(&self.hidden));
        }
        s += &format!(
            "n_runs = {}\nprotocol = {}\nseed = {}\nmax_epochs = {}\npatience = {}\n",
            self.n_runs, self.protocol, self.seed, self.max_epochs, self.patience
        );
        if let Some(op) = self.operator {
            s += &format!("operator = {op}\n");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("learning_rate", self.learning_rate.is_empty()),
            ("weight_decay", self.weight_decay.is_empty()),
            ("dropout", self.dropout.is_empty()),
            ("k", self.k.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidInput(format!("grid list {name} is empty")));
            }
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidInput("n_runs must be at least 1".into()));
        }
        Ok(())
    }

    /// Cells in a fixed order: learning rate outermost, k innermost.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rate {
            for &weight_decay in &self.weight_decay {
                for &dropout in &self.dropout {
                    for &k in &self.k {
                        out.push(Cell { index: out.len(), learning_rate, weight_decay, dropout, k });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub val_mean: f64,
    pub val_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub runs: Vec<RunResult>,
    /// `None` when a run failed; `error` then says why.
    pub aggregate: Option<CellAggregate>,
    pub error: Option<String>,
}

/// Arithmetic mean and population standard deviation.
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate an empty list of runs".into()));
    }
    let n = values.len() as f64;
    let naive = values.iter().sum::<f64>() / n;
    // one refinement pass removes the rounding of the first sum, so equal
    // inputs give exactly that value and a zero deviation
    let mean = naive + values.iter().map(|v| v - naive).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Seed of run `run` in cell `cell`.
pub fn run_seed(base_seed: u64, cell: usize, run: usize) -> u64 {
    derive_seed(&[base_seed, cell as u64, run as u64])
}

/// Index into `cells` of the winner under `protocol`; failed cells are
/// skipped and ties go to the lowest index.
pub fn choose(cells: &[CellResult], protocol: Protocol) -> Option<usize> {
    let key = |a: &CellAggregate| match protocol {
        Protocol::Validated => a.val_mean,
        Protocol::TestSelected => a.test_mean,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(a) = &c.aggregate {
            let v = key(a);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub variant: Variant,
    pub operator: OperatorKind,
    pub protocol: Protocol,
    pub biased: bool,
    pub n_runs: usize,
    pub base_seed: u64,
    pub cache_builds: usize,
    pub cells: Vec<CellResult>,
    /// Position in `cells` of the chosen cell.
    pub chosen: Option<usize>,
    pub test_mean: Option<f64>,
    pub test_std: Option<f64>,
    pub note: String,
}

fn protocol_note(protocol: Protocol) -> String {
    match protocol {
        Protocol::Validated => "cell chosen by mean validation accuracy; test accuracy is an unbiased estimate".into(),
        Protocol::TestSelected => {
            "cell chosen by mean test accuracy; the reported accuracy is optimistically biased and not comparable to validated results"
                .into()
        }
    }
}

impl SelectionReport {
    fn assemble(
        variant: Variant,
        operator: OperatorKind,
        grid: &GridSpec,
        cells: Vec<CellResult>,
        cache_builds: usize,
        protocol: Protocol,
    ) -> Self {
        let chosen = choose(&cells, protocol);
        let agg = chosen.and_then(|i| cells[i].aggregate);
        SelectionReport {
            variant,
            operator,
            protocol,
            biased: protocol.is_biased(),
            n_runs: grid.n_runs,
            base_seed: grid.seed,
            cache_builds,
            cells,
            chosen,
            test_mean: agg.map(|a| a.test_mean),
            test_std: agg.map(|a| a.test_std),
            note: protocol_note(protocol),
        }
    }

    /// The same run artifacts, selected under another protocol.
    pub fn reselect(&self, protocol: Protocol) -> Self {
        let chosen = choose(&self.cells, protocol);
        let agg = chosen.and_then(|i| self.cells[i].aggregate);
        SelectionReport {
            protocol,
            biased: protocol.is_biased(),
            chosen,
            test_mean: agg.map(|a| a.test_mean),
            test_std: agg.map(|a| a.test_std),
            note: protocol_note(protocol),
            ..self.clone()
        }
    }

    pub fn chosen_cell(&self) -> Option<&CellResult> {
        self.chosen.map(|i| &self.cells[i])
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.aggregate.is_none())
    }

    /// One row per (cell, run), then `mean` and `std` rows per cell.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "cell,learning_rate,weight_decay,dropout,k,run,seed,status,best_epoch,epochs,val_acc,test_acc")?;
        for c in &self.cells {
            let p = &c.cell;
            let prefix = format!("{},{},{},{},{}", p.index, p.learning_rate, p.weight_decay, p.dropout, p.k);
            let status = if c.aggregate.is_some() { "ok" } else { "failed" };
            for r in &c.runs {
                writeln!(
                    w,
                    "{prefix},{},{},{status},{},{},{},{}",
                    r.run, r.seed, r.best_epoch, r.epochs, r.val_acc, r.test_acc
                )?;
            }
            match &c.aggregate {
                Some(a) => {
                    writeln!(w, "{prefix},mean,,{status},,,{},{}", a.val_mean, a.test_mean)?;
                    writeln!(w, "{prefix},std,,{status},,,{},{}", a.val_std, a.test_std)?;
                }
                None => writeln!(w, "{prefix},,,{status},,,,")?,
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> SelectionSummary {
        SelectionSummary {
            variant: self.variant,
            operator: self.operator,
            protocol: self.protocol,
            biased: self.biased,
            n_runs: self.n_runs,
            base_seed: self.base_seed,
            cells: self.cells.len(),
            failed_cells: self.failed_cells().map(|c| (c.cell.index, c.error.clone().unwrap_or_default())).collect(),
            cache_builds: self.cache_builds,
            chosen: self.chosen_cell().map(|c| c.cell),
            chosen_aggregate: self.chosen_cell().and_then(|c| c.aggregate),
            test_mean: self.test_mean,
            test_std: self.test_std,
            note: self.note.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub variant: Variant,
    pub operator: OperatorKind,
    pub protocol: Protocol,
    pub biased: bool,
    pub n_runs: usize,
    pub base_seed: u64,
    pub cells: usize,
    pub failed_cells: Vec<(usize, String)>,
    pub cache_builds: usize,
    pub chosen: Option<Cell>,
    pub chosen_aggregate: Option<CellAggregate>,
    pub test_mean: Option<f64>,
    pub test_std: Option<f64>,
    pub note: String,
}

fn run_cell(variant: Variant, graph: &Graph, cache: &DiffusionCache, grid: &GridSpec, cell: Cell) -> CellResult {
    let runs: Result<Vec<RunResult>> = (0..grid.n_runs)
        .map(|run| {
            let seed = run_seed(grid.seed, cell.index, run);
            let cfg = TrainConfig {
                k: cell.k,
                learning_rate: cell.learning_rate,
                weight_decay: cell.weight_decay,
                dropout: cell.dropout,
                max_epochs: grid.max_epochs,
                patience: grid.patience,
                seed,
                ..Default::default()
            };
            let rep = train(variant, cache, graph, &cfg)?;
            Ok(RunResult {
                run,
                seed,
                best_epoch: rep.best_epoch,
                epochs: rep.epochs_run(),
                val_acc: rep.best_val_acc,
                test_acc: rep.test_acc_at_best,
            })
        })
        .collect();
    match runs {
        Ok(runs) => {
            let val: Vec<f64> = runs.iter().map(|r| r.val_acc).collect();
            let test: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
            let (val_mean, val_std) = aggregate_runs(&val).expect("n_runs >= 1");
            let (test_mean, test_std) = aggregate_runs(&test).expect("n_runs >= 1");
            CellResult {
                cell,
                runs,
                aggregate: Some(CellAggregate { val_mean, val_std, test_mean, test_std }),
                error: None,
            }
        }
        Err(e) => failed(cell, &e),
    }
}

fn failed(cell: Cell, e: &Error) -> CellResult {
    CellResult { cell, runs: Vec::new(), aggregate: None, error: Some(e.to_string()) }
}

/// Grid search with in-memory caches restricted to the labeled rows.
pub fn grid_search(variant: Variant, graph: &Graph, grid: &GridSpec) -> Result<SelectionReport> {
    let labeled = graph.splits().labeled_nodes();
    grid_search_with(variant, graph, grid, |op, k| {
        let p = PropagationOperator::from_graph(op, graph);
        DiffusionCache::build_for_rows(&p, graph.features(), k, &labeled)
    })
}

/// Grid search with a caller-supplied cache source, called once per
/// distinct k. Groups are processed one at a time in ascending k so only
/// one cache is alive; cells and runs inside a group run in parallel.
pub fn grid_search_with(
    variant: Variant,
    graph: &Graph,
    grid: &GridSpec,
    build_cache: impl Fn(OperatorKind, usize) -> Result<DiffusionCache>,
) -> Result<SelectionReport> {
    grid.validate()?;
    let operator = grid.operator.unwrap_or(variant.default_operator());
    let cells = grid.cells();
    let ks: BTreeSet<usize> = cells.iter().map(|c| c.k).collect();
    let mut results: Vec<Option<CellResult>> = vec![None; cells.len()];
    let mut builds = 0;
    for k in ks {
        let group: Vec<Cell> = cells.iter().copied().filter(|c| c.k == k).collect();
        builds += 1;
        match build_cache(operator, k) {
            Ok(cache) => {
                let done: Vec<CellResult> =
                    group.par_iter().map(|&c| run_cell(variant, graph, &cache, grid, c)).collect();
                for r in done {
                    let i = r.cell.index;
                    results[i] = Some(r);
                }
            }
            Err(e) => {
                for c in group {
                    results[c.index] = Some(failed(c, &e));
                }
            }
        }
    }
    let cells = results.into_iter().map(|r| r.expect("every cell visited")).collect();
    Ok(SelectionReport::assemble(variant, operator, grid, cells, builds, grid.protocol))
}
