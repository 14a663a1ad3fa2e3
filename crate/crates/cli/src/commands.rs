use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spgc::bounds::{
    egc_rademacher_bound, egc_truncation_bound, extract_coefficients, lgc_rademacher_bound, write_coefficients_csv,
    BoundInputs,
};
use spgc::data_io::{load_dataset, save_dataset, validate_bundle};
use spgc::oracle::{run_all, OracleConfig};
use spgc::propagation::cache_file_name;
use spgc::selection::{aggregate_runs, grid_search_with, run_seed, GridSpec};
use spgc::synth::{sbm_bundle, SbmConfig};
use spgc::training::write_history_csv;
use spgc::{Checkpoint, DiffusionCache, OperatorKind, PropagationOperator, TrainConfig, Variant};

use crate::cache::{cache_dir, obtain};
use crate::manifest::RunManifest;
use crate::{BoundsArgs, GridArgs, TrainArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let written =
        serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from).and_then(|_| writeln!(out));
    match written {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn prep(
    data: &Path,
    operator: OperatorKind,
    k: usize,
    labeled_only: bool,
    out: Option<PathBuf>,
    dir: Option<PathBuf>,
) -> Result<bool> {
    let bundle = load_dataset(data)?;
    let out = out.unwrap_or_else(|| {
        cache_dir(dir.as_deref(), data).join(cache_file_name(&bundle.name, operator, k, labeled_only))
    });
    let g = &bundle.graph;
    let p = PropagationOperator::from_graph(operator, g);
    let cache = if labeled_only {
        DiffusionCache::build_for_rows(&p, g.features(), k, &g.splits().labeled_nodes())?
    } else {
        DiffusionCache::build(&p, g.features(), k)?
    };
    if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    cache.save(&out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "built {} cache for {} with {} terms ({} rows) in {:.3} ms -> {}",
        operator,
        bundle.name,
        k + 1,
        cache.n_rows(),
        cache.build_time().as_secs_f64() * 1e3,
        out.display()
    );
    Ok(true)
}

#[derive(Serialize)]
struct RunSummary {
    run: usize,
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    stopped_early: bool,
    best_val_acc: f64,
    test_acc_at_best: f64,
    final_train_acc: f64,
    final_val_acc: f64,
    final_test_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_epoch_ms: Option<f64>,
    history: PathBuf,
    checkpoint: PathBuf,
}

#[derive(Serialize)]
struct TrainSummary {
    variant: Variant,
    operator: OperatorKind,
    dataset: String,
    config: TrainConfig,
    runs: Vec<RunSummary>,
    val_mean: f64,
    val_std: f64,
    test_mean: f64,
    test_std: f64,
}

fn run_files(out: &Path, runs: usize, r: usize) -> (PathBuf, PathBuf) {
    let suffix = if runs > 1 { format!("-run{r}") } else { String::new() };
    (out.join(format!("history{suffix}.csv")), out.join(format!("checkpoint{suffix}.ckpt")))
}

pub fn train(args: &TrainArgs) -> Result<bool> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let base = TrainConfig {
        k: args.k,
        learning_rate: args.lr,
        weight_decay: args.wd,
        dropout: args.dropout,
        max_epochs: args.max_epochs,
        patience: args.patience,
        seed: args.seed,
        ..Default::default()
    };
    base.validate()?;
    fs::create_dir_all(&args.out)?;
    let mut outputs: Vec<PathBuf> = (0..args.runs)
        .flat_map(|r| {
            let (h, c) = run_files(&args.out, args.runs, r);
            [h, c]
        })
        .collect();
    outputs.push(args.out.join("summary.json"));
    let manifest = RunManifest::begin(args.out.join("manifest.json"), "train", args, Some(args.seed), outputs)?;

    let bundle = load_dataset(&args.data)?;
    let operator = args.operator.unwrap_or(args.variant.default_operator());
    let dir = cache_dir(args.cache.cache_dir.as_deref(), &args.data);
    let got = obtain(&bundle, operator, args.k, &dir, !args.cache.no_cache)?;
    match (&got.path, got.built) {
        (Some(p), false) => eprintln!("using cache {}", p.display()),
        (path, _) => eprintln!(
            "built {operator} cache (k = {}) in {:.3} ms{}",
            args.k,
            got.cache.build_time().as_secs_f64() * 1e3,
            path.as_ref().map(|p| format!(" -> {}", p.display())).unwrap_or_default()
        ),
    }

    let mut runs = Vec::new();
    for r in 0..args.runs {
        let cfg = TrainConfig { seed: run_seed(args.seed, 0, r), ..base.clone() };
        let rep = spgc::train(args.variant, &got.cache, &bundle.graph, &cfg)?;
        let (hist_path, ckpt_path) = run_files(&args.out, args.runs, r);
        let mut w = create(&hist_path)?;
        write_history_csv(&rep.history, &mut w, args.timing)?;
        w.flush()?;
        Checkpoint::new(rep.final_params.clone(), cfg.seed).save(&ckpt_path)?;
        let last = rep.history.last().expect("at least one epoch");
        eprintln!(
            "run {r}: {} epochs, best epoch {}, val {:.4}, test {:.4}, {:.3} ms/epoch",
            rep.epochs_run(),
            rep.best_epoch,
            rep.best_val_acc,
            rep.test_acc_at_best,
            rep.mean_epoch_ms()
        );
        runs.push(RunSummary {
            run: r,
            seed: cfg.seed,
            epochs: rep.epochs_run(),
            best_epoch: rep.best_epoch,
            stopped_early: rep.stopped_early,
            best_val_acc: rep.best_val_acc,
            test_acc_at_best: rep.test_acc_at_best,
            final_train_acc: last.train_acc,
            final_val_acc: last.val_acc,
            final_test_acc: last.test_acc,
            mean_epoch_ms: args.timing.then(|| rep.mean_epoch_ms()),
            history: hist_path,
            checkpoint: ckpt_path,
        });
    }
    let val: Vec<f64> = runs.iter().map(|r| r.best_val_acc).collect();
    let test: Vec<f64> = runs.iter().map(|r| r.test_acc_at_best).collect();
    let (val_mean, val_std) = aggregate_runs(&val)?;
    let (test_mean, test_std) = aggregate_runs(&test)?;
    let summary = TrainSummary {
        variant: args.variant,
        operator,
        dataset: bundle.name.clone(),
        config: base,
        runs,
        val_mean,
        val_std,
        test_mean,
        test_std,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    println!("test accuracy {:.2} ± {:.2} over {} run(s)", 100.0 * test_mean, 100.0 * test_std, args.runs);
    manifest.finish()?;
    Ok(true)
}

pub fn gridsearch(args: &GridArgs) -> Result<bool> {
    let bundle = load_dataset(&args.data)?;
    let mut grid = match &args.grid {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading grid {}", path.display()))?;
            GridSpec::parse(&text).with_context(|| format!("in grid file {}", path.display()))?
        }
        None => GridSpec::table2(&bundle.name)?,
    };
    if let Some(p) = args.protocol {
        grid.protocol = p;
    }
    if let Some(n) = args.runs {
        grid.n_runs = n;
    }
    if let Some(s) = args.seed {
        grid.seed = s;
    }
    if args.operator.is_some() {
        grid.operator = args.operator;
    }
    grid.validate()?;

    fs::create_dir_all(&args.out)?;
    let files = ["report.csv", "summary.json", "grid.txt"].map(|f| args.out.join(f));
    let manifest =
        RunManifest::begin(args.out.join("manifest.json"), "gridsearch", &grid, Some(grid.seed), files.to_vec())?;
    fs::write(&files[2], grid.to_text())?;

    let dir = cache_dir(args.cache.cache_dir.as_deref(), &args.data);
    let persist = !args.cache.no_cache;
    let report = grid_search_with(args.variant, &bundle.graph, &grid, |op, k| {
        eprintln!("k = {k}: preparing {op} cache");
        obtain(&bundle, op, k, &dir, persist).map(|o| o.cache).map_err(|e| spgc::Error::InvalidInput(format!("{e:#}")))
    })?;

    let mut w = create(&files[0])?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&files[1], &report.summary())?;
    for c in report.failed_cells() {
        eprintln!("cell {} failed: {}", c.cell.index, c.error.as_deref().unwrap_or(""));
    }
    match (report.chosen_cell(), report.test_mean, report.test_std) {
        (Some(c), Some(m), Some(s)) => println!(
            "chosen cell {} (lr {}, wd {}, dropout {}, k {}) by {}: test accuracy {:.2} ± {:.2}{}",
            c.cell.index,
            c.cell.learning_rate,
            c.cell.weight_decay,
            c.cell.dropout,
            c.cell.k,
            report.protocol,
            100.0 * m,
            100.0 * s,
            if report.biased { " [biased]" } else { "" }
        ),
        _ => println!("no cell completed"),
    }
    manifest.finish()?;
    let all_ok = report.failed_cells().next().is_none();
    Ok(all_ok)
}

pub fn coeffs(checkpoint: &Path, cache: Option<&Path>, out: &Path) -> Result<bool> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let params = &ckpt.params;
    let cache =
        cache.map(|p| DiffusionCache::load(p).with_context(|| format!("loading {}", p.display()))).transpose()?;
    let coeffs = extract_coefficients(params, cache.as_ref())?;
    if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = create(out)?;
    write_coefficients_csv(&coeffs, &mut w)?;
    w.flush()?;
    Ok(true)
}

#[derive(Serialize)]
struct BoundOutput<T: Serialize> {
    model: String,
    bound: f64,
    inputs: T,
}

#[derive(Serialize)]
struct TruncationInputs {
    beta: f64,
    spec_norm: f64,
    k: usize,
    xtheta_norm: f64,
}

pub fn bounds(args: &BoundsArgs) -> Result<bool> {
    let model = args.model.to_ascii_lowercase();
    match model.as_str() {
        "lgc" | "egc" => {
            let inputs = BoundInputs {
                a: args.a,
                b: args.b,
                m: args.m,
                lipschitz: args.lip,
                k: args.k,
                l1_norm: args.l1,
                l_samples: args.l_samples,
            };
            let bound = if model == "lgc" { lgc_rademacher_bound(&inputs)? } else { egc_rademacher_bound(&inputs)? };
            print_json(&BoundOutput { model, bound, inputs })?;
        }
        "truncation" => {
            let bound = egc_truncation_bound(args.beta, args.spec_norm, args.k, args.xtheta_norm)?;
            let inputs = TruncationInputs {
                beta: args.beta,
                spec_norm: args.spec_norm,
                k: args.k,
                xtheta_norm: args.xtheta_norm,
            };
            print_json(&BoundOutput { model, bound, inputs })?;
        }
        other => bail!("unknown bound model '{other}' (expected lgc, egc or truncation)"),
    }
    Ok(true)
}

pub fn oracle_check(seed: u64, graphs: usize, mc_samples: usize, out: Option<&Path>) -> Result<bool> {
    let cfg = OracleConfig { graphs, mc_samples, ..Default::default() };
    let report = run_all(seed, &cfg)?;
    print_json(&report)?;
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    for s in &report.suites {
        eprintln!(
            "{} {}: {} cases, {} violations, worst {:e} (tolerance {:e})",
            if s.passed() { "PASS" } else { "FAIL" },
            s.name,
            s.cases,
            s.violations,
            s.worst,
            s.tolerance
        );
    }
    Ok(report.violations() == 0)
}

pub fn validate(data: &Path) -> Result<bool> {
    let bundle = load_dataset(data)?;
    let diag = validate_bundle(&bundle);
    print_json(&diag)?;
    Ok(diag.errors.is_empty())
}

pub fn synth(out: &Path, seed: u64, n: usize, classes: usize, features: usize, name: Option<String>) -> Result<bool> {
    let cfg = SbmConfig { n, classes, feature_dim: features, ..Default::default() };
    let mut bundle = sbm_bundle(&cfg, seed)?;
    if let Some(name) = name {
        bundle.name = name;
    }
    save_dataset(&bundle, out)?;
    println!("wrote {} ({} nodes, {} edges) to {}", bundle.name, n, bundle.graph.edges().len(), out.display());
    Ok(true)
}
