//! Acceptance checks. Runs every criterion at its stated tolerance and
//! prints one `PASS` / `FAIL` / `NOT RUN` line each; exits nonzero if any
//! criterion fails.
//!
//! Criteria 1 and 2 need converted citation bundles under
//! `$SPGC_DATA_DIR/{citeseer,cora,pubmed}` and are reported as NOT RUN
//! without them.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use spgc::bounds::{egc_rademacher_bound, egc_truncation_bound, lgc_rademacher_bound, BoundInputs};
use spgc::data_io::load_dataset;
use spgc::models::{forward_terms, gradients_terms, init_params, Gate};
use spgc::oracle::{rademacher_suite, spectral_suites, truncation_suite, OracleConfig};
use spgc::selection::{grid_search, GridSpec, Protocol};
use spgc::sparse::spmm_call_count;
use spgc::synth::{sbm_bundle, SbmConfig};
use spgc::{DenseMatrix, DiffusionCache, ModelParams, OperatorKind, PropagationOperator, TrainConfig, Variant};

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

const DATASETS: [&str; 3] = ["citeseer", "cora", "pubmed"];

/// Mean test accuracy (percent) per published model and dataset.
fn published(v: Variant, dataset: &str) -> f64 {
    let row = match v {
        Variant::Sgc => [69.2, 80.1, 79.8],
        Variant::Egc => [71.3, 80.3, 79.4],
        Variant::Lgc => [72.2, 82.0, 80.6],
        Variant::Hlgc => [72.3, 82.4, 80.8],
    };
    row[DATASETS.iter().position(|d| *d == dataset).unwrap()]
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("SPGC_DATA_DIR").map(PathBuf::from).filter(|p| DATASETS.iter().all(|d| p.join(d).is_dir()))
}

/// Validated-protocol grid search on every (model, dataset) pair, shared by
/// criteria 1 and 2.
type Accuracies = Result<BTreeMap<(String, Variant), f64>, String>;

fn citation_results() -> Option<Accuracies> {
    static CELL: std::sync::OnceLock<Option<Accuracies>> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let dir = data_dir()?;
        let run = || -> Accuracies {
            let mut out = BTreeMap::new();
            for d in DATASETS {
                let bundle = load_dataset(dir.join(d)).map_err(|e| format!("{d}: {e}"))?;
                let grid = GridSpec::table2(d).map_err(|e| e.to_string())?;
                for v in Variant::ALL {
                    let rep = grid_search(v, &bundle.graph, &grid).map_err(|e| format!("{d} {v}: {e}"))?;
                    let mean = rep.test_mean.ok_or_else(|| format!("{d} {v}: no cell completed"))?;
                    out.insert((d.to_string(), v), 100.0 * mean);
                }
            }
            Ok(out)
        };
        Some(run())
    })
    .clone()
}

fn criterion_1() -> Outcome {
    let Some(results) = citation_results() else {
        return Outcome::NotRun("citation bundles unavailable; set SPGC_DATA_DIR".into());
    };
    let results = match results {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e),
    };
    let mut misses = Vec::new();
    for ((d, v), acc) in &results {
        let want = published(*v, d);
        if (acc - want).abs() > 1.5 {
            misses.push(format!("{v}/{d} {acc:.1} vs {want}"));
        }
    }
    verdict(misses.is_empty(), format!("{} of 12 outside ±1.5 points {misses:?}", misses.len()))
}

fn criterion_2() -> Outcome {
    let Some(results) = citation_results() else {
        return Outcome::NotRun("citation bundles unavailable; set SPGC_DATA_DIR".into());
    };
    let results = match results {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e),
    };
    let mut bad = Vec::new();
    for d in DATASETS {
        let acc = |v| results[&(d.to_string(), v)];
        if acc(Variant::Hlgc) < acc(Variant::Lgc) - 0.3 || acc(Variant::Lgc) < acc(Variant::Egc) - 0.3 {
            bad.push(d);
        }
    }
    verdict(bad.is_empty(), format!("ordering hLGC >= LGC >= EGC broken on {bad:?}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = OracleConfig { graphs: 50, max_nodes: 50, max_hops: 5, ..Default::default() };
    let suites = match spectral_suites(3, &cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let equiv = &suites[0];
    let elapsed = start.elapsed();
    verdict(
        equiv.passed() && equiv.cases == 50 && within(elapsed, 10),
        format!("{} graphs, worst error {:e} (limit 1e-10), {:.2?}", equiv.cases, equiv.worst, elapsed),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut entries = 0;
    for point in 0..100u64 {
        let mut r = rng(0xACCE_0004 ^ point);
        let n = r.gen_range(1..=10);
        let c = r.gen_range(1..=5);
        let k = r.gen_range(0..=4);
        let classes = r.gen_range(2..=4);
        let p = r.gen_range(0.1..0.7);
        let edges = random_edges(&mut r, n, p);
        let op = if r.gen() { laplacian(n, &edges) } else { renormalized(n, &edges) };
        let x = random_mat(&mut r, n, c, 1.0);
        let terms = powers(&op, &x, k);
        let dense: Vec<DenseMatrix> = terms.iter().map(from_mat).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let mut mask: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.7)).collect();
        if mask.is_empty() {
            mask.push(0);
        }
        for v in Variant::ALL {
            let params = random_params(&mut r, v, k, c, classes);
            let trace = forward_terms(&dense, &params).unwrap();
            let g = gradients_terms(&trace, &dense, &params, &labels, &mask).unwrap();
            let w = finite_difference_check(&terms, &params, &g, &labels, &mask, 1e-6, 1e-8);
            worst_rel = worst_rel.max(w.rel);
            worst_abs = worst_abs.max(w.abs);
            entries += w.entries;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst_rel <= 1e-5 && worst_abs <= 1e-10 && within(elapsed, 30),
        format!("{entries} entries, worst relative {worst_rel:e}, worst absolute {worst_abs:e}, {elapsed:.2?}"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = OracleConfig { truncation_graphs: 20, ..Default::default() };
    let suite = match truncation_suite(5, &cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let hand = egc_truncation_bound(1.0, 2.0, 10, 1.0).unwrap();
    let exact = 2048.0 / 39_916_800.0 / (1.0 - 2.0 / 12.0);
    let rel = (hand - exact).abs() / exact;
    verdict(
        suite.passed() && rel <= 1e-12,
        format!(
            "{} cases, {} violations, worst gap/bound {:.9}; hand point {hand:.6e} (relative error {rel:e})",
            suite.cases, suite.violations, suite.worst
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let lgc = BoundInputs { a: 1.0, b: 1.0, m: 1.0, lipschitz: 1.0, k: 1, l1_norm: 2.0, l_samples: 4 };
    let lgc_val = lgc_rademacher_bound(&lgc).unwrap();
    let egc_val = egc_rademacher_bound(&lgc).unwrap();
    let e2 = std::f64::consts::E * std::f64::consts::E / 2.0;
    let egc_rel = (egc_val - e2).abs() / e2;
    let cfg = OracleConfig { rademacher_instances: 20, mc_samples: 200, ..Default::default() };
    let suite = match rademacher_suite(6, &cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    verdict(
        lgc_val == 1.5 && egc_rel <= 1e-12 && suite.passed() && within(elapsed, 120),
        format!(
            "LGC hand point {lgc_val}, EGC hand point relative error {egc_rel:e}, MC {} cases / {} violations (worst {:.3}), {elapsed:.2?}",
            suite.cases, suite.violations, suite.worst
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut worst = [0.0f64; 3];
    for seed in 0..50u64 {
        let mut r = rng(0xACCE_0007 ^ seed);
        let n = r.gen_range(1..=30);
        let c = r.gen_range(1..=5);
        let k = r.gen_range(0..=6);
        let p = r.gen_range(0.05..0.5);
        let edges = random_edges(&mut r, n, p);
        let x = from_mat(&random_mat(&mut r, n, c, 1.0));
        let g = spgc::Graph::new(n, edges, x, vec![None; n], Default::default()).unwrap();
        let build = |kind| DiffusionCache::build(&PropagationOperator::from_graph(kind, &g), g.features(), k).unwrap();
        let (s, l) = (build(OperatorKind::RenormalizedAdjacency), build(OperatorKind::Laplacian));
        let theta = from_mat(&random_mat(&mut r, c, 3, 1.0));
        let logits = |cache: &DiffusionCache, p: &ModelParams| forward_terms(cache.terms(), p).unwrap().logits;

        let mut e_k = vec![0.0; k + 1];
        e_k[k] = 1.0;
        let sgc = ModelParams::Sgc { k, theta: theta.clone() };
        let lgc = ModelParams::Lgc { k, theta: theta.clone(), alpha: e_k };
        worst[0] = worst[0].max(logits(&s, &sgc).max_abs_diff(&logits(&s, &lgc)));

        let beta = r.gen_range(-2.0..2.0);
        let alpha = spgc::models::egc_coefficients(beta, k);
        let egc = ModelParams::Egc { k, theta: theta.clone(), beta };
        let lgc = ModelParams::Lgc { k, theta: theta.clone(), alpha: alpha.clone() };
        worst[1] = worst[1].max(logits(&l, &egc).max_abs_diff(&logits(&l, &lgc)));

        let ModelParams::Hlgc { gates, .. } = init_params(Variant::Hlgc, k, c, 3, seed).unwrap() else {
            unreachable!()
        };
        let gates = gates.into_iter().map(|g| Gate { w2: DenseMatrix::zeros(g.w2.rows(), 1), ..g }).collect();
        let hlgc = ModelParams::Hlgc { k, theta: theta.clone(), alpha: alpha.clone(), gates };
        let lgc = ModelParams::Lgc { k, theta, alpha: alpha.iter().map(|a| 0.5 * a).collect() };
        worst[2] = worst[2].max(logits(&l, &hlgc).max_abs_diff(&logits(&l, &lgc)));
    }
    verdict(
        worst.iter().all(|&w| w <= 1e-13),
        format!(
            "50 instances, worst |Δlogits| SGC/LGC {:e}, EGC/LGC {:e}, hLGC/LGC {:e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_8() -> Outcome {
    let bundle = sbm_bundle(&SbmConfig::default(), 8).unwrap();
    let g = &bundle.graph;
    let mut notes = Vec::new();
    let mut ok = true;
    for v in Variant::ALL {
        let before_build = spmm_call_count();
        let op = PropagationOperator::from_graph(v.default_operator(), g);
        let cache = DiffusionCache::build(&op, g.features(), 4).unwrap();
        let build_calls = spmm_call_count() - before_build;
        let before = spmm_call_count();
        let cfg = TrainConfig { k: 4, dropout: 0.2, max_epochs: 200, ..Default::default() };
        let rep = spgc::train(v, &cache, g, &cfg).unwrap();
        let train_calls = spmm_call_count() - before;
        ok &= train_calls == 0 && build_calls == 4;
        notes.push(format!("{v}: {build_calls} in cache build, {train_calls} over {} epochs", rep.epochs_run()));
    }
    verdict(ok, notes.join("; "))
}

fn spgc(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spgc")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("spgc {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<Vec<String>, String> {
    let mut differing = Vec::new();
    for n in names {
        let x = std::fs::read(a.join(n)).map_err(|e| format!("{n}: {e}"))?;
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n}: {e}"))?;
        if x != y {
            differing.push(n.to_string());
        }
    }
    Ok(differing)
}

fn criterion_9() -> Outcome {
    let run = || -> Result<(usize, Vec<String>), String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let t = |p: &str| tmp.path().join(p).to_string_lossy().into_owned();
        spgc(&["synth", "--out", &t("data"), "--seed", "9", "--n", "90"])?;
        let mut differing = Vec::new();
        let mut compared = 0;
        for v in ["sgc", "egc", "lgc", "hlgc"] {
            for rep in ["a", "b"] {
                let out = t(&format!("{v}-{rep}"));
                spgc(&[
                    "train",
                    "--data",
                    &t("data"),
                    "--variant",
                    v,
                    "--k",
                    "3",
                    "--dropout",
                    "0.5",
                    "--runs",
                    "2",
                    "--seed",
                    "17",
                    "--max-epochs",
                    "150",
                    "--no-cache",
                    "--out",
                    &out,
                ])?;
            }
            let names = ["history-run0.csv", "history-run1.csv", "checkpoint-run0.ckpt", "checkpoint-run1.ckpt"];
            let d = same_files(&tmp.path().join(format!("{v}-a")), &tmp.path().join(format!("{v}-b")), &names)?;
            compared += names.len();
            differing.extend(d.into_iter().map(|n| format!("{v}/{n}")));
        }
        let grid = t("grid.txt");
        std::fs::write(&grid, "lr = 0.2, 0.05\ndropout = 0, 0.5\nk = 1, 3\nruns = 2\nmax_epochs = 100\n")
            .map_err(|e| e.to_string())?;
        for rep in ["a", "b"] {
            spgc(&[
                "gridsearch",
                "--data",
                &t("data"),
                "--variant",
                "lgc",
                "--grid",
                &grid,
                "--out",
                &t(&format!("gs-{rep}")),
            ])?;
            spgc(&[
                "prep",
                "--data",
                &t("data"),
                "--op",
                "laplacian",
                "--k",
                "5",
                "--out",
                &t(&format!("prep-{rep}/c.spgc")),
            ])?;
        }
        let d = same_files(
            &tmp.path().join("gs-a"),
            &tmp.path().join("gs-b"),
            &["report.csv", "summary.json", "grid.txt"],
        )?;
        differing.extend(d);
        let d = same_files(&tmp.path().join("prep-a"), &tmp.path().join("prep-b"), &["c.spgc"])?;
        differing.extend(d);
        Ok((compared + 4, differing))
    };
    match run() {
        Ok((n, differing)) => verdict(
            differing.is_empty(),
            format!("{n} output files compared across repeated runs, differing: {differing:?}"),
        ),
        Err(e) => Outcome::Fail(e),
    }
}

fn criterion_10() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2] {
        let bundle = sbm_bundle(&SbmConfig { n: 120, ..Default::default() }, seed).unwrap();
        let grid = GridSpec {
            learning_rate: vec![0.2, 0.05, 0.001],
            weight_decay: vec![5e-3, 5e-4],
            dropout: vec![0.0, 0.5],
            k: vec![1, 2, 4],
            n_runs: 3,
            seed,
            max_epochs: 200,
            ..Default::default()
        };
        for v in Variant::ALL {
            let validated = grid_search(v, &bundle.graph, &grid).unwrap();
            let selected = validated.reselect(Protocol::TestSelected);
            let (a, b) = (validated.test_mean.unwrap(), selected.test_mean.unwrap());
            ok &= b >= a && selected.biased && !validated.biased;
            notes.push(format!("{v}: {:.1} >= {:.1}", 100.0 * b, 100.0 * a));
        }
    }
    verdict(ok, format!("test_selected vs validated on shared runs: {}", notes.join(", ")))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 10] = [
        ("accuracy reproduction", criterion_1),
        ("model ordering hLGC >= LGC >= EGC", criterion_2),
        ("spectral-spatial equivalence", criterion_3),
        ("gradient correctness", criterion_4),
        ("EGC truncation bound", criterion_5),
        ("Rademacher bounds", criterion_6),
        ("model-equivalence identities", criterion_7),
        ("no sparse products while training", criterion_8),
        ("determinism of outputs", criterion_9),
        ("selection-protocol bias", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let label = format!("criterion {:>2}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let line = match check() {
            Outcome::Pass(d) => format!("PASS    {label} ({d})"),
            Outcome::Fail(d) => {
                failed += 1;
                format!("FAIL    {label} ({d})")
            }
            Outcome::NotRun(d) => format!("NOT RUN {label} ({d})"),
        };
        println!("{line}");
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
