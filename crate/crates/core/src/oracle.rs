//! Randomised self-checks that compare the sparse, cached code path against
//! the dense spectral oracle and the theoretical bounds. Each suite is a
//! deterministic function of its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{egc_truncation_bound, empirical_rademacher, Caps};
use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::graph::{Graph, Splits};
use crate::models::{forward_terms, ModelParams, Variant};
use crate::propagation::{polynomial_filter_spatial, DiffusionCache, OperatorKind, PropagationOperator};
use crate::seed::derive_seed;
use crate::spectral::{
    dense_eigendecomposition, dense_matrix_exponential, dense_spectral_norm, spectral_polynomial_filter,
};
use crate::synth::random_graph;

/// Failures listed per suite before truncation.
const MAX_LISTED: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest observed value of the checked quantity (an error, or a
    /// ratio to the bound).
    pub worst: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: name.into(), cases: 0, violations: 0, worst: 0.0, tolerance, failures: Vec::new() }
    }

    fn record(&mut self, value: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if value.is_nan() || value > self.worst {
            self.worst = value;
        }
        if !ok {
            self.violations += 1;
            if self.failures.len() < MAX_LISTED {
                self.failures.push(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl OracleReport {
    pub fn violations(&self) -> usize {
        self.suites.iter().map(|s| s.violations).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub graphs: usize,
    pub max_nodes: usize,
    pub max_hops: usize,
    pub truncation_graphs: usize,
    pub rademacher_instances: usize,
    pub mc_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            graphs: 50,
            max_nodes: 50,
            max_hops: 5,
            truncation_graphs: 10,
            rademacher_instances: 20,
            mc_samples: 200,
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize, c: usize) -> Graph {
    let n = rng.gen_range(min_n..=max_n);
    let p = rng.gen_range(0.05..0.5);
    random_graph(n, p, c, rng.gen())
}

/// `‖U diag(Σ θ_i λⁱ) Uᵀ x − Σ θ_i Lⁱ x‖_∞ ≤ 1e-10`, plus eigenvalue
/// ranges and decomposition residuals for `L` and `S` (reconstruction
/// within 1e-9, orthonormality within 1e-10).
pub fn spectral_suites(seed: u64, cfg: &OracleConfig) -> Result<Vec<SuiteReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 1]));
    let mut equiv = SuiteReport::new("spectral_spatial_equivalence", 1e-10);
    let mut ranges = SuiteReport::new("eigenvalue_ranges", 1e-9);
    let mut residuals = SuiteReport::new("decomposition_residuals", 1e-9);
    for g_idx in 0..cfg.graphs {
        let g = random_instance(&mut rng, 2, cfg.max_nodes, 1);
        let n = g.n();
        let lap = g.normalized_laplacian();
        let dec = dense_eigendecomposition(&lap.to_dense())?;
        let k = rng.gen_range(0..=cfg.max_hops);
        let theta: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spectral = spectral_polynomial_filter(&dec, &theta, &x)?;
        let spatial = polynomial_filter_spatial(&lap, &theta, &DenseMatrix::from_vec(n, 1, x)?)?;
        let err = spectral.iter().zip(spatial.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        equiv.record(err, err <= equiv.tolerance, || format!("graph {g_idx} (n={n}, k={k}): error {err:e}"));

        let s = g.renormalized_adjacency().to_dense();
        let dec_s = dense_eigendecomposition(&s)?;
        let eps = ranges.tolerance;
        for (name, d, lo, hi) in [("L", &dec, 0.0, 2.0), ("S", &dec_s, -1.0, 1.0)] {
            let min = d.eigenvalues.first().copied().unwrap_or(0.0);
            let max = d.eigenvalues.last().copied().unwrap_or(0.0);
            let excess = (lo - min).max(max - hi).max(0.0);
            ranges.record(excess, excess <= eps, || format!("graph {g_idx}: {name} spectrum [{min}, {max}]"));
        }
        for (name, d, m) in [("L", &dec, lap.to_dense()), ("S", &dec_s, s)] {
            let r = d.reconstruction_residual(&m);
            residuals.record(r, r <= 1e-9, || format!("graph {g_idx}: {name} reconstruction residual {r:e}"));
            let o = d.orthonormality_residual();
            residuals.record(o, o <= 1e-10, || format!("graph {g_idx}: {name} orthonormality residual {o:e}"));
        }
    }
    Ok(vec![equiv, ranges, residuals])
}

/// Gap between `e^{βL} X Θ` and the `k`-term EGC series, in spectral norm,
/// against the truncation bound. The reported value is gap / bound.
pub fn truncation_suite(seed: u64, cfg: &OracleConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 2]));
    let mut suite = SuiteReport::new("egc_truncation_bound", 1.0);
    for g_idx in 0..cfg.truncation_graphs {
        let c = rng.gen_range(1..=4);
        let classes = rng.gen_range(2..=3);
        let g = random_instance(&mut rng, 3, 20, c);
        let theta = DenseMatrix::from_fn(c, classes, |_, _| rng.gen_range(-1.0..1.0));
        let op = PropagationOperator::from_graph(OperatorKind::Laplacian, &g);
        let dense_l = op.matrix().to_dense();
        let dec = dense_eigendecomposition(&dense_l)?;
        let l_norm = dec.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xtheta = g.features().matmul(&theta)?;
        let xtheta_norm = dense_spectral_norm(&xtheta)?;
        let cache = DiffusionCache::build(&op, g.features(), 10)?;
        for beta in [0.5, 1.0] {
            let exact = dense_matrix_exponential(&dec, beta).matmul(&xtheta)?;
            for k in 2..=10 {
                let params = ModelParams::Egc { k, theta: theta.clone(), beta };
                let series = forward_terms(&cache.terms()[..=k], &params)?.logits;
                let mut diff = exact.clone();
                diff.add_scaled(-1.0, &series)?;
                let gap = dense_spectral_norm(&diff)?;
                let bound = egc_truncation_bound(beta, l_norm, k, xtheta_norm)?;
                let ratio = if bound > 0.0 {
                    gap / bound
                } else if gap == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                suite.record(ratio, gap <= bound, || {
                    format!("graph {g_idx} beta={beta} k={k}: gap {gap:e} > bound {bound:e}")
                });
            }
        }
    }
    Ok(suite)
}

/// Monte-Carlo empirical Rademacher complexity against the theoretical
/// bound, for LGC and EGC on small random instances. Passes when
/// `estimate ≤ bound + 3 · std_error`; the value recorded is
/// `(estimate − 3 · std_error) / bound`.
pub fn rademacher_suite(seed: u64, cfg: &OracleConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 3]));
    let mut suite = SuiteReport::new("empirical_rademacher_vs_bound", 1.0);
    for inst in 0..cfg.rademacher_instances {
        let c = rng.gen_range(1..=4);
        let k = rng.gen_range(0..=3);
        let base = random_instance(&mut rng, 4, 20, c);
        let n = base.n();
        let l = rng.gen_range(2..=n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let splits = Splits { train: order[..l].to_vec(), val: Vec::new(), test: Vec::new() };
        let labels = (0..n).map(|i| Some(i % 2)).collect();
        let g = Graph::new(n, base.edges().to_vec(), base.features().clone(), labels, splits)?;
        let kind = if rng.gen::<bool>() { OperatorKind::Laplacian } else { OperatorKind::RenormalizedAdjacency };
        let cache = DiffusionCache::build(&PropagationOperator::from_graph(kind, &g), g.features(), k)?;
        let caps = Caps { a: rng.gen_range(0.1..2.0), b: rng.gen_range(0.1..2.0) };
        for variant in [Variant::Lgc, Variant::Egc] {
            let est = empirical_rademacher(&cache, &g, variant, caps, cfg.mc_samples, rng.gen())?;
            let slack = est.bound + 3.0 * est.std_error;
            let ratio = (est.estimate - 3.0 * est.std_error) / est.bound;
            suite.record(ratio, est.estimate <= slack, || {
                format!(
                    "instance {inst} {variant} (n={n}, c={c}, k={k}, L={l}): estimate {} > bound {} + 3·{}",
                    est.estimate, est.bound, est.std_error
                )
            });
        }
    }
    Ok(suite)
}

pub fn run_all(seed: u64, cfg: &OracleConfig) -> Result<OracleReport> {
    let mut suites = spectral_suites(seed, cfg)?;
    suites.push(truncation_suite(seed, cfg)?);
    suites.push(rademacher_suite(seed, cfg)?);
    Ok(OracleReport { seed, suites })
}
