//! Generalisation and approximation bounds as executable checks:
//! Rademacher complexity bounds for LGC and EGC, a Monte-Carlo estimate
//! of the empirical Rademacher complexity, the truncation error of the
//! finite EGC series, and the learned per-hop coefficients.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{egc_coefficients, forward_terms, Intermediates, ModelParams, Variant};
use crate::propagation::{DiffusionCache, PropagationOperator};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Cap on the hop coefficients: `‖α‖∞ ≤ a` or `|β| ≤ a`.
    pub a: f64,
    /// Cap on `‖θ‖₁`.
    pub b: f64,
    /// `sup |X_jj'|`.
    #[serde(rename = "M")]
    pub m: f64,
    /// Lipschitz constant of the output activation.
    pub lipschitz: f64,
    pub k: usize,
    /// `‖L‖₁` of the propagation operator.
    pub l1_norm: f64,
    /// Size of the sampling set.
    pub l_samples: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("a", self.a), ("b", self.b), ("M", self.m), ("lipschitz", self.lipschitz), ("l1_norm", self.l1_norm)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("bound input {name} = {v} must be finite and >= 0")));
            }
        }
        if self.l_samples == 0 {
            return Err(Error::InvalidInput("sampling set size must be at least 1".into()));
        }
        Ok(())
    }

    fn prefactor(&self) -> f64 {
        self.b * self.m * self.lipschitz / (self.l_samples as f64).sqrt()
    }
}

/// `Σ_{i=0}^{k} xⁱ` without cancellation near `x = 1`.
pub fn geometric_sum(x: f64, k: usize) -> f64 {
    let terms = (k + 1) as f64;
    if x == 1.0 {
        terms
    } else if (x - 1.0).abs() < 0.5 {
        (terms * (x - 1.0).ln_1p()).exp_m1() / (x - 1.0)
    } else {
        (x.powi(k as i32 + 1) - 1.0) / (x - 1.0)
    }
}

/// `(b M Λ / √L) · Σ_{i=0}^{k} a ‖L‖₁ⁱ`.
pub fn lgc_rademacher_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(inputs.prefactor() * inputs.a * geometric_sum(inputs.l1_norm, inputs.k))
}

/// `(b M Λ / √L) · exp(a ‖L‖₁)`; `k` is not used.
pub fn egc_rademacher_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(inputs.prefactor() * (inputs.a * inputs.l1_norm).exp())
}

/// `ln n!` by direct summation; exact enough for the `k` of interest.
fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|j| (j as f64).ln()).sum()
}

/// Error of truncating `e^{βL} XΘ` after `k + 1` terms:
/// `|β|^{k+1} ‖L‖^{k+1} / (k+1)! · ‖XΘ‖ / (1 − |β| ‖L‖ / (k+2))`.
pub fn egc_truncation_bound(beta: f64, spec_norm: f64, k: usize, xtheta_norm: f64) -> Result<f64> {
    for (name, v) in [("beta", beta), ("spectral norm", spec_norm), ("‖XΘ‖", xtheta_norm)] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be finite")));
        }
    }
    if spec_norm < 0.0 || xtheta_norm < 0.0 {
        return Err(Error::InvalidInput("norms must be non-negative".into()));
    }
    let r = beta.abs() * spec_norm;
    let ratio = r / (k + 2) as f64;
    if ratio >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "truncation bound needs |beta|·‖L‖/(k+2) < 1, got {ratio}; increase k"
        )));
    }
    if r == 0.0 || xtheta_norm == 0.0 {
        return Ok(0.0);
    }
    let log_head = (k + 1) as f64 * r.ln() - ln_factorial(k + 1);
    Ok(log_head.exp() * xtheta_norm / (1.0 - ratio))
}

pub const MAX_RADEMACHER_NODES: usize = 20;
pub const MAX_RADEMACHER_FEATURES: usize = 4;
pub const MAX_RADEMACHER_HOPS: usize = 3;
pub const ASCENT_STEPS: usize = 200;
pub const ASCENT_RESTARTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub mc_samples: usize,
    /// Matching theoretical bound, with `M = max |X|`, `Λ = 1` and `‖L‖₁`
    /// of the cache's operator.
    pub bound: f64,
    pub bound_inputs: BoundInputs,
}

/// Euclidean projection onto `{θ : ‖θ‖₁ ≤ radius}` (sort-based).
pub fn project_l1_ball(v: &mut [f64], radius: f64) {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return;
    }
    if radius <= 0.0 {
        v.fill(0.0);
        return;
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj > t {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - tau).max(0.0);
    }
}

/// `v_i = Σ_ℓ ε_ℓ (Pⁱ X)_{u_ℓ}` for each hop, as rows of a `(k+1) × c`
/// matrix.
fn signed_sums(terms: &[DenseMatrix], rows: &[usize], eps: &[f64]) -> DenseMatrix {
    let c = terms[0].cols();
    DenseMatrix::from_fn(terms.len(), c, |i, j| rows.iter().zip(eps).map(|(&r, &e)| e * terms[i].get(r, j)).sum())
}

/// Multi-restart projected gradient ascent on the bilinear objective
/// `(1/L) Σ_i w_i(φ) ⟨v_i, θ⟩`, where the hop weights `w(φ)` are `α` for
/// LGC and `βⁱ/i!` for EGC.
fn ascend(variant: Variant, v: &DenseMatrix, l: f64, caps: Caps, rng: &mut ChaCha8Rng) -> f64 {
    let hops = v.rows();
    let c = v.cols();
    let weights = |phi: &[f64]| -> Vec<f64> {
        match variant {
            Variant::Egc => egc_coefficients(phi[0], hops - 1),
            _ => phi.to_vec(),
        }
    };
    let objective = |phi: &[f64], theta: &[f64]| -> f64 {
        let w = weights(phi);
        (0..hops).map(|i| w[i] * v.row(i).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>() / l
    };
    let n_phi = if variant == Variant::Egc { 1 } else { hops };
    let mut best = 0.0f64;
    for _ in 0..ASCENT_RESTARTS {
        let mut phi: Vec<f64> = (0..n_phi).map(|_| rng.gen_range(-caps.a..=caps.a)).collect();
        let mut theta: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm: f64 = theta.iter().map(|x| x.abs()).sum();
        let scale = if norm > 0.0 { caps.b * rng.gen::<f64>() / norm } else { 0.0 };
        theta.iter_mut().for_each(|x| *x *= scale);
        best = best.max(objective(&phi, &theta));
        for step in 0..ASCENT_STEPS {
            let lr = 0.5 / (1.0 + step as f64).sqrt();
            let w = weights(&phi);
            // ∂/∂θ = Σ_i w_i v_i / L
            let g_theta: Vec<f64> = (0..c).map(|j| (0..hops).map(|i| w[i] * v.get(i, j)).sum::<f64>() / l).collect();
            // ∂/∂w_i = ⟨v_i, θ⟩ / L
            let g_w: Vec<f64> =
                (0..hops).map(|i| v.row(i).iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() / l).collect();
            let g_phi: Vec<f64> = match variant {
                Variant::Egc => {
                    let beta = phi[0];
                    let mut d = 0.0;
                    let mut prev = 1.0;
                    for (i, gw) in g_w.iter().enumerate().skip(1) {
                        d += prev * gw;
                        prev *= beta / i as f64;
                    }
                    vec![d]
                }
                _ => g_w,
            };
            let gmax = g_theta.iter().chain(&g_phi).fold(0.0f64, |m, x| m.max(x.abs()));
            if gmax == 0.0 {
                break;
            }
            for (p, g) in phi.iter_mut().zip(&g_phi) {
                *p = (*p + lr * caps.a * g / gmax).clamp(-caps.a, caps.a);
            }
            for (t, g) in theta.iter_mut().zip(&g_theta) {
                *t += lr * caps.b * g / gmax;
            }
            project_l1_ball(&mut theta, caps.b);
            best = best.max(objective(&phi, &theta));
        }
    }
    best
}

/// Monte-Carlo estimate of `E_ε sup_f (1/L) Σ_ℓ ε_ℓ f(u_ℓ)` over the
/// scalar-output LGC or EGC class with caps `a` and `b`, sampling set the
/// training nodes. The sup is approximated from below by projected
/// gradient ascent.
pub fn empirical_rademacher(
    cache: &DiffusionCache,
    graph: &Graph,
    variant: Variant,
    caps: Caps,
    mc_samples: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if !matches!(variant, Variant::Lgc | Variant::Egc) {
        return Err(Error::Unsupported(format!("no Rademacher bound is defined for {variant}")));
    }
    if graph.n() > MAX_RADEMACHER_NODES
        || graph.feature_dim() > MAX_RADEMACHER_FEATURES
        || cache.k() > MAX_RADEMACHER_HOPS
    {
        return Err(Error::InvalidInput(format!(
            "empirical Rademacher oracle is limited to n <= {MAX_RADEMACHER_NODES}, c <= {MAX_RADEMACHER_FEATURES}, k <= {MAX_RADEMACHER_HOPS}"
        )));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidInput("mc_samples must be at least 1".into()));
    }
    if !(caps.a >= 0.0 && caps.b >= 0.0) {
        return Err(Error::InvalidInput("caps must be >= 0".into()));
    }
    if cache.n_nodes() != graph.n() {
        return Err(Error::dims("empirical_rademacher", graph.n(), cache.n_nodes()));
    }
    let nodes = &graph.splits().train;
    if nodes.is_empty() {
        return Err(Error::EmptyMask);
    }
    let rows: Vec<usize> = nodes
        .iter()
        .map(|&v| {
            cache.row_of(v).ok_or(Error::OutOfRange { what: "node missing from cache", index: v, limit: graph.n() })
        })
        .collect::<Result<_>>()?;
    let l = rows.len() as f64;
    let terms = cache.terms();

    let sups: Vec<f64> = (0..mc_samples)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, draw as u64]));
            let eps: Vec<f64> = (0..rows.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            if caps.a == 0.0 || caps.b == 0.0 {
                return 0.0;
            }
            let v = signed_sums(terms, &rows, &eps);
            ascend(variant, &v, l, caps, &mut rng)
        })
        .collect();
    let n = sups.len() as f64;
    let mean = sups.iter().sum::<f64>() / n;
    let std_error = if sups.len() > 1 {
        (sups.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };

    let op = PropagationOperator::from_graph(cache.operator(), graph);
    let bound_inputs = BoundInputs {
        a: caps.a,
        b: caps.b,
        m: graph.features().max_abs(),
        lipschitz: 1.0,
        k: cache.k(),
        l1_norm: op.matrix().one_norm(),
        l_samples: rows.len(),
    };
    let bound = match variant {
        Variant::Egc => egc_rademacher_bound(&bound_inputs)?,
        _ => lgc_rademacher_bound(&bound_inputs)?,
    };
    Ok(RademacherEstimate { estimate: mean, std_error, mc_samples, bound, bound_inputs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopCoefficient {
    pub hop: usize,
    pub coefficient: f64,
    pub variance: f64,
}

/// Learned weight of each hop. For hLGC the weight varies per node, so the
/// mean and population variance of `f_i(Pⁱ X)` over the cache rows are
/// reported, and the cache is required.
pub fn extract_coefficients(params: &ModelParams, cache: Option<&DiffusionCache>) -> Result<Vec<HopCoefficient>> {
    let flat = |c: &[f64]| -> Vec<HopCoefficient> {
        c.iter().enumerate().map(|(hop, &coefficient)| HopCoefficient { hop, coefficient, variance: 0.0 }).collect()
    };
    match params {
        ModelParams::Sgc { .. } => Err(Error::Unsupported("SGC has no per-hop coefficient series".into())),
        ModelParams::Egc { k, beta, .. } => Ok(flat(&egc_coefficients(*beta, *k))),
        ModelParams::Lgc { alpha, .. } => Ok(flat(alpha)),
        ModelParams::Hlgc { k, alpha, .. } => {
            let cache =
                cache.ok_or_else(|| Error::InvalidInput("hLGC coefficients need the diffusion cache".into()))?;
            if *k > cache.k() {
                return Err(Error::OutOfRange { what: "hop", index: *k, limit: cache.k() });
            }
            let trace = forward_terms(&cache.terms()[..=*k], params)?;
            let Intermediates::Gated(hops) = trace.intermediates else {
                unreachable!("hLGC forward always records gates")
            };
            Ok(hops
                .iter()
                .zip(alpha)
                .enumerate()
                .map(|(hop, (h, &a))| {
                    let n = h.gate.len() as f64;
                    let vals: Vec<f64> = h.gate.iter().map(|g| g * a).collect();
                    let mean = vals.iter().sum::<f64>() / n;
                    let variance = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    HopCoefficient { hop, coefficient: mean, variance }
                })
                .collect())
        }
    }
}

pub fn write_coefficients_csv(coeffs: &[HopCoefficient], mut w: impl Write) -> Result<()> {
    writeln!(w, "hop,coefficient,variance")?;
    for c in coeffs {
        writeln!(w, "{},{},{}", c.hop, c.coefficient, c.variance)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, Gate};
    use crate::propagation::OperatorKind;
    use crate::synth::random_graph;
    use proptest::prelude::*;
    use rand::Rng;

    fn hand_point() -> BoundInputs {
        BoundInputs { a: 1.0, b: 1.0, m: 1.0, lipschitz: 1.0, k: 1, l1_norm: 2.0, l_samples: 4 }
    }

    #[test]
    fn hand_evaluated_points() {
        assert_eq!(lgc_rademacher_bound(&hand_point()).unwrap(), 1.5);
        let e = egc_rademacher_bound(&hand_point()).unwrap();
        let want = 2f64.exp() / 2.0;
        assert!(((e - want) / want).abs() < 1e-12);
        assert!((e - 3.6945).abs() < 1e-4);
        let zero_a = BoundInputs { a: 0.0, ..hand_point() };
        assert_eq!(egc_rademacher_bound(&zero_a).unwrap(), 0.5);
    }

    #[test]
    fn lgc_single_term() {
        let p = BoundInputs { k: 0, a: 0.3, b: 2.0, m: 0.5, lipschitz: 1.5, l1_norm: 7.0, l_samples: 9 };
        let want = 0.3 * 2.0 * 0.5 * 1.5 / 3.0;
        assert!((lgc_rademacher_bound(&p).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn geometric_sum_matches_loop() {
        for &x in &[0.0f64, 0.3, 0.999_999, 1.0, 1.000_001, 1.4, 2.0, 3.5] {
            for k in 0..30 {
                let direct: f64 = (0..=k).map(|i| x.powi(i as i32)).sum();
                let s = geometric_sum(x, k);
                assert!(((s - direct) / direct).abs() < 1e-12, "x={x} k={k}: {s} vs {direct}");
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(lgc_rademacher_bound(&BoundInputs { l_samples: 0, ..hand_point() }).is_err());
        assert!(egc_rademacher_bound(&BoundInputs { b: -1.0, ..hand_point() }).is_err());
    }

    #[test]
    fn truncation_hand_point() {
        let got = egc_truncation_bound(1.0, 2.0, 10, 1.0).unwrap();
        let want = 2048.0 / 39_916_800.0 * 1.2;
        assert!(((got - want) / want).abs() < 1e-12);
        assert!((got - 6.157e-5).abs() < 1e-8);
        assert_eq!(egc_truncation_bound(0.0, 2.0, 3, 1.0).unwrap(), 0.0);
        let err = egc_truncation_bound(2.0, 2.0, 1, 1.0).unwrap_err();
        assert!(err.to_string().contains("(k+2) < 1"));
    }

    proptest! {
        #[test]
        fn lgc_monotone_in_k(a in 0.0f64..3.0, b in 0.0f64..3.0, m in 0.0f64..3.0, lip in 0.0f64..3.0,
                             x in 0.0f64..3.0, l in 1usize..100, k in 0usize..40) {
            let p = BoundInputs { a, b, m, lipschitz: lip, k, l1_norm: x, l_samples: l };
            let lo = lgc_rademacher_bound(&p).unwrap();
            let hi = lgc_rademacher_bound(&BoundInputs { k: k + 1, ..p }).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn monotone_in_caps(a in 0.0f64..3.0, b in 0.0f64..3.0, m in 0.0f64..3.0, lip in 0.0f64..3.0,
                            x in 0.0f64..3.0, l in 1usize..100, k in 0usize..20, d in 0.0f64..1.0) {
            let p = BoundInputs { a, b, m, lipschitz: lip, k, l1_norm: x, l_samples: l };
            for bumped in [
                BoundInputs { a: a + d, ..p },
                BoundInputs { b: b + d, ..p },
                BoundInputs { m: m + d, ..p },
                BoundInputs { lipschitz: lip + d, ..p },
            ] {
                prop_assert!(lgc_rademacher_bound(&bumped).unwrap() >= lgc_rademacher_bound(&p).unwrap());
                prop_assert!(egc_rademacher_bound(&bumped).unwrap() >= egc_rademacher_bound(&p).unwrap());
            }
        }

        #[test]
        fn l1_projection_is_feasible_and_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 1..10), r in 0.0f64..4.0) {
            let mut p = v.clone();
            project_l1_ball(&mut p, r);
            prop_assert!(p.iter().map(|x| x.abs()).sum::<f64>() <= r + 1e-12);
            let mut q = p.clone();
            project_l1_ball(&mut q, r);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn small_instance(seed: u64) -> (Graph, DiffusionCache) {
        let g0 = random_graph(12, 0.3, 3, seed);
        let splits = crate::graph::Splits { train: (0..8).collect(), val: vec![8, 9], test: vec![10, 11] };
        let labels = (0..12).map(|i| Some(i % 2)).collect();
        let g = Graph::new(12, g0.edges().to_vec(), g0.features().clone(), labels, splits).unwrap();
        let op = PropagationOperator::from_graph(OperatorKind::Laplacian, &g);
        let cache = DiffusionCache::build(&op, g.features(), 2).unwrap();
        (g, cache)
    }

    #[test]
    fn zero_caps_give_zero() {
        let (g, cache) = small_instance(1);
        let r = empirical_rademacher(&cache, &g, Variant::Lgc, Caps { a: 0.0, b: 0.0 }, 50, 0).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn ascent_reaches_closed_form_sup_for_lgc() {
        // the LGC sup over the box and the l1 ball is a·b·max_j Σ_i |v_ij| / L
        let (g, cache) = small_instance(2);
        let rows: Vec<usize> = g.splits().train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let eps: Vec<f64> = (0..rows.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let v = signed_sums(cache.terms(), &rows, &eps);
            let caps = Caps { a: 0.7, b: 1.3 };
            let exact =
                (0..v.cols()).map(|j| (0..v.rows()).map(|i| v.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
                    * caps.a
                    * caps.b
                    / rows.len() as f64;
            let got = ascend(Variant::Lgc, &v, rows.len() as f64, caps, &mut rng);
            assert!(got <= exact + 1e-12);
            assert!(got >= 0.99 * exact, "{got} vs {exact}");
        }
    }

    #[test]
    fn estimate_below_bound() {
        let (g, cache) = small_instance(3);
        for variant in [Variant::Lgc, Variant::Egc] {
            let r = empirical_rademacher(&cache, &g, variant, Caps { a: 1.0, b: 1.0 }, 100, 5).unwrap();
            assert!(r.estimate > 0.0);
            assert!(r.estimate <= r.bound + 3.0 * r.std_error, "{variant}: {r:?}");
        }
        assert!(empirical_rademacher(&cache, &g, Variant::Sgc, Caps { a: 1.0, b: 1.0 }, 10, 0).is_err());
    }

    #[test]
    fn rejects_large_instances() {
        let g = random_graph(25, 0.2, 2, 0);
        let op = PropagationOperator::from_graph(OperatorKind::Laplacian, &g);
        let cache = DiffusionCache::build(&op, g.features(), 1).unwrap();
        assert!(empirical_rademacher(&cache, &g, Variant::Lgc, Caps { a: 1.0, b: 1.0 }, 1, 0).is_err());
    }

    #[test]
    fn coefficient_series() {
        let g = random_graph(6, 0.5, 3, 0);
        let op = PropagationOperator::from_graph(OperatorKind::Laplacian, &g);
        let cache = DiffusionCache::build(&op, g.features(), 4).unwrap();

        let egc = ModelParams::Egc { k: 3, theta: DenseMatrix::zeros(3, 2), beta: 1.0 };
        let c: Vec<f64> = extract_coefficients(&egc, None).unwrap().iter().map(|h| h.coefficient).collect();
        assert_eq!(c.len(), 4);
        assert_eq!(&c[..3], &[1.0, 1.0, 0.5]);
        assert!((c[3] - 1.0 / 6.0).abs() < 1e-15);

        let lgc = init_params(Variant::Lgc, 4, 3, 2, 0).unwrap();
        let c = extract_coefficients(&lgc, None).unwrap();
        assert!(c.iter().all(|h| h.coefficient == 0.2 && h.variance == 0.0));

        let mut h = init_params(Variant::Hlgc, 2, 3, 2, 0).unwrap();
        if let ModelParams::Hlgc { alpha, gates, .. } = &mut h {
            *alpha = vec![1.0, 0.4, -2.0];
            for Gate { w2, .. } in gates.iter_mut() {
                *w2 = DenseMatrix::zeros(w2.rows(), 1);
            }
        }
        let c = extract_coefficients(&h, Some(&cache)).unwrap();
        let want = [0.5, 0.2, -1.0];
        for (hc, w) in c.iter().zip(want) {
            assert!((hc.coefficient - w).abs() < 1e-15);
            assert!(hc.variance < 1e-30);
        }

        let sgc = init_params(Variant::Sgc, 2, 3, 2, 0).unwrap();
        assert!(extract_coefficients(&sgc, Some(&cache)).is_err());

        let mut out = Vec::new();
        write_coefficients_csv(&c, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("hop,coefficient,variance\n0,0.5,"));
        assert_eq!(text.lines().count(), 4);
    }
}
