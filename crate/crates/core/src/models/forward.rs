//! Forward passes and analytic gradients.
//!
//! Every model reads the propagated terms `Pⁱ X` from a precomputed list and
//! only performs dense products, so no sparse work happens per evaluation.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::propagation::DiffusionCache;

use super::params::{Gate, ModelParams, Variant};

/// Output of a forward pass plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub logits: DenseMatrix,
    pub probs: DenseMatrix,
    pub intermediates: Intermediates,
}

#[derive(Clone, Debug)]
pub enum Intermediates {
    /// SGC needs nothing beyond the cached term.
    None,
    /// EGC / LGC: the hop weights and `Σ w_i Pⁱ X`.
    Weighted { weights: Vec<f64>, combined: DenseMatrix },
    /// hLGC, per hop.
    Gated(Vec<HopTrace>),
}

#[derive(Clone, Debug)]
pub struct HopTrace {
    /// `Pⁱ X · W1` before the ReLU.
    pub pre: DenseMatrix,
    /// `sigmoid(relu(pre) · W2)`, one value per row.
    pub gate: Vec<f64>,
    /// `Pⁱ X · Θ`.
    pub projected: DenseMatrix,
}

/// `c_0 = 1, c_i = c_{i-1} β / i`, i.e. `βⁱ / i!` without factorials.
pub fn egc_coefficients(beta: f64, k: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(k + 1);
    c.push(1.0);
    for i in 1..=k {
        let prev = c[i - 1];
        c.push(prev * beta / i as f64);
    }
    c
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_terms(terms: &[DenseMatrix], params: &ModelParams) -> Result<()> {
    let k = params.k();
    if terms.len() <= k {
        return Err(Error::OutOfRange { what: "hop", index: k, limit: terms.len().saturating_sub(1) });
    }
    let c = params.feature_dim();
    if terms[0].cols() != c {
        return Err(Error::dims("forward", format!("{c} feature columns"), terms[0].cols()));
    }
    params.validate()
}

fn expect_variant(params: &ModelParams, want: Variant) -> Result<()> {
    if params.variant() != want {
        return Err(Error::InvalidInput(format!("expected {want} parameters, got {}", params.variant())));
    }
    Ok(())
}

fn weighted_sum(terms: &[DenseMatrix], weights: &[f64]) -> Result<DenseMatrix> {
    let mut combined = DenseMatrix::zeros(terms[0].rows(), terms[0].cols());
    for (t, &w) in terms.iter().zip(weights) {
        if w != 0.0 {
            combined.add_scaled(w, t)?;
        }
    }
    Ok(combined)
}

/// Forward pass of any variant over an explicit list of propagated terms
/// (`terms[i] = Pⁱ X`, possibly with dropout applied).
pub fn forward_terms(terms: &[DenseMatrix], params: &ModelParams) -> Result<ForwardTrace> {
    check_terms(terms, params)?;
    let (logits, intermediates) = match params {
        ModelParams::Sgc { k, theta } => (terms[*k].matmul(theta)?, Intermediates::None),
        ModelParams::Egc { k, theta, beta } => {
            let weights = egc_coefficients(*beta, *k);
            let combined = weighted_sum(terms, &weights)?;
            (combined.matmul(theta)?, Intermediates::Weighted { weights, combined })
        }
        ModelParams::Lgc { theta, alpha, .. } => {
            let combined = weighted_sum(terms, alpha)?;
            (combined.matmul(theta)?, Intermediates::Weighted { weights: alpha.clone(), combined })
        }
        ModelParams::Hlgc { theta, alpha, gates, .. } => {
            let rows = terms[0].rows();
            let mut logits = DenseMatrix::zeros(rows, theta.cols());
            let mut hops = Vec::with_capacity(alpha.len());
            for ((t, &a), gate) in terms.iter().zip(alpha).zip(gates) {
                let hop = gated_hop(t, theta, gate)?;
                for r in 0..rows {
                    let g = hop.gate[r] * a;
                    for (z, &y) in logits.row_mut(r).iter_mut().zip(hop.projected.row(r)) {
                        *z += y * g;
                    }
                }
                hops.push(hop);
            }
            (logits, Intermediates::Gated(hops))
        }
    };
    let probs = logits.softmax_rows();
    Ok(ForwardTrace { logits, probs, intermediates })
}

fn gated_hop(t: &DenseMatrix, theta: &DenseMatrix, gate: &Gate) -> Result<HopTrace> {
    let pre = t.matmul(&gate.w1)?;
    let w2 = gate.w2.as_slice();
    let gate_values = (0..pre.rows())
        .map(|r| {
            let s: f64 = pre.row(r).iter().zip(w2).map(|(&a, &w)| a.max(0.0) * w).sum();
            sigmoid(s)
        })
        .collect();
    Ok(HopTrace { pre, gate: gate_values, projected: t.matmul(theta)? })
}

pub fn forward(cache: &DiffusionCache, params: &ModelParams) -> Result<ForwardTrace> {
    forward_terms(cache.terms(), params)
}

/// `softmax(Pᵏ X Θ)`.
pub fn forward_sgc(cache: &DiffusionCache, params: &ModelParams) -> Result<ForwardTrace> {
    expect_variant(params, Variant::Sgc)?;
    forward(cache, params)
}

/// `softmax(Σ βⁱ/i! Pⁱ X Θ)`.
pub fn forward_egc(cache: &DiffusionCache, params: &ModelParams) -> Result<ForwardTrace> {
    expect_variant(params, Variant::Egc)?;
    forward(cache, params)
}

/// `softmax(Σ α_i Pⁱ X Θ)`.
pub fn forward_lgc(cache: &DiffusionCache, params: &ModelParams) -> Result<ForwardTrace> {
    expect_variant(params, Variant::Lgc)?;
    forward(cache, params)
}

/// `softmax(Σ (Pⁱ X Θ) ⊙ f_i(Pⁱ X))` with
/// `f_i(H) = sigmoid(relu(H W1⁽ⁱ⁾) W2⁽ⁱ⁾) α_i`.
pub fn forward_hlgc(cache: &DiffusionCache, params: &ModelParams) -> Result<ForwardTrace> {
    expect_variant(params, Variant::Hlgc)?;
    forward(cache, params)
}

/// Gradient of the mean masked cross-entropy, returned in the shape of
/// `params`. `labels` and `mask` are indexed by cache row.
pub fn gradients(
    trace: &ForwardTrace,
    cache: &DiffusionCache,
    params: &ModelParams,
    labels: &[usize],
    mask: &[usize],
) -> Result<ModelParams> {
    gradients_terms(trace, cache.terms(), params, labels, mask)
}

pub fn gradients_terms(
    trace: &ForwardTrace,
    terms: &[DenseMatrix],
    params: &ModelParams,
    labels: &[usize],
    mask: &[usize],
) -> Result<ModelParams> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    check_terms(terms, params)?;
    let rows = trace.probs.rows();
    if labels.len() != rows {
        return Err(Error::dims("gradients labels", rows, labels.len()));
    }
    let classes = params.num_classes();
    if trace.probs.cols() != classes || terms[0].rows() != rows {
        return Err(Error::dims(
            "gradients",
            format!("{rows} rows x {classes} classes"),
            format!("probs {:?}, terms {} rows", trace.probs.shape(), terms[0].rows()),
        ));
    }

    // dLoss/dlogits on the masked rows
    let inv = 1.0 / mask.len() as f64;
    let mut dlogits = Vec::with_capacity(mask.len());
    for &r in mask {
        if r >= rows {
            return Err(Error::OutOfRange { what: "mask row", index: r, limit: rows });
        }
        let y = labels[r];
        if y >= classes {
            return Err(Error::OutOfRange { what: "label", index: y, limit: classes });
        }
        let mut g: Vec<f64> = trace.probs.row(r).iter().map(|p| p * inv).collect();
        g[y] -= inv;
        dlogits.push(g);
    }

    let mut grad = params.zeros_like();
    match (params, &mut grad, &trace.intermediates) {
        (ModelParams::Sgc { k, .. }, ModelParams::Sgc { theta: dtheta, .. }, _) => {
            accumulate_outer(dtheta, &terms[*k], mask, &dlogits, |_| 1.0);
        }
        (
            ModelParams::Egc { theta, .. },
            ModelParams::Egc { theta: dtheta, beta: dbeta, .. },
            Intermediates::Weighted { combined, weights },
        ) => {
            accumulate_outer(dtheta, combined, mask, &dlogits, |_| 1.0);
            // d(βⁱ/i!)/dβ = βⁱ⁻¹/(i-1)!, the previous coefficient
            let mut acc = 0.0;
            for i in 1..weights.len() {
                acc += weights[i - 1] * hop_inner(&terms[i], theta, mask, &dlogits);
            }
            *dbeta = acc;
        }
        (
            ModelParams::Lgc { theta, .. },
            ModelParams::Lgc { theta: dtheta, alpha: dalpha, .. },
            Intermediates::Weighted { combined, .. },
        ) => {
            accumulate_outer(dtheta, combined, mask, &dlogits, |_| 1.0);
            for (i, da) in dalpha.iter_mut().enumerate() {
                *da = hop_inner(&terms[i], theta, mask, &dlogits);
            }
        }
        (
            ModelParams::Hlgc { alpha, gates, .. },
            ModelParams::Hlgc { theta: dtheta, alpha: dalpha, gates: dgates, .. },
            Intermediates::Gated(hops),
        ) => {
            for (i, hop) in hops.iter().enumerate() {
                let a = alpha[i];
                let w2 = gates[i].w2.as_slice();
                let dgate = &mut dgates[i];
                accumulate_outer(dtheta, &terms[i], mask, &dlogits, |r| hop.gate[r] * a);
                let h = w2.len();
                let mut dpre = vec![0.0; h];
                for (g, &r) in dlogits.iter().zip(mask) {
                    let sig = hop.gate[r];
                    let dg: f64 = g.iter().zip(hop.projected.row(r)).map(|(a, b)| a * b).sum();
                    dalpha[i] += dg * sig;
                    let ds = dg * a * sig * (1.0 - sig);
                    if ds == 0.0 {
                        continue;
                    }
                    let pre = hop.pre.row(r);
                    let dw2 = dgate.w2.as_mut_slice();
                    for j in 0..h {
                        let relu = pre[j].max(0.0);
                        dw2[j] += ds * relu;
                        // ReLU derivative is 0 at exactly 0
                        dpre[j] = if pre[j] > 0.0 { ds * w2[j] } else { 0.0 };
                    }
                    let t = terms[i].row(r);
                    for (p, &tp) in t.iter().enumerate() {
                        if tp == 0.0 {
                            continue;
                        }
                        for (d, &dp) in dgate.w1.row_mut(p).iter_mut().zip(&dpre) {
                            *d += tp * dp;
                        }
                    }
                }
            }
        }
        _ => return Err(Error::InvalidInput("forward trace does not belong to these parameters".into())),
    }
    Ok(grad)
}

/// `out += Σ_r scale(r) · x[r]ᵀ g_r` over the masked rows.
fn accumulate_outer(
    out: &mut DenseMatrix,
    x: &DenseMatrix,
    mask: &[usize],
    dlogits: &[Vec<f64>],
    scale: impl Fn(usize) -> f64,
) {
    for (g, &r) in dlogits.iter().zip(mask) {
        let s = scale(r);
        if s == 0.0 {
            continue;
        }
        for (p, &xp) in x.row(r).iter().enumerate() {
            if xp == 0.0 {
                continue;
            }
            let f = xp * s;
            for (o, &gj) in out.row_mut(p).iter_mut().zip(g) {
                *o += f * gj;
            }
        }
    }
}

/// `Σ_r g_r · (t[r] Θ)` over the masked rows.
fn hop_inner(t: &DenseMatrix, theta: &DenseMatrix, mask: &[usize], dlogits: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (g, &r) in dlogits.iter().zip(mask) {
        for (p, &tp) in t.row(r).iter().enumerate() {
            if tp == 0.0 {
                continue;
            }
            let proj: f64 = theta.row(p).iter().zip(g).map(|(a, b)| a * b).sum();
            acc += tp * proj;
        }
    }
    acc
}
