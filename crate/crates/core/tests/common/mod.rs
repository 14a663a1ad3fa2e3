//! Straight-line reference implementations used as test oracles. Nothing
//! here calls into the library's numerics: matrices are `Vec<Vec<f64>>`,
//! operators are built from the raw edge list, and models are written out
//! loop by loop.
#![allow(dead_code)]

mod dd;

pub use dd::Dd;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spgc::models::Gate;
use spgc::{DenseMatrix, ModelParams, Variant};

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for l in 0..m {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat, scale: f64) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + scale * q).collect()).collect()
}

pub fn to_mat(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_mat(m: &Mat) -> DenseMatrix {
    DenseMatrix::from_rows(m).unwrap()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for &(u, v) in edges {
        d[u] += 1.0;
        d[v] += 1.0;
    }
    d
}

/// `I − D^{-1/2} A D^{-1/2}`; isolated nodes keep a 1 on the diagonal.
pub fn laplacian(n: usize, edges: &[(usize, usize)]) -> Mat {
    let d = degrees(n, edges);
    let mut m = eye(n);
    for &(u, v) in edges {
        let w = 1.0 / (d[u] * d[v]).sqrt();
        m[u][v] -= w;
        m[v][u] -= w;
    }
    m
}

/// `D^{-1/2} A D^{-1/2}`.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Mat {
    let d = degrees(n, edges);
    let mut m = zeros(n, n);
    for &(u, v) in edges {
        let w = 1.0 / (d[u] * d[v]).sqrt();
        m[u][v] += w;
        m[v][u] += w;
    }
    m
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn renormalized(n: usize, edges: &[(usize, usize)]) -> Mat {
    let d: Vec<f64> = degrees(n, edges).iter().map(|x| x + 1.0).collect();
    let mut m = zeros(n, n);
    for i in 0..n {
        m[i][i] = 1.0 / d[i];
    }
    for &(u, v) in edges {
        let w = 1.0 / (d[u] * d[v]).sqrt();
        m[u][v] += w;
        m[v][u] += w;
    }
    m
}

/// `[X, PX, P²X, ...]` by repeated dense products.
pub fn powers(p: &Mat, x: &Mat, k: usize) -> Vec<Mat> {
    let mut out = vec![x.clone()];
    for i in 0..k {
        let next = mul(p, &out[i]);
        out.push(next);
    }
    out
}

/// Scalar type the model oracle can be evaluated in.
pub trait Real:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn of(x: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn approx(self) -> f64;
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn approx(self) -> f64 {
        self
    }
}

impl Real for Dd {
    fn of(x: f64) -> Self {
        Dd::new(x)
    }
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    fn ln(self) -> Self {
        Dd::ln(self)
    }
    fn approx(self) -> f64 {
        self.to_f64()
    }
}

/// One parameter entry shifted by `delta`: `(tensor, entry, delta)` in the
/// order of `ModelParams::tensors`.
pub type Shift<T> = Option<(usize, usize, T)>;

fn tensors_as<T: Real>(params: &ModelParams, shift: Shift<T>) -> Vec<Vec<T>> {
    let mut t: Vec<Vec<T>> = params.tensors().iter().map(|s| s.iter().map(|&v| T::of(v)).collect()).collect();
    if let Some((ti, e, d)) = shift {
        t[ti][e] = t[ti][e] + d;
    }
    t
}

/// `a (r x m, f64) * b (m x p, row-major flat)`.
fn mul_flat<T: Real>(a: &Mat, b: &[T], p: usize) -> Vec<Vec<T>> {
    a.iter()
        .map(|row| {
            (0..p).map(|j| row.iter().enumerate().fold(T::of(0.0), |s, (l, &x)| s + T::of(x) * b[l * p + j])).collect()
        })
        .collect()
}

fn relu_positive(x: f64) -> bool {
    x > 0.0
}

/// Logits of any variant, written out from its defining formula, with an
/// optional shift of one parameter entry.
pub fn logits_in<T: Real>(terms: &[Mat], params: &ModelParams, shift: Shift<T>) -> Vec<Vec<T>> {
    let t = tensors_as(params, shift);
    let classes = params.num_classes();
    let rows = terms[0].len();
    let k = params.k();
    let theta = &t[0];
    let zero = || vec![vec![T::of(0.0); classes]; rows];
    let axpy = |acc: &mut Vec<Vec<T>>, w: T, m: &Vec<Vec<T>>| {
        for (ar, mr) in acc.iter_mut().zip(m) {
            for (a, &v) in ar.iter_mut().zip(mr) {
                *a = *a + w * v;
            }
        }
    };
    match params.variant() {
        Variant::Sgc => mul_flat(&terms[k], theta, classes),
        Variant::Egc => {
            let beta = t[1][0];
            let mut acc = zero();
            let mut coeff = T::of(1.0);
            for (i, term) in terms[..=k].iter().enumerate() {
                if i > 0 {
                    coeff = coeff * beta / T::of(i as f64);
                }
                axpy(&mut acc, coeff, &mul_flat(term, theta, classes));
            }
            acc
        }
        Variant::Lgc => {
            let mut acc = zero();
            for i in 0..=k {
                axpy(&mut acc, t[1][i], &mul_flat(&terms[i], theta, classes));
            }
            acc
        }
        Variant::Hlgc => {
            let c = params.feature_dim();
            let h = spgc::models::gate_hidden_width(c);
            let mut acc = zero();
            for i in 0..=k {
                let (w1, w2) = (&t[2 + 2 * i], &t[3 + 2 * i]);
                let hidden = mul_flat(&terms[i], w1, h);
                let projected = mul_flat(&terms[i], theta, classes);
                for r in 0..rows {
                    let mut s = T::of(0.0);
                    for (j, &hv) in hidden[r].iter().enumerate() {
                        if relu_positive(hv.approx()) {
                            s = s + hv * w2[j];
                        }
                    }
                    let gate = T::of(1.0) / (T::of(1.0) + (T::of(0.0) - s).exp());
                    let g = gate * t[1][i];
                    for (o, &y) in acc[r].iter_mut().zip(&projected[r]) {
                        *o = *o + g * y;
                    }
                }
            }
            acc
        }
    }
}

pub fn logits(terms: &[Mat], params: &ModelParams) -> Mat {
    logits_in::<f64>(terms, params, None)
}

/// Mean cross-entropy of softmax(z) over `mask`.
pub fn loss_in<T: Real>(z: &[Vec<T>], labels: &[usize], mask: &[usize]) -> T {
    let mut total = T::of(0.0);
    for &i in mask {
        let m = z[i].iter().fold(z[i][0], |m, &v| if v.approx() > m.approx() { v } else { m });
        let sum = z[i].iter().fold(T::of(0.0), |s, &v| s + (v - m).exp());
        total = total + (m + sum.ln() - z[i][labels[i]]);
    }
    total / T::of(mask.len() as f64)
}

pub fn loss(z: &Mat, labels: &[usize], mask: &[usize]) -> f64 {
    loss_in(z, labels, mask)
}

pub fn random_mat(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Mat {
    (0..r).map(|_| (0..c).map(|_| rng.gen_range(-scale..scale)).collect()).collect()
}

pub fn random_edges(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                e.push((u, v));
            }
        }
    }
    e
}

/// Parameters with every entry drawn uniformly from `[-1, 1]`.
pub fn random_params(rng: &mut impl Rng, variant: Variant, k: usize, c: usize, classes: usize) -> ModelParams {
    let theta = from_mat(&random_mat(rng, c, classes, 1.0));
    let mut vec = |len: usize| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    match variant {
        Variant::Sgc => ModelParams::Sgc { k, theta },
        Variant::Egc => ModelParams::Egc { k, theta, beta: vec(1)[0] },
        Variant::Lgc => ModelParams::Lgc { k, theta, alpha: vec(k + 1) },
        Variant::Hlgc => {
            let h = spgc::models::gate_hidden_width(c);
            let alpha = vec(k + 1);
            let gates = (0..=k)
                .map(|_| Gate { w1: from_mat(&random_mat(rng, c, h, 1.0)), w2: from_mat(&random_mat(rng, h, 1, 1.0)) })
                .collect();
            ModelParams::Hlgc { k, theta, alpha, gates }
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worst entry of a central-difference check: relative error where the
/// reference has magnitude at least `small`, absolute error below it.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdWorst {
    pub rel: f64,
    pub abs: f64,
    pub entries: usize,
}

/// Compares `analytic` against central differences of the oracle loss.
/// Both evaluations and the difference are carried out in double-double,
/// so the only error left is the `O(h²)` truncation of the scheme itself.
pub fn finite_difference_check(
    terms: &[Mat],
    params: &ModelParams,
    analytic: &ModelParams,
    labels: &[usize],
    mask: &[usize],
    h: f64,
    small: f64,
) -> FdWorst {
    let mut worst = FdWorst::default();
    let eval = |shift: Shift<Dd>| loss_in(&logits_in(terms, params, shift), labels, mask);
    for (ti, grad) in analytic.tensors().iter().enumerate() {
        for (e, &a) in grad.iter().enumerate() {
            let up = eval(Some((ti, e, Dd::new(h))));
            let down = eval(Some((ti, e, Dd::new(-h))));
            let fd = ((up - down) / Dd::new(2.0 * h)).to_f64();
            worst.entries += 1;
            if fd.abs() < small {
                worst.abs = worst.abs.max((a - fd).abs());
            } else {
                worst.rel = worst.rel.max((a - fd).abs() / fd.abs());
            }
        }
    }
    worst
}
