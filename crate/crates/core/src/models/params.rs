use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::propagation::OperatorKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sgc,
    Egc,
    Lgc,
    Hlgc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sgc, Variant::Egc, Variant::Lgc, Variant::Hlgc];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Sgc => "sgc",
            Variant::Egc => "egc",
            Variant::Lgc => "lgc",
            Variant::Hlgc => "hlgc",
        }
    }

    /// SGC is defined on the renormalized adjacency; the others on the
    /// normalized Laplacian.
    pub fn default_operator(self) -> OperatorKind {
        match self {
            Variant::Sgc => OperatorKind::RenormalizedAdjacency,
            _ => OperatorKind::Laplacian,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Variant::Sgc => 0,
            Variant::Egc => 1,
            Variant::Lgc => 2,
            Variant::Hlgc => 3,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == t)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgc" => Ok(Variant::Sgc),
            "egc" => Ok(Variant::Egc),
            "lgc" => Ok(Variant::Lgc),
            "hlgc" => Ok(Variant::Hlgc),
            other => Err(Error::InvalidInput(format!("unknown model variant '{other}'"))),
        }
    }
}

/// Per-hop gate network of hLGC: `c → ⌈c/2⌉ → 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
}

/// Trainable parameters; each variant carries exactly its own fields.
/// `theta` is the shared `c × C` classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Sgc { k: usize, theta: DenseMatrix },
    Egc { k: usize, theta: DenseMatrix, beta: f64 },
    Lgc { k: usize, theta: DenseMatrix, alpha: Vec<f64> },
    Hlgc { k: usize, theta: DenseMatrix, alpha: Vec<f64>, gates: Vec<Gate> },
}

pub fn gate_hidden_width(c: usize) -> usize {
    c.div_ceil(2).max(1)
}

impl ModelParams {
    pub fn variant(&self) -> Variant {
        match self {
            ModelParams::Sgc { .. } => Variant::Sgc,
            ModelParams::Egc { .. } => Variant::Egc,
            ModelParams::Lgc { .. } => Variant::Lgc,
            ModelParams::Hlgc { .. } => Variant::Hlgc,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            ModelParams::Sgc { k, .. }
            | ModelParams::Egc { k, .. }
            | ModelParams::Lgc { k, .. }
            | ModelParams::Hlgc { k, .. } => *k,
        }
    }

    pub fn theta(&self) -> &DenseMatrix {
        match self {
            ModelParams::Sgc { theta, .. }
            | ModelParams::Egc { theta, .. }
            | ModelParams::Lgc { theta, .. }
            | ModelParams::Hlgc { theta, .. } => theta,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.theta().rows()
    }

    pub fn num_classes(&self) -> usize {
        self.theta().cols()
    }

    /// Every trainable tensor as a flat slice, in a fixed order:
    /// `theta`, then `beta` or `alpha`, then `w1, w2` per hop.
    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ModelParams::Sgc { theta, .. } => vec![theta.as_slice()],
            ModelParams::Egc { theta, beta, .. } => vec![theta.as_slice(), std::slice::from_ref(beta)],
            ModelParams::Lgc { theta, alpha, .. } => vec![theta.as_slice(), alpha.as_slice()],
            ModelParams::Hlgc { theta, alpha, gates, .. } => {
                let mut v = vec![theta.as_slice(), alpha.as_slice()];
                for g in gates {
                    v.push(g.w1.as_slice());
                    v.push(g.w2.as_slice());
                }
                v
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelParams::Sgc { theta, .. } => vec![theta.as_mut_slice()],
            ModelParams::Egc { theta, beta, .. } => vec![theta.as_mut_slice(), std::slice::from_mut(beta)],
            ModelParams::Lgc { theta, alpha, .. } => vec![theta.as_mut_slice(), alpha.as_mut_slice()],
            ModelParams::Hlgc { theta, alpha, gates, .. } => {
                let mut v = vec![theta.as_mut_slice(), alpha.as_mut_slice()];
                for g in gates {
                    v.push(g.w1.as_mut_slice());
                    v.push(g.w2.as_mut_slice());
                }
                v
            }
        }
    }

    /// Same shapes, all entries zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks that per-hop fields match `k` and gate shapes match `theta`.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let c = self.feature_dim();
        match self {
            ModelParams::Lgc { alpha, .. } if alpha.len() != k + 1 => {
                return Err(Error::dims("LGC alpha", k + 1, alpha.len()));
            }
            ModelParams::Hlgc { alpha, gates, .. } => {
                if alpha.len() != k + 1 {
                    return Err(Error::dims("hLGC alpha", k + 1, alpha.len()));
                }
                if gates.len() != k + 1 {
                    return Err(Error::dims("hLGC gates", k + 1, gates.len()));
                }
                for g in gates {
                    let h = g.w1.cols();
                    if g.w1.rows() != c || g.w2.shape() != (h, 1) {
                        return Err(Error::dims(
                            "hLGC gate",
                            format!("w1 {c}x{h}, w2 {h}x1"),
                            format!("w1 {:?}, w2 {:?}", g.w1.shape(), g.w2.shape()),
                        ));
                    }
                }
            }
            _ => {}
        }
        if !self.is_finite() {
            return Err(Error::InvalidInput("parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..=limit))
}

/// Deterministic initialisation: Glorot-uniform matrices, `β = 1`,
/// `α_i = 1/(k+1)` for LGC and `α_i = 1` for hLGC.
pub fn init_params(variant: Variant, k: usize, c: usize, num_classes: usize, seed: u64) -> Result<ModelParams> {
    if c == 0 || num_classes == 0 {
        return Err(Error::InvalidInput(format!(
            "feature dimension ({c}) and class count ({num_classes}) must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = glorot(&mut rng, c, num_classes);
    Ok(match variant {
        Variant::Sgc => ModelParams::Sgc { k, theta },
        Variant::Egc => ModelParams::Egc { k, theta, beta: 1.0 },
        Variant::Lgc => ModelParams::Lgc { k, theta, alpha: vec![1.0 / (k + 1) as f64; k + 1] },
        Variant::Hlgc => {
            let h = gate_hidden_width(c);
            let gates = (0..=k).map(|_| Gate { w1: glorot(&mut rng, c, h), w2: glorot(&mut rng, h, 1) }).collect();
            ModelParams::Hlgc { k, theta, alpha: vec![1.0; k + 1], gates }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        for v in Variant::ALL {
            let a = init_params(v, 3, 5, 4, 42).unwrap();
            let b = init_params(v, 3, 5, 4, 42).unwrap();
            assert_eq!(a, b);
            let c = init_params(v, 3, 5, 4, 43).unwrap();
            assert_ne!(a.theta(), c.theta());
        }
    }

    #[test]
    fn init_conventions() {
        match init_params(Variant::Egc, 5, 3, 2, 0).unwrap() {
            ModelParams::Egc { beta, .. } => assert_eq!(beta, 1.0),
            _ => unreachable!(),
        }
        match init_params(Variant::Lgc, 4, 3, 2, 0).unwrap() {
            ModelParams::Lgc { alpha, .. } => assert_eq!(alpha, vec![0.2; 5]),
            _ => unreachable!(),
        }
        match init_params(Variant::Hlgc, 2, 5, 2, 0).unwrap() {
            ModelParams::Hlgc { alpha, gates, .. } => {
                assert_eq!(alpha, vec![1.0; 3]);
                assert_eq!(gates.len(), 3);
                assert_eq!(gates[0].w1.shape(), (5, 3));
                assert_eq!(gates[0].w2.shape(), (3, 1));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn glorot_limits_respected() {
        let p = init_params(Variant::Sgc, 0, 10, 6, 9).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(p.theta().as_slice().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn validate_catches_shape_errors() {
        let mut p = init_params(Variant::Hlgc, 2, 4, 3, 0).unwrap();
        p.validate().unwrap();
        if let ModelParams::Hlgc { gates, .. } = &mut p {
            gates.pop();
        }
        assert!(p.validate().is_err());
        let bad = ModelParams::Lgc { k: 2, theta: DenseMatrix::zeros(2, 2), alpha: vec![1.0] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tensor_order_and_count() {
        let p = init_params(Variant::Hlgc, 1, 4, 3, 0).unwrap();
        let sizes: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
        assert_eq!(sizes, vec![12, 2, 8, 2, 8, 2]);
        assert_eq!(p.num_parameters(), 34);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("hLGC".parse::<Variant>().unwrap(), Variant::Hlgc);
        assert!("gcn".parse::<Variant>().is_err());
    }
}
