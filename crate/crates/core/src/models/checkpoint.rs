//! Binary checkpoint container.
//!
//! ```text
//! magic    "SPGCCKPT"   8 bytes
//! version  u32 LE       currently 1
//! variant  u8           0 sgc, 1 egc, 2 lgc, 3 hlgc
//! k        u64 LE
//! c        u64 LE       feature dimension
//! classes  u64 LE
//! hidden   u64 LE       gate hidden width (0 unless hlgc)
//! seed     u64 LE       seed of the run that produced the parameters
//! tensors  f64 LE, row-major, in `ModelParams::tensors` order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

use super::params::{gate_hidden_width, Gate, ModelParams, Variant};

const MAGIC: &[u8; 8] = b"SPGCCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let p = &self.params;
        let hidden = match p {
            ModelParams::Hlgc { gates, .. } => gates.first().map_or(0, |g| g.w1.cols()),
            _ => 0,
        };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[p.variant().tag()])?;
        for v in [p.k(), p.feature_dim(), p.num_classes(), hidden] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for t in p.tensors() {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: String| Error::Format { what: "checkpoint", message: m };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let variant = Variant::from_tag(tag[0]).ok_or_else(|| bad(format!("unknown variant tag {}", tag[0])))?;
        let k = read_u64(&mut r)? as usize;
        let c = read_u64(&mut r)? as usize;
        let classes = read_u64(&mut r)? as usize;
        let hidden = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        if variant == Variant::Hlgc && hidden != gate_hidden_width(c) {
            return Err(bad(format!("gate width {hidden} does not match feature dimension {c}")));
        }

        let mut matrix = |rows: usize, cols: usize| -> Result<DenseMatrix> {
            let data = read_f64s(&mut r, rows * cols)?;
            DenseMatrix::from_vec(rows, cols, data)
        };
        let theta = matrix(c, classes)?;
        let params = match variant {
            Variant::Sgc => ModelParams::Sgc { k, theta },
            Variant::Egc => ModelParams::Egc { k, theta, beta: matrix(1, 1)?.get(0, 0) },
            Variant::Lgc => ModelParams::Lgc { k, theta, alpha: matrix(1, k + 1)?.into_vec() },
            Variant::Hlgc => {
                let alpha = matrix(1, k + 1)?.into_vec();
                let mut gates = Vec::with_capacity(k + 1);
                for _ in 0..=k {
                    let w1 = matrix(c, hidden)?;
                    let w2 = matrix(hidden, 1)?;
                    gates.push(Gate { w1, w2 });
                }
                ModelParams::Hlgc { k, theta, alpha, gates }
            }
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Self { params, seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect())
}
