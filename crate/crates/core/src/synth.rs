//! Seeded synthetic graphs: Erdős–Rényi graphs for oracle checks and a
//! stochastic block model with class-dependent features for end-to-end runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::DatasetBundle;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, Splits};

/// `G(n, p)` with features uniform in `[-1, 1]`, no labels, empty splits.
pub fn random_graph(n: usize, p: f64, c: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = DenseMatrix::from_fn(n, c, |_, _| rng.gen_range(-1.0..=1.0));
    Graph::new(n, edges, x, vec![None; n], Splits::default()).expect("generated graph is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub n: usize,
    pub classes: usize,
    pub feature_dim: usize,
    /// Edge probability inside a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    /// Height of the class-indicator bump in the features.
    pub signal: f64,
    /// Half-width of the uniform feature noise.
    pub noise: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 60,
            classes: 3,
            feature_dim: 6,
            p_in: 0.25,
            p_out: 0.02,
            signal: 0.6,
            noise: 1.0,
            train_per_class: 2,
            val_per_class: 3,
        }
    }
}

/// Node `i` belongs to class `i mod classes`. The first `train_per_class`
/// nodes of each class train, the next `val_per_class` validate, the rest
/// test.
pub fn sbm_bundle(cfg: &SbmConfig, seed: u64) -> Result<DatasetBundle> {
    let per_class_min = cfg.train_per_class + cfg.val_per_class + 1;
    if cfg.classes < 2 || cfg.feature_dim == 0 || cfg.n < cfg.classes * per_class_min {
        return Err(Error::InvalidInput(format!(
            "SBM needs >= 2 classes, features, and n >= {} for the requested splits",
            cfg.classes * per_class_min
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class = |i: usize| i % cfg.classes;
    let mut edges = Vec::new();
    for u in 0..cfg.n {
        for v in u + 1..cfg.n {
            let p = if class(u) == class(v) { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = DenseMatrix::from_fn(cfg.n, cfg.feature_dim, |i, j| {
        let bump = if j % cfg.classes == class(i) { cfg.signal } else { 0.0 };
        bump + rng.gen_range(-cfg.noise..=cfg.noise)
    });
    let labels = (0..cfg.n).map(|i| Some(class(i))).collect();
    let mut splits = Splits::default();
    for i in 0..cfg.n {
        let rank = i / cfg.classes;
        if rank < cfg.train_per_class {
            splits.train.push(i);
        } else if rank < cfg.train_per_class + cfg.val_per_class {
            splits.val.push(i);
        } else {
            splits.test.push(i);
        }
    }
    let graph = Graph::new(cfg.n, edges, x, labels, splits)?;
    Ok(DatasetBundle::new(
        format!("sbm-{seed}"),
        graph,
        format!("synthetic stochastic block model, seed {seed}, {cfg:?}"),
    ))
}
