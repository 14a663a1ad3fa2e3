//! Full-batch training: cross-entropy, Adam, input dropout, early stopping
//! on validation accuracy with checkpointing of the best epoch.

use std::borrow::Cow;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{forward_terms, gradients_terms, init_params, ModelParams, Variant};
use crate::propagation::DiffusionCache;
use crate::seed::derive_seed;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

pub const DEFAULT_MAX_EPOCHS: usize = 500;
pub const DEFAULT_PATIENCE: usize = 100;

const LOG_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    ValAccuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of hops used by the model; the cache must cover it.
    pub k: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 2,
            learning_rate: 0.2,
            weight_decay: 5e-4,
            dropout: 0.0,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            monitor: Monitor::ValAccuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero learning rate is allowed: it freezes the model, which is
        // how early stopping is exercised in isolation
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidInput(format!("weight decay {} must be finite and >= 0", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidInput("max_epochs and patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub epoch_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub variant: Variant,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc_at_best: f64,
    pub final_params: ModelParams,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    pub fn mean_epoch_ms(&self) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        self.history.iter().map(|r| r.epoch_ms).sum::<f64>() / self.history.len() as f64
    }
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,test_loss,train_acc,val_acc,test_acc,ms";

/// Writes the per-epoch history as CSV. Wall times vary between runs, so
/// the `ms` column is left empty unless `with_timing` is set; everything
/// else is a deterministic function of the inputs.
pub fn write_history_csv(history: &[EpochRecord], mut w: impl Write, with_timing: bool) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        write!(
            w,
            "{},{},{},{},{},{},{},",
            r.epoch, r.train_loss, r.val_loss, r.test_loss, r.train_acc, r.val_acc, r.test_acc
        )?;
        if with_timing {
            write!(w, "{:.3}", r.epoch_ms)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `−(1/|mask|) Σ log p[v, y_v]`, with probabilities floored at 1e-300.
pub fn cross_entropy(probs: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut acc = 0.0;
    for &r in mask {
        if r >= probs.rows() || r >= labels.len() {
            return Err(Error::OutOfRange { what: "mask row", index: r, limit: probs.rows().min(labels.len()) });
        }
        let y = labels[r];
        if y >= probs.cols() {
            return Err(Error::OutOfRange { what: "label", index: y, limit: probs.cols() });
        }
        acc += probs.get(r, y).max(LOG_FLOOR).ln();
    }
    Ok(-acc / mask.len() as f64)
}

/// Fraction of masked rows whose argmax matches the label.
pub fn accuracy(scores: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hits = mask.iter().filter(|&&r| scores.argmax_row(r) == labels[r]).count();
    Ok(hits as f64 / mask.len() as f64)
}

/// First and second moment estimates, one buffer per trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros }
    }
}

/// One Adam update at step `t ≥ 1`. Weight decay is folded into the
/// gradient (`g + wd·p`) before the moment updates, for every tensor.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidInput("Adam step counter starts at 1".into()));
    }
    if params.variant() != grads.variant() || params.k() != grads.k() {
        return Err(Error::InvalidInput("gradient does not match parameters".into()));
    }
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    let grads = grads.tensors();
    let tensors = params.tensors_mut();
    if tensors.len() != state.m.len() || grads.len() != tensors.len() {
        return Err(Error::InvalidInput("optimizer state does not match parameters".into()));
    }
    for (((p, g), m), v) in tensors.into_iter().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::dims("adam_step", p.len(), g.len()));
        }
        for i in 0..p.len() {
            let gi = g[i] + weight_decay * p[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`. Identity in eval mode.
pub fn apply_dropout(x: &DenseMatrix, rate: f64, rng: &mut impl Rng, mode: Mode) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v = if rng.gen::<f64>() < keep { *v * scale } else { 0.0 };
    }
    Ok(out)
}

/// Cache row positions of `nodes`, failing if a node is not stored.
fn positions(cache: &DiffusionCache, nodes: &[usize]) -> Result<Vec<usize>> {
    nodes
        .iter()
        .map(|&v| {
            cache.row_of(v).ok_or(Error::OutOfRange {
                what: "node missing from cache",
                index: v,
                limit: cache.n_nodes(),
            })
        })
        .collect()
}

struct Split {
    rows: Vec<usize>,
}

/// Trains `variant` with freshly initialised parameters.
pub fn train(variant: Variant, cache: &DiffusionCache, graph: &Graph, config: &TrainConfig) -> Result<TrainReport> {
    let params = init_params(variant, config.k, graph.feature_dim(), graph.num_classes(), config.seed)?;
    train_from(params, cache, graph, config)
}

/// Trains from the given starting parameters.
pub fn train_from(
    mut params: ModelParams,
    cache: &DiffusionCache,
    graph: &Graph,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let k = params.k();
    if k != config.k {
        return Err(Error::InvalidInput(format!("parameters have k = {k}, config has k = {}", config.k)));
    }
    if k > cache.k() {
        return Err(Error::OutOfRange { what: "hop", index: k, limit: cache.k() });
    }
    if cache.n_nodes() != graph.n() || cache.feature_dim() != graph.feature_dim() {
        return Err(Error::dims(
            "train: cache vs graph",
            format!("{} nodes x {} features", graph.n(), graph.feature_dim()),
            format!("{} nodes x {} features", cache.n_nodes(), cache.feature_dim()),
        ));
    }
    let splits = graph.splits();
    for (name, idx) in splits.iter() {
        if idx.is_empty() {
            return Err(Error::InvalidInput(format!("{name} split is empty")));
        }
    }

    // Evaluate only on labeled rows: borrow the cache when it holds exactly
    // those, otherwise take a one-off copy of them.
    let labeled = splits.labeled_nodes();
    let labeled_pos = positions(cache, &labeled)?;
    let cache_terms = &cache.terms()[..=k];
    let eval_terms: Cow<'_, [DenseMatrix]> = if labeled_pos.len() == cache.n_rows() {
        Cow::Borrowed(cache_terms)
    } else {
        Cow::Owned(cache_terms.iter().map(|t| t.select_rows(&labeled_pos)).collect())
    };
    let local = |nodes: &[usize]| -> Split {
        Split { rows: nodes.iter().map(|v| labeled.binary_search(v).expect("split node is labeled")).collect() }
    };
    let (train_split, val_split, test_split) = (local(&splits.train), local(&splits.val), local(&splits.test));
    let eval_labels: Vec<usize> =
        labeled.iter().map(|&v| graph.labels()[v].expect("graph guarantees split nodes are labeled")).collect();

    let train_terms: Vec<DenseMatrix> = eval_terms.iter().map(|t| t.select_rows(&train_split.rows)).collect();
    let train_labels: Vec<usize> = train_split.rows.iter().map(|&r| eval_labels[r]).collect();
    let train_mask: Vec<usize> = (0..train_labels.len()).collect();

    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0xD50F]));
    let mut adam = AdamState::new(&params);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, f64, ModelParams)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();

        let inputs: Cow<'_, [DenseMatrix]> = if config.dropout > 0.0 {
            Cow::Owned(
                train_terms
                    .iter()
                    .map(|t| apply_dropout(t, config.dropout, &mut dropout_rng, Mode::Train))
                    .collect::<Result<_>>()?,
            )
        } else {
            Cow::Borrowed(&train_terms)
        };
        let trace = forward_terms(&inputs, &params)?;
        let grads = gradients_terms(&trace, &inputs, &params, &train_labels, &train_mask)?;
        adam_step(&mut params, &grads, &mut adam, config.learning_rate, config.weight_decay, epoch as u64)?;
        if !params.is_finite() {
            return Err(Error::InvalidInput(format!("parameters diverged at epoch {epoch}")));
        }

        let eval = forward_terms(&eval_terms, &params)?;
        let score = |s: &Split| -> Result<(f64, f64)> {
            Ok((cross_entropy(&eval.probs, &eval_labels, &s.rows)?, accuracy(&eval.logits, &eval_labels, &s.rows)?))
        };
        let (train_loss, train_acc) = score(&train_split)?;
        let (val_loss, val_acc) = score(&val_split)?;
        let (test_loss, test_acc) = score(&test_split)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            test_loss,
            train_acc,
            val_acc,
            test_acc,
            epoch_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        let improved = best.as_ref().is_none_or(|b| val_acc > b.1);
        if improved {
            best = Some((epoch, val_acc, test_acc, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_val_acc, test_acc_at_best, final_params) = best.expect("at least one epoch runs");
    Ok(TrainReport {
        variant: final_params.variant(),
        seed: config.seed,
        history,
        best_epoch,
        best_val_acc,
        test_acc_at_best,
        final_params,
        stopped_early,
    })
}
