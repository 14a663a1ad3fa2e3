//! Single-layer linear graph convolutions for semi-supervised node
//! classification.
//!
//! The pipeline is: load a [`Graph`], build a [`PropagationOperator`],
//! precompute a [`DiffusionCache`] of `Pⁱ X`, then [`train`] one of the
//! [`Variant`]s against it. Training never touches the sparse operator.
//!
//! ```
//! use spgc::{synth, train, DiffusionCache, PropagationOperator, TrainConfig, Variant};
//!
//! let bundle = synth::sbm_bundle(&synth::SbmConfig::default(), 3).unwrap();
//! let g = &bundle.graph;
//! let op = PropagationOperator::from_graph(Variant::Lgc.default_operator(), g);
//! let cache = DiffusionCache::build(&op, g.features(), 4).unwrap();
//! let cfg = TrainConfig { k: 4, learning_rate: 0.05, max_epochs: 50, ..Default::default() };
//! let report = train(Variant::Lgc, &cache, g, &cfg).unwrap();
//! assert!(report.best_val_acc > 0.5);
//! ```

pub mod bounds;
pub mod data_io;
pub mod dense;
pub mod error;
pub mod graph;
pub mod models;
pub mod oracle;
pub mod propagation;
pub mod seed;
pub mod selection;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod training;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::{Graph, Splits};
pub use models::{init_params, Checkpoint, ModelParams, Variant};
pub use propagation::{DiffusionCache, OperatorKind, PropagationOperator};
pub use sparse::{spmm, SparseMatrix};
pub use training::{train, TrainConfig, TrainReport};
