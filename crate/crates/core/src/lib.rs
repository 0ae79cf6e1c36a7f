//! Core library for learning the set of local maxima of an unknown
//! value function from unlabeled samples.
//!
//! Four networks are co-trained on positive samples only: a classifier
//! `c` scoring set membership, a comparator `h` scoring relative value
//! between point pairs, and two generators producing informative
//! negative points. The crate also ships the data synthesis, evaluation
//! protocols and executable pieces of the accompanying theory.

pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod net;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    build_model, build_model_with_output, comparator_apply, comparator_apply_batch,
    comparator_unary, GeneratorOutput, QuadModel, Role,
};
pub use net::{
    adam_step, grad_check, init_network, AdamHyper, AdamState, Gradients, LayerKind, LayerSpec,
    Mode, Network, Trace,
};
pub use trainer::{
    load_checkpoint, save_checkpoint, train, Checkpoint, LogEntry, Player, TrainConfig, Trainer,
    Variant,
};
