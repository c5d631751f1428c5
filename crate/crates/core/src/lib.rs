//! Lottery-ticket pruning laboratory.
//!
//! Trains small dense classifiers, prunes them globally by random, L1
//! (magnitude) or Fisher scores, rewinds the surviving weights to their
//! initialization and retrains, in one-shot or iterative rounds.
//!
//! * [`nn`]: networks, backpropagation, masked SGD, evaluation
//! * [`mask`]: pruning masks, rewinding, sparsity accounting
//! * [`strategies`]: relevance scores and global pruning
//! * [`lottery`]: one-shot and iterative experiments
//! * [`metrics`]: weight movement, connectivity, figure tables
//! * [`io`]: IDX/synthetic data, specs, checkpoints, CSV

pub mod error;
pub mod io;
pub mod lottery;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod selftest;
pub mod strategies;

pub use error::{Error, Result};
pub use lottery::{
    run, run_iterative, run_one_shot, ExperimentRecord, LotteryConfig, LotteryData, LotteryRunner,
    Mode, RoundRow,
};
pub use mask::{apply_mask, full_mask, rewind, sparsity, PruneMask, SparsityReport};
pub use metrics::{connectivity_report, figure_data, weight_movement, Figure};
pub use nn::{
    evaluate, forward, init_network, loss_and_grads, sgd_step, train, Dataset, DenseNetwork,
    GradientSet, LayerSizes, TrainConfig,
};
pub use strategies::{
    global_prune, score_fisher, score_l1, score_random, FisherConfig, PruneScore, Strategy,
};
