//! One module per subcommand.

mod analyze;
mod crossval;
mod eval;
mod gen_corpus;
mod prep;
mod report;
mod split;
mod train_ensemble;
mod train_flat;

pub use analyze::cmd_analyze;
pub use crossval::cmd_crossval;
pub use eval::cmd_eval;
pub use gen_corpus::cmd_gen_corpus;
pub use prep::cmd_prep;
pub use report::cmd_report;
pub use split::cmd_split;
pub use train_ensemble::cmd_train_ensemble;
pub use train_flat::cmd_train_flat;

use crate::config::RunConfig;

/// Seed roles derived from the master seed. Each stage owns a fixed offset
/// so reruns of any stage reproduce its artifacts bit for bit.
pub mod seeds {
    pub const SPLIT: u64 = 1;
    pub const FLAT_TRAIN: u64 = 2;
    /// Ensemble members use MASTER+3 (parent), +4, +5 (children).
    pub const ENSEMBLE: u64 = 3;
    pub const FOLDS: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    /// Fold `i` trains with MASTER + FOLD_TRAIN_BASE + i.
    pub const FOLD_TRAIN_BASE: u64 = 100;
}

/// Shared command context: merged config, resolved master seed.
pub struct Ctx {
    pub config: RunConfig,
    pub master_seed: u64,
}
