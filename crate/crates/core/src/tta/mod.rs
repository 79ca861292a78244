//! Test-time adaptation: view-averaged class distributions, self-entropy and
//! contrastive losses, exact gradients into the prompt networks, AdamW
//! updates, and the episodic/online protocols.

mod adamw;
mod engine;
mod losses;
mod run_io;

pub use adamw::{adamw_step, AdamWParams, OptimizerState};
pub use engine::{
    adapt_batch, backward_batch, backward_from_gavg, encode_views, forward_batch, predict, run, AdaptConfig, AdaptRun,
    BatchForward, BatchOutcome, Conditioning, DistributionSet, Mode, PromptOptimizer, StepRecord,
};
pub use losses::{
    consistency_loss, contrastive_loss, final_loss, loss_grad, loss_report, Ablation, LossReport, LOG_EPS,
};
pub use run_io::{load_run_checkpoint, save_run_checkpoint, write_trace_jsonl, RunCheckpoint, RUN_SCHEMA_VERSION};
