//! Value probes over precomputed embeddings.
//!
//! A probe is a small scorer (linear or MLP) trained on prompt-completion
//! embedding vectors. At inference time we draw `k` candidate completions
//! from a frozen base model and pick one with probability proportional to
//! `exp(Q/beta)`, which tilts the base distribution toward high-scoring
//! candidates without touching the base model itself.
//!
//! The crate is organized around that pipeline:
//!
//! - [`data`]: dataset schemas and the on-disk formats (binary embedding
//!   matrix + JSONL manifest).
//! - [`probe`]: the scorer, its analytic parameter gradients, and the probe
//!   file format.
//! - [`losses`]: the five training objectives (squared error, cross entropy,
//!   group-softmax policy gradient, pairwise preference, and a DPO-style
//!   pairwise policy loss).
//! - [`trainer`]: a deterministic minibatch Adam loop with prompt-grouped
//!   batching for the policy-gradient loss.
//! - [`sampler`]: inference-time selection, rejection sampling, and exact
//!   enumeration of the k-candidate policy on finite action sets, used to
//!   verify the limit-policy and KL-optimality guarantees.
//! - [`synthlab`]: synthetic task generation and an evaluation harness
//!   (expected return, pass@k, k-sweeps, data-scaling sweeps, per-prompt
//!   correlation diagnostics).
//!
//! All randomness is derived from explicit seeds through [`rng`]; every
//! operation is reproducible bit-for-bit given the same inputs.

pub mod data;
pub mod error;
pub mod losses;
pub mod probe;
pub mod rng;
pub mod sampler;
pub mod synthlab;
pub mod trainer;

pub use data::{load_dataset, save_dataset, split_by_prompt, Dataset, EmbeddingVector,
               PreferencePair, RewardRecord};
pub use error::{Error, Result};
pub use losses::{loss_ce, loss_dpo_approx, loss_pg, loss_q, loss_qp, softmax_ratio, DpoConfig,
                 PgConfig, PromptGroup};
pub use probe::{init_probe, load_probe, save_probe, Probe, ProbeGradient, ProbeKind,
                ProbeMetadata};
pub use sampler::{exact_k_policy, limit_policy, rejection_sample, select, verify_kl_optimality,
                  verify_limit_convergence, CandidateSet, ConvergenceTable, FiniteBaseModel,
                  KlOptimalityReport, SamplingConfig, Selection};
pub use synthlab::{evaluate_policy, export_training_data, generate_task,
                   prompt_correlation_diagnostic, sweep_data, sweep_k, CorrelationReport,
                   DataSweepConfig, DataSweepReport, EvalPoint, EvalReport, RewardKind, Selector,
                   SyntheticTask, SyntheticTaskSpec};
pub use trainer::{adam_step, make_pg_batches, train, AdamConfig, AdamState, LossKind,
                  TrainConfig, TrainReport};
