//! Deterministic minibatch Adam training for any of the five losses.
//!
//! Training is a pure function of (dataset, initial probe, config): batch
//! order, group membership, and parameter updates all derive from the
//! config seed through named streams, and reductions run in a fixed order.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{self, DpoConfig, PgConfig, PromptGroup};
use crate::probe::Probe;
use crate::rng::named_stream;

/// Which objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Q,
    Ce,
    Pg,
    Qp,
    Dpo,
}

impl LossKind {
    pub fn needs_pairs(self) -> bool {
        matches!(self, LossKind::Qp | LossKind::Dpo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Q => "q",
            LossKind::Ce => "ce",
            LossKind::Pg => "pg",
            LossKind::Qp => "qp",
            LossKind::Dpo => "dpo",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(LossKind::Q),
            "ce" => Ok(LossKind::Ce),
            "pg" => Ok(LossKind::Pg),
            "qp" => Ok(LossKind::Qp),
            "dpo" => Ok(LossKind::Dpo),
            other => Err(Error::Argument(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Adam moment-decay constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Training hyperparameters. The defaults are the ones used throughout the
/// headline configuration: learning rate 5e-5, batch size 1000, 150 epochs,
/// and for the policy-gradient loss 100 prompts of 10 samples per batch at
/// temperature 0.1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    /// Records per batch (pairs for the qp/dpo losses). Must equal
    /// `pg_group_size * pg_prompts_per_batch` for the pg loss.
    pub batch_size: usize,
    pub epochs: usize,
    pub pg_group_size: usize,
    pub pg_prompts_per_batch: usize,
    /// Softmax temperature for the pg and dpo losses.
    pub beta: f64,
    /// Sigmoid scale for the dpo loss.
    pub dpo_alpha: f64,
    /// Override for the pg reward baseline; defaults to the mean reward of
    /// the full training set.
    pub baseline_override: Option<f64>,
    /// Keep each prompt's per-epoch record subsets fixed at their epoch-0
    /// sampling instead of resampling every epoch.
    pub freeze_pg_subsets: bool,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Q,
            learning_rate: 5e-5,
            batch_size: 1000,
            epochs: 150,
            pg_group_size: 10,
            pg_prompts_per_batch: 100,
            beta: 0.1,
            dpo_alpha: 1.0,
            baseline_override: None,
            freeze_pg_subsets: false,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.loss == LossKind::Pg {
            if self.pg_group_size < 2 {
                return Err(Error::Config("pg group size must be at least 2".into()));
            }
            if self.pg_prompts_per_batch == 0 {
                return Err(Error::Config("pg prompts per batch must be positive".into()));
            }
            if self.batch_size != self.pg_group_size * self.pg_prompts_per_batch {
                return Err(Error::Config(format!(
                    "pg batch size {} must equal group_size {} * prompts_per_batch {}",
                    self.batch_size, self.pg_group_size, self.pg_prompts_per_batch
                )));
            }
        }
        Ok(())
    }
}

/// Summary of one training run.
///
/// `wall_time_seconds` is measured, not derived from the inputs, so it is
/// excluded from serialization to keep report files reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub seed: u64,
    pub config: TrainConfig,
    /// Baseline actually used by the pg loss, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pg_baseline: Option<f64>,
    #[serde(skip_serializing, default)]
    pub wall_time_seconds: f64,
}

/// Adam first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grad.len() || params.len() != state.m.len() {
        return Err(Error::Internal(format!(
            "adam shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grad[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

/// Prompt-grouped batches for the policy-gradient loss.
///
/// Per epoch, each prompt's records are shuffled (stream keyed by seed,
/// epoch, and prompt id) and cut into consecutive groups of `group_size`;
/// leftovers are dropped. Prompt order is reshuffled per epoch, and groups
/// are then chunked into batches of `prompts_per_batch`, dropping a final
/// partial batch. With `freeze_subsets` the record subsets come from the
/// epoch-0 shuffle while prompt order still varies per epoch.
pub fn make_pg_batches<'a>(
    dataset: &'a Dataset,
    group_size: usize,
    prompts_per_batch: usize,
    seed: u64,
    epoch: usize,
    freeze_subsets: bool,
) -> Result<Vec<Vec<PromptGroup<'a>>>> {
    if group_size < 2 {
        return Err(Error::Config("pg group size must be at least 2".into()));
    }
    if prompts_per_batch == 0 {
        return Err(Error::Config("pg prompts per batch must be positive".into()));
    }
    if dataset.is_preference() || dataset.reward_records.is_empty() {
        return Err(Error::Config("pg batching needs a reward dataset".into()));
    }
    let prompt_ids: Vec<&str> = dataset.prompt_ids();
    for id in &prompt_ids {
        let count = dataset.prompt_index[*id].len();
        if count < group_size {
            return Err(Error::Config(format!(
                "prompt {id} has {count} completions but pg needs at least {group_size}"
            )));
        }
    }

    let mut order: Vec<&str> = prompt_ids.clone();
    order.shuffle(&mut named_stream(seed, &format!("pg/epoch/{epoch}/prompt-order")));

    let subset_epoch = if freeze_subsets { 0 } else { epoch };
    let mut groups: Vec<PromptGroup<'a>> = Vec::new();
    for prompt in order {
        let mut indices = dataset.prompt_index[prompt].clone();
        indices.shuffle(&mut named_stream(
            seed,
            &format!("pg/epoch/{subset_epoch}/subset/{prompt}"),
        ));
        for chunk in indices.chunks_exact(group_size) {
            let records = chunk
                .iter()
                .map(|&i| {
                    let rec = &dataset.reward_records[i];
                    (&rec.embedding, rec.reward)
                })
                .collect();
            groups.push(PromptGroup {
                prompt_id: &dataset.reward_records[chunk[0]].prompt_id,
                records,
            });
        }
    }

    Ok(groups
        .chunks_exact(prompts_per_batch)
        .map(|c| c.to_vec())
        .collect())
}

fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut named_stream(seed, &format!("batch/epoch/{epoch}")));
    order
}

/// Train a probe on a dataset.
///
/// Returns the trained probe and a per-epoch loss report. The run is
/// bit-reproducible: the same dataset, probe, and config always produce the
/// same parameters.
pub fn train(dataset: &Dataset, probe: &Probe, config: &TrainConfig) -> Result<(Probe, TrainReport)> {
    config.validate()?;
    if config.loss.needs_pairs() {
        if dataset.preference_pairs.is_empty() {
            return Err(Error::Config(format!(
                "loss {:?} needs preference pairs but the dataset has none",
                config.loss
            )));
        }
    } else if dataset.reward_records.is_empty() {
        return Err(Error::Config(format!(
            "loss {:?} needs reward records but the dataset has none",
            config.loss
        )));
    }
    if dataset.dim != probe.dim() {
        return Err(Error::Config(format!(
            "dataset dim {} does not match probe dim {}",
            dataset.dim,
            probe.dim()
        )));
    }

    let start = Instant::now();
    let mut trained = probe.clone();
    let mut state = AdamState::new(trained.param_count());
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    let pg_baseline = if config.loss == LossKind::Pg {
        let mean = dataset.reward_records.iter().map(|r| r.reward).sum::<f64>()
            / dataset.reward_records.len() as f64;
        Some(config.baseline_override.unwrap_or(mean))
    } else {
        None
    };

    for epoch in 0..config.epochs {
        let mut batch_losses = Vec::new();
        match config.loss {
            LossKind::Q | LossKind::Ce => {
                let order = shuffled_indices(dataset.reward_records.len(), config.seed, epoch);
                for chunk in order.chunks_exact(config.batch_size) {
                    let batch: Vec<&crate::data::RewardRecord> =
                        chunk.iter().map(|&i| &dataset.reward_records[i]).collect();
                    let (loss, grad) = match config.loss {
                        LossKind::Q => losses::loss_q(&trained, &batch)?,
                        _ => losses::loss_ce(&trained, &batch)?,
                    };
                    adam_step(trained.params_mut(), &grad, &mut state, config.learning_rate, &config.adam)?;
                    batch_losses.push(loss);
                }
            }
            LossKind::Pg => {
                let batches = make_pg_batches(
                    dataset,
                    config.pg_group_size,
                    config.pg_prompts_per_batch,
                    config.seed,
                    epoch,
                    config.freeze_pg_subsets,
                )?;
                let pg = PgConfig { beta: config.beta, baseline: pg_baseline.unwrap() };
                for batch in &batches {
                    let (loss, grad) = losses::loss_pg(&trained, batch, &pg)?;
                    adam_step(trained.params_mut(), &grad, &mut state, config.learning_rate, &config.adam)?;
                    batch_losses.push(loss);
                }
            }
            LossKind::Qp | LossKind::Dpo => {
                let order = shuffled_indices(dataset.preference_pairs.len(), config.seed, epoch);
                for chunk in order.chunks_exact(config.batch_size) {
                    let batch: Vec<&crate::data::PreferencePair> =
                        chunk.iter().map(|&i| &dataset.preference_pairs[i]).collect();
                    let (loss, grad) = match config.loss {
                        LossKind::Qp => losses::loss_qp(&trained, &batch)?,
                        _ => {
                            // Two-sample reduction: each pair is its own softmax.
                            let dpo = DpoConfig {
                                alpha: config.dpo_alpha,
                                beta: config.beta,
                                context_size: 2,
                            };
                            let n = batch.len() as f64;
                            let mut total = 0.0;
                            let mut grad = vec![0.0; trained.param_count()];
                            for pair in &batch {
                                let (l, g) = losses::loss_dpo_approx(&trained, pair, &[], &dpo)?;
                                total += l / n;
                                for (acc, gi) in grad.iter_mut().zip(&g) {
                                    *acc += gi / n;
                                }
                            }
                            (total, grad)
                        }
                    };
                    adam_step(trained.params_mut(), &grad, &mut state, config.learning_rate, &config.adam)?;
                    batch_losses.push(loss);
                }
            }
        }
        if batch_losses.is_empty() {
            return Err(Error::Config(format!(
                "batch size {} leaves no full batch over {} entries",
                config.batch_size,
                dataset.len()
            )));
        }
        epoch_losses.push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
    }

    let report = TrainReport {
        epoch_losses,
        seed: config.seed,
        config: config.clone(),
        pg_baseline,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((trained, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EmbeddingVector, RewardRecord};
    use std::collections::BTreeSet;

    fn emb(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn grouped_dataset(n_prompts: usize, per_prompt: usize) -> Dataset {
        let mut records = Vec::new();
        for p in 0..n_prompts {
            for c in 0..per_prompt {
                records.push(RewardRecord {
                    prompt_id: format!("p{p:02}"),
                    completion_id: format!("c{c:02}"),
                    embedding: emb(&[(p as f32) - (c as f32) * 0.5, c as f32]),
                    reward: (c % 2) as f64,
                });
            }
        }
        Dataset::new(2, true, records, Vec::new()).unwrap()
    }

    #[test]
    fn adam_fixed_point_at_zero_gradient() {
        let mut params = vec![1.5, -0.25];
        let mut state = AdamState::new(2);
        for _ in 0..10 {
            adam_step(&mut params, &[0.0, 0.0], &mut state, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params, vec![1.5, -0.25]);
    }

    #[test]
    fn adam_first_step_magnitude_is_the_learning_rate() {
        // With constant gradient 1, bias correction makes m_hat = v_hat = 1,
        // so the first update is lr / (1 + eps).
        let cfg = AdamConfig::default();
        let lr = 0.37;
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[1.0], &mut state, lr, &cfg).unwrap();
        let expected = lr / (1.0 + cfg.epsilon);
        assert!((params[0] + expected).abs() < 1e-15, "{params:?}");
    }

    #[test]
    fn adam_shape_mismatch_is_internal_error() {
        let mut params = vec![0.0; 3];
        let mut state = AdamState::new(3);
        assert!(matches!(
            adam_step(&mut params, &[1.0], &mut state, 0.1, &AdamConfig::default()),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn pg_batches_partition_all_records_when_sizes_divide() {
        let ds = grouped_dataset(6, 4);
        let batches = make_pg_batches(&ds, 2, 3, 9, 0, false).unwrap();
        // 6 prompts * 2 groups each = 12 groups = 4 batches of 3.
        assert_eq!(batches.len(), 4);
        let mut seen = BTreeSet::new();
        for batch in &batches {
            for group in batch {
                assert_eq!(group.records.len(), 2);
                for (embedding, _) in &group.records {
                    // Embeddings are unique per record in this fixture.
                    assert!(seen.insert(format!("{:?}", embedding.values())));
                }
            }
        }
        assert_eq!(seen.len(), ds.len());
    }

    #[test]
    fn pg_batches_exact_paper_geometry() {
        let ds = grouped_dataset(100, 10);
        let batches = make_pg_batches(&ds, 10, 100, 1, 0, false).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 100);
    }

    #[test]
    fn pg_batches_reshuffle_across_epochs() {
        let ds = grouped_dataset(20, 2);
        let order = |epoch| {
            make_pg_batches(&ds, 2, 20, 5, epoch, false).unwrap()[0]
                .iter()
                .map(|g| g.prompt_id.to_string())
                .collect::<Vec<_>>()
        };
        assert_ne!(order(0), order(1));
    }

    #[test]
    fn pg_batches_reject_small_prompts() {
        let ds = grouped_dataset(3, 2);
        match make_pg_batches(&ds, 3, 1, 0, 0, false) {
            Err(Error::Config(msg)) => assert!(msg.contains("p0"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn freeze_keeps_subsets_but_not_order() {
        let ds = grouped_dataset(8, 5);
        // group_size 2 over 5 records drops one record per prompt per epoch.
        let subset_ids = |epoch, freeze| {
            let batches = make_pg_batches(&ds, 2, 4, 3, epoch, freeze).unwrap();
            let mut ids: Vec<String> = batches
                .iter()
                .flatten()
                .flat_map(|g| {
                    g.records.iter().map(|(e, _)| format!("{:?}", e.values()))
                })
                .collect();
            ids.sort();
            ids
        };
        assert_eq!(subset_ids(0, true), subset_ids(1, true));
        assert_ne!(subset_ids(0, false), subset_ids(1, false));
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let ds = grouped_dataset(4, 2);
        let probe = Probe::linear(2, true).unwrap();
        let config = TrainConfig {
            loss: LossKind::Q,
            batch_size: 8,
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, report) = train(&ds, &probe, &config).unwrap();
        assert_eq!(out.params(), probe.params());
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let ds = grouped_dataset(10, 4);
        let probe = Probe::linear(2, true).unwrap();
        let config = TrainConfig {
            loss: LossKind::Pg,
            learning_rate: 1e-2,
            batch_size: 10 * 2,
            epochs: 5,
            pg_group_size: 2,
            pg_prompts_per_batch: 10,
            seed: 11,
            ..TrainConfig::default()
        };
        let (a, _) = train(&ds, &probe, &config).unwrap();
        let (b, _) = train(&ds, &probe, &config).unwrap();
        let bits = |p: &Probe| p.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn loss_dataset_mismatch_is_config_error() {
        let ds = grouped_dataset(4, 2);
        let probe = Probe::linear(2, true).unwrap();
        let config = TrainConfig { loss: LossKind::Qp, batch_size: 4, ..TrainConfig::default() };
        assert!(matches!(train(&ds, &probe, &config), Err(Error::Config(_))));
    }

    #[test]
    fn pg_batch_size_invariant_is_enforced() {
        let ds = grouped_dataset(4, 2);
        let probe = Probe::linear(2, true).unwrap();
        let config = TrainConfig {
            loss: LossKind::Pg,
            batch_size: 7,
            pg_group_size: 2,
            pg_prompts_per_batch: 4,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&ds, &probe, &config), Err(Error::Config(_))));
    }
}
