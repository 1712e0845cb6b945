//! Synthetic tasks and the evaluation harness.
//!
//! Tasks are collections of finite base models, one per prompt: every
//! prompt has a small action set with embeddings, an exactly known base
//! distribution, and true rewards derived from a hidden linear direction.
//! Because everything is enumerable, expected returns and selection
//! baselines have closed forms and the harness can separate real effects
//! from Monte Carlo noise.
//!
//! Geometry: action embeddings are a prompt mean (standard normal) plus a
//! per-action offset (normal with variance 0.5). For binary tasks each
//! prompt's decision threshold is placed so base success rates spread over
//! roughly [0.05, 0.8], with the target rate tied to a hidden *difficulty
//! direction* orthogonal to the reward direction. That makes prompt
//! difficulty legible in the embeddings — reward-regression losses can
//! spend capacity on it while group-contrastive training cannot, which is
//! exactly the contrast the correlation diagnostic measures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{read_embedding_file, write_embedding_file, Dataset, EmbeddingVector,
                  PreferencePair, RewardRecord};
use crate::error::{Error, Result};
use crate::losses::sigmoid;
use crate::probe::Probe;
use crate::rng::named_stream;
use crate::sampler::{selection_weights, sample_weighted, FiniteBaseModel, SamplingConfig};
use crate::trainer::{train, LossKind, TrainConfig};

/// Schema tag in the task manifest.
pub const TASK_SCHEMA: &str = "qprobe-task-v1";

/// How rewards are derived from the hidden direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    /// `r = 1` iff `w* . phi + prompt_offset + noise > 0`.
    #[serde(rename = "binary-linear")]
    BinaryLinear,
    /// `r = w* . phi + noise`.
    #[serde(rename = "continuous-linear")]
    ContinuousLinear,
    /// Continuous latent rewards; exported pairs are labeled with
    /// probability `sigmoid(r_w - r_l)`.
    #[serde(rename = "preference-bt")]
    PreferenceBt,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::BinaryLinear => "binary-linear",
            RewardKind::ContinuousLinear => "continuous-linear",
            RewardKind::PreferenceBt => "preference-bt",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary-linear" => Ok(RewardKind::BinaryLinear),
            "continuous-linear" => Ok(RewardKind::ContinuousLinear),
            "preference-bt" => Ok(RewardKind::PreferenceBt),
            other => Err(Error::Argument(format!("unknown reward kind {other:?}"))),
        }
    }
}

/// Everything needed to regenerate a task deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub n_prompts: usize,
    pub actions_per_prompt: usize,
    pub dim: usize,
    pub reward_kind: RewardKind,
    /// Temperature of the softmax over seeded logits that defines `p0`.
    pub base_temperature: f64,
    /// Standard deviation of the per-action reward noise, applied once at
    /// generation time.
    pub noise_scale: f64,
    /// Root seed for every generation stream, including the hidden reward
    /// direction.
    pub hidden_direction_seed: u64,
}

impl SyntheticTaskSpec {
    fn validate(&self) -> Result<()> {
        if self.n_prompts == 0 || self.actions_per_prompt == 0 || self.dim == 0 {
            return Err(Error::Argument("task counts must be positive".into()));
        }
        if self.reward_kind == RewardKind::BinaryLinear && self.actions_per_prompt < 2 {
            return Err(Error::Argument(
                "binary tasks need at least 2 actions per prompt to place a threshold".into(),
            ));
        }
        if !(self.base_temperature > 0.0) {
            return Err(Error::Argument("base temperature must be positive".into()));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Argument("noise scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generation parameters that reproduce the rewards. Oracle-only: selection
/// code paths receive probes and embeddings, never this struct.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HiddenParams {
    /// Unit reward direction.
    pub w_star: Vec<f64>,
    /// Unit difficulty direction, orthogonal to `w_star`.
    pub difficulty: Vec<f64>,
    /// Per-prompt reward offsets.
    pub prompt_offsets: Vec<f64>,
}

/// A generated task: per-prompt finite base models plus the hidden
/// generation parameters.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    pub prompts: Vec<FiniteBaseModel>,
    hidden: HiddenParams,
}

impl SyntheticTask {
    pub fn n_prompts(&self) -> usize {
        self.prompts.len()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn is_binary(&self) -> bool {
        self.spec.reward_kind == RewardKind::BinaryLinear
    }

    /// Oracle-only access to the generation parameters. Never feed these to
    /// anything that selects actions.
    pub fn hidden(&self) -> &HiddenParams {
        &self.hidden
    }

    pub fn prompt_id(&self, p: usize) -> String {
        format!("p{p:04}")
    }

    /// Exact per-prompt expected reward under the base distribution.
    pub fn per_prompt_expected_reward(&self) -> Vec<f64> {
        self.prompts
            .iter()
            .map(|m| {
                let r = m.rewards.as_ref().expect("synthetic tasks always carry rewards");
                m.p0.iter().zip(r).map(|(&p, &x)| p * x).sum()
            })
            .collect()
    }

    /// Exact expected return of uniform (no-probe) selection at any k.
    pub fn exact_uniform_return(&self) -> f64 {
        let per_prompt = self.per_prompt_expected_reward();
        per_prompt.iter().sum::<f64>() / per_prompt.len() as f64
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_f32(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| x * f64::from(y)).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Generate a task deterministically from its spec.
pub fn generate_task(spec: &SyntheticTaskSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let seed = spec.hidden_direction_seed;
    let n = spec.actions_per_prompt;

    let mut w_star = gaussian_vec(&mut named_stream(seed, "task/w-star"), spec.dim, 1.0);
    normalize(&mut w_star);

    // Difficulty direction: orthogonal to the reward direction, so prompt
    // hardness carries no information about within-prompt ranking.
    let mut difficulty = gaussian_vec(&mut named_stream(seed, "task/difficulty"), spec.dim, 1.0);
    let proj = dot(&difficulty, &w_star);
    for (d, w) in difficulty.iter_mut().zip(&w_star) {
        *d -= proj * w;
    }
    if normalize(&mut difficulty) < 1e-9 {
        difficulty = vec![0.0; spec.dim];
    }

    let offset_scale = 0.5f64.sqrt();
    let mut prompts = Vec::with_capacity(spec.n_prompts);
    let mut prompt_offsets = Vec::with_capacity(spec.n_prompts);
    for p in 0..spec.n_prompts {
        let mean = gaussian_vec(&mut named_stream(seed, &format!("task/prompt/{p}/mean")), spec.dim, 1.0);
        let mut embeddings = Vec::with_capacity(n);
        for a in 0..n {
            let offset = gaussian_vec(
                &mut named_stream(seed, &format!("task/prompt/{p}/action/{a}")),
                spec.dim,
                offset_scale,
            );
            let values: Vec<f32> =
                mean.iter().zip(&offset).map(|(m, o)| (m + o) as f32).collect();
            embeddings.push(EmbeddingVector::new(values)?);
        }

        let logits = gaussian_vec(&mut named_stream(seed, &format!("task/prompt/{p}/logits")), n, 1.0);
        let mut p0: Vec<f64> = logits.iter().map(|l| l / spec.base_temperature).collect();
        crate::losses::softmax_inplace(&mut p0);

        let noise = gaussian_vec(
            &mut named_stream(seed, &format!("task/prompt/{p}/noise")),
            n,
            spec.noise_scale,
        );
        // Latent scores from the f32-rounded embeddings, so stored rewards
        // are exactly reproducible from stored embeddings.
        let latent: Vec<f64> = embeddings
            .iter()
            .zip(&noise)
            .map(|(e, nz)| dot_f32(&w_star, e.values()) + nz)
            .collect();

        let (offset_p, rewards): (f64, Vec<f64>) = match spec.reward_kind {
            RewardKind::BinaryLinear => {
                let target = 0.05 + 0.75 * sigmoid(dot(&difficulty, &mean));
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]));
                // Achievable success rates are the cumulative p0 of the top-m
                // actions; pick the m closest to the target, keeping at least
                // one success and one failure.
                let mut best_m = 1;
                let mut best_err = f64::INFINITY;
                let mut cum = 0.0;
                for m in 1..n {
                    cum += p0[order[m - 1]];
                    let err = (cum - target).abs();
                    if err < best_err {
                        best_err = err;
                        best_m = m;
                    }
                }
                let threshold =
                    0.5 * (latent[order[best_m - 1]] + latent[order[best_m]]);
                let offset = -threshold;
                let rewards =
                    latent.iter().map(|&s| f64::from(s + offset > 0.0)).collect();
                (offset, rewards)
            }
            RewardKind::ContinuousLinear => (0.0, latent.clone()),
            RewardKind::PreferenceBt => {
                // Center per-prompt expected reward at 1.0: offsets cancel in
                // pairwise labels but keep return ratios well-defined.
                let expected = p0.iter().zip(&latent).map(|(&p, &s)| p * s).sum::<f64>();
                let offset = 1.0 - expected;
                (offset, latent.iter().map(|&s| s + offset).collect())
            }
        };
        prompt_offsets.push(offset_p);

        let labels = (0..n).map(|a| format!("a{a:03}")).collect();
        prompts.push(FiniteBaseModel::new(labels, p0, embeddings, Some(rewards))?);
    }

    Ok(SyntheticTask {
        spec: spec.clone(),
        prompts,
        hidden: HiddenParams { w_star, difficulty, prompt_offsets },
    })
}

/// Draw an offline training dataset from the task's base distributions.
///
/// Reward tasks get `samples_per_prompt` i.i.d. completions per prompt,
/// labeled by the stored reward oracle. Preference tasks get that many
/// pairs per prompt, each labeled winner with probability
/// `sigmoid(r_first - r_second)`.
pub fn export_training_data(
    task: &SyntheticTask,
    samples_per_prompt: usize,
    seed: u64,
) -> Result<Dataset> {
    if samples_per_prompt == 0 {
        return Err(Error::Argument("samples per prompt must be positive".into()));
    }
    let mut records = Vec::new();
    let mut pairs = Vec::new();
    for (p, model) in task.prompts.iter().enumerate() {
        let prompt_id = task.prompt_id(p);
        let rewards = model.rewards.as_ref().expect("synthetic tasks always carry rewards");
        let mut rng = named_stream(seed, &format!("export/prompt/{p}"));
        match task.spec.reward_kind {
            RewardKind::BinaryLinear | RewardKind::ContinuousLinear => {
                for s in 0..samples_per_prompt {
                    let a = sample_weighted(&model.p0, &mut rng);
                    records.push(RewardRecord {
                        prompt_id: prompt_id.clone(),
                        completion_id: format!("s{s:05}"),
                        embedding: model.embeddings[a].clone(),
                        reward: rewards[a],
                    });
                }
            }
            RewardKind::PreferenceBt => {
                for _ in 0..samples_per_prompt {
                    let first = sample_weighted(&model.p0, &mut rng);
                    let second = sample_weighted(&model.p0, &mut rng);
                    let u: f64 = rng.gen();
                    let (w, l) = if u < sigmoid(rewards[first] - rewards[second]) {
                        (first, second)
                    } else {
                        (second, first)
                    };
                    pairs.push(PreferencePair {
                        prompt_id: prompt_id.clone(),
                        winner: model.embeddings[w].clone(),
                        loser: model.embeddings[l].clone(),
                    });
                }
            }
        }
    }
    Dataset::new(task.spec.dim, task.is_binary(), records, pairs)
}

/// How candidates are chosen during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Selector<'a> {
    /// Uniform choice among the k candidates (the no-probe baseline).
    Uniform,
    /// Softmax over probe scores at the configured temperature.
    Probe(&'a Probe),
    /// Picks the candidate with the highest true reward (the skyline).
    Oracle,
}

impl Selector<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Selector::Uniform => "uniform",
            Selector::Probe(_) => "probe",
            Selector::Oracle => "oracle",
        }
    }
}

/// One entry of a return curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPoint {
    pub k: usize,
    pub mean_return: f64,
    /// 95% bootstrap interval over prompts (1000 resamples).
    pub return_ci: [f64; 2],
    /// Fraction of (prompt, episode) cells where any of the k candidates
    /// scores 1; binary tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_at_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_ci: Option<[f64; 2]>,
}

/// Evaluation results for one selector over a k schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub selector: String,
    pub beta: f64,
    pub seed: u64,
    pub episodes: usize,
    pub points: Vec<EvalPoint>,
}

fn bootstrap_ci(values: &[f64], rng: &mut ChaCha8Rng) -> [f64; 2] {
    const RESAMPLES: usize = 1000;
    let n = values.len();
    let mut means = Vec::with_capacity(RESAMPLES);
    for _ in 0..RESAMPLES {
        let mut total = 0.0;
        for _ in 0..n {
            total += values[rng.gen_range(0..n)];
        }
        means.push(total / n as f64);
    }
    means.sort_by(f64::total_cmp);
    [means[24], means[974]] // 2.5th and 97.5th percentiles of 1000
}

struct PromptCurve {
    /// Per schedule entry: mean return over episodes.
    returns: Vec<f64>,
    /// Per schedule entry: pass fraction over episodes (binary tasks).
    passes: Vec<f64>,
}

fn eval_prompt(
    task: &SyntheticTask,
    p: usize,
    selector: &Selector<'_>,
    ks: &[usize],
    beta: f64,
    seed: u64,
    episodes: usize,
) -> Result<PromptCurve> {
    let model = &task.prompts[p];
    let rewards = model.rewards.as_ref().expect("synthetic tasks always carry rewards");
    let k_max = *ks.iter().max().unwrap();
    let action_scores = match selector {
        Selector::Probe(probe) => Some(model.scores(probe)?),
        _ => None,
    };

    let mut returns = vec![0.0; ks.len()];
    let mut passes = vec![0.0; ks.len()];
    let mut draws = vec![0usize; k_max];
    for episode in 0..episodes {
        let mut rng = named_stream(seed, &format!("eval/draws/{episode}/{p}"));
        for slot in draws.iter_mut() {
            *slot = sample_weighted(&model.p0, &mut rng);
        }
        for (ki, &k) in ks.iter().enumerate() {
            // Smaller k values reuse prefixes of the same draws, so curves
            // along the schedule are nested rather than independently noisy.
            let candidates = &draws[..k];
            let selected = match selector {
                Selector::Uniform => {
                    let mut sel_rng =
                        named_stream(seed, &format!("eval/select/{episode}/{p}/{k}"));
                    candidates[sel_rng.gen_range(0..k)]
                }
                Selector::Probe(_) => {
                    let scores: Vec<f64> = candidates
                        .iter()
                        .map(|&a| action_scores.as_ref().unwrap()[a])
                        .collect();
                    let weights = selection_weights(&scores, beta)?;
                    let idx = if beta == 0.0 {
                        weights.iter().position(|&w| w == 1.0).unwrap_or(0)
                    } else {
                        let mut sel_rng =
                            named_stream(seed, &format!("eval/select/{episode}/{p}/{k}"));
                        sample_weighted(&weights, &mut sel_rng)
                    };
                    candidates[idx]
                }
                Selector::Oracle => {
                    let mut best = candidates[0];
                    for &a in candidates {
                        if rewards[a] > rewards[best] {
                            best = a;
                        }
                    }
                    best
                }
            };
            returns[ki] += rewards[selected];
            if task.is_binary() && candidates.iter().any(|&a| rewards[a] == 1.0) {
                passes[ki] += 1.0;
            }
        }
    }
    for v in returns.iter_mut().chain(passes.iter_mut()) {
        *v /= episodes as f64;
    }
    Ok(PromptCurve { returns, passes })
}

/// Evaluate a selector across a schedule of candidate counts.
///
/// For each episode and prompt, `max(ks)` candidates are drawn once from
/// the base distribution; every schedule entry evaluates selection over a
/// prefix of those draws, and pass@k (binary tasks) is computed from the
/// same draws the selector saw.
pub fn sweep_k(
    selector: Selector<'_>,
    task: &SyntheticTask,
    ks: &[usize],
    beta: f64,
    seed: u64,
    episodes: usize,
    require_pass_at_k: bool,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Argument("k schedule must be non-empty and positive".into()));
    }
    if episodes == 0 {
        return Err(Error::Argument("episodes must be positive".into()));
    }
    if require_pass_at_k && !task.is_binary() {
        return Err(Error::Argument(
            "pass@k is only defined for binary-reward tasks".into(),
        ));
    }
    if let Selector::Probe(probe) = &selector {
        if probe.dim() != task.dim() {
            return Err(Error::Argument(format!(
                "probe dim {} does not match task dim {}",
                probe.dim(),
                task.dim()
            )));
        }
    }

    let curves: Vec<PromptCurve> = (0..task.n_prompts())
        .into_par_iter()
        .map(|p| eval_prompt(task, p, &selector, ks, beta, seed, episodes))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(ks.len());
    for (ki, &k) in ks.iter().enumerate() {
        let per_prompt: Vec<f64> = curves.iter().map(|c| c.returns[ki]).collect();
        let mean_return = per_prompt.iter().sum::<f64>() / per_prompt.len() as f64;
        let return_ci =
            bootstrap_ci(&per_prompt, &mut named_stream(seed, &format!("eval/bootstrap/{k}")));
        let (pass_at_k, pass_ci) = if task.is_binary() {
            let per_prompt_pass: Vec<f64> = curves.iter().map(|c| c.passes[ki]).collect();
            let mean = per_prompt_pass.iter().sum::<f64>() / per_prompt_pass.len() as f64;
            let ci = bootstrap_ci(
                &per_prompt_pass,
                &mut named_stream(seed, &format!("eval/bootstrap-pass/{k}")),
            );
            (Some(mean), Some(ci))
        } else {
            (None, None)
        };
        points.push(EvalPoint { k, mean_return, return_ci, pass_at_k, pass_ci });
    }
    Ok(EvalReport {
        selector: selector.name().to_string(),
        beta,
        seed,
        episodes,
        points,
    })
}

/// Evaluate a selector at a single candidate count.
pub fn evaluate_policy(
    selector: Selector<'_>,
    task: &SyntheticTask,
    config: &SamplingConfig,
    episodes: usize,
    require_pass_at_k: bool,
) -> Result<EvalReport> {
    sweep_k(selector, task, &[config.k], config.beta, config.seed, episodes, require_pass_at_k)
}

/// One cell of the data-scaling sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSweepCell {
    pub size: usize,
    pub loss: LossKind,
    pub per_trial_return: Vec<f64>,
    pub mean_return: f64,
    pub ci: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSweepReport {
    pub sizes: Vec<usize>,
    pub losses: Vec<LossKind>,
    pub trials: usize,
    pub cells: Vec<DataSweepCell>,
}

impl DataSweepReport {
    pub fn cell(&self, size: usize, loss: LossKind) -> Option<&DataSweepCell> {
        self.cells.iter().find(|c| c.size == size && c.loss == loss)
    }
}

/// Configuration of [`sweep_data`].
#[derive(Debug, Clone)]
pub struct DataSweepConfig {
    pub sizes: Vec<usize>,
    pub losses: Vec<LossKind>,
    pub trials: usize,
    /// Completions (or pairs) sampled per prompt when exporting each cell's
    /// training set.
    pub samples_per_prompt: usize,
    /// Template training config; per-cell batch geometry is derived from it
    /// so small cells still form at least one full batch.
    pub train: TrainConfig,
    pub eval: SamplingConfig,
    pub episodes: usize,
    pub seed: u64,
}

fn subtask(task: &SyntheticTask, prompt_indices: &[usize]) -> SyntheticTask {
    let mut spec = task.spec.clone();
    spec.n_prompts = prompt_indices.len();
    SyntheticTask {
        spec,
        prompts: prompt_indices.iter().map(|&p| task.prompts[p].clone()).collect(),
        hidden: HiddenParams {
            w_star: task.hidden.w_star.clone(),
            difficulty: task.hidden.difficulty.clone(),
            prompt_offsets: prompt_indices.iter().map(|&p| task.hidden.prompt_offsets[p]).collect(),
        },
    }
}

fn cell_train_config(template: &TrainConfig, loss: LossKind, n_prompts: usize, records: usize, seed: u64) -> TrainConfig {
    let mut config = template.clone();
    config.loss = loss;
    config.seed = seed;
    if loss == LossKind::Pg {
        config.pg_prompts_per_batch = config.pg_prompts_per_batch.min(n_prompts);
        config.batch_size = config.pg_group_size * config.pg_prompts_per_batch;
    } else {
        config.batch_size = config.batch_size.min(records);
    }
    config
}

/// Train-and-evaluate over subsampled prompt counts, mirroring a
/// data-efficiency sweep: for each (size, loss, trial), train a fresh probe
/// on completions of `size` randomly chosen prompts and evaluate its mean
/// return on the full task.
pub fn sweep_data(task: &SyntheticTask, config: &DataSweepConfig) -> Result<DataSweepReport> {
    if config.trials == 0 {
        return Err(Error::Argument("trials must be positive".into()));
    }
    for &size in &config.sizes {
        if size == 0 || size > task.n_prompts() {
            return Err(Error::Argument(format!(
                "sweep size {size} outside 1..={} available prompts",
                task.n_prompts()
            )));
        }
    }
    let mut cells = Vec::new();
    for &size in &config.sizes {
        for &loss in &config.losses {
            let mut per_trial = Vec::with_capacity(config.trials);
            for trial in 0..config.trials {
                let indices: Vec<usize> = if size == task.n_prompts() {
                    (0..size).collect()
                } else {
                    use rand::seq::SliceRandom;
                    let mut all: Vec<usize> = (0..task.n_prompts()).collect();
                    all.shuffle(&mut named_stream(
                        config.seed,
                        &format!("sweep-data/prompts/{size}/{trial}"),
                    ));
                    let mut picked = all[..size].to_vec();
                    picked.sort_unstable();
                    picked
                };
                let sub = subtask(task, &indices);
                let stream = |what: &str| -> u64 {
                    named_stream(
                        config.seed,
                        &format!("sweep-data/{what}/{size}/{}/{trial}", loss.as_str()),
                    )
                    .gen()
                };
                let dataset = export_training_data(&sub, config.samples_per_prompt, stream("export"))?;
                let probe = Probe::linear(task.dim(), true)?;
                let train_config =
                    cell_train_config(&config.train, loss, size, dataset.len(), stream("train"));
                let (trained, _) = train(&dataset, &probe, &train_config)?;
                let eval = SamplingConfig { seed: stream("eval"), ..config.eval };
                let report =
                    evaluate_policy(Selector::Probe(&trained), task, &eval, config.episodes, false)?;
                per_trial.push(report.points[0].mean_return);
            }
            let mean = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
            let ci = bootstrap_ci(
                &per_trial,
                &mut named_stream(config.seed, &format!("sweep-data/ci/{size}/{}", loss.as_str())),
            );
            cells.push(DataSweepCell { size, loss, per_trial_return: per_trial, mean_return: mean, ci });
        }
    }
    Ok(DataSweepReport {
        sizes: config.sizes.clone(),
        losses: config.losses.clone(),
        trials: config.trials,
        cells,
    })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Per-prompt relationship between base-model difficulty and probe scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `(expected base reward, mean normalized probe score)` per prompt.
    pub per_prompt: Vec<(f64, f64)>,
    /// Pearson correlation across prompts; `None` when undefined.
    pub correlation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
}

/// Correlate per-prompt expected base reward with mean probe value.
///
/// Probe scores of sampled completions are centered and scaled by their
/// global mean and standard deviation before per-prompt averaging. A probe
/// with zero score variance (e.g. a zero-initialized one) yields an
/// undefined correlation, reported as such.
pub fn prompt_correlation_diagnostic(
    probe: &Probe,
    task: &SyntheticTask,
    samples_per_prompt: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if samples_per_prompt < 2 {
        return Err(Error::Argument(
            "correlation diagnostic needs at least 2 samples per prompt".into(),
        ));
    }
    if probe.dim() != task.dim() {
        return Err(Error::Argument(format!(
            "probe dim {} does not match task dim {}",
            probe.dim(),
            task.dim()
        )));
    }
    let mut all_scores: Vec<Vec<f64>> = Vec::with_capacity(task.n_prompts());
    for (p, model) in task.prompts.iter().enumerate() {
        let mut rng = named_stream(seed, &format!("corr/prompt/{p}"));
        let scores = (0..samples_per_prompt)
            .map(|_| {
                let a = sample_weighted(&model.p0, &mut rng);
                probe.forward(&model.embeddings[a])
            })
            .collect::<Result<Vec<f64>>>()?;
        all_scores.push(scores);
    }
    let flat: Vec<f64> = all_scores.iter().flatten().copied().collect();
    let n = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / n;
    let var = flat.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();

    let expected = task.per_prompt_expected_reward();
    if std == 0.0 {
        let per_prompt = expected.iter().map(|&e| (e, 0.0)).collect();
        return Ok(CorrelationReport {
            per_prompt,
            correlation: None,
            undefined_reason: Some("probe scores have zero variance".into()),
        });
    }
    let per_prompt: Vec<(f64, f64)> = expected
        .iter()
        .zip(&all_scores)
        .map(|(&e, scores)| {
            let normalized =
                scores.iter().map(|s| (s - mean) / std).sum::<f64>() / scores.len() as f64;
            (e, normalized)
        })
        .collect();
    let xs: Vec<f64> = per_prompt.iter().map(|(x, _)| *x).collect();
    let ys: Vec<f64> = per_prompt.iter().map(|(_, y)| *y).collect();
    let correlation = pearson(&xs, &ys);
    let undefined_reason = if correlation.is_none() {
        Some("zero variance across prompts".into())
    } else {
        None
    };
    Ok(CorrelationReport { per_prompt, correlation, undefined_reason })
}

// ---------------------------------------------------------------------------
// Task files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TaskPromptEntry {
    prompt_id: String,
    p0: Vec<f64>,
    rewards: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TaskFile {
    schema: String,
    spec: SyntheticTaskSpec,
    embeddings: String,
    prompts: Vec<TaskPromptEntry>,
    /// Generation parameters that reproduce the rewards. For verification
    /// only; selection code must not read them.
    hidden_oracle_only: HiddenParams,
}

/// Write a task as a JSON manifest plus a sibling `.bin` embedding file
/// (rows are prompt-major: `p * actions_per_prompt + a`).
pub fn save_task(task: &SyntheticTask, path: &Path) -> Result<()> {
    let bin_path = path.with_extension("bin");
    let rows: Vec<&[f32]> = task
        .prompts
        .iter()
        .flat_map(|m| m.embeddings.iter().map(|e| e.values()))
        .collect();
    write_embedding_file(&bin_path, task.dim(), rows.into_iter())?;

    let file = TaskFile {
        schema: TASK_SCHEMA.to_string(),
        spec: task.spec.clone(),
        embeddings: bin_path
            .file_name()
            .ok_or_else(|| Error::Argument("task path has no file name".into()))?
            .to_string_lossy()
            .into_owned(),
        prompts: task
            .prompts
            .iter()
            .enumerate()
            .map(|(p, m)| TaskPromptEntry {
                prompt_id: task.prompt_id(p),
                p0: m.p0.clone(),
                rewards: m.rewards.clone().unwrap_or_default(),
            })
            .collect(),
        hidden_oracle_only: task.hidden.clone(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file).map_err(|e| Error::Internal(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Load a task saved by [`save_task`].
pub fn load_task(path: &Path) -> Result<SyntheticTask> {
    let file: TaskFile = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.schema != TASK_SCHEMA {
        return Err(Error::Format(format!(
            "{}: unsupported task schema {:?}",
            path.display(),
            file.schema
        )));
    }
    let bin_path = path.parent().unwrap_or_else(|| Path::new(".")).join(&file.embeddings);
    let (dim, rows) = read_embedding_file(&bin_path)?;
    if dim != file.spec.dim {
        return Err(Error::Schema(format!(
            "{}: task declares dim {} but embedding file has dim {dim}",
            path.display(),
            file.spec.dim
        )));
    }
    let n = file.spec.actions_per_prompt;
    if rows.len() != n * file.prompts.len() {
        return Err(Error::Schema(format!(
            "{}: expected {} embedding rows, found {}",
            path.display(),
            n * file.prompts.len(),
            rows.len()
        )));
    }
    let mut prompts = Vec::with_capacity(file.prompts.len());
    for (p, entry) in file.prompts.iter().enumerate() {
        let embeddings = rows[p * n..(p + 1) * n]
            .iter()
            .map(|r| EmbeddingVector::new(r.clone()))
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..n).map(|a| format!("a{a:03}")).collect();
        prompts.push(FiniteBaseModel::new(
            labels,
            entry.p0.clone(),
            embeddings,
            Some(entry.rewards.clone()),
        )?);
    }
    Ok(SyntheticTask { spec: file.spec, prompts, hidden: file.hidden_oracle_only })
}
