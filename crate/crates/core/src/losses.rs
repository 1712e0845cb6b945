//! Training objectives for value probes.
//!
//! Five batch losses, each returning the scalar value and its analytic
//! gradient with respect to the probe parameters:
//!
//! - [`loss_q`]: mean squared error against scalar rewards.
//! - [`loss_ce`]: sigmoid cross entropy against 0/1 rewards.
//! - [`loss_pg`]: a group-softmax policy gradient. Completions of one prompt
//!   form a group; each member's selection probability is its softmax weight
//!   within the group (at temperature `beta`), and the loss is the negative
//!   advantage-weighted sum of those probabilities.
//! - [`loss_qp`]: pairwise preference likelihood, `-log sigmoid(Q_w - Q_l)`.
//! - [`loss_dpo_approx`]: a pairwise policy-style loss where winner and
//!   loser compete inside one softmax over the pair plus optional context
//!   completions.
//!
//! All exponentials of `Q/beta` go through max-subtraction, so extreme
//! score/temperature ratios stay finite.

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingVector, PreferencePair, RewardRecord};
use crate::error::{Error, Result};
use crate::probe::{Probe, ProbeGradient};

/// Completions of a single prompt, grouped for the policy-gradient loss.
#[derive(Debug, Clone)]
pub struct PromptGroup<'a> {
    pub prompt_id: &'a str,
    pub records: Vec<(&'a EmbeddingVector, f64)>,
}

/// Configuration of the policy-gradient loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PgConfig {
    /// Softmax temperature in `exp(Q / beta)`.
    pub beta: f64,
    /// Context-independent reward baseline subtracted from every reward.
    pub baseline: f64,
}

impl PgConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Argument(format!("pg beta must be positive, got {}", self.beta)));
        }
        if !self.baseline.is_finite() {
            return Err(Error::Argument("pg baseline must be finite".into()));
        }
        Ok(())
    }
}

/// Configuration of the DPO-style pairwise policy loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DpoConfig {
    /// Scale applied inside the sigmoid.
    pub alpha: f64,
    /// Softmax temperature.
    pub beta: f64,
    /// Nominal number of candidates in the softmax (winner + loser +
    /// context). The trainer uses the two-sample reduction, i.e. 2.
    pub context_size: usize,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.1, context_size: 2 }
    }
}

impl DpoConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Argument(format!("dpo alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Argument(format!("dpo beta must be positive, got {}", self.beta)));
        }
        if self.context_size < 2 {
            return Err(Error::Argument("dpo context size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Numerically stable `log(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `scores` in place, via max-subtraction.
pub(crate) fn softmax_inplace(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Mean squared error against rewards: `mean((Q - r)^2)`.
pub fn loss_q(probe: &Probe, batch: &[&RewardRecord]) -> Result<(f64, ProbeGradient)> {
    if batch.is_empty() {
        return Err(Error::Argument("loss_q needs a non-empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probe.param_count()];
    let mut scratch = vec![0.0; probe.param_count()];
    for rec in batch {
        let q = probe.forward_with_grad_into(&rec.embedding, &mut scratch)?;
        let err = q - rec.reward;
        loss += err * err / n;
        let coef = 2.0 * err / n;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
    }
    Ok((loss, grad))
}

/// Sigmoid cross entropy against 0/1 rewards:
/// `mean(-r log sigmoid(Q) - (1 - r) log(1 - sigmoid(Q)))`.
pub fn loss_ce(probe: &Probe, batch: &[&RewardRecord]) -> Result<(f64, ProbeGradient)> {
    if batch.is_empty() {
        return Err(Error::Argument("loss_ce needs a non-empty batch".into()));
    }
    for rec in batch {
        if rec.reward != 0.0 && rec.reward != 1.0 {
            return Err(Error::Argument(format!(
                "loss_ce needs rewards in {{0, 1}}, got {} for ({}, {})",
                rec.reward, rec.prompt_id, rec.completion_id
            )));
        }
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probe.param_count()];
    let mut scratch = vec![0.0; probe.param_count()];
    for rec in batch {
        let q = probe.forward_with_grad_into(&rec.embedding, &mut scratch)?;
        // -log sigmoid(q) = softplus(-q); -log(1 - sigmoid(q)) = softplus(q)
        loss += (rec.reward * softplus(-q) + (1.0 - rec.reward) * softplus(q)) / n;
        let coef = (sigmoid(q) - rec.reward) / n;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
    }
    Ok((loss, grad))
}

/// Probability of the target under the softmax over target plus context:
/// `f(target) / (f(target) + sum f(context_i))` with `f = exp(Q / beta)`.
pub fn softmax_ratio(
    probe: &Probe,
    target: &EmbeddingVector,
    context: &[&EmbeddingVector],
    beta: f64,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    if context.is_empty() {
        return Err(Error::Argument("softmax_ratio needs a non-empty context".into()));
    }
    let mut scores = Vec::with_capacity(context.len() + 1);
    scores.push(probe.forward(target)? / beta);
    for emb in context {
        scores.push(probe.forward(emb)? / beta);
    }
    softmax_inplace(&mut scores);
    Ok(scores[0])
}

/// Group-softmax policy gradient loss.
///
/// For each group of `g` completions of a prompt, with advantages
/// `A_i = r_i - baseline` and within-group softmax weights `rho_i` at
/// temperature `beta`, the group term is `-(1/g) * sum_i A_i * rho_i`;
/// the loss is the mean over groups.
pub fn loss_pg(
    probe: &Probe,
    groups: &[PromptGroup<'_>],
    config: &PgConfig,
) -> Result<(f64, ProbeGradient)> {
    config.validate()?;
    if groups.is_empty() {
        return Err(Error::Argument("loss_pg needs at least one group".into()));
    }
    for group in groups {
        if group.records.len() < 2 {
            return Err(Error::Argument(format!(
                "prompt {} has a group of size {}; the softmax needs at least 2",
                group.prompt_id,
                group.records.len()
            )));
        }
    }
    let n_groups = groups.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probe.param_count()];
    let mut scratch = vec![0.0; probe.param_count()];
    for group in groups {
        let g = group.records.len() as f64;
        let mut weights: Vec<f64> = group
            .records
            .iter()
            .map(|(emb, _)| probe.forward(emb).map(|q| q / config.beta))
            .collect::<Result<_>>()?;
        softmax_inplace(&mut weights);
        let advantages: Vec<f64> =
            group.records.iter().map(|(_, r)| r - config.baseline).collect();
        let mean_adv: f64 =
            advantages.iter().zip(&weights).map(|(a, p)| a * p).sum();
        loss += advantages
            .iter()
            .zip(&weights)
            .map(|(a, p)| -a * p)
            .sum::<f64>()
            / (g * n_groups);
        // d loss / d Q_j = -(p_j (A_j - sum_i A_i p_i)) / (g * beta * n_groups)
        for ((emb, _), (&a, &p)) in group.records.iter().zip(advantages.iter().zip(&weights)) {
            let coef = -p * (a - mean_adv) / (g * config.beta * n_groups);
            if coef == 0.0 {
                continue;
            }
            probe.forward_with_grad_into(emb, &mut scratch)?;
            for (gd, s) in grad.iter_mut().zip(&scratch) {
                *gd += coef * s;
            }
        }
    }
    Ok((loss, grad))
}

/// Pairwise preference loss: `mean(-log sigmoid(Q(winner) - Q(loser)))`.
pub fn loss_qp(probe: &Probe, batch: &[&PreferencePair]) -> Result<(f64, ProbeGradient)> {
    if batch.is_empty() {
        return Err(Error::Argument("loss_qp needs a non-empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probe.param_count()];
    let mut scratch = vec![0.0; probe.param_count()];
    for pair in batch {
        let qw = probe.forward(&pair.winner)?;
        let ql = probe.forward(&pair.loser)?;
        let margin = qw - ql;
        loss += softplus(-margin) / n;
        let coef = (sigmoid(margin) - 1.0) / n;
        probe.forward_with_grad_into(&pair.winner, &mut scratch)?;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
        probe.forward_with_grad_into(&pair.loser, &mut scratch)?;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g -= coef * s;
        }
    }
    Ok((loss, grad))
}

/// DPO-style pairwise policy loss for one preference pair.
///
/// Winner, loser, and context completions share one softmax at temperature
/// `beta`; with weights `rho_w` and `rho_l` the loss is
/// `-log sigmoid(alpha * (rho_w - rho_l))`. With an empty context this
/// reduces to the two-sample form
/// `-log sigmoid(alpha * (f_w - f_l) / (f_w + f_l))`.
pub fn loss_dpo_approx(
    probe: &Probe,
    pair: &PreferencePair,
    context: &[&EmbeddingVector],
    config: &DpoConfig,
) -> Result<(f64, ProbeGradient)> {
    config.validate()?;
    let k = context.len() + 2;
    let mut scores = Vec::with_capacity(k);
    scores.push(probe.forward(&pair.winner)? / config.beta);
    scores.push(probe.forward(&pair.loser)? / config.beta);
    for emb in context {
        scores.push(probe.forward(emb)? / config.beta);
    }
    let mut weights = scores.clone();
    softmax_inplace(&mut weights);
    let (rho_w, rho_l) = (weights[0], weights[1]);
    let z = config.alpha * (rho_w - rho_l);
    let loss = softplus(-z);
    let dl_dz = sigmoid(z) - 1.0;

    // dz/ds_j = alpha * (rho_w (d_wj - rho_j) - rho_l (d_lj - rho_j))
    let mut grad = vec![0.0; probe.param_count()];
    let mut scratch = vec![0.0; probe.param_count()];
    let embeddings: Vec<&EmbeddingVector> = std::iter::once(&pair.winner)
        .chain(std::iter::once(&pair.loser))
        .chain(context.iter().copied())
        .collect();
    for (j, emb) in embeddings.iter().enumerate() {
        let d_wj = if j == 0 { 1.0 } else { 0.0 };
        let d_lj = if j == 1 { 1.0 } else { 0.0 };
        let dz_dsj = config.alpha * (rho_w * (d_wj - weights[j]) - rho_l * (d_lj - weights[j]));
        let coef = dl_dz * dz_dsj / config.beta;
        if coef == 0.0 {
            continue;
        }
        probe.forward_with_grad_into(emb, &mut scratch)?;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
    }
    Ok((loss, grad))
}
