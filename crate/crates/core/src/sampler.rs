//! Inference-time policies and exact finite-space verification.
//!
//! The selection rule draws `k` candidates from a base distribution and
//! picks one with probability proportional to `exp(Q/beta)`. On a finite
//! action set the induced policy can be computed exactly by enumerating
//! candidate count vectors, which lets us verify two properties instead of
//! trusting them:
//!
//! - as `k` grows the policy converges to the tilted distribution
//!   `p0(a) exp(Q(a)/beta) / E_{b~p0}[exp(Q(b)/beta)]` ([`limit_policy`]),
//!   measured here in total variation ([`verify_limit_convergence`]);
//! - that limit maximizes `E_pi[Q] - beta * KL(pi || p0)` over all
//!   distributions ([`verify_kl_optimality`]).
//!
//! [`rejection_sample`] draws exactly from the limit policy and doubles as
//! an independent route for the same distribution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingVector;
use crate::error::{Error, Result};
use crate::losses::softmax_inplace;
use crate::probe::Probe;

/// Inference-time knobs. `beta = 0` means hard argmax selection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { k: 48, beta: 0.1, seed: 0 }
    }
}

/// A fully enumerable base policy over a small action set, used as the
/// verification oracle: exact probabilities, per-action embeddings, and
/// (optionally) true rewards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteBaseModel {
    pub labels: Vec<String>,
    pub p0: Vec<f64>,
    #[serde(skip)]
    pub embeddings: Vec<EmbeddingVector>,
    pub rewards: Option<Vec<f64>>,
}

impl FiniteBaseModel {
    pub fn new(
        labels: Vec<String>,
        p0: Vec<f64>,
        embeddings: Vec<EmbeddingVector>,
        rewards: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Argument("base model needs at least one action".into()));
        }
        if p0.len() != n || embeddings.len() != n {
            return Err(Error::Argument(format!(
                "action count mismatch: {} labels, {} probabilities, {} embeddings",
                n,
                p0.len(),
                embeddings.len()
            )));
        }
        if let Some(r) = &rewards {
            if r.len() != n {
                return Err(Error::Argument(format!("{} rewards for {n} actions", r.len())));
            }
        }
        if p0.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Argument("base probabilities must be non-negative".into()));
        }
        let total: f64 = p0.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("base probabilities sum to {total}, not 1")));
        }
        Ok(Self { labels, p0, embeddings, rewards })
    }

    pub fn n_actions(&self) -> usize {
        self.labels.len()
    }

    /// Probe scores for every action.
    pub fn scores(&self, probe: &Probe) -> Result<Vec<f64>> {
        self.embeddings.iter().map(|e| probe.forward(e)).collect()
    }
}

/// The candidates drawn for one prompt, ready for reranking.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub prompt_id: String,
    pub candidates: Vec<(String, EmbeddingVector)>,
}

/// Outcome of a selection: the chosen candidate and the full weight vector
/// (one-hot for argmax selection). Weights always sum to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub weights: Vec<f64>,
}

/// Softmax weights of `scores / beta`, or one-hot argmax for `beta = 0`
/// (ties broken toward the lowest index).
pub fn selection_weights(scores: &[f64], beta: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Argument("selection needs at least one candidate".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Argument(format!("beta must be non-negative, got {beta}")));
    }
    if beta == 0.0 {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        let mut weights = vec![0.0; scores.len()];
        weights[best] = 1.0;
        return Ok(weights);
    }
    let mut weights: Vec<f64> = scores.iter().map(|s| s / beta).collect();
    softmax_inplace(&mut weights);
    Ok(weights)
}

/// Sample an index from a normalized weight vector.
pub(crate) fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Select one candidate from precomputed scores.
pub fn select_from_scores(scores: &[f64], beta: f64, rng: &mut ChaCha8Rng) -> Result<Selection> {
    let weights = selection_weights(scores, beta)?;
    let index = if beta == 0.0 {
        weights.iter().position(|&w| w == 1.0).unwrap_or(0)
    } else {
        sample_weighted(&weights, rng)
    };
    Ok(Selection { index, weights })
}

/// Score a candidate set with the probe and select one completion.
pub fn select(
    probe: &Probe,
    candidates: &CandidateSet,
    config: &SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Selection> {
    if candidates.candidates.is_empty() {
        return Err(Error::Argument(format!(
            "prompt {}: empty candidate set",
            candidates.prompt_id
        )));
    }
    let scores = candidates
        .candidates
        .iter()
        .map(|(_, e)| probe.forward(e))
        .collect::<Result<Vec<f64>>>()?;
    select_from_scores(&scores, config.beta, rng)
}

/// Rejection sampling from the tilted distribution: draw from the base
/// model, accept with probability `exp(Q/beta) / M`. Returns the accepted
/// action and the number of iterations used (expected `M / E[exp(Q/beta)]`).
pub fn rejection_sample(
    probe: &Probe,
    base: &FiniteBaseModel,
    beta: f64,
    bound: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, u64)> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::Argument(format!("bound M must be positive and finite, got {bound}")));
    }
    let scores = base.scores(probe)?;
    let log_bound = bound.ln();
    let max_log = scores.iter().map(|q| q / beta).fold(f64::NEG_INFINITY, f64::max);
    if max_log > log_bound {
        return Err(Error::Argument(format!(
            "bound M = {bound} is below max exp(Q/beta) = {}",
            max_log.exp()
        )));
    }
    let log_accept: Vec<f64> = scores.iter().map(|q| q / beta - log_bound).collect();
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        let action = sample_weighted(&base.p0, rng);
        let u: f64 = rng.gen();
        if u.ln() < log_accept[action] {
            return Ok((action, iterations));
        }
    }
}

/// The tilted distribution `p0(a) exp(Q(a)/beta) / sum_b p0(b) exp(Q(b)/beta)`
/// from raw scores.
pub fn limit_policy_scores(p0: &[f64], scores: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!(
            "beta must be positive for the tilted policy, got {beta} (use argmax selection for beta = 0)"
        )));
    }
    if p0.len() != scores.len() {
        return Err(Error::Argument("p0 and scores lengths differ".into()));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> =
        p0.iter().zip(scores).map(|(&p, &q)| p * ((q - max) / beta).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Internal("tilted policy normalizer vanished".into()));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// The limit of the k-candidate policy as `k` grows.
pub fn limit_policy(probe: &Probe, base: &FiniteBaseModel, beta: f64) -> Result<Vec<f64>> {
    limit_policy_scores(&base.p0, &base.scores(probe)?, beta)
}

/// Number of count vectors `C(k + n - 1, n - 1)` the exact policy has to
/// enumerate, saturating at infinity.
fn composition_count(k: usize, n: usize) -> f64 {
    let mut count = 1.0f64;
    for i in 0..n - 1 {
        count *= (k + i + 1) as f64 / (i + 1) as f64;
        if !count.is_finite() {
            return f64::INFINITY;
        }
    }
    count
}

/// Enumeration guard for [`exact_k_policy`].
pub const EXACT_K_GUARD: f64 = 1e7;

fn for_each_composition(k: usize, n: usize, f: &mut impl FnMut(&[usize])) {
    fn recurse(remaining: usize, slot: usize, counts: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if slot + 1 == counts.len() {
            counts[slot] = remaining;
            f(counts);
            return;
        }
        for c in 0..=remaining {
            counts[slot] = c;
            recurse(remaining - c, slot + 1, counts, f);
        }
    }
    let mut counts = vec![0usize; n];
    recurse(k, 0, &mut counts, f);
}

/// Exact distribution of the k-candidate softmax policy from raw scores.
///
/// Sums over all candidate count vectors `c` (multiset outcomes of drawing
/// `k` candidates i.i.d. from `p0`): the probability of `c` times the
/// chance that the softmax picks action `a`, which is
/// `c_a f_a / sum_j c_j f_j` with `f = exp(Q/beta)`. Enumeration is
/// guarded at [`EXACT_K_GUARD`] count vectors.
pub fn exact_k_policy_scores(p0: &[f64], scores: &[f64], beta: f64, k: usize) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let n = p0.len();
    if n == 0 || scores.len() != n {
        return Err(Error::Argument("p0 and scores must be non-empty and equal-length".into()));
    }
    if k == 1 {
        // A single draw is selected with probability 1: the policy is p0.
        return Ok(p0.to_vec());
    }
    let count = composition_count(k, n);
    if count > EXACT_K_GUARD {
        return Err(Error::Resource(format!(
            "exact k-policy needs {count:.3e} count vectors for n = {n}, k = {k} \
             (guard {EXACT_K_GUARD:.0e}); use the Monte Carlo fallback"
        )));
    }

    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tilts: Vec<f64> = scores.iter().map(|q| ((q - max) / beta).exp()).collect();
    let log_p0: Vec<f64> = p0.iter().map(|&p| p.ln()).collect();
    let mut ln_factorial = vec![0.0f64; k + 1];
    for i in 1..=k {
        ln_factorial[i] = ln_factorial[i - 1] + (i as f64).ln();
    }

    let mut policy = vec![0.0f64; n];
    for_each_composition(k, n, &mut |counts| {
        let mut log_pmf = ln_factorial[k];
        let mut denom = 0.0;
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                log_pmf += c as f64 * log_p0[j] - ln_factorial[c];
                denom += c as f64 * tilts[j];
            }
        }
        let pmf = log_pmf.exp();
        if pmf == 0.0 || denom == 0.0 {
            return;
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                policy[j] += pmf * c as f64 * tilts[j] / denom;
            }
        }
    });
    Ok(policy)
}

/// Exact distribution of the k-candidate policy for a probe on a finite
/// base model.
pub fn exact_k_policy(probe: &Probe, base: &FiniteBaseModel, beta: f64, k: usize) -> Result<Vec<f64>> {
    exact_k_policy_scores(&base.p0, &base.scores(probe)?, beta, k)
}

/// Monte Carlo estimate of the k-candidate policy, with per-action standard
/// errors. Fallback for instances beyond the enumeration guard.
pub fn mc_k_policy_scores(
    p0: &[f64],
    scores: &[f64],
    beta: f64,
    k: usize,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    if k == 0 || draws == 0 {
        return Err(Error::Argument("k and draws must be positive".into()));
    }
    let n = p0.len();
    let mut counts = vec![0usize; n];
    let mut candidate_scores = vec![0.0f64; k];
    let mut candidates = vec![0usize; k];
    for _ in 0..draws {
        for i in 0..k {
            let a = sample_weighted(p0, rng);
            candidates[i] = a;
            candidate_scores[i] = scores[a];
        }
        let sel = select_from_scores(&candidate_scores, beta, rng)?;
        counts[candidates[sel.index]] += 1;
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let errs: Vec<f64> =
        probs.iter().map(|&p| (p * (1.0 - p) / draws as f64).sqrt()).collect();
    Ok((probs, errs))
}

/// Half the L1 distance between two probability vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// One row of a convergence table: the exact k-candidate policy's total
/// variation distance from the limit policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub tv: f64,
}

/// Total variation distances to the limit policy along a k schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Indices of consecutive row pairs whose TV values tie within 1e-12
    /// (flagged rather than treated as violations).
    pub ties: Vec<usize>,
}

impl ConvergenceTable {
    /// True when TV never increases along the schedule (ties allowed).
    pub fn is_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].tv <= w[0].tv + 1e-12)
    }

    pub fn final_tv(&self) -> Option<f64> {
        self.rows.last().map(|r| r.tv)
    }
}

/// Tabulate TV(pi_k, limit) for each k in the schedule.
pub fn verify_limit_convergence_scores(
    p0: &[f64],
    scores: &[f64],
    beta: f64,
    k_schedule: &[usize],
) -> Result<ConvergenceTable> {
    let limit = limit_policy_scores(p0, scores, beta)?;
    let mut rows = Vec::with_capacity(k_schedule.len());
    for &k in k_schedule {
        let policy = exact_k_policy_scores(p0, scores, beta, k)?;
        rows.push(ConvergenceRow { k, tv: total_variation(&policy, &limit) });
    }
    let ties = rows
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0].tv - w[1].tv).abs() <= 1e-12)
        .map(|(i, _)| i)
        .collect();
    Ok(ConvergenceTable { rows, ties })
}

/// Convergence table for a probe on a finite base model.
pub fn verify_limit_convergence(
    probe: &Probe,
    base: &FiniteBaseModel,
    beta: f64,
    k_schedule: &[usize],
) -> Result<ConvergenceTable> {
    verify_limit_convergence_scores(&base.p0, &base.scores(probe)?, beta, k_schedule)
}

/// The KL-regularized objective `E_pi[Q] - beta * KL(pi || p0)`.
///
/// Entries with `pi = 0` contribute nothing; `pi > 0` where `p0 = 0` makes
/// the objective negative infinity.
pub fn kl_objective(pi: &[f64], scores: &[f64], p0: &[f64], beta: f64) -> f64 {
    let mut value = 0.0;
    for ((&p, &q), &base) in pi.iter().zip(scores).zip(p0) {
        if p == 0.0 {
            continue;
        }
        if base == 0.0 {
            return f64::NEG_INFINITY;
        }
        value += p * q - beta * p * (p / base).ln();
    }
    value
}

/// Result of the KL-optimality search: the limit policy's objective value
/// against the best of `trials` random perturbed distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KlOptimalityReport {
    /// Objective of the limit policy.
    pub j_limit: f64,
    /// Objective of the base distribution (KL term zero).
    pub j_base: f64,
    /// Best objective among the perturbed distributions.
    pub j_best_perturbed: f64,
    /// `j_limit - j_best_perturbed`; non-negative when optimality holds.
    pub margin: f64,
    /// How many perturbed distributions beat the limit policy.
    pub violations: usize,
    pub trials: usize,
}

impl KlOptimalityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Check numerically that the limit policy maximizes the KL-regularized
/// objective, from raw scores. Perturbations alternate between flat
/// Dirichlet draws and mixtures of the limit policy with such draws (mixing
/// coefficient at least 0.01, so the objective gap is well above float
/// noise).
pub fn verify_kl_optimality_scores(
    p0: &[f64],
    scores: &[f64],
    beta: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KlOptimalityReport> {
    if p0.iter().any(|&p| p == 0.0) {
        return Err(Error::Argument(
            "KL optimality check needs a full-support base distribution".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::Argument("trials must be positive".into()));
    }
    let limit = limit_policy_scores(p0, scores, beta)?;
    let j_limit = kl_objective(&limit, scores, p0, beta);
    let j_base = kl_objective(p0, scores, p0, beta);

    let n = p0.len();
    let mut j_best = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let draw_simplex = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        // Dirichlet(1, ..., 1) via normalized exponentials.
        let mut v: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
        let total: f64 = v.iter().sum();
        for x in &mut v {
            *x /= total;
        }
        v
    };
    for trial in 0..trials {
        let pi = if trial % 2 == 0 {
            draw_simplex(rng)
        } else {
            let q = draw_simplex(rng);
            let t = 0.01 + 0.99 * rng.gen::<f64>();
            limit.iter().zip(&q).map(|(&l, &x)| (1.0 - t) * l + t * x).collect()
        };
        let j = kl_objective(&pi, scores, p0, beta);
        if j > j_limit {
            violations += 1;
        }
        if j > j_best {
            j_best = j;
        }
    }
    Ok(KlOptimalityReport {
        j_limit,
        j_base,
        j_best_perturbed: j_best,
        margin: j_limit - j_best,
        violations,
        trials,
    })
}

/// KL-optimality check for a probe on a finite base model.
pub fn verify_kl_optimality(
    probe: &Probe,
    base: &FiniteBaseModel,
    beta: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KlOptimalityReport> {
    verify_kl_optimality_scores(&base.p0, &base.scores(probe)?, beta, trials, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{Probe, ProbeKind};
    use crate::rng::named_stream;

    fn emb(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    /// Probe scoring `Q(x) = x[0]` in 1-D.
    fn identity_probe() -> Probe {
        Probe::with_params(ProbeKind::Linear, 1, vec![], false, vec![1.0, 0.0]).unwrap()
    }

    fn two_action_base() -> FiniteBaseModel {
        FiniteBaseModel::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![emb(&[0.0]), emb(&[std::f64::consts::LN_2 as f32])],
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_candidate_selection_is_forced() {
        let probe = identity_probe();
        let set = CandidateSet { prompt_id: "p".into(), candidates: vec![("c".into(), emb(&[3.0]))] };
        let mut rng = named_stream(0, "test");
        let sel = select(&probe, &set, &SamplingConfig::default(), &mut rng).unwrap();
        assert_eq!(sel.index, 0);
        assert_eq!(sel.weights, vec![1.0]);
    }

    #[test]
    fn empty_candidate_set_is_an_argument_error() {
        let probe = identity_probe();
        let set = CandidateSet { prompt_id: "p".into(), candidates: vec![] };
        let mut rng = named_stream(0, "test");
        assert!(matches!(
            select(&probe, &set, &SamplingConfig::default(), &mut rng),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn softmax_weights_closed_form() {
        // Q = (0, ln 2), beta = 1 -> weights (1/3, 2/3).
        let weights = selection_weights(&[0.0, std::f64::consts::LN_2], 1.0).unwrap();
        assert!((weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((weights[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn selection_frequencies_match_weights() {
        // Equal scores over 3 candidates: 60k draws stay within 3 sigma of 1/3.
        let mut rng = named_stream(42, "freq");
        let scores = [1.0, 1.0, 1.0];
        let draws = 60_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[select_from_scores(&scores, 1.0, &mut rng).unwrap().index] += 1;
        }
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &c in &counts {
            assert!((c as f64 - draws as f64 / 3.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn argmax_selection_breaks_ties_low_and_ignores_monotone_transforms() {
        let scores = [0.5, 2.0, 2.0, -1.0];
        let mut rng = named_stream(0, "argmax");
        assert_eq!(select_from_scores(&scores, 0.0, &mut rng).unwrap().index, 1);
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).tanh()).collect();
        assert_eq!(select_from_scores(&transformed, 0.0, &mut rng).unwrap().index, 1);
    }

    #[test]
    fn softmax_weights_are_shift_invariant() {
        let scores = [0.2, -1.0, 3.0];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 123.456).collect();
        let a = selection_weights(&scores, 0.7).unwrap();
        let b = selection_weights(&shifted, 0.7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_policy_constant_scores_recover_p0() {
        let p0 = [0.1, 0.2, 0.3, 0.4];
        let policy = limit_policy_scores(&p0, &[2.5; 4], 0.5).unwrap();
        for (a, b) in policy.iter().zip(&p0) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn limit_policy_closed_form_and_large_beta() {
        let base = two_action_base();
        let probe = identity_probe();
        let policy = limit_policy(&probe, &base, 1.0).unwrap();
        assert!((policy[0] - 1.0 / 3.0).abs() < 1e-7);
        assert!((policy[1] - 2.0 / 3.0).abs() < 1e-7);

        let soft = limit_policy(&probe, &base, 1e6).unwrap();
        for (a, b) in soft.iter().zip(&base.p0) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn limit_policy_rejects_zero_beta() {
        let base = two_action_base();
        assert!(matches!(
            limit_policy(&identity_probe(), &base, 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn exact_k_policy_k1_is_p0_bitwise() {
        let p0 = [0.123456789, 0.3, 0.576543211];
        let policy = exact_k_policy_scores(&p0, &[0.9, -0.4, 2.0], 0.5, 1).unwrap();
        for (a, b) in policy.iter().zip(&p0) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn exact_k_policy_hand_enumeration_n2_k2() {
        // p0 = (1/2, 1/2), f = (1, 2): counts (2,0),(1,1),(0,2) with
        // probabilities (1/4, 1/2, 1/4) give pi = (5/12, 7/12).
        let p0 = [0.5, 0.5];
        let scores = [0.0, 2.0f64.ln()];
        let policy = exact_k_policy_scores(&p0, &scores, 1.0, 2).unwrap();
        assert!((policy[0] - 5.0 / 12.0).abs() < 1e-12, "{policy:?}");
        assert!((policy[1] - 7.0 / 12.0).abs() < 1e-12, "{policy:?}");
    }

    #[test]
    fn exact_k_policy_sums_to_one() {
        let p0 = [0.2, 0.05, 0.3, 0.45];
        let scores = [1.0, -0.5, 0.25, 2.0];
        for k in [2, 3, 8, 16] {
            let policy = exact_k_policy_scores(&p0, &scores, 0.5, k).unwrap();
            let total: f64 = policy.iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "k={k}: {total}");
            assert!(policy.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn exact_k_policy_guard_fires() {
        let p0 = vec![0.1; 10];
        let scores = vec![0.0; 10];
        match exact_k_policy_scores(&p0, &scores, 1.0, 10_000) {
            Err(Error::Resource(msg)) => assert!(msg.contains("Monte Carlo"), "{msg}"),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn exact_k_policy_matches_monte_carlo() {
        let p0 = [0.5, 0.2, 0.3];
        let scores = [0.3, 1.1, -0.7];
        let (beta, k) = (0.6, 6);
        let exact = exact_k_policy_scores(&p0, &scores, beta, k).unwrap();
        let mut rng = named_stream(3, "mc-check");
        let draws = 200_000;
        let (mc, errs) = mc_k_policy_scores(&p0, &scores, beta, k, draws, &mut rng).unwrap();
        for ((e, m), s) in exact.iter().zip(&mc).zip(&errs) {
            assert!((e - m).abs() < 4.0 * s, "exact {e} vs mc {m} +- {s}");
        }
    }

    #[test]
    fn rejection_sampler_accepts_immediately_when_trivial() {
        // Q = 0 everywhere, M = 1: acceptance probability 1.
        let base = FiniteBaseModel::new(
            vec!["a".into(), "b".into()],
            vec![0.25, 0.75],
            vec![emb(&[0.0]), emb(&[0.0])],
            None,
        )
        .unwrap();
        let probe = identity_probe();
        let mut rng = named_stream(9, "rej");
        for _ in 0..100 {
            let (_, iters) = rejection_sample(&probe, &base, 1.0, 1.0, &mut rng).unwrap();
            assert_eq!(iters, 1);
        }
    }

    #[test]
    fn rejection_sampler_validates_the_bound() {
        let base = two_action_base();
        let mut rng = named_stream(9, "rej");
        assert!(matches!(
            rejection_sample(&identity_probe(), &base, 1.0, 1.5, &mut rng),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn rejection_sampler_matches_limit_policy_frequencies() {
        let base = two_action_base();
        let probe = identity_probe();
        let limit = limit_policy(&probe, &base, 1.0).unwrap();
        let mut rng = named_stream(17, "rej-freq");
        let draws = 100_000;
        let mut counts = [0usize; 2];
        let mut total_iters = 0u64;
        for _ in 0..draws {
            let (a, iters) = rejection_sample(&probe, &base, 1.0, 2.0, &mut rng).unwrap();
            counts[a] += 1;
            total_iters += iters;
        }
        for (i, &c) in counts.iter().enumerate() {
            let sigma = (draws as f64 * limit[i] * (1.0 - limit[i])).sqrt();
            assert!((c as f64 - draws as f64 * limit[i]).abs() < 3.0 * sigma);
        }
        // E[iterations] = M / E_p0[exp(Q/beta)] = 2 / 1.5
        let mean_iters = total_iters as f64 / draws as f64;
        assert!((mean_iters - 2.0 / 1.5).abs() / (2.0 / 1.5) < 0.02, "{mean_iters}");
    }

    #[test]
    fn convergence_table_is_flat_zero_for_constant_scores() {
        let p0 = [0.4, 0.1, 0.5];
        let table =
            verify_limit_convergence_scores(&p0, &[1.0; 3], 0.5, &[1, 2, 4, 8]).unwrap();
        assert!(table.is_decreasing());
        for row in &table.rows {
            assert!(row.tv < 1e-14, "k={}: tv={}", row.k, row.tv);
        }
        assert_eq!(table.ties.len(), 3);
    }

    #[test]
    fn convergence_k1_row_is_tv_between_p0_and_limit() {
        let p0 = [0.5, 0.5];
        let scores = [0.0, 2.0f64.ln()];
        let table = verify_limit_convergence_scores(&p0, &scores, 1.0, &[1]).unwrap();
        let limit = limit_policy_scores(&p0, &scores, 1.0).unwrap();
        let expected = total_variation(&p0, &limit);
        assert!((table.rows[0].tv - expected).abs() < 1e-15);
    }

    #[test]
    fn kl_optimality_holds_on_random_instances() {
        let mut rng = named_stream(5, "kl");
        let p0 = [0.3, 0.25, 0.2, 0.15, 0.1];
        let scores = [0.9, -0.3, 0.1, 0.7, -1.0];
        let report = verify_kl_optimality_scores(&p0, &scores, 0.5, 1000, &mut rng).unwrap();
        assert!(report.holds(), "{report:?}");
        assert!(report.margin > 0.0);
        assert!(report.j_limit >= report.j_base);
    }

    #[test]
    fn kl_optimality_rejects_zero_support() {
        let mut rng = named_stream(5, "kl");
        assert!(matches!(
            verify_kl_optimality_scores(&[0.0, 1.0], &[0.0, 0.0], 0.5, 10, &mut rng),
            Err(Error::Argument(_))
        ));
    }
}
