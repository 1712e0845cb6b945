//! The value probe: a linear model or small tanh MLP over embeddings.
//!
//! Gradients with respect to the parameters are derived by hand (the two
//! architectures are small enough that an autodiff framework would be
//! overkill) and checked against central finite differences in the tests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingVector;
use crate::error::{Error, Result};
use crate::rng::named_stream;

/// Schema tag in the probe file.
pub const PROBE_SCHEMA: &str = "qprobe-probe-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    Mlp,
}

/// Gradient of a scalar objective with respect to the probe parameters,
/// laid out exactly like [`Probe::params`].
pub type ProbeGradient = Vec<f64>;

/// Optional provenance recorded alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// A parameterized scorer mapping embeddings to scalar values.
///
/// Parameters are stored flat. Linear layout: `[w (dim), b]`. MLP layout,
/// per layer: row-major weight matrix then bias vector, with tanh on every
/// hidden layer and a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    kind: ProbeKind,
    dim: usize,
    hidden: Vec<usize>,
    /// Whether the linear bias term is trained. When false the bias stays
    /// pinned at zero (its gradient is reported as zero). MLPs always train
    /// their biases.
    bias_enabled: bool,
    params: Vec<f64>,
    pub metadata: ProbeMetadata,
}

fn layer_dims(dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(dim);
    dims.extend_from_slice(hidden);
    dims.push(1);
    dims
}

fn param_count(kind: ProbeKind, dim: usize, hidden: &[usize]) -> usize {
    match kind {
        ProbeKind::Linear => dim + 1,
        ProbeKind::Mlp => {
            let dims = layer_dims(dim, hidden);
            dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
        }
    }
}

impl Probe {
    /// A zero-initialized linear probe. With all-zero parameters every
    /// candidate scores the same, so the induced softmax-over-k policy is
    /// exactly the base distribution.
    pub fn linear(dim: usize, bias_enabled: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("probe dimension must be positive".into()));
        }
        Ok(Self {
            kind: ProbeKind::Linear,
            dim,
            hidden: Vec::new(),
            bias_enabled,
            params: vec![0.0; dim + 1],
            metadata: ProbeMetadata::default(),
        })
    }

    /// Build a probe from explicit parameters, validating the count.
    pub fn with_params(
        kind: ProbeKind,
        dim: usize,
        hidden: Vec<usize>,
        bias_enabled: bool,
        params: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("probe dimension must be positive".into()));
        }
        match kind {
            ProbeKind::Linear if !hidden.is_empty() => {
                return Err(Error::Argument("linear probes take no hidden sizes".into()))
            }
            ProbeKind::Mlp if hidden.is_empty() => {
                return Err(Error::Argument("mlp probes need at least one hidden size".into()))
            }
            ProbeKind::Mlp if hidden.contains(&0) => {
                return Err(Error::Argument("hidden sizes must be positive".into()))
            }
            _ => {}
        }
        let expected = param_count(kind, dim, &hidden);
        if params.len() != expected {
            return Err(Error::Argument(format!(
                "expected {expected} parameters for this shape, got {}",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Data(format!("non-finite parameter at index {i}")));
        }
        Ok(Self { kind, dim, hidden, bias_enabled, params, metadata: ProbeMetadata::default() })
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn bias_enabled(&self) -> bool {
        self.bias_enabled
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// The weight vector of a linear probe (without the bias slot).
    pub fn linear_weights(&self) -> Option<&[f64]> {
        match self.kind {
            ProbeKind::Linear => Some(&self.params[..self.dim]),
            ProbeKind::Mlp => None,
        }
    }

    fn check_dim(&self, embedding: &EmbeddingVector) -> Result<()> {
        if embedding.dim() != self.dim {
            return Err(Error::Argument(format!(
                "embedding dim {} does not match probe dim {}",
                embedding.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Evaluate the probe on one embedding.
    pub fn forward(&self, embedding: &EmbeddingVector) -> Result<f64> {
        self.check_dim(embedding)?;
        Ok(self.forward_unchecked(embedding.values()))
    }

    fn forward_unchecked(&self, x: &[f32]) -> f64 {
        match self.kind {
            ProbeKind::Linear => {
                let mut acc = 0.0;
                for (w, &v) in self.params[..self.dim].iter().zip(x) {
                    acc += w * f64::from(v);
                }
                if self.bias_enabled {
                    acc += self.params[self.dim];
                }
                acc
            }
            ProbeKind::Mlp => {
                let (value, _) = self.mlp_forward(x);
                value
            }
        }
    }

    /// Forward pass keeping per-layer activations for backprop.
    fn mlp_forward(&self, x: &[f32]) -> (f64, Vec<Vec<f64>>) {
        let dims = layer_dims(self.dim, &self.hidden);
        let n_layers = dims.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(x.iter().map(|&v| f64::from(v)).collect());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let prev = &activations[l];
            let mut layer = Vec::with_capacity(n_out);
            for i in 0..n_out {
                let mut z = biases[i];
                let row = &weights[i * n_in..(i + 1) * n_in];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                layer.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            activations.push(layer);
        }
        (activations[n_layers][0], activations)
    }

    /// Evaluate the probe and its parameter gradient at one input.
    pub fn forward_with_grad(&self, embedding: &EmbeddingVector) -> Result<(f64, ProbeGradient)> {
        let mut grad = vec![0.0; self.params.len()];
        let value = self.forward_with_grad_into(embedding, &mut grad)?;
        Ok((value, grad))
    }

    /// Like [`Self::forward_with_grad`] but writing into a caller-provided
    /// buffer (overwritten, not accumulated).
    pub fn forward_with_grad_into(
        &self,
        embedding: &EmbeddingVector,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_dim(embedding)?;
        if grad.len() != self.params.len() {
            return Err(Error::Argument(format!(
                "gradient buffer length {} does not match parameter count {}",
                grad.len(),
                self.params.len()
            )));
        }
        let x = embedding.values();
        match self.kind {
            ProbeKind::Linear => {
                for (g, &v) in grad[..self.dim].iter_mut().zip(x) {
                    *g = f64::from(v);
                }
                grad[self.dim] = if self.bias_enabled { 1.0 } else { 0.0 };
                Ok(self.forward_unchecked(x))
            }
            ProbeKind::Mlp => {
                let (value, activations) = self.mlp_forward(x);
                let dims = layer_dims(self.dim, &self.hidden);
                let n_layers = dims.len() - 1;
                // Parameter offsets per layer.
                let mut offsets = Vec::with_capacity(n_layers);
                let mut off = 0;
                for l in 0..n_layers {
                    offsets.push(off);
                    off += (dims[l] + 1) * dims[l + 1];
                }
                // dQ/dz for the output layer is 1; walk backwards.
                let mut delta = vec![1.0f64];
                for l in (0..n_layers).rev() {
                    let (n_in, n_out) = (dims[l], dims[l + 1]);
                    let w_off = offsets[l];
                    let weights = &self.params[w_off..w_off + n_in * n_out];
                    let prev = &activations[l];
                    for i in 0..n_out {
                        for j in 0..n_in {
                            grad[w_off + i * n_in + j] = delta[i] * prev[j];
                        }
                        grad[w_off + n_in * n_out + i] = delta[i];
                    }
                    if l > 0 {
                        let mut next = vec![0.0f64; n_in];
                        for (j, slot) in next.iter_mut().enumerate() {
                            let mut s = 0.0;
                            for (i, d) in delta.iter().enumerate() {
                                s += weights[i * n_in + j] * d;
                            }
                            // prev holds tanh outputs, so tanh' = 1 - a^2.
                            *slot = s * (1.0 - prev[j] * prev[j]);
                        }
                        delta = next;
                    }
                }
                Ok(value)
            }
        }
    }
}

/// Initialize a probe deterministically from a seed.
///
/// Linear probes start at zero. MLP weights are drawn uniformly from
/// `(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))` per layer and zero
/// biases.
pub fn init_probe(kind: ProbeKind, dim: usize, hidden: &[usize], seed: u64) -> Result<Probe> {
    match kind {
        ProbeKind::Linear => {
            if !hidden.is_empty() {
                return Err(Error::Argument("linear probes take no hidden sizes".into()));
            }
            Probe::linear(dim, true)
        }
        ProbeKind::Mlp => {
            if hidden.is_empty() {
                return Err(Error::Argument("mlp probes need at least one hidden size".into()));
            }
            let dims = layer_dims(dim, hidden);
            let mut params = Vec::with_capacity(param_count(kind, dim, hidden));
            for l in 0..dims.len() - 1 {
                let (n_in, n_out) = (dims[l], dims[l + 1]);
                let scale = (6.0 / (n_in + n_out) as f64).sqrt();
                let mut rng = named_stream(seed, &format!("probe-init/layer/{l}"));
                for _ in 0..n_in * n_out {
                    params.push(rng.gen_range(-scale..scale));
                }
                params.extend(std::iter::repeat(0.0).take(n_out));
            }
            Probe::with_params(kind, dim, hidden.to_vec(), true, params)
        }
    }
}

// ---------------------------------------------------------------------------
// Probe file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProbeFile {
    schema: String,
    kind: String,
    dim: usize,
    hidden: Vec<usize>,
    bias: bool,
    /// Decimal values, for human inspection.
    params: Vec<f64>,
    /// Exact IEEE-754 bit patterns, hex-encoded; authoritative on load.
    params_hex: Vec<String>,
    metadata: ProbeMetadata,
}

/// Write a probe to a JSON file. Exact bit patterns go in `params_hex`, so
/// the round trip is bit-identical while the decimal copy stays readable.
pub fn save_probe(probe: &Probe, path: &Path) -> Result<()> {
    let file = ProbeFile {
        schema: PROBE_SCHEMA.to_string(),
        kind: match probe.kind {
            ProbeKind::Linear => "linear".into(),
            ProbeKind::Mlp => "mlp".into(),
        },
        dim: probe.dim,
        hidden: probe.hidden.clone(),
        bias: probe.bias_enabled,
        params: probe.params.clone(),
        params_hex: probe.params.iter().map(|p| format!("{:016x}", p.to_bits())).collect(),
        metadata: probe.metadata.clone(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file).map_err(|e| Error::Internal(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Load a probe saved by [`save_probe`].
pub fn load_probe(path: &Path) -> Result<Probe> {
    let file: ProbeFile = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.schema != PROBE_SCHEMA {
        return Err(Error::Format(format!(
            "{}: unsupported probe schema {:?}",
            path.display(),
            file.schema
        )));
    }
    let kind = match file.kind.as_str() {
        "linear" => ProbeKind::Linear,
        "mlp" => ProbeKind::Mlp,
        other => {
            return Err(Error::Format(format!("{}: unknown probe kind {other:?}", path.display())))
        }
    };
    if file.params_hex.len() != file.params.len() {
        return Err(Error::Format(format!(
            "{}: params and params_hex lengths differ",
            path.display()
        )));
    }
    let params = file
        .params_hex
        .iter()
        .map(|h| {
            u64::from_str_radix(h, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Format(format!("{}: bad hex parameter {h:?}: {e}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut probe = Probe::with_params(kind, file.dim, file.hidden, file.bias, params)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    probe.metadata = file.metadata;
    Ok(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn emb(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn zero_linear_probe_scores_zero() {
        let probe = Probe::linear(4, true).unwrap();
        assert_eq!(probe.forward(&emb(&[1.0, -2.0, 3.5, 0.25])).unwrap(), 0.0);
    }

    #[test]
    fn linear_probe_is_a_dot_product_plus_bias() {
        let probe = Probe::with_params(
            ProbeKind::Linear,
            3,
            vec![],
            true,
            vec![1.0, 0.0, 0.0, 0.5],
        )
        .unwrap();
        assert_eq!(probe.forward(&emb(&[2.0, 7.0, -4.0])).unwrap(), 2.5);
    }

    #[test]
    fn disabled_bias_is_ignored_and_has_zero_gradient() {
        let probe =
            Probe::with_params(ProbeKind::Linear, 2, vec![], false, vec![1.0, 1.0, 9.0]).unwrap();
        let (value, grad) = probe.forward_with_grad(&emb(&[1.0, 2.0])).unwrap();
        assert_eq!(value, 3.0);
        assert_eq!(grad, vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn linear_gradient_is_the_embedding() {
        let probe =
            Probe::with_params(ProbeKind::Linear, 3, vec![], true, vec![0.3, -0.1, 2.0, 0.7])
                .unwrap();
        let (_, grad) = probe.forward_with_grad(&emb(&[1.5, -2.0, 0.5])).unwrap();
        assert_eq!(grad, vec![1.5, -2.0, 0.5, 1.0]);
    }

    #[test]
    fn dim_mismatch_is_an_argument_error() {
        let probe = Probe::linear(3, true).unwrap();
        assert!(matches!(probe.forward(&emb(&[1.0, 2.0])), Err(Error::Argument(_))));
    }

    #[test]
    fn mlp_parameter_count_matches_shape_arithmetic() {
        let probe = init_probe(ProbeKind::Mlp, 16, &[32], 0).unwrap();
        assert_eq!(probe.param_count(), 16 * 32 + 32 + 32 + 1); // 577
    }

    #[test]
    fn init_is_deterministic_in_the_seed() {
        let a = init_probe(ProbeKind::Mlp, 8, &[4, 3], 42).unwrap();
        let b = init_probe(ProbeKind::Mlp, 8, &[4, 3], 42).unwrap();
        let c = init_probe(ProbeKind::Mlp, 8, &[4, 3], 43).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn linear_init_is_zero_for_any_seed() {
        let probe = init_probe(ProbeKind::Linear, 4, &[], 999).unwrap();
        assert!(probe.params().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn hidden_sizes_for_linear_kind_are_rejected() {
        assert!(matches!(init_probe(ProbeKind::Linear, 4, &[8], 0), Err(Error::Argument(_))));
        assert!(matches!(init_probe(ProbeKind::Mlp, 4, &[], 0), Err(Error::Argument(_))));
    }

    #[test]
    fn probe_roundtrip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("probe.json");
        let mut probe = init_probe(ProbeKind::Mlp, 5, &[7, 3], 11).unwrap();
        probe.metadata =
            ProbeMetadata { loss: Some("pg".into()), train_seed: Some(7), beta: Some(0.1) };
        save_probe(&probe, &path).unwrap();
        let loaded = load_probe(&path).unwrap();
        assert_eq!(loaded, probe);
        let bits_a: Vec<u64> = probe.params().iter().map(|p| p.to_bits()).collect();
        let bits_b: Vec<u64> = loaded.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn unknown_kind_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("probe.json");
        let probe = Probe::linear(2, true).unwrap();
        save_probe(&probe, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("\"linear\"", "\"cubic\"");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_probe(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_probe_file_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("probe.json");
        save_probe(&Probe::linear(2, true).unwrap(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_probe(&path), Err(Error::Format(_))));
    }
}
