//! Dataset schemas and on-disk formats.
//!
//! A dataset is a binary embedding matrix plus a JSONL manifest that labels
//! rows of the matrix. The embedding file starts with the magic bytes
//! `QPEMB1`, a `u32` little-endian dimension, and a `u64` little-endian row
//! count, followed by row-major little-endian IEEE-754 `f32` values. The
//! manifest's first line is a header object
//! `{"schema":"qprobe-dataset-v1","embeddings":...,"dim":...,"kind":...,"binary":...}`
//! and every following line is one record:
//!
//! - reward kind: `{"prompt_id":..,"completion_id":..,"row":..,"reward":..}`
//! - preference kind: `{"prompt_id":..,"winner_row":..,"loser_row":..}`
//!
//! Unknown keys are ignored with a warning. Save followed by load is the
//! identity on a dataset, including the exact float bit patterns.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::named_stream;

/// Magic bytes at the start of an embedding file.
pub const EMBEDDING_MAGIC: &[u8; 6] = b"QPEMB1";

/// Schema tag in the manifest header line.
pub const MANIFEST_SCHEMA: &str = "qprobe-dataset-v1";

/// A fixed-dimension feature vector for one prompt-completion pair.
///
/// Values are stored as `f32` to match the on-disk format; all downstream
/// arithmetic promotes to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Build a vector, rejecting empty or non-finite input.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("embedding must have positive dimension".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite embedding entry at index {i}")));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// One labeled completion: embedding plus its scalar reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardRecord {
    pub prompt_id: String,
    pub completion_id: String,
    pub embedding: EmbeddingVector,
    pub reward: f64,
}

/// One preference comparison: the preferred and the rejected embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub winner: EmbeddingVector,
    pub loser: EmbeddingVector,
}

/// An in-memory dataset of reward records or preference pairs.
///
/// Exactly one of the two lists may be non-empty. `prompt_index` maps each
/// prompt id to the indices of its entries (into whichever list is
/// populated), in file order. Datasets are immutable after construction and
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dim: usize,
    /// Declares that rewards are meant to be 0/1; off-range values warn.
    pub binary: bool,
    pub reward_records: Vec<RewardRecord>,
    pub preference_pairs: Vec<PreferencePair>,
    pub prompt_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Build and validate a dataset from its parts.
    pub fn new(
        dim: usize,
        binary: bool,
        reward_records: Vec<RewardRecord>,
        preference_pairs: Vec<PreferencePair>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Schema("dataset dimension must be positive".into()));
        }
        if !reward_records.is_empty() && !preference_pairs.is_empty() {
            return Err(Error::Schema(
                "a dataset holds reward records or preference pairs, not both".into(),
            ));
        }
        let mut prompt_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut seen_ids = BTreeSet::new();
        for (i, rec) in reward_records.iter().enumerate() {
            if rec.embedding.dim() != dim {
                return Err(Error::Schema(format!(
                    "record {i}: embedding dim {} != dataset dim {dim}",
                    rec.embedding.dim()
                )));
            }
            if !rec.reward.is_finite() {
                return Err(Error::Data(format!("record {i}: non-finite reward")));
            }
            if !seen_ids.insert((rec.prompt_id.clone(), rec.completion_id.clone())) {
                return Err(Error::Data(format!(
                    "duplicate (prompt_id, completion_id) = ({}, {})",
                    rec.prompt_id, rec.completion_id
                )));
            }
            prompt_index.entry(rec.prompt_id.clone()).or_default().push(i);
        }
        for (i, pair) in preference_pairs.iter().enumerate() {
            if pair.winner.dim() != dim || pair.loser.dim() != dim {
                return Err(Error::Schema(format!(
                    "pair {i}: embedding dims ({}, {}) != dataset dim {dim}",
                    pair.winner.dim(),
                    pair.loser.dim()
                )));
            }
            prompt_index.entry(pair.prompt_id.clone()).or_default().push(i);
        }
        Ok(Self { dim, binary, reward_records, preference_pairs, prompt_index })
    }

    pub fn is_preference(&self) -> bool {
        !self.preference_pairs.is_empty()
    }

    /// Number of entries in whichever list is populated.
    pub fn len(&self) -> usize {
        if self.is_preference() { self.preference_pairs.len() } else { self.reward_records.len() }
    }

    pub fn is_empty(&self) -> bool {
        self.reward_records.is_empty() && self.preference_pairs.is_empty()
    }

    /// Prompt ids in first-appearance order.
    pub fn prompt_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let ids: Box<dyn Iterator<Item = &str>> = if self.is_preference() {
            Box::new(self.preference_pairs.iter().map(|p| p.prompt_id.as_str()))
        } else {
            Box::new(self.reward_records.iter().map(|r| r.prompt_id.as_str()))
        };
        for id in ids {
            if seen.insert(id) {
                out.push(id);
            }
        }
        out
    }

    /// Non-fatal invariant violations (currently: off-range binary rewards).
    pub fn validation_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.binary {
            for (i, rec) in self.reward_records.iter().enumerate() {
                if rec.reward != 0.0 && rec.reward != 1.0 {
                    warnings.push(format!(
                        "record {i} ({}, {}): reward {} outside {{0, 1}} on a binary dataset",
                        rec.prompt_id, rec.completion_id, rec.reward
                    ));
                }
            }
        }
        warnings
    }
}

// ---------------------------------------------------------------------------
// Embedding binary format
// ---------------------------------------------------------------------------

/// Write rows to `path` in the `QPEMB1` binary layout.
pub fn write_embedding_file<'a>(
    path: &Path,
    dim: usize,
    rows: impl ExactSizeIterator<Item = &'a [f32]>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(EMBEDDING_MAGIC)?;
    out.write_all(&u32::try_from(dim).map_err(|_| Error::Schema("dim exceeds u32".into()))?.to_le_bytes())?;
    out.write_all(&(rows.len() as u64).to_le_bytes())?;
    for row in rows {
        debug_assert_eq!(row.len(), dim);
        for &v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read an embedding file, validating the header, the byte length, and that
/// every entry is finite. Errors name the offending row.
pub fn read_embedding_file(path: &Path) -> Result<(usize, Vec<Vec<f32>>)> {
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("{}: bad magic bytes", path.display())));
    }
    let mut buf4 = [0u8; 4];
    let mut buf8 = [0u8; 8];
    file.read_exact(&mut buf4)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let dim = u32::from_le_bytes(buf4) as usize;
    file.read_exact(&mut buf8)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let rows = u64::from_le_bytes(buf8) as usize;
    if dim == 0 {
        return Err(Error::Format(format!("{}: zero dimension", path.display())));
    }

    let mut data = vec![0u8; rows.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(
        || Error::Format(format!("{}: row count overflows", path.display())),
    )?];
    file.read_exact(&mut data)
        .map_err(|_| Error::Format(format!("{}: truncated body (expected {rows} rows)", path.display())))?;
    if file.read(&mut buf4)? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes after {rows} rows", path.display())));
    }

    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let start = r * dim * 4;
        let mut row = Vec::with_capacity(dim);
        for c in 0..dim {
            let off = start + c * 4;
            let v = f32::from_le_bytes([data[off], data[off + 1], data[off + 2], data[off + 3]]);
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: non-finite value at row {r}, column {c}",
                    path.display()
                )));
            }
            row.push(v);
        }
        out.push(row);
    }
    Ok((dim, out))
}

// ---------------------------------------------------------------------------
// JSONL manifest
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    schema: String,
    embeddings: String,
    dim: usize,
    kind: String,
    binary: bool,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct RewardLine {
    prompt_id: String,
    completion_id: String,
    row: usize,
    reward: f64,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct PreferenceLine {
    prompt_id: String,
    winner_row: usize,
    loser_row: usize,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, serde_json::Value>,
}

fn embedding_file_for(manifest_path: &Path) -> std::path::PathBuf {
    manifest_path.with_extension("bin")
}

/// Write `dataset` as a JSONL manifest plus a sibling `.bin` embedding file.
///
/// Reward datasets store one embedding row per record in record order;
/// preference datasets store winner and loser rows interleaved. Off-range
/// rewards on a binary dataset are logged as warnings, not errors.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<()> {
    for w in dataset.validation_warnings() {
        log::warn!("{}: {w}", manifest_path.display());
    }
    let bin_path = embedding_file_for(manifest_path);
    let bin_name = bin_path
        .file_name()
        .ok_or_else(|| Error::Argument("manifest path has no file name".into()))?
        .to_string_lossy()
        .into_owned();

    let mut out = BufWriter::new(File::create(manifest_path)?);
    let header = ManifestHeader {
        schema: MANIFEST_SCHEMA.to_string(),
        embeddings: bin_name,
        dim: dataset.dim,
        kind: if dataset.is_preference() { "preference".into() } else { "reward".into() },
        binary: dataset.binary,
        extra: BTreeMap::new(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(|e| Error::Internal(e.to_string()))?)?;

    if dataset.is_preference() {
        let rows = dataset
            .preference_pairs
            .iter()
            .flat_map(|p| [p.winner.values(), p.loser.values()])
            .collect::<Vec<_>>();
        write_embedding_file(&bin_path, dataset.dim, rows.into_iter())?;
        for (i, pair) in dataset.preference_pairs.iter().enumerate() {
            let line = PreferenceLine {
                prompt_id: pair.prompt_id.clone(),
                winner_row: 2 * i,
                loser_row: 2 * i + 1,
                extra: BTreeMap::new(),
            };
            writeln!(out, "{}", serde_json::to_string(&line).map_err(|e| Error::Internal(e.to_string()))?)?;
        }
    } else {
        let rows = dataset.reward_records.iter().map(|r| r.embedding.values()).collect::<Vec<_>>();
        write_embedding_file(&bin_path, dataset.dim, rows.into_iter())?;
        for (i, rec) in dataset.reward_records.iter().enumerate() {
            let line = RewardLine {
                prompt_id: rec.prompt_id.clone(),
                completion_id: rec.completion_id.clone(),
                row: i,
                reward: rec.reward,
                extra: BTreeMap::new(),
            };
            writeln!(out, "{}", serde_json::to_string(&line).map_err(|e| Error::Internal(e.to_string()))?)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Load a dataset, returning any non-fatal warnings alongside it.
///
/// Warnings cover unknown manifest keys, embedding rows that are referenced
/// more than once or not at all, and off-range binary rewards.
pub fn load_dataset_verbose(manifest_path: &Path) -> Result<(Dataset, Vec<String>)> {
    let file = BufReader::new(File::open(manifest_path)?);
    let mut lines = file.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty manifest", manifest_path.display())))??;
    let header: ManifestHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("{}: bad header line: {e}", manifest_path.display())))?;
    if header.schema != MANIFEST_SCHEMA {
        return Err(Error::Format(format!(
            "{}: unsupported schema {:?}",
            manifest_path.display(),
            header.schema
        )));
    }
    let mut warnings = Vec::new();
    if !header.extra.is_empty() {
        warnings.push(format!(
            "header: ignoring unknown keys {:?}",
            header.extra.keys().collect::<Vec<_>>()
        ));
    }

    let bin_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.embeddings);
    let (file_dim, rows) = read_embedding_file(&bin_path)?;
    if file_dim != header.dim {
        return Err(Error::Schema(format!(
            "{}: manifest declares dim {} but embedding file has dim {file_dim}",
            manifest_path.display(),
            header.dim
        )));
    }

    let mut ref_counts = vec![0usize; rows.len()];
    let mut fetch = |row: usize, what: &str| -> Result<EmbeddingVector> {
        let values = rows
            .get(row)
            .ok_or_else(|| Error::Schema(format!("{what}: row {row} out of range ({} rows)", rows.len())))?;
        ref_counts[row] += 1;
        EmbeddingVector::new(values.clone())
    };

    let mut reward_records = Vec::new();
    let mut preference_pairs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = lineno + 2; // 1-based, after the header
        match header.kind.as_str() {
            "reward" => {
                let rec: RewardLine = serde_json::from_str(&line).map_err(|e| {
                    Error::Format(format!("{}:{n}: bad reward line: {e}", manifest_path.display()))
                })?;
                if !rec.extra.is_empty() {
                    warnings.push(format!(
                        "line {n}: ignoring unknown keys {:?}",
                        rec.extra.keys().collect::<Vec<_>>()
                    ));
                }
                reward_records.push(RewardRecord {
                    prompt_id: rec.prompt_id,
                    completion_id: rec.completion_id,
                    embedding: fetch(rec.row, &format!("line {n}"))?,
                    reward: rec.reward,
                });
            }
            "preference" => {
                let rec: PreferenceLine = serde_json::from_str(&line).map_err(|e| {
                    Error::Format(format!("{}:{n}: bad preference line: {e}", manifest_path.display()))
                })?;
                if !rec.extra.is_empty() {
                    warnings.push(format!(
                        "line {n}: ignoring unknown keys {:?}",
                        rec.extra.keys().collect::<Vec<_>>()
                    ));
                }
                preference_pairs.push(PreferencePair {
                    prompt_id: rec.prompt_id,
                    winner: fetch(rec.winner_row, &format!("line {n}"))?,
                    loser: fetch(rec.loser_row, &format!("line {n}"))?,
                });
            }
            other => {
                return Err(Error::Format(format!(
                    "{}: unknown dataset kind {other:?}",
                    manifest_path.display()
                )))
            }
        }
    }

    for (row, &count) in ref_counts.iter().enumerate() {
        if count == 0 {
            warnings.push(format!("embedding row {row} is never referenced"));
        } else if count > 1 {
            warnings.push(format!("embedding row {row} referenced {count} times"));
        }
    }

    let dataset = Dataset::new(header.dim, header.binary, reward_records, preference_pairs)?;
    warnings.extend(dataset.validation_warnings());
    Ok((dataset, warnings))
}

/// Load a dataset, logging warnings through the `log` facade.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let (dataset, warnings) = load_dataset_verbose(manifest_path)?;
    for w in warnings {
        log::warn!("{}: {w}", manifest_path.display());
    }
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Prompt-level splitting
// ---------------------------------------------------------------------------

/// Split a dataset at prompt granularity.
///
/// Prompts are shuffled with a generator derived from `seed`; the first
/// split receives `floor(fraction * n_prompts)` prompts and the second the
/// rest, so no prompt ever straddles both halves. Entries keep their
/// original relative order within each half.
pub fn split_by_prompt(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let prompts: Vec<String> = dataset.prompt_ids().into_iter().map(String::from).collect();
    if prompts.len() < 2 {
        return Err(Error::Argument(format!(
            "split needs at least 2 distinct prompts, found {}",
            prompts.len()
        )));
    }
    let mut shuffled = prompts.clone();
    use rand::seq::SliceRandom;
    shuffled.shuffle(&mut named_stream(seed, "split-by-prompt"));
    let take = (fraction * prompts.len() as f64).floor() as usize;
    let first: BTreeSet<&String> = shuffled[..take].iter().collect();

    let pick = |keep: bool| -> Result<Dataset> {
        let recs = dataset
            .reward_records
            .iter()
            .filter(|r| first.contains(&r.prompt_id) == keep)
            .cloned()
            .collect();
        let pairs = dataset
            .preference_pairs
            .iter()
            .filter(|p| first.contains(&p.prompt_id) == keep)
            .cloned()
            .collect();
        Dataset::new(dataset.dim, dataset.binary, recs, pairs)
    };
    Ok((pick(true)?, pick(false)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn emb(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn reward_dataset(n_prompts: usize, per_prompt: usize, dim: usize) -> Dataset {
        let mut records = Vec::new();
        for p in 0..n_prompts {
            for c in 0..per_prompt {
                let values: Vec<f32> =
                    (0..dim).map(|i| (p * 100 + c * 10 + i) as f32 * 0.125).collect();
                records.push(RewardRecord {
                    prompt_id: format!("p{p:03}"),
                    completion_id: format!("c{c:03}"),
                    embedding: emb(&values),
                    reward: f64::from((p + c) % 2 == 0),
                });
            }
        }
        Dataset::new(dim, true, records, Vec::new()).unwrap()
    }

    #[test]
    fn roundtrip_reward_dataset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let ds = reward_dataset(3, 1, 8);
        save_dataset(&ds, &path).unwrap();
        let (loaded, warnings) = load_dataset_verbose(&path).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(loaded.dim, 8);
        assert_eq!(loaded.reward_records, ds.reward_records);
        assert_eq!(loaded.prompt_index, ds.prompt_index);
    }

    #[test]
    fn roundtrip_preference_dataset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![
            PreferencePair { prompt_id: "p0".into(), winner: emb(&[1.0, 2.0]), loser: emb(&[3.0, 4.0]) },
            PreferencePair { prompt_id: "p1".into(), winner: emb(&[-1.5, 0.25]), loser: emb(&[0.0, 9.0]) },
        ];
        let ds = Dataset::new(2, false, Vec::new(), pairs).unwrap();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.preference_pairs, ds.preference_pairs);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let ds = Dataset::new(4, false, Vec::new(), Vec::new()).unwrap();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.len(), 0);
        assert_eq!(loaded.dim, 4);
    }

    #[test]
    fn dim_mismatch_is_schema_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&reward_dataset(2, 1, 8), &path).unwrap();
        // Rewrite the header with a lying dim.
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let patched = lines[0].replace("\"dim\":8", "\"dim\":16");
        lines[0] = &patched;
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_dataset(&path) {
            Err(Error::Schema(msg)) => assert!(msg.contains("dim"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_embedding_names_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&reward_dataset(3, 1, 4), &path).unwrap();
        let bin = path.with_extension("bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        // Corrupt row 1, column 0 with a NaN bit pattern.
        let off = 18 + 4 * 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&bin, bytes).unwrap();
        match load_dataset(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_embedding_file_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&reward_dataset(3, 1, 4), &path).unwrap();
        let bin = path.with_extension("bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_keys_warn_but_load() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&reward_dataset(1, 1, 2), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let patched = text.replace("\"reward\":1.0", "\"reward\":1.0,\"note\":\"hi\"");
        std::fs::write(&path, patched).unwrap();
        let (ds, warnings) = load_dataset_verbose(&path).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(warnings.iter().any(|w| w.contains("note")), "{warnings:?}");
    }

    #[test]
    fn binary_reward_out_of_range_warns() {
        let rec = RewardRecord {
            prompt_id: "p".into(),
            completion_id: "c".into(),
            embedding: emb(&[0.0]),
            reward: 0.5,
        };
        let ds = Dataset::new(1, true, vec![rec], Vec::new()).unwrap();
        let warnings = ds.validation_warnings();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("0.5"));
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let ds = reward_dataset(10, 3, 4);
        let (a, b) = split_by_prompt(&ds, 0.5, 7).unwrap();
        let (a2, b2) = split_by_prompt(&ds, 0.5, 7).unwrap();
        assert_eq!(a.reward_records, a2.reward_records);
        assert_eq!(b.reward_records, b2.reward_records);
        assert_eq!(a.prompt_ids().len(), 5);
        assert_eq!(b.prompt_ids().len(), 5);
        let set_a: BTreeSet<_> = a.prompt_ids().into_iter().map(String::from).collect();
        let set_b: BTreeSet<_> = b.prompt_ids().into_iter().map(String::from).collect();
        assert!(set_a.is_disjoint(&set_b));
        assert_eq!(a.len() + b.len(), ds.len());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let ds = reward_dataset(464, 1, 2);
        let (a, b) = split_by_prompt(&ds, 0.2, 3).unwrap();
        assert_eq!(a.prompt_ids().len(), 92); // floor(0.2 * 464)
        assert_eq!(b.prompt_ids().len(), 372);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = reward_dataset(4, 1, 2);
        assert!(matches!(split_by_prompt(&ds, 0.0, 1), Err(Error::Argument(_))));
        assert!(matches!(split_by_prompt(&ds, 1.0, 1), Err(Error::Argument(_))));
    }
}
