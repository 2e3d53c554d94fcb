//! Loss trajectories: the in-memory store, its on-disk formats, checkpoint
//! subsampling and the scalar statistics the baseline selectors rank by.
//!
//! A trajectory entry is the mean per-token negative log-likelihood (nats)
//! of one example at one reference-model checkpoint, stored as `f32`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TRAJ_MAGIC: &[u8; 4] = b"S2LT";
pub const FEATURE_MAGIC: &[u8; 4] = b"S2LF";
pub const FORMAT_VERSION: u32 = 1;

/// Spacing between recorded checkpoints when a JSONL file carries no header.
pub const DEFAULT_STEP_INTERVAL: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajFormat {
    Jsonl,
    Binary,
}

impl TrajFormat {
    /// Infers the format from a file extension: `.jsonl`/`.json` or `.bin`.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(TrajFormat::Jsonl),
            "bin" => Some(TrajFormat::Binary),
            _ => None,
        }
    }
}

impl FromStr for TrajFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(TrajFormat::Jsonl),
            "binary" | "bin" => Ok(TrajFormat::Binary),
            other => Err(Error::argument(format!("unknown trajectory format `{other}`"))),
        }
    }
}

impl fmt::Display for TrajFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajFormat::Jsonl => f.write_str("jsonl"),
            TrajFormat::Binary => f.write_str("binary"),
        }
    }
}

/// `n` examples by `T` checkpoints of loss values, row-major.
///
/// Immutable once constructed; every constructor validates the invariants
/// (unique ids, `n, T >= 1`, finite non-negative losses, strictly
/// increasing checkpoint steps).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStore {
    ids: Vec<String>,
    sources: Vec<String>,
    losses: Vec<f32>,
    checkpoint_steps: Vec<u64>,
}

impl TrajectoryStore {
    pub fn new(
        ids: Vec<String>,
        sources: Vec<String>,
        rows: Vec<Vec<f32>>,
        checkpoint_steps: Vec<u64>,
    ) -> Result<Self> {
        let width = checkpoint_steps.len();
        let mut losses = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                let id = ids.get(i).map(String::as_str).unwrap_or("?");
                return Err(Error::format(format!(
                    "row `{id}` has {} losses, expected {width}",
                    row.len()
                )));
            }
            losses.extend_from_slice(row);
        }
        Self::from_flat(ids, sources, losses, checkpoint_steps)
    }

    /// Builds a store from a row-major loss buffer of length `n * T`.
    pub fn from_flat(
        ids: Vec<String>,
        sources: Vec<String>,
        losses: Vec<f32>,
        checkpoint_steps: Vec<u64>,
    ) -> Result<Self> {
        let n = ids.len();
        let width = checkpoint_steps.len();
        if n == 0 {
            return Err(Error::format("trajectory store has no examples"));
        }
        if width == 0 {
            return Err(Error::format("trajectories have no checkpoints"));
        }
        if sources.len() != n {
            return Err(Error::format(format!("{} source tags for {n} examples", sources.len())));
        }
        if losses.len() != n * width {
            return Err(Error::format(format!(
                "loss buffer holds {} values, expected {n} x {width}",
                losses.len()
            )));
        }
        if let Some(w) = checkpoint_steps.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::format(format!(
                "checkpoint steps not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::format(format!("duplicate example id `{id}`")));
            }
        }
        for (i, row) in losses.chunks_exact(width).enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::format(format!(
                    "row `{}` has invalid loss {v} (losses must be finite and >= 0)",
                    ids[i]
                )));
            }
        }
        Ok(TrajectoryStore {
            ids,
            sources,
            losses,
            checkpoint_steps,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Always false: a valid store has at least one example.
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of checkpoints `T`.
    pub fn width(&self) -> usize {
        self.checkpoint_steps.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn checkpoint_steps(&self) -> &[u64] {
        &self.checkpoint_steps
    }

    /// Row-major `n * T` loss buffer.
    pub fn losses(&self) -> &[f32] {
        &self.losses
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let t = self.width();
        &self.losses[i * t..(i + 1) * t]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.losses.chunks_exact(self.width())
    }

    /// New store holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<TrajectoryStore> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut sources = Vec::with_capacity(rows.len());
        let mut losses = Vec::with_capacity(rows.len() * self.width());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::argument(format!(
                    "row index {r} out of range for {} examples",
                    self.len()
                )));
            }
            ids.push(self.ids[r].clone());
            sources.push(self.sources[r].clone());
            losses.extend_from_slice(self.row(r));
        }
        TrajectoryStore::from_flat(ids, sources, losses, self.checkpoint_steps.clone())
    }

    /// SHA-256 over ids, sources, steps and loss bit patterns. Independent of
    /// the file format the store was read from.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.width() as u64).to_le_bytes());
        for step in &self.checkpoint_steps {
            hasher.update(step.to_le_bytes());
        }
        for i in 0..self.len() {
            hash_str(&mut hasher, &self.ids[i]);
            hash_str(&mut hasher, &self.sources[i]);
            for v in self.row(i) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

fn hash_str(hasher: &mut Sha256, s: &str) {
    hasher.update((s.len() as u64).to_le_bytes());
    hasher.update(s.as_bytes());
}

/// Checkpoint steps used when a JSONL file has no header: `500 * (j + 1)`.
pub fn default_checkpoint_steps(width: usize) -> Vec<u64> {
    (1..=width as u64).map(|j| j * DEFAULT_STEP_INTERVAL).collect()
}

pub fn load_trajectories(path: impl AsRef<Path>, format: TrajFormat) -> Result<TrajectoryStore> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    match format {
        TrajFormat::Jsonl => read_jsonl(reader),
        TrajFormat::Binary => read_binary(reader),
    }
}

pub fn write_trajectories(store: &TrajectoryStore, path: impl AsRef<Path>, format: TrajFormat) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    match format {
        TrajFormat::Jsonl => write_jsonl(store, &mut writer)?,
        TrajFormat::Binary => write_binary(store, &mut writer)?,
    }
    writer.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct JsonlRow {
    id: String,
    source: String,
    losses: Vec<f64>,
}

#[derive(Serialize)]
struct JsonlRowOut<'a> {
    id: &'a str,
    source: &'a str,
    losses: &'a [f32],
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    checkpoint_steps: Vec<u64>,
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<TrajectoryStore> {
    let mut header: Option<Vec<u64>> = None;
    let mut ids = Vec::new();
    let mut sources = Vec::new();
    let mut losses = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        if first {
            first = false;
            if value.get("id").is_none() && value.get("checkpoint_steps").is_some() {
                let h: JsonlHeader = serde_json::from_value(value)
                    .map_err(|e| Error::format(format!("line {}: bad header: {e}", lineno + 1)))?;
                header = Some(h.checkpoint_steps);
                continue;
            }
        }
        let row: JsonlRow =
            serde_json::from_value(value).map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        let expected = *width.get_or_insert(row.losses.len());
        if row.losses.len() != expected {
            return Err(Error::format(format!(
                "row `{}` has {} losses, expected {expected}",
                row.id,
                row.losses.len()
            )));
        }
        for &v in &row.losses {
            let narrowed = v as f32;
            if !narrowed.is_finite() || narrowed < 0.0 {
                return Err(Error::format(format!(
                    "row `{}` has invalid loss {v} (losses must be finite and >= 0)",
                    row.id
                )));
            }
            losses.push(narrowed);
        }
        ids.push(row.id);
        sources.push(row.source);
    }

    let width = width.ok_or_else(|| Error::format("trajectory file has no rows"))?;
    let steps = match header {
        Some(steps) if steps.len() != width => {
            return Err(Error::format(format!(
                "header lists {} checkpoint steps but rows have {width} losses",
                steps.len()
            )))
        }
        Some(steps) => steps,
        None => default_checkpoint_steps(width),
    };
    TrajectoryStore::from_flat(ids, sources, losses, steps)
}

pub fn write_jsonl<W: Write>(store: &TrajectoryStore, writer: &mut W) -> Result<()> {
    let header = JsonlHeader {
        checkpoint_steps: store.checkpoint_steps().to_vec(),
    };
    serde_json::to_writer(&mut *writer, &header)?;
    writer.write_all(b"\n")?;
    for i in 0..store.len() {
        let row = JsonlRowOut {
            id: &store.ids[i],
            source: &store.sources[i],
            losses: store.row(i),
        };
        serde_json::to_writer(&mut *writer, &row)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<TrajectoryStore> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut reader, &mut magic, "magic")?;
    if &magic != TRAJ_MAGIC {
        return Err(Error::format("not a trajectory file (bad magic)"));
    }
    check_version(read_u32(&mut reader)?)?;
    let n = read_u64(&mut reader)?;
    let width = read_u32(&mut reader)? as usize;
    if n == 0 {
        return Err(Error::format("trajectory store has no examples"));
    }
    let n = usize::try_from(n).map_err(|_| Error::format("example count overflows"))?;

    let mut steps = Vec::with_capacity(width);
    for _ in 0..width {
        steps.push(read_u64(&mut reader)?);
    }
    let mut ids = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n.saturating_mul(width).min(1 << 28));
    let mut buf = vec![0u8; width * 4];
    for _ in 0..n {
        ids.push(read_str(&mut reader)?);
        sources.push(read_str(&mut reader)?);
        read_exact_or(&mut reader, &mut buf, "loss row")?;
        losses.extend(
            buf.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
    }
    expect_eof(&mut reader)?;
    TrajectoryStore::from_flat(ids, sources, losses, steps)
}

pub fn write_binary<W: Write>(store: &TrajectoryStore, writer: &mut W) -> Result<()> {
    writer.write_all(TRAJ_MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&(store.len() as u64).to_le_bytes())?;
    writer.write_all(&width_u32(store.width())?.to_le_bytes())?;
    for step in store.checkpoint_steps() {
        writer.write_all(&step.to_le_bytes())?;
    }
    for i in 0..store.len() {
        write_str(writer, &store.ids[i])?;
        write_str(writer, &store.sources[i])?;
        for v in store.row(i) {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn width_u32(width: usize) -> Result<u32> {
    u32::try_from(width).map_err(|_| Error::argument(format!("width {width} exceeds u32")))
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported format version {version}")));
    }
    Ok(())
}

fn read_exact_or<R: Read>(reader: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(format!("truncated file while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

fn read_u16<R: Read>(reader: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact_or(reader, &mut b, "length prefix")?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(reader, &mut b, "header")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(reader: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or(reader, &mut b, "header")?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(reader: &mut R) -> Result<String> {
    let len = read_u16(reader)? as usize;
    let mut buf = vec![0u8; len];
    read_exact_or(reader, &mut buf, "string")?;
    String::from_utf8(buf).map_err(|_| Error::format("string is not valid UTF-8"))
}

fn write_str<W: Write>(writer: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::argument(format!("string of {} bytes exceeds u16 length", s.len())))?;
    writer.write_all(&len.to_le_bytes())?;
    writer.write_all(s.as_bytes())?;
    Ok(())
}

fn expect_eof<R: Read>(reader: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match reader.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::format("trailing bytes after last row")),
    }
}

/// Keeps the checkpoint columns listed in `keep` (strictly increasing, all `< T`).
pub fn subsample_checkpoints(store: &TrajectoryStore, keep: &[usize]) -> Result<TrajectoryStore> {
    if keep.is_empty() {
        return Err(Error::argument("no checkpoint indices to keep"));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= store.width()) {
        return Err(Error::argument(format!(
            "checkpoint index {bad} out of range for T = {}",
            store.width()
        )));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("checkpoint indices must be strictly increasing"));
    }
    let losses = store.rows().flat_map(|row| keep.iter().map(move |&k| row[k])).collect();
    let steps = keep.iter().map(|&k| store.checkpoint_steps[k]).collect();
    TrajectoryStore::from_flat(store.ids.clone(), store.sources.clone(), losses, steps)
}

/// Evenly spaced checkpoint indices `floor(j * width / len)` for `j < len`.
/// Used for the trajectory-length and sparse-vs-dense ablations.
pub fn uniform_indices(width: usize, len: usize) -> Result<Vec<usize>> {
    if len == 0 || len > width {
        return Err(Error::argument(format!(
            "cannot take {len} evenly spaced checkpoints out of {width}"
        )));
    }
    Ok((0..len).map(|j| j * width / len).collect())
}

/// `len` consecutive checkpoint indices starting at `start`.
pub fn dense_window(width: usize, start: usize, len: usize) -> Result<Vec<usize>> {
    if len == 0 || start + len > width {
        return Err(Error::argument(format!(
            "window [{start}, {}) does not fit in {width} checkpoints",
            start + len
        )));
    }
    Ok((start..start + len).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    FinalLoss,
    EarlyLoss,
    Learnability,
    Perplexity,
    Confidence,
}

impl FromStr for Stat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_loss" => Ok(Stat::FinalLoss),
            "early_loss" => Ok(Stat::EarlyLoss),
            "learnability" => Ok(Stat::Learnability),
            "perplexity" => Ok(Stat::Perplexity),
            "confidence" => Ok(Stat::Confidence),
            other => Err(Error::argument(format!("unknown statistic `{other}`"))),
        }
    }
}

/// One scalar per example, parallel to the store's ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub stat: Stat,
}

impl ScoreVector {
    pub fn new(ids: Vec<String>, scores: Vec<f64>, stat: Stat) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(Error::argument(format!(
                "{} ids for {} scores",
                ids.len(),
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::argument(format!("score for `{}` is not finite", ids[i])));
        }
        Ok(ScoreVector { ids, scores, stat })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Per-example statistic read off the trajectory.
///
/// * `learnability = loss[early] - loss[late]`
/// * `perplexity = exp(loss[late])`
/// * `confidence = exp(-loss[late])`
/// * `final_loss` / `early_loss` use the last / first column.
pub fn derive_scalar(
    store: &TrajectoryStore,
    stat: Stat,
    early_index: usize,
    late_index: usize,
) -> Result<ScoreVector> {
    let width = store.width();
    for (name, idx) in [("early", early_index), ("late", late_index)] {
        if idx >= width {
            return Err(Error::argument(format!(
                "{name} checkpoint index {idx} out of range for T = {width}"
            )));
        }
    }
    let scores = store
        .rows()
        .map(|row| {
            let late = f64::from(row[late_index]);
            match stat {
                Stat::FinalLoss => f64::from(row[width - 1]),
                Stat::EarlyLoss => f64::from(row[0]),
                Stat::Learnability => f64::from(row[early_index]) - late,
                Stat::Perplexity => late.exp(),
                Stat::Confidence => (-late).exp(),
            }
        })
        .collect();
    ScoreVector::new(store.ids.clone(), scores, stat)
}

/// Rows belonging to one source tag, in store order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceView {
    pub source: String,
    pub rows: Vec<usize>,
}

/// Splits row indices by source tag; sources appear in first-appearance order.
pub fn partition_by_source(store: &TrajectoryStore) -> Vec<SourceView> {
    let mut views: Vec<SourceView> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for (i, source) in store.sources.iter().enumerate() {
        let idx = *slot.entry(source.as_str()).or_insert_with(|| {
            views.push(SourceView {
                source: source.clone(),
                rows: Vec::new(),
            });
            views.len() - 1
        });
        views[idx].rows.push(i);
    }
    views
}

/// Dense `n x d` feature vectors (e.g. model hidden states) keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    features: Vec<f32>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn from_flat(ids: Vec<String>, features: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::format("feature dimension must be at least 1"));
        }
        if ids.is_empty() {
            return Err(Error::format("feature matrix has no rows"));
        }
        if features.len() != ids.len() * dim {
            return Err(Error::format(format!(
                "feature buffer holds {} values, expected {} x {dim}",
                features.len(),
                ids.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(format!(
                "feature row `{}` has a non-finite value",
                ids[pos / dim]
            )));
        }
        Ok(FeatureMatrix { ids, features, dim })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.dim as u64).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            hash_str(&mut hasher, id);
            for v in self.row(i) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    read_features(BufReader::new(File::open(path.as_ref())?))
}

pub fn write_features(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    write_features_to(features, &mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(mut reader: R) -> Result<FeatureMatrix> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut reader, &mut magic, "magic")?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::format("not a feature file (bad magic)"));
    }
    check_version(read_u32(&mut reader)?)?;
    let n = usize::try_from(read_u64(&mut reader)?).map_err(|_| Error::format("row count overflows"))?;
    let dim = read_u32(&mut reader)? as usize;
    let mut ids = Vec::with_capacity(n.min(1 << 24));
    let mut features = Vec::with_capacity(n.saturating_mul(dim).min(1 << 28));
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..n {
        ids.push(read_str(&mut reader)?);
        read_exact_or(&mut reader, &mut buf, "feature row")?;
        features.extend(
            buf.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
    }
    expect_eof(&mut reader)?;
    FeatureMatrix::from_flat(ids, features, dim)
}

pub fn write_features_to<W: Write>(features: &FeatureMatrix, writer: &mut W) -> Result<()> {
    writer.write_all(FEATURE_MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&(features.len() as u64).to_le_bytes())?;
    writer.write_all(&width_u32(features.dim)?.to_le_bytes())?;
    for i in 0..features.len() {
        write_str(writer, &features.ids[i])?;
        for v in features.row(i) {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
