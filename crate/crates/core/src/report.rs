//! Cluster and selection diagnostics, as JSON-serialisable structs with a
//! plain-text rendering.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::ClusterModel;
use crate::manifest::SelectionManifest;
use crate::traj::{partition_by_source, TrajectoryStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Up,
    Down,
    Other,
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeClass::Up => "up",
            ShapeClass::Down => "down",
            ShapeClass::Other => "other",
        })
    }
}

/// Monotone trend of a centroid from the signs of its first differences.
/// Flat stretches are allowed as long as the curve moves at least once.
pub fn classify_shape(centroid: &[f64]) -> ShapeClass {
    let diffs = || centroid.windows(2).map(|w| w[1] - w[0]);
    let any_down = diffs().any(|d| d < 0.0);
    let any_up = diffs().any(|d| d > 0.0);
    match (any_up, any_down) {
        (false, true) => ShapeClass::Down,
        (true, false) => ShapeClass::Up,
        _ => ShapeClass::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeQuantiles {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

fn quantile(sorted: &[usize], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub n: usize,
    pub objective: f64,
    pub sizes: Vec<usize>,
    pub size_quantiles: SizeQuantiles,
    pub shapes: Vec<ShapeClass>,
}

pub fn cluster_report(model: &ClusterModel) -> ClusterReport {
    let sizes = model.cluster_sizes();
    let mut sorted = sizes.clone();
    sorted.sort_unstable();
    ClusterReport {
        k: model.k,
        n: model.assignments.len(),
        objective: model.objective,
        size_quantiles: SizeQuantiles {
            min: quantile(&sorted, 0.0),
            p25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            p75: quantile(&sorted, 0.75),
            max: quantile(&sorted, 1.0),
        },
        shapes: model.centroids.iter().map(|c| classify_shape(c)).collect(),
        sizes,
    }
}

impl ClusterReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let q = &self.size_quantiles;
        let _ = writeln!(
            out,
            "clusters: {}  examples: {}  objective: {:.6}",
            self.k, self.n, self.objective
        );
        let _ = writeln!(
            out,
            "size quantiles: min {} | p25 {} | median {} | p75 {} | max {}",
            q.min, q.p25, q.median, q.p75, q.max
        );
        let _ = writeln!(out, "{:>8} {:>10} {:>6}", "cluster", "size", "shape");
        for (c, (size, shape)) in self.sizes.iter().zip(&self.shapes).enumerate() {
            let _ = writeln!(out, "{c:>8} {size:>10} {:>6}", shape.to_string());
        }
        out
    }
}

/// Shannon entropy (nats) of a count histogram, with `0 log 0 = 0`.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub key: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub total: usize,
    pub sources: Vec<Share>,
    /// Indexed by cluster.
    pub clusters: Vec<Share>,
    pub source_entropy: f64,
    pub cluster_entropy: f64,
}

fn shares(keys: impl Iterator<Item = String>, counts: &[usize], total: usize) -> Vec<Share> {
    keys.zip(counts)
        .map(|(key, &count)| Share {
            key,
            count,
            fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        })
        .collect()
}

fn distribution(
    rows: &[usize],
    store: &TrajectoryStore,
    model: &ClusterModel,
    source_names: &[String],
) -> Distribution {
    let slot: HashMap<&str, usize> = source_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut source_counts = vec![0; source_names.len()];
    let mut cluster_counts = vec![0; model.k];
    for &r in rows {
        source_counts[slot[store.sources()[r].as_str()]] += 1;
        cluster_counts[model.assignments[r]] += 1;
    }
    let total = rows.len();
    Distribution {
        total,
        sources: shares(source_names.iter().cloned(), &source_counts, total),
        clusters: shares((0..model.k).map(|c| c.to_string()), &cluster_counts, total),
        source_entropy: entropy(&source_counts),
        cluster_entropy: entropy(&cluster_counts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub tool: String,
    pub full: Distribution,
    pub selected: Distribution,
    /// Selected minus full cluster entropy.
    pub cluster_entropy_delta: f64,
    /// Non-empty clusters with no selected example.
    pub uncovered_clusters: Vec<usize>,
}

/// Compares the source and cluster make-up of a selection with the full
/// dataset. `model` must have been fitted on `store` (same ids, same order).
pub fn selection_report(
    manifest: &SelectionManifest,
    store: &TrajectoryStore,
    model: &ClusterModel,
) -> Result<SelectionReport> {
    if model.ids != store.ids() {
        return Err(Error::Integrity(
            "cluster model was not fitted on this trajectory store".into(),
        ));
    }
    let index: HashMap<&str, usize> = store.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(manifest.len());
    for id in manifest.ids() {
        let row = index
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("manifest id `{id}` not in store")))?;
        rows.push(*row);
    }

    let source_names: Vec<String> = partition_by_source(store).into_iter().map(|v| v.source).collect();
    let all: Vec<usize> = (0..store.len()).collect();
    let full = distribution(&all, store, model, &source_names);
    let selected = distribution(&rows, store, model, &source_names);
    let uncovered_clusters = full
        .clusters
        .iter()
        .zip(&selected.clusters)
        .enumerate()
        .filter(|(_, (f, s))| f.count > 0 && s.count == 0)
        .map(|(c, _)| c)
        .collect();
    Ok(SelectionReport {
        tool: manifest.header.tool.clone(),
        cluster_entropy_delta: selected.cluster_entropy - full.cluster_entropy,
        full,
        selected,
        uncovered_clusters,
    })
}

impl SelectionReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "selection by {}: {} of {} examples",
            self.tool, self.selected.total, self.full.total
        );
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>8} {:>10} {:>8}",
            "source", "full", "frac", "selected", "frac"
        );
        for (f, s) in self.full.sources.iter().zip(&self.selected.sources) {
            let _ = writeln!(
                out,
                "{:<24} {:>10} {:>8.4} {:>10} {:>8.4}",
                f.key, f.count, f.fraction, s.count, s.fraction
            );
        }
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>8} {:>10} {:>8}",
            "cluster", "full", "frac", "selected", "frac"
        );
        for (f, s) in self.full.clusters.iter().zip(&self.selected.clusters) {
            let _ = writeln!(
                out,
                "{:<24} {:>10} {:>8.4} {:>10} {:>8.4}",
                f.key, f.count, f.fraction, s.count, s.fraction
            );
        }
        let _ = writeln!(
            out,
            "cluster entropy: full {:.6}  selected {:.6}  delta {:+.6}",
            self.full.cluster_entropy, self.selected.cluster_entropy, self.cluster_entropy_delta
        );
        if self.uncovered_clusters.is_empty() {
            let _ = writeln!(out, "every non-empty cluster is covered");
        } else {
            let _ = writeln!(out, "uncovered clusters: {:?}", self.uncovered_clusters);
        }
        out
    }
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Adjusted Rand Index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::argument(format!(
            "labelings have {} and {} items",
            a.len(),
            b.len()
        )));
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial (all singletons or one block)
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
