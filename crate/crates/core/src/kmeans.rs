//! Lloyd's k-means over loss trajectories.
//!
//! k-means++ seeding from a `ChaCha8Rng`, at most `iters` Lloyd rounds
//! (centroid update followed by reassignment), early exit once assignments
//! stop changing. A cluster that empties is reseeded at the point farthest
//! from its assigned centroid.
//!
//! Distances and sums accumulate in `f64`. Per-row work runs on the current
//! rayon pool; centroid sums are reduced over fixed-size row blocks in block
//! order, so the result does not depend on the number of worker threads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::traj::TrajectoryStore;

/// Rows per block in the centroid reduction. Fixed so the summation order
/// never depends on the thread count.
const REDUCE_BLOCK: usize = 4096;

/// Relative slack allowed when checking that the objective never increases.
const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    None,
    /// Per-column standardisation to zero mean and unit variance.
    Zscore,
}

impl FromStr for Normalize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalize::None),
            "zscore" => Ok(Normalize::Zscore),
            other => Err(Error::argument(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Per-column affine map applied before clustering (`(x - mean) / scale`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ColumnScaling {
    fn fit(store: &TrajectoryStore) -> Self {
        let t = store.width();
        let n = store.len() as f64;
        let mut mean = vec![0.0; t];
        for row in store.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; t];
        for row in store.rows() {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = f64::from(v) - m;
                *s += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        ColumnScaling { mean, scale }
    }
}

/// A fitted clustering: `k` centroids in trajectory space (after the model's
/// normalization) and the cluster index of every training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub normalize: Normalize,
    /// Within-cluster sum of squared Euclidean distances.
    pub objective: f64,
    /// Objective after every assignment pass, first entry after seeding.
    pub objective_history: Vec<f64>,
    pub iters_run: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ColumnScaling>,
}

impl ClusterModel {
    pub fn width(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Sum of squared distances from each row of `store` to the centroid
    /// recorded in `assignments`.
    pub fn recompute_objective(&self, store: &TrajectoryStore) -> Result<f64> {
        let data = self.transform(store)?;
        if self.assignments.len() != store.len() {
            return Err(Error::argument(format!(
                "model has {} assignments but store has {} rows",
                self.assignments.len(),
                store.len()
            )));
        }
        let t = self.width();
        Ok(data
            .chunks_exact(t)
            .zip(&self.assignments)
            .map(|(row, &a)| sq_dist(row, &self.centroids[a]))
            .sum())
    }

    fn transform(&self, store: &TrajectoryStore) -> Result<Vec<f64>> {
        if store.width() != self.width() {
            return Err(Error::argument(format!(
                "store has {} checkpoints but centroids have width {}",
                store.width(),
                self.width()
            )));
        }
        Ok(prepare(store, self.scaling.as_ref()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.centroids.len() != self.k {
            return Err(Error::format(format!(
                "model declares k = {} but has {} centroids",
                self.k,
                self.centroids.len()
            )));
        }
        let t = self.width();
        if t == 0 || self.centroids.iter().any(|c| c.len() != t) {
            return Err(Error::format("centroids have inconsistent width"));
        }
        if self.centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::format("centroid has a non-finite coordinate"));
        }
        if self.assignments.len() != self.ids.len() {
            return Err(Error::format(format!(
                "{} assignments for {} ids",
                self.assignments.len(),
                self.ids.len()
            )));
        }
        if let Some(a) = self.assignments.iter().find(|&&a| a >= self.k) {
            return Err(Error::format(format!("assignment {a} out of range for k = {}", self.k)));
        }
        if self.objective.is_nan() || self.objective < 0.0 {
            return Err(Error::format("objective must be a non-negative number"));
        }
        if let Some(s) = &self.scaling {
            if s.mean.len() != t || s.scale.len() != t {
                return Err(Error::format("scaling width does not match centroids"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path.as_ref())?);
        let model: ClusterModel =
            serde_json::from_reader(reader).map_err(|e| Error::format(format!("cluster model: {e}")))?;
        model.validate()?;
        Ok(model)
    }
}

fn prepare(store: &TrajectoryStore, scaling: Option<&ColumnScaling>) -> Vec<f64> {
    match scaling {
        None => store.losses().iter().map(|&v| f64::from(v)).collect(),
        Some(s) => store
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(s.mean.iter().zip(&s.scale))
                    .map(|(&v, (m, sd))| (f64::from(v) - m) / sd)
            })
            .collect(),
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lowest index on ties, and its squared distance.
#[inline]
fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(data: &[f64], t: usize, centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) {
    labels
        .par_iter_mut()
        .zip(dists.par_iter_mut())
        .zip(data.par_chunks_exact(t))
        .for_each(|((label, dist), row)| {
            let (j, d) = nearest(row, centroids);
            *label = j;
            *dist = d;
        });
}

fn update_means(data: &[f64], t: usize, labels: &[usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let partials: Vec<(Vec<f64>, Vec<usize>)> = data
        .par_chunks(REDUCE_BLOCK * t)
        .zip(labels.par_chunks(REDUCE_BLOCK))
        .map(|(block, block_labels)| {
            let mut sums = vec![0.0; k * t];
            let mut counts = vec![0usize; k];
            for (row, &a) in block.chunks_exact(t).zip(block_labels) {
                counts[a] += 1;
                for (s, v) in sums[a * t..(a + 1) * t].iter_mut().zip(row) {
                    *s += v;
                }
            }
            (sums, counts)
        })
        .collect();
    let mut sums = vec![0.0; k * t];
    let mut counts = vec![0usize; k];
    for (ps, pc) in partials {
        sums.iter_mut().zip(ps).for_each(|(s, p)| *s += p);
        counts.iter_mut().zip(pc).for_each(|(c, p)| *c += p);
    }
    for (j, centroid) in centroids.iter_mut().enumerate() {
        // empty clusters are repaired before every update
        if counts[j] > 0 {
            let inv = counts[j] as f64;
            for (c, s) in centroid.iter_mut().zip(&sums[j * t..(j + 1) * t]) {
                *c = s / inv;
            }
        }
    }
}

/// Reseeds every empty cluster at the point farthest from its current
/// centroid (among points whose cluster would not empty in turn). Returns
/// whether anything changed.
fn repair_empty(data: &[f64], t: usize, centroids: &mut [Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in labels.iter() {
        counts[a] += 1;
    }
    let mut changed = false;
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] > 1 && donor.is_none_or(|d| dists[i] > dists[d]) {
                donor = Some(i);
            }
        }
        // k <= n guarantees a donor while any cluster is empty
        let Some(i) = donor else { break };
        counts[labels[i]] -= 1;
        counts[empty] = 1;
        labels[i] = empty;
        dists[i] = 0.0;
        centroids[empty].copy_from_slice(&data[i * t..(i + 1) * t]);
        changed = true;
    }
    changed
}

/// Sum in fixed blocks so the result does not depend on the thread count.
fn block_sum(values: impl IndexedParallelIterator<Item = f64>) -> f64 {
    let partials: Vec<f64> = values
        .chunks(REDUCE_BLOCK)
        .map(|block| block.into_iter().sum::<f64>())
        .collect();
    partials.into_iter().sum()
}

/// Draws a row with probability proportional to `d2` given its prefix sums.
fn sample_weighted<R: Rng>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let target = rng.random::<f64>() * total;
    let i = cumulative.partition_point(|&c| c <= target);
    // rounding can push the target onto the total; fall back to the last row
    // that carries weight
    if i < cumulative.len() {
        i
    } else {
        cumulative.partition_point(|&c| c < total)
    }
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` candidates
/// drawn by D² sampling, judged by the resulting potential.
fn kmeans_plus_plus<R: Rng>(data: &[f64], t: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = data.len() / t;
    let row = |i: usize| &data[i * t..(i + 1) * t];
    let trials = 2 + (k as f64).ln() as usize;
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.par_chunks_exact(t).map(|r| sq_dist(r, row(chosen[0]))).collect();

    while chosen.len() < k {
        let cumulative: Vec<f64> = d2
            .iter()
            .scan(0.0, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        let next = if cumulative[n - 1] > 0.0 {
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..trials {
                let cand = sample_weighted(&cumulative, rng);
                let c = row(cand);
                let potential = block_sum(
                    d2.par_iter()
                        .zip(data.par_chunks_exact(t))
                        .map(|(&d, r)| d.min(sq_dist(r, c))),
                );
                if best.is_none_or(|(_, p)| potential < p) {
                    best = Some((cand, potential));
                }
            }
            best.expect("at least two trials").0
        } else {
            // every point coincides with a chosen centre
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        let c = row(next);
        d2.par_iter_mut()
            .zip(data.par_chunks_exact(t))
            .for_each(|(d, r)| *d = d.min(sq_dist(r, c)));
    }
    chosen.into_iter().map(|i| row(i).to_vec()).collect()
}

/// Clusters the trajectories of `store` into `k` groups.
pub fn kmeans_fit(
    store: &TrajectoryStore,
    k: usize,
    iters: usize,
    seed: u64,
    normalize: Normalize,
) -> Result<ClusterModel> {
    let n = store.len();
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    if k > n {
        return Err(Error::argument(format!("k = {k} exceeds the {n} examples")));
    }
    if iters == 0 {
        return Err(Error::argument("iterations must be at least 1"));
    }
    let t = store.width();
    let scaling = match normalize {
        Normalize::None => None,
        Normalize::Zscore => Some(ColumnScaling::fit(store)),
    };
    let data = prepare(store, scaling.as_ref());

    let mut rng = seed::rng(seed);
    let mut centroids = kmeans_plus_plus(&data, t, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::with_capacity(iters + 1);

    assign_all(&data, t, &centroids, &mut labels, &mut dists);
    let mut repaired = repair_empty(&data, t, &mut centroids, &mut labels, &mut dists);
    history.push(dists.iter().sum::<f64>());

    let mut next_labels = vec![0usize; n];
    let mut iters_run = 0;
    while iters_run < iters {
        update_means(&data, t, &labels, &mut centroids);
        assign_all(&data, t, &centroids, &mut next_labels, &mut dists);
        repaired = repair_empty(&data, t, &mut centroids, &mut next_labels, &mut dists);
        push_objective(&mut history, dists.iter().sum());
        iters_run += 1;
        let stable = !repaired && next_labels == labels;
        std::mem::swap(&mut labels, &mut next_labels);
        if stable {
            break;
        }
    }

    // A repair in the last pass leaves labels that the centroids may not
    // reproduce; reassign until they do (bounded, repairs are rare).
    let mut settle = 0;
    while repaired && settle < k {
        assign_all(&data, t, &centroids, &mut labels, &mut dists);
        repaired = repair_empty(&data, t, &mut centroids, &mut labels, &mut dists);
        push_objective(&mut history, dists.iter().sum());
        settle += 1;
    }

    let objective = *history.last().expect("at least one assignment pass");
    Ok(ClusterModel {
        k,
        seed,
        normalize,
        objective,
        objective_history: history,
        iters_run,
        centroids,
        assignments: labels,
        ids: store.ids().to_vec(),
        scaling,
    })
}

fn push_objective(history: &mut Vec<f64>, value: f64) {
    if let Some(&prev) = history.last() {
        debug_assert!(
            value <= prev + MONOTONE_SLACK * prev.abs().max(1.0),
            "k-means objective increased from {prev} to {value}"
        );
    }
    history.push(value);
}

/// Nearest-centroid index for every row of `store`, lowest index on ties.
pub fn assign(model: &ClusterModel, store: &TrajectoryStore) -> Result<Vec<usize>> {
    let data = model.transform(store)?;
    let t = model.width();
    let mut labels = vec![0; store.len()];
    let mut dists = vec![0.0; store.len()];
    assign_all(&data, t, &model.centroids, &mut labels, &mut dists);
    Ok(labels)
}
