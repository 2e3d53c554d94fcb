//! One-shot comparison selectors: random, score-ranked (least confidence,
//! middle perplexity, high learnability) and facility location over a
//! pairwise similarity.
//!
//! Every selector returns `min(B, n)` distinct row indices. Score ties are
//! broken by ascending example id.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;
use crate::traj::{FeatureMatrix, ScoreVector, Stat};

/// Tolerance for the symmetry check on explicit similarity matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Uniform sample of `min(budget, n)` indices without replacement, ascending.
pub fn random_select(n: usize, budget: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut rows = index::sample(&mut rng, n, budget.min(n)).into_vec();
    rows.sort_unstable();
    rows
}

fn expect_stat(scores: &ScoreVector, stat: Stat) -> Result<()> {
    if scores.stat != stat {
        return Err(Error::argument(format!(
            "selector needs {stat:?} scores, got {:?}",
            scores.stat
        )));
    }
    Ok(())
}

/// Row indices sorted by score (ascending or descending), ties by id.
fn ranked(scores: &ScoreVector, descending: bool) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..scores.len()).collect();
    rows.sort_by(|&a, &b| {
        // scores are finite; partial_cmp also ties -0.0 with 0.0
        let by_score = scores.scores[a]
            .partial_cmp(&scores.scores[b])
            .unwrap_or(Ordering::Equal);
        let by_score = if descending { by_score.reverse() } else { by_score };
        by_score.then_with(|| scores.ids[a].cmp(&scores.ids[b])).then(a.cmp(&b))
    });
    rows
}

/// The `budget` least confident examples, most uncertain first.
pub fn least_confidence_select(scores: &ScoreVector, budget: usize) -> Result<Vec<usize>> {
    expect_stat(scores, Stat::Confidence)?;
    let mut rows = ranked(scores, false);
    rows.truncate(budget.min(rows.len()));
    Ok(rows)
}

/// The contiguous perplexity-rank band of length `budget` centred on the
/// median: ranks `[floor((n - B) / 2), floor((n - B) / 2) + B)`.
pub fn middle_perplexity_select(scores: &ScoreVector, budget: usize) -> Result<Vec<usize>> {
    expect_stat(scores, Stat::Perplexity)?;
    let rows = ranked(scores, false);
    let b = budget.min(rows.len());
    let offset = (rows.len() - b) / 2;
    Ok(rows[offset..offset + b].to_vec())
}

/// The `budget` examples whose loss dropped the most.
pub fn high_learnability_select(scores: &ScoreVector, budget: usize) -> Result<Vec<usize>> {
    expect_stat(scores, Stat::Learnability)?;
    let mut rows = ranked(scores, true);
    rows.truncate(budget.min(rows.len()));
    Ok(rows)
}

/// Non-negative pairwise similarity over `len()` elements.
pub trait Similarity: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sim(&self, i: usize, j: usize) -> f64;
}

/// Explicit dense `n x n` similarity: symmetric, finite, non-negative, with
/// each row's maximum on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::argument(format!(
                "similarity buffer holds {} values, expected {n} x {n}",
                values.len()
            )));
        }
        let at = |i: usize, j: usize| values[i * n + j];
        for i in 0..n {
            for j in 0..n {
                let v = at(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::argument(format!(
                        "similarity ({i}, {j}) = {v} must be finite and non-negative"
                    )));
                }
                if (v - at(j, i)).abs() > SYMMETRY_TOL {
                    return Err(Error::argument(format!(
                        "similarity not symmetric at ({i}, {j}): {v} vs {}",
                        at(j, i)
                    )));
                }
                if v > at(i, i) {
                    return Err(Error::argument(format!(
                        "similarity ({i}, {j}) = {v} exceeds the diagonal {}",
                        at(i, i)
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::argument("similarity matrix is not square"));
        }
        Self::new(n, rows.concat())
    }
}

impl Similarity for SimilarityMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn sim(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Cosine similarity of feature rows shifted into `[0, 2]`. Computed on
/// demand, so memory stays `O(n d)`.
#[derive(Debug, Clone)]
pub struct CosineSimilarity {
    dim: usize,
    unit: Vec<f64>,
}

impl CosineSimilarity {
    pub fn new(features: &FeatureMatrix) -> Self {
        let dim = features.dim();
        let mut unit = Vec::with_capacity(features.len() * dim);
        for i in 0..features.len() {
            let row = features.row(i);
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            // all-zero rows stay zero: cosine 0 to everything
            let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            unit.extend(row.iter().map(|&v| f64::from(v) * inv));
        }
        CosineSimilarity { dim, unit }
    }
}

impl Similarity for CosineSimilarity {
    fn len(&self) -> usize {
        self.unit.len() / self.dim
    }

    fn sim(&self, i: usize, j: usize) -> f64 {
        let a = &self.unit[i * self.dim..(i + 1) * self.dim];
        let b = &self.unit[j * self.dim..(j + 1) * self.dim];
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        (1.0 + dot).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilityLocation {
    /// Selected indices in greedy order.
    pub order: Vec<usize>,
    /// Marginal gain of each selection; non-increasing.
    pub gains: Vec<f64>,
    /// `f(S) = sum_i max_{j in S} sim(i, j)` for the final set.
    pub value: f64,
}

#[derive(Debug, PartialEq)]
struct Candidate {
    gain: f64,
    index: Reverse<usize>,
    fresh_at: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn marginal_gain<S: Similarity + ?Sized>(sim: &S, cover: &[f64], j: usize) -> f64 {
    cover
        .iter()
        .enumerate()
        .map(|(i, &c)| (sim.sim(i, j) - c).max(0.0))
        .sum()
}

/// Lazy greedy maximisation of the facility-location function under a
/// cardinality budget. Ties go to the lower index.
pub fn facility_location_select<S: Similarity + ?Sized>(sim: &S, budget: usize) -> FacilityLocation {
    let n = sim.len();
    let b = budget.min(n);
    let mut cover = vec![0.0f64; n];

    let initial: Vec<f64> = (0..n).into_par_iter().map(|j| marginal_gain(sim, &cover, j)).collect();
    let mut heap: BinaryHeap<Candidate> = initial
        .into_iter()
        .enumerate()
        .map(|(j, gain)| Candidate {
            gain,
            index: Reverse(j),
            fresh_at: 0,
        })
        .collect();

    let mut order = Vec::with_capacity(b);
    let mut gains = Vec::with_capacity(b);
    while order.len() < b {
        let mut top = heap.pop().expect("heap holds every unselected element");
        let step = order.len();
        if top.fresh_at == step {
            let j = top.index.0;
            for (i, c) in cover.iter_mut().enumerate() {
                *c = c.max(sim.sim(i, j));
            }
            order.push(j);
            gains.push(top.gain);
        } else {
            top.gain = marginal_gain(sim, &cover, top.index.0);
            top.fresh_at = step;
            heap.push(top);
        }
    }

    FacilityLocation {
        order,
        gains,
        value: cover.iter().sum(),
    }
}
