//! Cluster-balanced sampling over trajectory clusters and the end-to-end
//! selection pipeline.
//!
//! Clusters are visited smallest first (ties by index). With `|S|` examples
//! already chosen, the `k`-th of `K` clusters gets a share
//! `R_k = floor((B - |S|) / (K - k + 1))`: a cluster no larger than its share
//! is taken whole, otherwise `R_k` of its members are drawn uniformly without
//! replacement. Unused share flows on to the larger clusters that follow.
//! An optional top-up pass fills any residual budget uniformly from the
//! examples not yet chosen.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans_fit, Normalize};
use crate::manifest::{config_digest, ManifestEntry, ManifestHeader, Round, SelectionManifest, MANIFEST_VERSION};
use crate::seed;
use crate::traj::{partition_by_source, TrajectoryStore};

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_KMEANS_ITERS: usize = 20;

fn default_k() -> usize {
    DEFAULT_K
}

fn default_iters() -> usize {
    DEFAULT_KMEANS_ITERS
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub budget: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_iters")]
    pub kmeans_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub per_source: bool,
    #[serde(default)]
    pub normalize: Normalize,
    #[serde(default = "default_true")]
    pub topup: bool,
}

impl SelectionConfig {
    pub fn new(budget: usize) -> Self {
        SelectionConfig {
            budget,
            k: DEFAULT_K,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            seed: 0,
            per_source: false,
            normalize: Normalize::None,
            topup: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::argument("budget must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::argument("k must be at least 1"));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::argument("k-means iterations must be at least 1"));
        }
        Ok(())
    }
}

/// One selected row and where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pick {
    pub row: usize,
    pub cluster: usize,
    pub round: Round,
}

/// What the balanced pass did with one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterTake {
    pub cluster: usize,
    pub size: usize,
    pub share: usize,
    pub taken: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedSelection {
    /// Main-round picks in cluster visiting order (rows ascending within a
    /// cluster), followed by top-up picks in ascending row order.
    pub picks: Vec<Pick>,
    /// Per-cluster accounting, in visiting order (ascending size).
    pub takes: Vec<ClusterTake>,
}

impl BalancedSelection {
    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.picks.iter().map(|p| p.row)
    }
}

/// Cluster-balanced selection of up to `budget` rows given each row's
/// cluster index. Deterministic for a given `seed`.
pub fn balanced_select(assignments: &[usize], budget: usize, seed: u64, topup: bool) -> BalancedSelection {
    let n = assignments.len();
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (row, &c) in assignments.iter().enumerate() {
        members[c].push(row);
    }
    let mut order: Vec<usize> = (0..k).filter(|&c| !members[c].is_empty()).collect();
    order.sort_by_key(|&c| (members[c].len(), c));

    let mut rng = seed::rng(seed);
    let mut picks = Vec::with_capacity(budget.min(n));
    let mut takes = Vec::with_capacity(order.len());
    let mut chosen = vec![false; n];
    let remaining_clusters = order.len();

    for (step, &c) in order.iter().enumerate() {
        let share = (budget - picks.len()) / (remaining_clusters - step);
        let rows = &members[c];
        let mut taken: Vec<usize> = if rows.len() <= share {
            rows.clone()
        } else {
            index::sample(&mut rng, rows.len(), share)
                .into_iter()
                .map(|i| rows[i])
                .collect()
        };
        taken.sort_unstable();
        takes.push(ClusterTake {
            cluster: c,
            size: rows.len(),
            share,
            taken: taken.len(),
        });
        for row in taken {
            chosen[row] = true;
            picks.push(Pick {
                row,
                cluster: c,
                round: Round::Main,
            });
        }
    }

    let target = budget.min(n);
    if topup && picks.len() < target {
        let rest: Vec<usize> = (0..n).filter(|&r| !chosen[r]).collect();
        let mut extra: Vec<usize> = index::sample(&mut rng, rest.len(), target - picks.len())
            .into_iter()
            .map(|i| rest[i])
            .collect();
        extra.sort_unstable();
        picks.extend(extra.into_iter().map(|row| Pick {
            row,
            cluster: assignments[row],
            round: Round::Topup,
        }));
    }

    BalancedSelection { picks, takes }
}

/// Splits `budget` across sources in proportion to their sizes.
///
/// Largest-remainder rounding (ties to the earlier source). When the budget
/// covers every source, each source gets at least one example, taken from
/// the currently largest allocation. Allocations never exceed source size;
/// overflow is re-apportioned among the sources with room until nothing
/// changes. The total is `min(budget, sum of sizes)`.
pub fn allocate_budgets(sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = budget.min(total);
    let mut alloc = largest_remainder(sizes, target);

    if target >= sizes.len() {
        for i in 0..alloc.len() {
            if alloc[i] == 0 && sizes[i] > 0 {
                let donor = argmax_first(&alloc);
                alloc[donor] -= 1;
                alloc[i] = 1;
            }
        }
    }

    loop {
        let overflow: usize = alloc
            .iter_mut()
            .zip(sizes)
            .map(|(a, &s)| {
                let over = a.saturating_sub(s);
                *a -= over;
                over
            })
            .sum();
        if overflow == 0 {
            break;
        }
        let room: Vec<usize> = alloc
            .iter()
            .zip(sizes)
            .map(|(&a, &s)| if a < s { s } else { 0 })
            .collect();
        for (a, extra) in alloc.iter_mut().zip(largest_remainder(&room, overflow)) {
            *a += extra;
        }
    }
    alloc
}

fn argmax_first(values: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Hamilton apportionment of `amount` proportional to `weights`, exact in
/// integer arithmetic.
fn largest_remainder(weights: &[usize], amount: usize) -> Vec<usize> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut alloc = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = amount as u128 * w as u128;
        alloc.push((num / total) as usize);
        remainders.push((num % total, i));
    }
    let mut left = amount - alloc.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }
    alloc
}

/// Clusters the trajectories and selects a balanced subset, globally or
/// independently per source.
pub fn s2l_pipeline(store: &TrajectoryStore, config: &SelectionConfig) -> Result<SelectionManifest> {
    config.validate()?;
    let entries = if config.per_source {
        let views = partition_by_source(store);
        let sizes: Vec<usize> = views.iter().map(|v| v.rows.len()).collect();
        let budgets = allocate_budgets(&sizes, config.budget);
        let per_source: Vec<Vec<ManifestEntry>> = views
            .par_iter()
            .zip(budgets.par_iter())
            .map(|(view, &budget)| {
                if budget == 0 {
                    return Ok(Vec::new());
                }
                let sub = store.select_rows(&view.rows)?;
                let source_seed = seed::derive_seed(config.seed, &view.source);
                select_within(&sub, config, budget, source_seed)
            })
            .collect::<Result<_>>()?;
        per_source.into_iter().flatten().collect()
    } else {
        select_within(store, config, config.budget, config.seed)?
    };

    Ok(SelectionManifest {
        header: ManifestHeader {
            tool: "s2l".into(),
            version: MANIFEST_VERSION,
            seed: config.seed,
            budget: config.budget,
            k: Some(config.k),
            config_digest: config_digest(config, &store.digest()),
        },
        entries,
    })
}

fn select_within(
    store: &TrajectoryStore,
    config: &SelectionConfig,
    budget: usize,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    let k = config.k.min(store.len());
    let model = kmeans_fit(store, k, config.kmeans_iters, seed, config.normalize)?;
    let selection = balanced_select(
        &model.assignments,
        budget,
        seed::derive_seed(seed, "sample"),
        config.topup,
    );
    Ok(selection
        .picks
        .iter()
        .map(|p| ManifestEntry {
            id: store.ids()[p.row].clone(),
            source: store.sources()[p.row].clone(),
            cluster: Some(p.cluster),
            round: p.round,
        })
        .collect())
}
