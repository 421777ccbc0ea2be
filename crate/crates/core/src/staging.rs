//! Stage structure search within one stratum, and fitting a tree for a fixed order.
//!
//! Both searches run on [`StratumCounts`] whose contexts are laid out over the
//! *sorted* predecessor set. A tree for a particular order gets its staging by
//! remapping those contexts, so the learned stages of a variable only depend
//! on which variables precede it.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StratumCounts};
use crate::error::{Error, Result};
use crate::model::{canonical_stage_ids, context_at, StageId, StagedTree, Staging};
use crate::probability::{fit_params, EmptyStage};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum Method {
    /// Backward hill-climbing on BIC from the saturated staging.
    Bhc,
    /// k-means on square-root conditional probabilities.
    Kmeans { k: usize, restarts: usize },
}

impl Method {
    pub const DEFAULT_K: usize = 2;
    pub const DEFAULT_RESTARTS: usize = 10;

    pub fn kmeans_default() -> Self {
        Method::Kmeans {
            k: Self::DEFAULT_K,
            restarts: Self::DEFAULT_RESTARTS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Bhc => "bhc",
            Method::Kmeans { .. } => "kmeans",
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Method::Kmeans { k: 0, .. } => Err(Error::InvalidOption("k must be at least 1".into())),
            Method::Kmeans { restarts: 0, .. } => {
                Err(Error::InvalidOption("restarts must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub method: Method,
    /// Seed for k-means; per-stratum seeds are derived from it.
    pub seed: u64,
    /// Smoothing used when fitting parameters of the final tree.
    pub smoothing: f64,
}

impl SearchOptions {
    pub fn new(method: Method) -> Self {
        SearchOptions {
            method,
            seed: 0,
            smoothing: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StagingResult {
    /// Stage id per context, dense, numbered by first appearance.
    pub stages: Vec<StageId>,
    pub n_stages: usize,
    pub log_likelihood: f64,
    /// Stratum BIC contribution `−2·logL + m·(l−1)·ln N`.
    pub score: f64,
    /// Score after each accepted step (BHC: saturated, then every merge).
    pub trace: Vec<f64>,
}

fn pooled_ll(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (c / n).ln()
        })
        .sum()
}

/// Log-likelihood and BIC contribution of a staging of one stratum.
pub fn stratum_score(counts: &StratumCounts, stages: &[StageId]) -> (f64, f64) {
    let m = stages.iter().max().map_or(0, |&s| s as usize + 1);
    let l = counts.levels;
    let mut pooled = vec![0u64; m * l];
    for (ctx, &s) in stages.iter().enumerate() {
        for (acc, &c) in pooled[s as usize * l..(s as usize + 1) * l]
            .iter_mut()
            .zip(counts.row(ctx))
        {
            *acc += c;
        }
    }
    let ll: f64 = pooled.chunks_exact(l).map(pooled_ll).sum();
    let penalty = (m * (l - 1)) as f64 * (counts.n_total as f64).ln();
    (ll, -2.0 * ll + penalty)
}

fn finish(counts: &StratumCounts, stages: Vec<StageId>, trace: Vec<f64>) -> StagingResult {
    let stages = canonical_stage_ids(&stages);
    let n_stages = stages.iter().max().map_or(0, |&s| s as usize + 1);
    let (log_likelihood, score) = stratum_score(counts, &stages);
    StagingResult {
        stages,
        n_stages,
        log_likelihood,
        score,
        trace,
    }
}

struct BhcStage {
    counts: Vec<u64>,
    ll: f64,
    members: Vec<usize>,
}

/// Backward hill-climbing: start saturated, repeatedly apply the pairwise
/// merge with the largest BIC decrease, stop when no merge decreases BIC.
///
/// Ties go to the lexicographically smallest pair of stages, stages being
/// numbered by their smallest context.
pub fn bhc_stratum(counts: &StratumCounts) -> StagingResult {
    let n_ctx = counts.n_contexts();
    let l = counts.levels;
    let merge_gain = (l - 1) as f64 * (counts.n_total as f64).ln();

    let mut stages: Vec<Option<BhcStage>> = (0..n_ctx)
        .map(|c| {
            let row = counts.row(c).to_vec();
            Some(BhcStage {
                ll: pooled_ll(&row),
                counts: row,
                members: vec![c],
            })
        })
        .collect();

    let delta = |a: &BhcStage, b: &BhcStage| -> f64 {
        let merged: Vec<u64> = a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect();
        -2.0 * (pooled_ll(&merged) - a.ll - b.ll) - merge_gain
    };

    // best[a] = (delta, b) over active b > a, smallest b among ties
    let best_for = |stages: &[Option<BhcStage>], a: usize| -> Option<(f64, usize)> {
        let sa = stages[a].as_ref()?;
        let mut best: Option<(f64, usize)> = None;
        for (b, sb) in stages.iter().enumerate().skip(a + 1) {
            if let Some(sb) = sb {
                let d = delta(sa, sb);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, b));
                }
            }
        }
        best
    };

    let mut best: Vec<Option<(f64, usize)>> = (0..n_ctx).map(|a| best_for(&stages, a)).collect();
    let (_, saturated) = stratum_score(counts, &(0..n_ctx as StageId).collect::<Vec<_>>());
    let mut current = saturated;
    let mut trace = vec![current];

    loop {
        let mut choice: Option<(f64, usize, usize)> = None;
        for (a, entry) in best.iter().enumerate() {
            if let Some((d, b)) = *entry {
                if choice.is_none_or(|(cd, _, _)| d < cd) {
                    choice = Some((d, a, b));
                }
            }
        }
        let Some((d, a, b)) = choice.filter(|&(d, _, _)| d < 0.0) else {
            break;
        };

        let sb = stages[b].take().expect("active stage");
        let sa = stages[a].as_mut().expect("active stage");
        for (x, y) in sa.counts.iter_mut().zip(&sb.counts) {
            *x += y;
        }
        sa.ll = pooled_ll(&sa.counts);
        sa.members.extend(sb.members);
        best[b] = None;
        current += d;
        trace.push(current);

        best[a] = best_for(&stages, a);
        for c in 0..n_ctx {
            if c == a || stages[c].is_none() {
                continue;
            }
            match best[c] {
                Some((_, partner)) if partner == a || partner == b => {
                    best[c] = best_for(&stages, c);
                }
                Some((bd, partner)) if c < a => {
                    let nd = delta(stages[c].as_ref().unwrap(), stages[a].as_ref().unwrap());
                    if nd < bd || (nd == bd && a < partner) {
                        best[c] = Some((nd, a));
                    }
                }
                _ => {}
            }
        }
    }

    let mut assignment = vec![0 as StageId; n_ctx];
    for (id, stage) in stages.iter().flatten().enumerate() {
        for &c in &stage.members {
            assignment[c] = id as StageId;
        }
    }
    finish(counts, assignment, trace)
}

/// Point representing one context: square roots of its conditional
/// probabilities, uniform for unobserved contexts.
fn sqrt_probabilities(counts: &StratumCounts, ctx: usize) -> Vec<f64> {
    let row = counts.row(ctx);
    let n: u64 = row.iter().sum();
    if n == 0 {
        let u = (1.0 / row.len() as f64).sqrt();
        return vec![u; row.len()];
    }
    row.iter().map(|&c| (c as f64 / n as f64).sqrt()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One k-means run: k-means++ seeding then Lloyd iterations.
/// Returns (assignment, within-cluster sum of squares).
fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<usize>, f64) {
    use rand::Rng as _;
    let mut rng = rng_from_seed(seed);
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if target < acc && d > 0.0 {
                pick = i;
                break;
            }
        }
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let nearest = |p: &[f64], centers: &[Vec<f64>]| -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    };

    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..100 {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut sizes = vec![0usize; centers.len()];
        for (p, &a) in points.iter().zip(&assign) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        centers = sums
            .into_iter()
            .zip(&sizes)
            .filter(|(_, &n)| n > 0)
            .map(|(s, &n)| s.into_iter().map(|x| x / n as f64).collect())
            .collect();
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let wcss = points
        .iter()
        .zip(&assign)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum();
    (assign, wcss)
}

/// k-means staging of one stratum, best of `restarts` runs by within-cluster
/// sum of squares. Empty clusters are dropped.
///
/// Points are processed in sorted order, so the resulting partition does not
/// depend on how contexts are numbered.
pub fn kmeans_stratum(
    counts: &StratumCounts,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<StagingResult> {
    Method::Kmeans { k, restarts }.check()?;
    let n_ctx = counts.n_contexts();
    if k >= n_ctx {
        return Ok(finish(counts, (0..n_ctx as StageId).collect(), Vec::new()));
    }
    let raw: Vec<Vec<f64>> = (0..n_ctx).map(|c| sqrt_probabilities(counts, c)).collect();
    let mut sorted: Vec<usize> = (0..n_ctx).collect();
    sorted.sort_by(|&a, &b| {
        raw[a]
            .iter()
            .zip(&raw[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let points: Vec<Vec<f64>> = sorted.iter().map(|&c| raw[c].clone()).collect();

    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts {
        let (assign, wcss) = lloyd(&points, k, derive_seed(seed, &[r as u64]));
        if best.as_ref().is_none_or(|(_, b)| wcss < *b) {
            best = Some((assign, wcss));
        }
    }
    let (assign, wcss) = best.expect("at least one restart");
    let mut stages = vec![0 as StageId; n_ctx];
    for (pos, &c) in sorted.iter().enumerate() {
        stages[c] = assign[pos] as StageId;
    }
    Ok(finish(counts, stages, vec![wcss]))
}

/// Run the configured stratum search for `variable` given predecessor `mask`.
pub fn search_stratum(
    data: &Dataset,
    variable: usize,
    mask: u64,
    options: &SearchOptions,
) -> Result<StagingResult> {
    options.method.check()?;
    let counts = data.stratum_counts(variable, mask)?;
    match options.method {
        Method::Bhc => Ok(bhc_stratum(&counts)),
        Method::Kmeans { k, restarts } => kmeans_stratum(
            &counts,
            k,
            restarts,
            derive_seed(options.seed, &[variable as u64, mask]),
        ),
    }
}

/// Map a staging over sorted-predecessor contexts onto the contexts of a tree
/// whose prefix is `prefix` (data column indices, in tree order).
pub(crate) fn remap_to_order(data: &Dataset, prefix: &[usize], canonical: &[StageId]) -> Vec<StageId> {
    let mut sorted = prefix.to_vec();
    sorted.sort_unstable();
    let sorted_levels: Vec<usize> = sorted.iter().map(|&c| data.vars()[c].n_levels()).collect();
    let mut strides = vec![1usize; sorted.len()];
    for j in (0..sorted.len().saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * sorted_levels[j + 1];
    }
    let stride_of: Vec<usize> = prefix
        .iter()
        .map(|c| strides[sorted.binary_search(c).unwrap()])
        .collect();
    let tree_levels: Vec<usize> = prefix.iter().map(|&c| data.vars()[c].n_levels()).collect();
    let n: usize = tree_levels.iter().product();
    let remapped: Vec<StageId> = (0..n)
        .map(|t| {
            let digits = context_at(&tree_levels, t);
            let idx: usize = digits.0.iter().zip(&stride_of).map(|(d, s)| d * s).sum();
            canonical[idx]
        })
        .collect();
    canonical_stage_ids(&remapped)
}

pub(crate) fn check_order(p: usize, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; p];
    if order.len() != p {
        return Err(Error::InvalidPermutation(format!(
            "expected {p} entries, got {}",
            order.len()
        )));
    }
    for &v in order {
        if v >= p || std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidPermutation(format!("{order:?}")));
        }
    }
    Ok(())
}

pub(crate) fn mask_of(vars: &[usize]) -> u64 {
    vars.iter().fold(0u64, |m, &v| m | 1 << v)
}

/// Assemble and fit a tree for `order` from canonical per-position stagings.
pub(crate) fn assemble_tree(
    data: &Dataset,
    order: &[usize],
    canonical: &[&[StageId]],
    smoothing: f64,
) -> Result<StagedTree> {
    let strata = order
        .iter()
        .enumerate()
        .map(|(i, _)| remap_to_order(data, &order[..i], canonical[i]))
        .collect();
    let vars = order.iter().map(|&c| data.vars()[c].clone()).collect();
    let structure = StagedTree::new(vars, Staging::new(strata))?;
    fit_params(&structure, data, smoothing, EmptyStage::Uniform)
}

/// Learn the staging of every stratum for a fixed order of data columns and
/// fit the parameters. Stages without observations get uniform vectors.
pub fn fit_order(data: &Dataset, order: &[usize], options: &SearchOptions) -> Result<StagedTree> {
    check_order(data.p(), order)?;
    let results = (0..order.len())
        .map(|i| search_stratum(data, order[i], mask_of(&order[..i]), options))
        .collect::<Result<Vec<_>>>()?;
    let canonical: Vec<&[StageId]> = results.iter().map(|r| r.stages.as_slice()).collect();
    assemble_tree(data, order, &canonical, options.smoothing)
}
