//! Random staged trees, uniformly random DAGs, and column shuffling.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::model::{canonical_stage_ids, StageId, StagedTree, Staging, VariableMeta};
use crate::rng::{rng_from_seed, Rng};

/// Lower clamp applied to generated probabilities.
pub const MIN_PROB: f64 = 1e-12;

/// Largest `p` for which [`random_dag_uniform`] is exactly uniform.
pub const EXACT_UNIFORM_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Number of variables.
    pub p: usize,
    /// Levels per variable.
    pub levels: usize,
    /// Stages per stratum (capped by the number of contexts).
    pub stages: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(p: usize, levels: usize, stages: usize, seed: u64) -> Result<Self> {
        let cfg = GenConfig {
            p,
            levels,
            stages,
            seed,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.p == 0 || self.levels < 2 || self.stages == 0 {
            return Err(Error::InvalidOption(format!(
                "need p ≥ 1, levels ≥ 2, stages ≥ 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Variables `X1..Xp` with levels labelled `0..levels`.
pub fn default_vars(p: usize, levels: usize) -> Vec<VariableMeta> {
    (1..=p)
        .map(|i| VariableMeta::with_levels(format!("X{i}"), levels).expect("levels ≥ 2"))
        .collect()
}

/// Dirichlet(1, …, 1) draw, clamped away from zero and renormalized.
pub fn dirichlet_uniform(rng: &mut Rng, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = raw.iter().sum();
    let clamped: Vec<f64> = raw.iter().map(|x| (x / sum).max(MIN_PROB)).collect();
    let sum: f64 = clamped.iter().sum();
    clamped.into_iter().map(|x| x / sum).collect()
}

/// Uniformly random surjection from `n` contexts onto `m` stages, by rejection.
pub fn random_surjective_staging(rng: &mut Rng, n: usize, m: usize) -> Vec<StageId> {
    assert!(m >= 1 && m <= n);
    loop {
        let ids: Vec<StageId> = (0..n).map(|_| rng.random_range(0..m) as StageId).collect();
        let mut used = vec![false; m];
        for &s in &ids {
            used[s as usize] = true;
        }
        if used.iter().all(|&u| u) {
            return canonical_stage_ids(&ids);
        }
    }
}

/// Random parameters for an existing structure: Dirichlet(1) per stage.
pub fn random_params(structure: &StagedTree, rng: &mut Rng) -> Result<StagedTree> {
    let params = (0..structure.p())
        .map(|d| {
            let l = structure.vars()[d].n_levels();
            (0..structure.n_stages(d))
                .map(|_| dirichlet_uniform(rng, l))
                .collect()
        })
        .collect();
    structure.without_params().with_params(params, true)
}

/// Random staged tree in order `X1..Xp`: each stratum has exactly
/// `min(stages, #contexts)` stages drawn uniformly among surjective maps,
/// and Dirichlet(1) stage vectors.
pub fn random_staged_tree(cfg: &GenConfig) -> Result<StagedTree> {
    cfg.check()?;
    let mut rng = rng_from_seed(cfg.seed);
    let vars = default_vars(cfg.p, cfg.levels);
    let strata = (0..cfg.p)
        .map(|i| {
            let n = cfg.levels.pow(i as u32);
            random_surjective_staging(&mut rng, n, cfg.stages.min(n))
        })
        .collect();
    let structure = StagedTree::new(vars, Staging::new(strata))?;
    random_params(&structure, &mut rng)
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `counts[n][k]`: labelled DAGs on `n` nodes with exactly `k` parentless nodes.
fn source_counts(p: usize) -> Vec<Vec<u128>> {
    let mut a = vec![vec![0u128; p + 1]; p + 1];
    a[0][0] = 1;
    for n in 1..=p {
        for k in 1..=n {
            if k == n {
                a[n][k] = 1;
                continue;
            }
            let rest = n - k;
            let sum: u128 = (1..=rest)
                .map(|s| {
                    let nonempty = ((1u128 << k) - 1).pow(s as u32);
                    nonempty * (1u128 << (k * (rest - s))) * a[rest][s]
                })
                .sum();
            a[n][k] = binomial(n, k) * sum;
        }
    }
    a
}

/// Number of labelled DAGs on `p` nodes (`p ≤ EXACT_UNIFORM_LIMIT`).
pub fn count_dags(p: usize) -> u128 {
    assert!(p <= EXACT_UNIFORM_LIMIT);
    source_counts(p)[p].iter().sum()
}

pub fn is_exactly_uniform(p: usize) -> bool {
    p <= EXACT_UNIFORM_LIMIT
}

fn weighted_pick(rng: &mut Rng, weights: &[u128]) -> usize {
    let total: u128 = weights.iter().sum();
    let mut target = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    unreachable!("target below total weight")
}

/// Random DAG on `p` nodes named `X1..Xp`.
///
/// For `p ≤ EXACT_UNIFORM_LIMIT` the draw is exactly uniform over labelled
/// DAGs: layer sizes are drawn from source-count recurrences, each node gets
/// a nonempty parent subset from the previous layer and an arbitrary subset
/// of earlier layers, and labels are assigned by a uniform permutation.
/// Larger `p` falls back to including each forward edge of a random order
/// with probability ½, which is not uniform.
pub fn random_dag_uniform(p: usize, seed: u64) -> Dag {
    let mut rng = rng_from_seed(seed);
    if p == 0 {
        return Dag::empty(0);
    }
    let mut labels: Vec<usize> = (0..p).collect();
    if !is_exactly_uniform(p) {
        labels.shuffle(&mut rng);
        let mut edges = Vec::new();
        for i in 0..p {
            for j in i + 1..p {
                if rng.random::<bool>() {
                    edges.push((labels[i], labels[j]));
                }
            }
        }
        return Dag::new(p, edges).expect("forward edges are acyclic");
    }

    let counts = source_counts(p);
    let mut layers: Vec<usize> = Vec::new();
    let mut remaining = p;
    let first: Vec<u128> = (1..=p).map(|k| counts[p][k]).collect();
    let mut k = weighted_pick(&mut rng, &first) + 1;
    layers.push(k);
    remaining -= k;
    while remaining > 0 {
        let weights: Vec<u128> = (1..=remaining)
            .map(|s| {
                ((1u128 << k) - 1).pow(s as u32)
                    * (1u128 << (k * (remaining - s)))
                    * counts[remaining][s]
            })
            .collect();
        let s = weighted_pick(&mut rng, &weights) + 1;
        layers.push(s);
        remaining -= s;
        k = s;
    }

    // nodes numbered layer by layer before relabelling
    let mut starts = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for &size in &layers {
        starts.push(acc);
        acc += size;
    }
    let mut edges = Vec::new();
    for t in 1..layers.len() {
        let prev = starts[t - 1]..starts[t - 1] + layers[t - 1];
        let earlier = 0..starts[t - 1];
        for node in starts[t]..starts[t] + layers[t] {
            let width = layers[t - 1];
            let subset = rng.random_range(1..(1u64 << width));
            for (b, parent) in prev.clone().enumerate() {
                if subset >> b & 1 == 1 {
                    edges.push((parent, node));
                }
            }
            for parent in earlier.clone() {
                if rng.random::<bool>() {
                    edges.push((parent, node));
                }
            }
        }
    }
    labels.shuffle(&mut rng);
    Dag::new(p, edges.into_iter().map(|(a, b)| (labels[a], labels[b]))).expect("layered graph")
}

/// Every labelled DAG on `p` nodes, by brute force over pair orientations.
pub fn enumerate_dags(p: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|a| (a + 1..p).map(move |b| (a, b)))
        .collect();
    let total = 3usize.pow(pairs.len() as u32);
    (0..total)
        .filter_map(|mut code| {
            let mut edges = Vec::new();
            for &(a, b) in &pairs {
                match code % 3 {
                    1 => edges.push((a, b)),
                    2 => edges.push((b, a)),
                    _ => {}
                }
                code /= 3;
            }
            Dag::new(p, edges).ok()
        })
        .collect()
}

/// Randomly permute the columns of `data`.
///
/// Returns the shuffled data and `perm` with `perm[new] = old`, so shuffled
/// column `new` is original (true causal) position `perm[new]`.
pub fn shuffle_variables(data: &Dataset, seed: u64) -> (Dataset, Vec<usize>) {
    let mut perm: Vec<usize> = (0..data.p()).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    (data.select_columns(&perm), perm)
}

/// Inverse permutation.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &v) in perm.iter().enumerate() {
        inv[v] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_tree;

    #[test]
    fn dag_counts_match_enumeration() {
        for (p, expected) in [(1, 1), (2, 3), (3, 25), (4, 543)] {
            assert_eq!(enumerate_dags(p).len(), expected);
            assert_eq!(count_dags(p), expected as u128);
        }
        assert_eq!(count_dags(5), 29281);
        assert_eq!(count_dags(6), 3781503);
    }

    #[test]
    fn single_node_dag() {
        assert_eq!(random_dag_uniform(1, 5), Dag::empty(1));
        assert_eq!(random_dag_uniform(4, 5), random_dag_uniform(4, 5));
        let big = random_dag_uniform(15, 2);
        assert_eq!(big.p(), 15);
    }

    #[test]
    fn generated_trees_are_valid() {
        for seed in 0..20 {
            let t = random_staged_tree(&GenConfig::new(4, 3, 2, seed).unwrap()).unwrap();
            assert!(validate_tree(&t).is_valid());
            assert!(t.is_interior());
            assert_eq!(t.n_stages(0), 1);
            assert_eq!(t.n_stages(1), 2);
            assert_eq!(t.n_stages(3), 2);
        }
    }

    #[test]
    fn extreme_stage_counts() {
        let ind = random_staged_tree(&GenConfig::new(3, 2, 1, 3).unwrap()).unwrap();
        assert!((0..3).all(|d| ind.n_stages(d) == 1));
        let sat = random_staged_tree(&GenConfig::new(3, 2, 8, 3).unwrap()).unwrap();
        assert_eq!(sat.staging(), &Staging::saturated(&[2, 2, 2]));
        assert!(GenConfig::new(0, 2, 1, 0).is_err());
        assert!(GenConfig::new(2, 1, 1, 0).is_err());
    }

    #[test]
    fn surjective_depth_three() {
        for seed in 0..1000 {
            let t = random_staged_tree(&GenConfig::new(3, 2, 2, seed).unwrap()).unwrap();
            let s = t.staging().stratum(2);
            assert!(s.contains(&0) && s.contains(&1) && s.len() == 4);
        }
    }

    #[test]
    fn shuffle_and_unshuffle() {
        let t = random_staged_tree(&GenConfig::new(4, 2, 2, 1).unwrap()).unwrap();
        let data = crate::probability::sample(&t, 30, 2).unwrap();
        let (shuffled, perm) = shuffle_variables(&data, 11);
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(shuffled.vars()[new], data.vars()[old]);
        }
        assert_eq!(shuffled.select_columns(&invert(&perm)), data);
    }
}
