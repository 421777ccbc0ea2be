#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng as _;

use stagecause::model::{canonical_stage_ids, context_at, context_count};
use stagecause::randgen::{random_params, random_surjective_staging};
use stagecause::rng::{rng_from_seed, Rng};
use stagecause::{StageId, StagedTree, Staging, VariableMeta};

pub fn binary(names: &[&str]) -> Vec<VariableMeta> {
    names
        .iter()
        .map(|n| VariableMeta::with_levels(*n, 2).unwrap())
        .collect()
}

/// Reference tree of the worked example, order (X1, X2, X3).
pub fn fig1_t() -> StagedTree {
    StagedTree::new(
        binary(&["X1", "X2", "X3"]),
        Staging::new(vec![vec![0], vec![0, 0], vec![0, 0, 1, 2]]),
    )
    .unwrap()
    .with_params(
        vec![
            vec![vec![0.5, 0.5]],
            vec![vec![0.3, 0.7]],
            vec![vec![0.2, 0.8], vec![0.6, 0.4], vec![0.9, 0.1]],
        ],
        true,
    )
    .unwrap()
}

/// Estimated tree of the worked example, order (X1, X3, X2).
pub fn fig1_s() -> StagedTree {
    StagedTree::new(
        binary(&["X1", "X3", "X2"]),
        Staging::new(vec![vec![0], vec![0, 1], vec![0, 1, 1, 0]]),
    )
    .unwrap()
}

/// Full joint table of `t`, indexed by the mixed-radix index of the outcome
/// in tree order, computed straight from stages and parameters.
pub fn joint_table(t: &StagedTree) -> Vec<f64> {
    let levels = t.levels();
    let params = t.params().unwrap();
    (0..context_count(&levels))
        .map(|c| {
            let x = context_at(&levels, c).0;
            (0..t.p())
                .map(|d| {
                    let stage = t.staging().stratum(d)[prefix_index(&levels, &x[..d])];
                    params[d][stage as usize][x[d]]
                })
                .product()
        })
        .collect()
}

pub fn prefix_index(levels: &[usize], x: &[usize]) -> usize {
    x.iter().zip(levels).fold(0, |acc, (&v, &l)| acc * l + v)
}

/// `P(X_target | X_j ∈ sets_j for every (j, sets_j))` from the joint table of `t`.
pub fn conditional_on_sets(t: &StagedTree, target: usize, conds: &[(usize, Vec<usize>)]) -> Vec<f64> {
    let levels = t.levels();
    let mut out = vec![0.0; levels[target]];
    for (c, pr) in joint_table(t).into_iter().enumerate() {
        let x = context_at(&levels, c).0;
        if conds.iter().all(|(j, set)| set.contains(&x[*j])) {
            out[x[target]] += pr;
        }
    }
    let z: f64 = out.iter().sum();
    out.into_iter().map(|v| v / z).collect()
}

/// Uniform-surjective staging with `k` stages per stratum (capped).
pub fn random_staging(rng: &mut Rng, levels: &[usize], k: usize) -> Staging {
    Staging::new(
        (0..levels.len())
            .map(|i| {
                let n = context_count(&levels[..i]);
                random_surjective_staging(rng, n, k.min(n))
            })
            .collect(),
    )
}

/// Random tree over `names` (taken in the given order) with `l` levels each.
pub fn random_tree(rng: &mut Rng, names: &[String], l: usize, k: usize, with_params: bool) -> StagedTree {
    let vars: Vec<VariableMeta> = names
        .iter()
        .map(|n| VariableMeta::with_levels(n.clone(), l).unwrap())
        .collect();
    let levels = vec![l; names.len()];
    let t = StagedTree::new(vars, random_staging(rng, &levels, k)).unwrap();
    if with_params {
        random_params(&t, rng).unwrap()
    } else {
        t
    }
}

pub fn names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("X{i}")).collect()
}

pub fn shuffled_names(rng: &mut Rng, p: usize) -> Vec<String> {
    let mut n = names(p);
    n.shuffle(rng);
    n
}

/// Copy of `t` with stage ids permuted within every stratum.
pub fn relabel_stages(rng: &mut Rng, t: &StagedTree) -> StagedTree {
    let strata = (0..t.p())
        .map(|d| {
            let mut perm: Vec<StageId> = (0..t.n_stages(d) as StageId).collect();
            perm.shuffle(rng);
            t.staging()
                .stratum(d)
                .iter()
                .map(|&s| perm[s as usize])
                .collect()
        })
        .collect();
    StagedTree::new(t.vars().to_vec(), Staging::new(strata)).unwrap()
}

/// Refinement of `t`: every stage is split at random into smaller stages.
pub fn refine(rng: &mut Rng, t: &StagedTree) -> StagedTree {
    let strata = (0..t.p())
        .map(|d| {
            let stratum = t.staging().stratum(d);
            let pieces = rng.random_range(1..=3u32);
            let ids: Vec<StageId> = stratum
                .iter()
                .map(|&s| s * 3 + rng.random_range(0..pieces))
                .collect();
            canonical_stage_ids(&ids)
        })
        .collect();
    StagedTree::new(t.vars().to_vec(), Staging::new(strata)).unwrap()
}

pub fn seeded(seed: u64) -> Rng {
    rng_from_seed(seed)
}
