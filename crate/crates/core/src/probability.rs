//! Parameter fitting, scoring, and (interventional) distributions of staged trees.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Params, StagedTree};
use crate::rng::rng_from_seed;

/// A probability vector over the levels of one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionVector(pub Vec<f64>);

impl DistributionVector {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &DistributionVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `do(X_I = z_I)`: tree positions mapped to forced level indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Intervention {
    targets: BTreeMap<usize, usize>,
}

impl Intervention {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, position: usize, level: usize) -> Self {
        self.targets.insert(position, level);
        self
    }

    /// Intervention fixing every variable of `ctx` (positions `0..ctx.len()`).
    pub fn on_prefix(ctx: &[usize]) -> Self {
        Intervention {
            targets: ctx.iter().copied().enumerate().collect(),
        }
    }

    pub fn targets(&self) -> &BTreeMap<usize, usize> {
        &self.targets
    }

    pub fn level_of(&self, position: usize) -> Option<usize> {
        self.targets.get(&position).copied()
    }
}

/// What to do with a stage that has no observations and no smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum EmptyStage {
    Error,
    Uniform,
}

/// Per-context count vectors of the variable at `depth`, contexts in tree order.
pub fn tree_stratum_counts(tree: &StagedTree, data: &Dataset, depth: usize) -> Result<Vec<u64>> {
    let cols = data.columns_for(tree.vars())?;
    Ok(data.count_contexts(cols[depth], &cols[..depth])?.counts)
}

/// Maximum-likelihood (optionally smoothed) stage parameters.
///
/// Counts are pooled over all contexts of a stage:
/// `θ_s[x] = (n_{s,x} + α) / (n_s + α·|X_i|)`.
pub fn fit_mle(structure: &StagedTree, data: &Dataset, smoothing: f64) -> Result<StagedTree> {
    fit_params(structure, data, smoothing, EmptyStage::Error)
}

pub(crate) fn fit_params(
    structure: &StagedTree,
    data: &Dataset,
    smoothing: f64,
    empty: EmptyStage,
) -> Result<StagedTree> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidOption(format!(
            "smoothing must be a nonnegative number, got {smoothing}"
        )));
    }
    let cols = data.columns_for(structure.vars())?;
    let mut params: Params = Vec::with_capacity(structure.p());
    for depth in 0..structure.p() {
        let l = structure.vars()[depth].n_levels();
        let m = structure.n_stages(depth);
        let counts = data.count_contexts(cols[depth], &cols[..depth])?;
        let mut pooled = vec![vec![0u64; l]; m];
        for (ctx, &stage) in structure.staging().stratum(depth).iter().enumerate() {
            for (acc, &n) in pooled[stage as usize].iter_mut().zip(counts.row(ctx)) {
                *acc += n;
            }
        }
        let mut vectors = Vec::with_capacity(m);
        for (stage, n) in pooled.iter().enumerate() {
            let total = n.iter().sum::<u64>() as f64;
            let denom = total + smoothing * l as f64;
            if denom == 0.0 {
                match empty {
                    EmptyStage::Error => {
                        return Err(Error::EmptyStage {
                            depth,
                            stage: stage as u32,
                        })
                    }
                    EmptyStage::Uniform => {
                        vectors.push(vec![1.0 / l as f64; l]);
                        continue;
                    }
                }
            }
            vectors.push(n.iter().map(|&c| (c as f64 + smoothing) / denom).collect());
        }
        params.push(vectors);
    }
    let interior = params
        .iter()
        .flatten()
        .flatten()
        .all(|&x| x > 0.0 && x < 1.0);
    structure.without_params().with_params(params, interior)
}

fn check_assignment(tree: &StagedTree, x: &[usize]) -> Result<()> {
    if x.len() > tree.p() || tree.context_index(x).is_none() {
        return Err(Error::UnknownContext {
            depth: x.len(),
            context: x.to_vec(),
        });
    }
    Ok(())
}

/// Probability of a full assignment: product of stage parameters along its path.
pub fn joint_prob(tree: &StagedTree, x: &[usize]) -> Result<f64> {
    let params = tree.params().ok_or(Error::MissingParams)?;
    if x.len() != tree.p() {
        return Err(Error::UnknownContext {
            depth: x.len(),
            context: x.to_vec(),
        });
    }
    check_assignment(tree, x)?;
    let mut prob = 1.0;
    let mut ctx = 0usize;
    for (depth, (&xi, var)) in x.iter().zip(tree.vars()).enumerate() {
        let stage = tree.staging().stratum(depth)[ctx];
        prob *= params[depth][stage as usize][xi];
        ctx = ctx * var.n_levels() + xi;
    }
    Ok(prob)
}

/// `P(X_i | X_[i-1] = ctx)`: the vector of the stage containing `ctx`.
pub fn conditional(tree: &StagedTree, i: usize, ctx: &[usize]) -> Result<DistributionVector> {
    if tree.params().is_none() {
        return Err(Error::MissingParams);
    }
    if ctx.len() != i {
        return Err(Error::UnknownContext {
            depth: ctx.len(),
            context: ctx.to_vec(),
        });
    }
    let stage = tree.stage_of(ctx)?;
    Ok(DistributionVector(tree.stage_vector(i, stage)?.to_vec()))
}

/// `P(X_i | do(X_I = z_I))` for a tree position `i`.
///
/// Interventions on positions after `i` do not affect `X_i` and are ignored.
/// Non-intervened predecessors are marginalized by propagating the truncated
/// product of stage parameters down to depth `i`.
pub fn interventional(
    tree: &StagedTree,
    i: usize,
    intervention: &Intervention,
) -> Result<DistributionVector> {
    let params = tree.params().ok_or(Error::MissingParams)?;
    if i >= tree.p() {
        return Err(Error::DepthOutOfRange { depth: i, p: tree.p() });
    }
    if intervention.targets().contains_key(&i) {
        return Err(Error::InvalidIntervention(format!(
            "target position {i} is in the intervention set"
        )));
    }
    for (&pos, &z) in intervention.targets() {
        if pos >= tree.p() || z >= tree.vars()[pos].n_levels() {
            return Err(Error::InvalidIntervention(format!(
                "position {pos} with level {z} is not valid"
            )));
        }
    }

    let mut weights = vec![1.0f64];
    for depth in 0..i {
        let l = tree.vars()[depth].n_levels();
        let stratum = tree.staging().stratum(depth);
        let mut next = vec![0.0; weights.len() * l];
        for (ctx, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            match intervention.level_of(depth) {
                Some(z) => next[ctx * l + z] += w,
                None => {
                    let theta = &params[depth][stratum[ctx] as usize];
                    for (x, &t) in theta.iter().enumerate() {
                        next[ctx * l + x] += w * t;
                    }
                }
            }
        }
        weights = next;
    }

    let l = tree.vars()[i].n_levels();
    let stratum = tree.staging().stratum(i);
    let mut out = vec![0.0; l];
    for (ctx, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let theta = &params[i][stratum[ctx] as usize];
        for (o, &t) in out.iter_mut().zip(theta) {
            *o += w * t;
        }
    }
    Ok(DistributionVector(out))
}

/// Log-likelihood of a dataset, split by stratum.
#[derive(Clone, Debug, PartialEq)]
pub struct LogLikelihood {
    pub total: f64,
    pub per_stratum: Vec<f64>,
    /// Observed (context, value) cells that have probability zero. When
    /// nonzero, `total` is negative infinity.
    pub zero_probability_cells: usize,
}

impl LogLikelihood {
    pub fn is_finite(&self) -> bool {
        self.zero_probability_cells == 0
    }
}

pub fn log_likelihood(tree: &StagedTree, data: &Dataset) -> Result<LogLikelihood> {
    let params = tree.params().ok_or(Error::MissingParams)?;
    let mut per_stratum = Vec::with_capacity(tree.p());
    let mut zero = 0usize;
    for depth in 0..tree.p() {
        let l = tree.vars()[depth].n_levels();
        let counts = tree_stratum_counts(tree, data, depth)?;
        let stratum = tree.staging().stratum(depth);
        let mut ll = 0.0;
        for (ctx, &stage) in stratum.iter().enumerate() {
            let theta = &params[depth][stage as usize];
            for (&n, &t) in counts[ctx * l..(ctx + 1) * l].iter().zip(theta) {
                if n == 0 {
                    continue;
                }
                if t <= 0.0 {
                    zero += 1;
                    ll = f64::NEG_INFINITY;
                } else {
                    ll += n as f64 * t.ln();
                }
            }
        }
        per_stratum.push(ll);
    }
    let total = per_stratum.iter().sum();
    Ok(LogLikelihood {
        total,
        per_stratum,
        zero_probability_cells: zero,
    })
}

/// `−2·logL + df·ln N`, lower is better.
#[derive(Clone, Debug, PartialEq)]
pub struct BicScore {
    pub bic: f64,
    pub log_likelihood: LogLikelihood,
    pub df: usize,
    pub n: usize,
    /// Per stratum: `−2·logL_i + df_i·ln N`.
    pub per_stratum: Vec<f64>,
}

pub fn bic(tree: &StagedTree, data: &Dataset) -> Result<BicScore> {
    let ll = log_likelihood(tree, data)?;
    let n = data.n_rows();
    let log_n = (n as f64).ln();
    let per_stratum: Vec<f64> = ll
        .per_stratum
        .iter()
        .enumerate()
        .map(|(depth, &l)| {
            let df = tree.n_stages(depth) * (tree.vars()[depth].n_levels() - 1);
            -2.0 * l + df as f64 * log_n
        })
        .collect();
    let df = tree.df();
    Ok(BicScore {
        bic: -2.0 * ll.total + df as f64 * log_n,
        log_likelihood: ll,
        df,
        n,
        per_stratum,
    })
}

/// Draw `n` rows by forward sampling in tree order.
pub fn sample(tree: &StagedTree, n: usize, seed: u64) -> Result<Dataset> {
    let params = tree.params().ok_or(Error::MissingParams)?;
    let mut rng = rng_from_seed(seed);
    let p = tree.p();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(p);
        let mut ctx = 0usize;
        for depth in 0..p {
            let stage = tree.staging().stratum(depth)[ctx];
            let theta = &params[depth][stage as usize];
            let x = draw_index(theta, rng.random::<f64>());
            row.push(x);
            ctx = ctx * theta.len() + x;
        }
        rows.push(row);
    }
    Dataset::new(tree.vars().to_vec(), &rows)
}

fn draw_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (x, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return x;
        }
    }
    // rounding left u above the cumulative sum: take the last supported level
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Staging, VariableMeta};
    use approx::assert_abs_diff_eq;

    fn binary(names: &[&str]) -> Vec<VariableMeta> {
        names
            .iter()
            .map(|n| VariableMeta::with_levels(*n, 2).unwrap())
            .collect()
    }

    fn fig1_left() -> StagedTree {
        let staging = Staging::new(vec![vec![0], vec![0, 0], vec![0, 0, 1, 2]]);
        let params = vec![
            vec![vec![0.5, 0.5]],
            vec![vec![0.3, 0.7]],
            vec![vec![0.2, 0.8], vec![0.6, 0.4], vec![0.9, 0.1]],
        ];
        StagedTree::new(binary(&["X1", "X2", "X3"]), staging)
            .unwrap()
            .with_params(params, true)
            .unwrap()
    }

    fn uniform3() -> StagedTree {
        let tree = StagedTree::saturated(binary(&["A", "B", "C"])).unwrap();
        let params = (0..3)
            .map(|d| vec![vec![0.5, 0.5]; tree.n_stages(d)])
            .collect();
        tree.with_params(params, true).unwrap()
    }

    fn tiny_data() -> Dataset {
        Dataset::new(
            binary(&["A", "B"]),
            &[vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 1]],
        )
        .unwrap()
    }

    #[test]
    fn mle_single_variable() {
        let data = Dataset::new(binary(&["A"]), &[vec![0], vec![0], vec![0], vec![1]]).unwrap();
        let tree = fit_mle(&StagedTree::saturated(binary(&["A"])).unwrap(), &data, 0.0).unwrap();
        assert_eq!(tree.stage_vector(0, 0).unwrap(), &[0.75, 0.25]);
    }

    #[test]
    fn mle_and_laplace() {
        let structure = StagedTree::saturated(binary(&["A", "B"])).unwrap();
        let mle = fit_mle(&structure, &tiny_data(), 0.0).unwrap();
        assert_eq!(conditional(&mle, 1, &[1]).unwrap().0, vec![0.0, 1.0]);
        assert!(!mle.is_interior());
        let smoothed = fit_mle(&structure, &tiny_data(), 1.0).unwrap();
        assert_abs_diff_eq!(conditional(&smoothed, 1, &[1]).unwrap().0[1], 0.75, epsilon = 1e-15);
        assert!(smoothed.is_interior());
    }

    #[test]
    fn mle_pools_counts_within_stage() {
        let structure = StagedTree::independent(binary(&["A", "B"])).unwrap();
        let tree = fit_mle(&structure, &tiny_data(), 0.0).unwrap();
        assert_eq!(tree.stage_vector(1, 0).unwrap(), &[0.25, 0.75]);
    }

    #[test]
    fn empty_stage_requires_smoothing() {
        let data = Dataset::new(binary(&["A", "B"]), &[vec![0, 0], vec![0, 1]]).unwrap();
        let structure = StagedTree::saturated(binary(&["A", "B"])).unwrap();
        assert!(matches!(
            fit_mle(&structure, &data, 0.0),
            Err(Error::EmptyStage { depth: 1, stage: 1 })
        ));
        assert!(fit_mle(&structure, &data, 0.5).is_ok());
        assert!(fit_mle(&structure, &data, -1.0).is_err());
    }

    #[test]
    fn joint_examples() {
        let tree = uniform3();
        for i in 0..8 {
            let x = [i >> 2 & 1, i >> 1 & 1, i & 1];
            assert_eq!(joint_prob(&tree, &x).unwrap(), 0.125);
        }
        assert_abs_diff_eq!(joint_prob(&fig1_left(), &[1, 1, 0]).unwrap(), 0.315, epsilon = 1e-15);
        assert!(joint_prob(&tree.without_params(), &[0, 0, 0]).is_err());
        assert!(joint_prob(&tree, &[0, 2, 0]).is_err());

        let mle = fit_mle(&StagedTree::saturated(binary(&["A", "B"])).unwrap(), &tiny_data(), 0.0)
            .unwrap();
        assert_eq!(joint_prob(&mle, &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn conditionals_respect_stages() {
        let tree = fig1_left();
        assert_eq!(conditional(&tree, 1, &[0]).unwrap(), conditional(&tree, 1, &[1]).unwrap());
        assert_eq!(
            conditional(&tree, 2, &[0, 0]).unwrap(),
            conditional(&tree, 2, &[0, 1]).unwrap()
        );
        assert!(conditional(&tree, 2, &[0]).is_err());
    }

    #[test]
    fn interventional_examples() {
        let tree = fig1_left();
        let d = interventional(&tree, 2, &Intervention::new().set(0, 1)).unwrap();
        assert_abs_diff_eq!(d.0[0], 0.81, epsilon = 1e-12);
        assert_abs_diff_eq!(d.0[1], 0.19, epsilon = 1e-12);

        let full = interventional(&tree, 2, &Intervention::on_prefix(&[1, 0])).unwrap();
        assert_eq!(full, conditional(&tree, 2, &[1, 0]).unwrap());

        // empty intervention gives the marginal
        let marginal = interventional(&tree, 2, &Intervention::new()).unwrap();
        let mut brute = [0.0; 2];
        for i in 0..8 {
            let x = [i >> 2 & 1, i >> 1 & 1, i & 1];
            brute[x[2]] += joint_prob(&tree, &x).unwrap();
        }
        assert_abs_diff_eq!(marginal.0[0], brute[0], epsilon = 1e-12);
        assert_abs_diff_eq!(marginal.0[1], brute[1], epsilon = 1e-12);

        assert!(interventional(&tree, 1, &Intervention::new().set(1, 0)).is_err());
        assert!(interventional(&tree, 1, &Intervention::new().set(0, 2)).is_err());
    }

    #[test]
    fn uniform_log_likelihood() {
        let tree = uniform3();
        let rows: Vec<Vec<usize>> = (0..10).map(|i| vec![i % 2, i / 2 % 2, i / 3 % 2]).collect();
        let data = Dataset::new(binary(&["A", "B", "C"]), &rows).unwrap();
        let ll = log_likelihood(&tree, &data).unwrap();
        assert_abs_diff_eq!(ll.total, -10.0 * 3.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn tiny_dataset_likelihood_and_bic() {
        let structure = StagedTree::saturated(binary(&["A", "B"])).unwrap();
        let data = tiny_data();
        let tree = fit_mle(&structure, &data, 0.0).unwrap();
        let ll = log_likelihood(&tree, &data).unwrap();
        // A: 2·ln(1/2)+2·ln(1/2); B|A=0: 2·ln(1/2); B|A=1: 2·ln 1
        let expected = 4.0 * 0.5f64.ln() + 2.0 * 0.5f64.ln();
        assert_abs_diff_eq!(ll.total, expected, epsilon = 1e-12);
        let by_rows: f64 = data
            .rows()
            .map(|r| joint_prob(&tree, &[r[0] as usize, r[1] as usize]).unwrap().ln())
            .sum();
        assert_abs_diff_eq!(ll.total, by_rows, epsilon = 1e-12);

        let score = bic(&tree, &data).unwrap();
        assert_eq!(score.df, 3);
        assert_abs_diff_eq!(score.bic, -2.0 * expected + 3.0 * 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(score.per_stratum.iter().sum::<f64>(), score.bic, epsilon = 1e-12);
    }

    #[test]
    fn zero_probability_is_flagged() {
        let structure = StagedTree::saturated(binary(&["A", "B"])).unwrap();
        let fitted = fit_mle(&structure, &tiny_data(), 0.0).unwrap();
        let other = Dataset::new(binary(&["A", "B"]), &[vec![1, 0]]).unwrap();
        let ll = log_likelihood(&fitted, &other).unwrap();
        assert!(!ll.is_finite());
        assert_eq!(ll.total, f64::NEG_INFINITY);
        assert_eq!(ll.zero_probability_cells, 1);
    }

    #[test]
    fn bic_of_independent_pair() {
        let rows: Vec<Vec<usize>> = (0..100).map(|i| vec![i % 2, (i / 7) % 2]).collect();
        let data = Dataset::new(binary(&["A", "B"]), &rows).unwrap();
        let tree = fit_mle(&StagedTree::independent(binary(&["A", "B"])).unwrap(), &data, 0.0)
            .unwrap();
        let score = bic(&tree, &data).unwrap();
        assert_eq!(score.df, 2);
        assert_abs_diff_eq!(
            score.bic,
            -2.0 * score.log_likelihood.total + 2.0 * 100f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sampling() {
        let tree = uniform3();
        let a = sample(&tree, 50, 9).unwrap();
        assert_eq!(a, sample(&tree, 50, 9).unwrap());
        assert_ne!(a, sample(&tree, 50, 10).unwrap());

        let degenerate = StagedTree::independent(binary(&["A", "B"]))
            .unwrap()
            .with_params(vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]], false)
            .unwrap();
        let d = sample(&degenerate, 20, 1).unwrap();
        assert!(d.rows().all(|r| r == [1, 0]));
    }

    #[test]
    fn sampling_frequencies() {
        let n = 100_000;
        let data = sample(&uniform3(), n, 42).unwrap();
        let mut freq = [0usize; 8];
        for r in data.rows() {
            freq[(r[0] as usize) << 2 | (r[1] as usize) << 1 | r[2] as usize] += 1;
        }
        for f in freq {
            assert!((f as f64 / n as f64 - 0.125).abs() < 0.01);
        }
    }
}
