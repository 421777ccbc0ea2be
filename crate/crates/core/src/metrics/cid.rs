//! Context-specific interventional discrepancy between two staged trees.

use rand::SeedableRng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{context_at, context_count, Context, StageId, StagedTree};
use crate::randgen::random_params;
use crate::rng::{derive_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariableCid {
    pub variable: String,
    /// Position in the reference tree.
    pub position: usize,
    /// Earlier reference positions that also precede the variable in the estimate.
    pub i_set: Vec<usize>,
    /// Later reference positions that precede the variable in the estimate.
    pub j_set: Vec<usize>,
    pub k_set: Vec<usize>,
    /// Reference contexts whose interventional distribution is misestimated.
    pub wrong: Vec<Context>,
    pub n_contexts: usize,
    pub cid: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CidReport {
    pub per_variable: Vec<VariableCid>,
    pub total: f64,
}

/// Alignment of the estimate `s` onto the reference `t` by variable name.
struct Alignment {
    /// `pos_s[i]`: position in `s` of the variable at reference position `i`.
    pos_s: Vec<usize>,
}

fn align(t: &StagedTree, s: &StagedTree) -> Result<Alignment> {
    if t.p() != s.p() {
        return Err(Error::VariableMismatch(format!(
            "trees have {} and {} variables",
            t.p(),
            s.p()
        )));
    }
    let mut pos_s = Vec::with_capacity(t.p());
    for v in t.vars() {
        let q = s
            .position_of(&v.name)
            .ok_or_else(|| Error::VariableMismatch(format!("`{}` missing from estimate", v.name)))?;
        if s.vars()[q].levels != v.levels {
            return Err(Error::VariableMismatch(format!("levels of `{}` differ", v.name)));
        }
        pos_s.push(q);
    }
    Ok(Alignment { pos_s })
}

/// Data shared by the metric and its oracle for one reference position.
struct Projection {
    i_set: Vec<usize>,
    j_set: Vec<usize>,
    /// Levels of the `I` variables, in reference order.
    i_levels: Vec<usize>,
    /// For each estimate stage, which `I`-assignments it reaches.
    stage_reach: Vec<Vec<bool>>,
}

fn projection(t: &StagedTree, s: &StagedTree, al: &Alignment, i: usize) -> Projection {
    let k = al.pos_s[i];
    let i_set: Vec<usize> = (0..i).filter(|&j| al.pos_s[j] < k).collect();
    let j_set: Vec<usize> = (i + 1..t.p()).filter(|&j| al.pos_s[j] < k).collect();
    let t_levels = t.levels();
    let i_levels: Vec<usize> = i_set.iter().map(|&j| t_levels[j]).collect();
    let n_i = context_count(&i_levels);

    let s_levels = s.levels();
    let prefix = &s_levels[..k];
    // estimate position of each I variable
    let i_in_s: Vec<usize> = i_set.iter().map(|&j| al.pos_s[j]).collect();
    let mut stage_reach = vec![vec![false; n_i]; s.n_stages(k)];
    for (c, &stage) in s.staging().stratum(k).iter().enumerate() {
        let y = context_at(prefix, c);
        let yi = i_in_s
            .iter()
            .zip(&i_levels)
            .fold(0usize, |acc, (&q, &l)| acc * l + y.0[q]);
        stage_reach[stage as usize][yi] = true;
    }
    Projection {
        i_set,
        j_set,
        i_levels,
        stage_reach,
    }
}

fn project(x: &[usize], i_set: &[usize], i_levels: &[usize]) -> usize {
    i_set
        .iter()
        .zip(i_levels)
        .fold(0usize, |acc, (&j, &l)| acc * l + x[j])
}

fn report(
    t: &StagedTree,
    i: usize,
    proj: &Projection,
    wrong_flags: &[bool],
) -> VariableCid {
    let levels = t.levels();
    let wrong: Vec<Context> = wrong_flags
        .iter()
        .enumerate()
        .filter(|(_, &w)| w)
        .map(|(c, _)| context_at(&levels[..i], c))
        .collect();
    let n_contexts = wrong_flags.len();
    let mut k_set: Vec<usize> = proj.i_set.iter().chain(&proj.j_set).copied().collect();
    k_set.sort_unstable();
    VariableCid {
        variable: t.vars()[i].name.clone(),
        position: i,
        i_set: proj.i_set.clone(),
        j_set: proj.j_set.clone(),
        k_set,
        cid: wrong.len() as f64 / n_contexts as f64,
        wrong,
        n_contexts,
    }
}

fn total(per_variable: Vec<VariableCid>) -> CidReport {
    let total = per_variable.iter().map(|v| v.cid).sum();
    CidReport {
        per_variable,
        total,
    }
}

/// CID of the estimate `s` against the reference `t`.
///
/// For each reference variable `X_i`, every estimate stage `A` at `X_i`
/// determines the reference contexts `B_A` whose values on the shared
/// predecessors `I` match some context of `A`. If the reference stages over
/// `B_A` are not all equal, all of `B_A` is counted as wrong. `CID_i` is the
/// fraction of wrong reference contexts at depth `i`.
///
/// Variables are matched by name; both trees need the same names and levels.
/// Parameters are ignored.
pub fn cid(t: &StagedTree, s: &StagedTree) -> Result<CidReport> {
    let al = align(t, s)?;
    let levels = t.levels();
    let per_variable = (0..t.p())
        .map(|i| {
            let proj = projection(t, s, &al, i);
            let n_i = context_count(&proj.i_levels);
            let prefix = &levels[..i];
            let stratum = t.staging().stratum(i);
            // reference stage of every context in an I-group, or None if mixed
            let mut group_stage: Vec<Option<Option<StageId>>> = vec![None; n_i];
            let mut group_of = Vec::with_capacity(stratum.len());
            for (c, &stage) in stratum.iter().enumerate() {
                let g = project(&context_at(prefix, c).0, &proj.i_set, &proj.i_levels);
                group_of.push(g);
                group_stage[g] = match group_stage[g] {
                    None => Some(Some(stage)),
                    Some(Some(s0)) if s0 == stage => Some(Some(stage)),
                    _ => Some(None),
                };
            }
            let mut wrong_group = vec![false; n_i];
            for reach in &proj.stage_reach {
                let mut seen: Option<StageId> = None;
                let mut mixed = false;
                for g in (0..n_i).filter(|&g| reach[g]) {
                    match group_stage[g] {
                        Some(Some(stage)) => match seen {
                            None => seen = Some(stage),
                            Some(s0) if s0 == stage => {}
                            _ => mixed = true,
                        },
                        Some(None) => mixed = true,
                        // no reference context projects here
                        None => {}
                    }
                }
                if mixed {
                    for g in (0..n_i).filter(|&g| reach[g]) {
                        wrong_group[g] = true;
                    }
                }
            }
            let wrong: Vec<bool> = group_of.iter().map(|&g| wrong_group[g]).collect();
            report(t, i, &proj, &wrong)
        })
        .collect();
    Ok(total(per_variable))
}

/// Numerical CID: draws Dirichlet(1) parameters for `t` and flags a reference
/// context when `P(X_i | x_{[i-1]})` differs by more than `tol` from
/// `P(X_i | X_I ∈ {y_I : y ∈ A})` for some estimate stage `A` reaching it,
/// with both sides computed from the full joint table.
pub fn cid_oracle(
    t: &StagedTree,
    s: &StagedTree,
    draws: usize,
    seed: u64,
    tol: f64,
) -> Result<CidReport> {
    let al = align(t, s)?;
    let levels = t.levels();
    let p = t.p();
    let n_joint = context_count(&levels);
    let projections: Vec<Projection> = (0..p).map(|i| projection(t, s, &al, i)).collect();
    let mut wrong: Vec<Vec<bool>> = (0..p).map(|i| vec![false; t.n_contexts(i)]).collect();

    let structure = t.without_params();
    for d in 0..draws {
        let mut rng = Rng::seed_from_u64(derive_seed(seed, &[d as u64]));
        let tree = random_params(&structure, &mut rng)?;
        let joint: Vec<f64> = (0..n_joint)
            .map(|c| crate::probability::joint_prob(&tree, &context_at(&levels, c).0))
            .collect::<Result<_>>()?;

        for i in 0..p {
            let proj = &projections[i];
            let li = levels[i];
            let n_i = context_count(&proj.i_levels);
            let prefix_n = context_count(&levels[..i]);
            // P(x_{[i-1]}, x_i) and P(x_I, x_i) by marginalizing the joint
            let mut by_prefix = vec![0.0; prefix_n * li];
            let mut by_i = vec![0.0; n_i * li];
            for (c, &pr) in joint.iter().enumerate() {
                let x = context_at(&levels, c).0;
                let pre = x[..i].iter().zip(&levels).fold(0usize, |a, (&v, &l)| a * l + v);
                by_prefix[pre * li + x[i]] += pr;
                by_i[project(&x, &proj.i_set, &proj.i_levels) * li + x[i]] += pr;
            }
            let stage_cond: Vec<Vec<f64>> = proj
                .stage_reach
                .iter()
                .map(|reach| {
                    let mut m = vec![0.0; li];
                    for g in (0..n_i).filter(|&g| reach[g]) {
                        for a in 0..li {
                            m[a] += by_i[g * li + a];
                        }
                    }
                    let z: f64 = m.iter().sum();
                    m.iter().map(|v| v / z).collect()
                })
                .collect();
            for (c, flag) in wrong[i].iter_mut().enumerate() {
                let row = &by_prefix[c * li..(c + 1) * li];
                let z: f64 = row.iter().sum();
                let x = context_at(&levels[..i], c);
                let g = project(&x.0, &proj.i_set, &proj.i_levels);
                for (reach, cond) in proj.stage_reach.iter().zip(&stage_cond) {
                    if reach[g] && row.iter().zip(cond).any(|(r, m)| (r / z - m).abs() > tol) {
                        *flag = true;
                    }
                }
            }
        }
    }
    let per_variable = (0..p)
        .map(|i| report(t, i, &projections[i], &wrong[i]))
        .collect();
    Ok(total(per_variable))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Staging, VariableMeta};

    fn vars(names: &[&str]) -> Vec<VariableMeta> {
        names
            .iter()
            .map(|n| VariableMeta::with_levels(*n, 2).unwrap())
            .collect()
    }

    fn fig1() -> (StagedTree, StagedTree) {
        let t = StagedTree::new(
            vars(&["X1", "X2", "X3"]),
            Staging::new(vec![vec![0], vec![0, 0], vec![0, 0, 1, 2]]),
        )
        .unwrap();
        let s = StagedTree::new(
            vars(&["X1", "X3", "X2"]),
            Staging::new(vec![vec![0], vec![0, 1], vec![0, 1, 1, 0]]),
        )
        .unwrap();
        (t, s)
    }

    #[test]
    fn fig1_metric() {
        let (t, s) = fig1();
        let r = cid(&t, &s).unwrap();
        let cids: Vec<f64> = r.per_variable.iter().map(|v| v.cid).collect();
        assert_eq!(cids, vec![0.0, 0.0, 0.5]);
        assert_eq!(r.total, 0.5);
        assert_eq!(
            r.per_variable[2].wrong,
            vec![Context(vec![1, 0]), Context(vec![1, 1])]
        );
        assert_eq!(r.per_variable[1].j_set, vec![2]);
        assert_eq!(r.per_variable[2].i_set, vec![0]);
    }

    #[test]
    fn fig1_oracle_agrees() {
        let (t, s) = fig1();
        assert_eq!(cid_oracle(&t, &s, 50, 1, 1e-9).unwrap(), cid(&t, &s).unwrap());
    }

    #[test]
    fn self_distance_is_zero() {
        let (t, s) = fig1();
        assert_eq!(cid(&t, &t).unwrap().total, 0.0);
        assert_eq!(cid(&s, &s).unwrap().total, 0.0);
    }

    #[test]
    fn mismatched_variables() {
        let (t, _) = fig1();
        let other = StagedTree::independent(vars(&["X1", "X2", "Y"])).unwrap();
        assert!(matches!(cid(&t, &other), Err(Error::VariableMismatch(_))));
    }
}
