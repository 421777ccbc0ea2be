//! Conversions between DAGs, staged trees, and consensus PDAGs.

use crate::error::{Error, Result};
use crate::graph::{Dag, Pdag};
use crate::model::{canonical_stage_ids, context_at, StageId, StagedTree, Staging, VariableMeta};

/// Staged tree of a DAG model in a topological `order`: at each depth,
/// contexts share a stage exactly when they agree on the parents.
///
/// `vars[v]` describes DAG node `v`.
pub fn dag_to_staged_tree(g: &Dag, order: &[usize], vars: &[VariableMeta]) -> Result<StagedTree> {
    if vars.len() != g.p() {
        return Err(Error::VariableMismatch(format!(
            "{} variables for a graph on {} nodes",
            vars.len(),
            g.p()
        )));
    }
    g.check_topological(order)?;
    let levels: Vec<usize> = order.iter().map(|&v| vars[v].n_levels()).collect();
    let strata = order
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let parent_pos: Vec<usize> = (0..i).filter(|&j| g.has_edge(order[j], v)).collect();
            let prefix = &levels[..i];
            let n: usize = prefix.iter().product();
            let ids: Vec<StageId> = (0..n)
                .map(|c| {
                    let ctx = context_at(prefix, c);
                    parent_pos
                        .iter()
                        .fold(0usize, |acc, &j| acc * levels[j] + ctx.0[j]) as StageId
                })
                .collect();
            canonical_stage_ids(&ids)
        })
        .collect();
    let tree_vars = order.iter().map(|&v| vars[v].clone()).collect();
    StagedTree::new(tree_vars, Staging::new(strata))
}

/// Binary variables named after the graph's nodes.
pub fn binary_vars(g: &Dag) -> Vec<VariableMeta> {
    g.names()
        .iter()
        .map(|n| VariableMeta::with_levels(n.clone(), 2).expect("two levels"))
        .collect()
}

/// DAG with an edge `j → i` (tree positions) whenever two contexts of
/// depth `i` that differ only in coordinate `j` lie in different stages.
///
/// Nodes are the tree's variables in tree order.
pub fn staged_tree_to_minimal_dag(t: &StagedTree) -> Dag {
    let levels = t.levels();
    let mut edges = Vec::new();
    for i in 1..t.p() {
        let stratum = t.staging().stratum(i);
        let prefix = &levels[..i];
        // stride of coordinate j in the mixed-radix index
        let mut strides = vec![1usize; i];
        for j in (0..i.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * prefix[j + 1];
        }
        for j in 0..i {
            let depends = (0..stratum.len()).any(|c| {
                let digit = (c / strides[j]) % prefix[j];
                let base = c - digit * strides[j];
                (digit + 1..prefix[j]).any(|d| stratum[base + d * strides[j]] != stratum[c])
            });
            if depends {
                edges.push((j, i));
            }
        }
    }
    let names = t.vars().iter().map(|v| v.name.clone()).collect();
    Dag::with_names(names, edges).expect("edges follow the tree order")
}

/// Consensus of DAGs over the same variables: a pair adjacent in every DAG
/// becomes a directed edge if all DAGs orient it the same way and an
/// undirected edge otherwise; pairs missing from any DAG get no edge.
pub fn consensus_pdag(dags: &[Dag]) -> Result<Pdag> {
    let first = dags.first().ok_or(Error::EmptyGraphList)?;
    let names = first.names().to_vec();
    let aligned: Vec<Dag> = dags
        .iter()
        .map(|g| g.reindexed(&names))
        .collect::<Result<_>>()?;
    let p = names.len();
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            if !aligned.iter().all(|g| g.has_edge(a, b) || g.has_edge(b, a)) {
                continue;
            }
            if aligned.iter().all(|g| g.has_edge(a, b)) {
                directed.push((a, b));
            } else if aligned.iter().all(|g| g.has_edge(b, a)) {
                directed.push((b, a));
            } else {
                undirected.push((a, b));
            }
        }
    }
    Pdag::new(names, directed, undirected)
}
