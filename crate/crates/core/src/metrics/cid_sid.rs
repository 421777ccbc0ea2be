//! CID against SID on random DAG pairs converted to staged trees.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::convert::{binary_vars, dag_to_staged_tree};
use crate::error::Result;
use crate::graph::Dag;
use crate::randgen::random_dag_uniform;
use crate::rng::derive_seed;
use crate::stats::{pearson, spearman};

use super::{cid, sid};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CidSidRow {
    pub pair_id: usize,
    pub sid: usize,
    pub cid: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CidSidSummary {
    pub pairs: usize,
    pub p: usize,
    pub seed: u64,
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CidSidTable {
    pub rows: Vec<CidSidRow>,
    pub summary: CidSidSummary,
}

impl CidSidTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Staged tree of a binary DAG model in its smallest-first topological order.
pub fn dag_tree(g: &Dag) -> Result<crate::model::StagedTree> {
    let order = g.topological_order().expect("DAG");
    dag_to_staged_tree(g, &order, &binary_vars(g))
}

/// Pair `k` is `(G, H)` with `G = random_dag_uniform(p, derive_seed(seed, [k, 0]))`
/// and `H` drawn likewise with key 1. SID compares `H` against `G`; CID
/// compares the tree of `H` against the tree of `G`.
pub fn cid_vs_sid(pairs: usize, p: usize, seed: u64) -> Result<CidSidTable> {
    let rows = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let g = random_dag_uniform(p, derive_seed(seed, &[k as u64, 0]));
            let h = random_dag_uniform(p, derive_seed(seed, &[k as u64, 1]));
            Ok(CidSidRow {
                pair_id: k,
                sid: sid(&g, &h)?,
                cid: cid(&dag_tree(&g)?, &dag_tree(&h)?)?.total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let s: Vec<f64> = rows.iter().map(|r| r.sid as f64).collect();
    let c: Vec<f64> = rows.iter().map(|r| r.cid).collect();
    Ok(CidSidTable {
        summary: CidSidSummary {
            pairs,
            p,
            seed,
            pearson: pearson(&s, &c),
            spearman: spearman(&s, &c),
        },
        rows,
    })
}
