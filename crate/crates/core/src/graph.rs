//! Directed acyclic and partially directed graphs over named variables.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dag {
    names: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    /// Graph with nodes named `X1..Xp`.
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::with_names((1..=p).map(|i| format!("X{i}")).collect(), edges)
    }

    pub fn with_names(
        names: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let p = names.len();
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        if edges.iter().any(|&(a, b)| a >= p || b >= p || a == b) {
            return Err(Error::InvalidOption("edge endpoint out of range or self loop".into()));
        }
        let dag = Dag { names, edges };
        if dag.topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    pub fn empty(p: usize) -> Self {
        Dag::new(p, []).expect("empty graph is acyclic")
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == v).map(|e| e.1).collect()
    }

    /// Nodes reachable from `v` by directed paths, including `v`.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        let mut seen = vec![false; self.p()];
        let mut stack = vec![v];
        seen[v] = true;
        while let Some(u) = stack.pop() {
            for c in self.children(u) {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Nodes with a directed path into some node of `set`, including `set`.
    pub fn ancestors_of_set(&self, set: &[bool]) -> Vec<bool> {
        let mut seen = set.to_vec();
        let mut stack: Vec<usize> = (0..self.p()).filter(|&v| set[v]).collect();
        while let Some(u) = stack.pop() {
            for q in self.parents(u) {
                if !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        seen
    }

    /// Kahn's algorithm taking the smallest available node first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let p = self.p();
        let mut indeg = vec![0usize; p];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..p).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(p);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == p).then_some(order)
    }

    /// Check that `order` is a permutation in which every edge points forward.
    pub fn check_topological(&self, order: &[usize]) -> Result<()> {
        crate::staging::check_order(self.p(), order)?;
        let mut pos = vec![0; self.p()];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        for &(a, b) in &self.edges {
            if pos[a] > pos[b] {
                return Err(Error::NotTopological(
                    self.names[a].clone(),
                    self.names[b].clone(),
                ));
            }
        }
        Ok(())
    }

    /// Same graph with nodes re-indexed to follow `names`.
    pub fn reindexed(&self, names: &[String]) -> Result<Dag> {
        let index: Vec<usize> = self
            .names
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::VariableMismatch(format!("node `{n}` missing")))
            })
            .collect::<Result<_>>()?;
        if names.len() != self.p() {
            return Err(Error::VariableMismatch("node counts differ".into()));
        }
        Dag::with_names(
            names.to_vec(),
            self.edges.iter().map(|&(a, b)| (index[a], index[b])),
        )
    }

    /// d-separation of `x` and `y` given `z`, via the moralized ancestral graph.
    pub fn d_separated(&self, x: usize, y: usize, z: &[bool]) -> bool {
        let p = self.p();
        let mut seed = z.to_vec();
        seed[x] = true;
        seed[y] = true;
        let keep = self.ancestors_of_set(&seed);
        let mut adj = vec![vec![false; p]; p];
        for &(a, b) in &self.edges {
            if keep[a] && keep[b] {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
        for v in (0..p).filter(|&v| keep[v]) {
            let pa: Vec<usize> = self.parents(v);
            for (i, &a) in pa.iter().enumerate() {
                for &b in &pa[i + 1..] {
                    adj[a][b] = true;
                    adj[b][a] = true;
                }
            }
        }
        let mut seen = vec![false; p];
        let mut stack = vec![x];
        seen[x] = true;
        while let Some(u) = stack.pop() {
            if u == y {
                return false;
            }
            for w in 0..p {
                if adj[u][w] && keep[w] && !seen[w] && (!z[w] || w == y) {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        true
    }
}

/// Partially directed graph: directed edges plus undirected adjacencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pdag {
    names: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    /// Stored with the smaller index first.
    undirected: BTreeSet<(usize, usize)>,
}

impl Pdag {
    pub fn new(
        names: Vec<String>,
        directed: impl IntoIterator<Item = (usize, usize)>,
        undirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let directed: BTreeSet<_> = directed.into_iter().collect();
        let undirected: BTreeSet<_> = undirected
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        let p = names.len();
        if directed
            .iter()
            .chain(&undirected)
            .any(|&(a, b)| a >= p || b >= p || a == b)
        {
            return Err(Error::InvalidOption("edge endpoint out of range or self loop".into()));
        }
        if directed
            .iter()
            .any(|&(a, b)| undirected.contains(&(a.min(b), a.max(b))) || directed.contains(&(b, a)))
        {
            return Err(Error::InvalidOption(
                "directed and undirected edges overlap".into(),
            ));
        }
        Ok(Pdag {
            names,
            directed,
            undirected,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn undirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }
}

impl From<&Dag> for Pdag {
    fn from(dag: &Dag) -> Self {
        Pdag {
            names: dag.names.clone(),
            directed: dag.edges.clone(),
            undirected: BTreeSet::new(),
        }
    }
}

/// `{"nodes": [names], "edges": [[from, to]]}` with node names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagJson {
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

/// `{"directed": [[a, b]], "undirected": [[a, b]]}` with node names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdagJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<String>>,
    pub directed: Vec<[String; 2]>,
    pub undirected: Vec<[String; 2]>,
}

fn name_pairs(names: &[String], edges: &BTreeSet<(usize, usize)>) -> Vec<[String; 2]> {
    edges
        .iter()
        .map(|&(a, b)| [names[a].clone(), names[b].clone()])
        .collect()
}

fn index_pairs(names: &[String], pairs: &[[String; 2]]) -> Result<Vec<(usize, usize)>> {
    let find = |n: &String| {
        names
            .iter()
            .position(|m| m == n)
            .ok_or_else(|| Error::VariableMismatch(format!("unknown node `{n}`")))
    };
    pairs
        .iter()
        .map(|[a, b]| Ok((find(a)?, find(b)?)))
        .collect()
}

impl From<&Dag> for DagJson {
    fn from(dag: &Dag) -> Self {
        DagJson {
            nodes: dag.names.clone(),
            edges: name_pairs(&dag.names, &dag.edges),
        }
    }
}

impl TryFrom<&DagJson> for Dag {
    type Error = Error;

    fn try_from(json: &DagJson) -> Result<Dag> {
        Dag::with_names(json.nodes.clone(), index_pairs(&json.nodes, &json.edges)?)
    }
}

impl From<&Pdag> for PdagJson {
    fn from(pdag: &Pdag) -> Self {
        PdagJson {
            nodes: Some(pdag.names.clone()),
            directed: name_pairs(&pdag.names, &pdag.directed),
            undirected: name_pairs(&pdag.names, &pdag.undirected),
        }
    }
}
