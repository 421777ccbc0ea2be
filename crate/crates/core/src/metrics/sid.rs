//! Structural intervention distance between two DAGs.

use crate::error::{Error, Result};
use crate::graph::Dag;

/// Align `h` to the node names of `g` when both use the same names,
/// otherwise match nodes by index.
fn aligned(g: &Dag, h: &Dag) -> Result<Dag> {
    if g.p() != h.p() {
        return Err(Error::VariableMismatch(format!(
            "graphs have {} and {} nodes",
            g.p(),
            h.p()
        )));
    }
    match h.reindexed(g.names()) {
        Ok(r) => Ok(r),
        Err(_) => Ok(h.clone()),
    }
}

/// Whether `z` is a valid adjustment set for the effect of `i` on `j` in `g`.
pub fn is_valid_adjustment(g: &Dag, i: usize, j: usize, z: &[bool]) -> bool {
    let p = g.p();
    let de_i = g.descendants(i);
    // nodes other than i on some directed path i → … → j
    let on_causal: Vec<bool> = (0..p)
        .map(|w| w != i && de_i[w] && g.descendants(w)[j])
        .collect();
    let mut forbidden = vec![false; p];
    forbidden[i] = true;
    for w in (0..p).filter(|&w| on_causal[w]) {
        for (f, d) in forbidden.iter_mut().zip(g.descendants(w)) {
            *f |= d;
        }
    }
    if (0..p).any(|v| z[v] && forbidden[v]) {
        return false;
    }
    // proper back-door graph: drop the first edge of every causal path
    let kept = g
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| !(a == i && on_causal[b]));
    let backdoor = Dag::with_names(g.names().to_vec(), kept).expect("subgraph of a DAG");
    backdoor.d_separated(i, j, z)
}

/// Ordered pairs `(i, j)` for which adjusting for `PA_H(i)` misestimates
/// `P(X_j | do(X_i))` in `g`.
pub fn sid_pairs(g: &Dag, h: &Dag) -> Result<Vec<(usize, usize)>> {
    let h = aligned(g, h)?;
    let p = g.p();
    let mut wrong = Vec::new();
    for i in 0..p {
        let mut z = vec![false; p];
        for q in h.parents(i) {
            z[q] = true;
        }
        let de_i = g.descendants(i);
        for j in (0..p).filter(|&j| j != i) {
            let ok = if z[j] {
                !de_i[j]
            } else {
                is_valid_adjustment(g, i, j, &z)
            };
            if !ok {
                wrong.push((i, j));
            }
        }
    }
    Ok(wrong)
}

/// Number of misestimated interventional distributions of `g` when the
/// parents in `h` are used as adjustment sets.
pub fn sid(g: &Dag, h: &Dag) -> Result<usize> {
    Ok(sid_pairs(g, h)?.len())
}
