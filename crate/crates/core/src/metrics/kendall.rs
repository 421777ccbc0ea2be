//! Kendall tau distance between orders.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Number of item pairs ordered differently in `a` and `b`.
///
/// Both must be arrangements of the same distinct items.
pub fn kendall_distance<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::InvalidPermutation(format!(
            "lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let pos: HashMap<&T, usize> = b.iter().enumerate().map(|(i, x)| (x, i)).collect();
    if pos.len() != b.len() {
        return Err(Error::InvalidPermutation("repeated item".into()));
    }
    let mut seq = a
        .iter()
        .map(|x| {
            pos.get(x)
                .copied()
                .ok_or_else(|| Error::InvalidPermutation("orders contain different items".into()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut seen = vec![false; seq.len()];
    for &s in &seq {
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::InvalidPermutation("repeated item".into()));
        }
    }
    let mut buf = vec![0; seq.len()];
    Ok(inversions(&mut seq, &mut buf))
}

fn inversions(v: &mut [usize], buf: &mut [usize]) -> usize {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = inversions(&mut v[..mid], &mut buf[..mid]) + inversions(&mut v[mid..], &mut buf[mid..]);
    let (mut a, mut b, mut k) = (0, mid, 0);
    while a < mid && b < n {
        if v[a] <= v[b] {
            buf[k] = v[a];
            a += 1;
        } else {
            buf[k] = v[b];
            count += mid - a;
            b += 1;
        }
        k += 1;
    }
    buf[k..k + mid - a].copy_from_slice(&v[a..mid]);
    k += mid - a;
    buf[k..k + n - b].copy_from_slice(&v[b..n]);
    v.copy_from_slice(&buf[..n]);
    count
}
