//! Optimal variable orders by dynamic programming over predecessor sets.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use itertools::Itertools;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{StageId, StagedTree};
use crate::staging::{assemble_tree, check_order, mask_of, search_stratum, SearchOptions};

pub const DEFAULT_DP_LIMIT: usize = 20;
pub const EXHAUSTIVE_LIMIT: usize = 7;

/// Relative tolerance under which two order scores are reported as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CachedStratum {
    pub score: f64,
    /// Staging over contexts of the sorted predecessor set.
    pub stages: Vec<StageId>,
}

/// Write-once map `(variable, predecessor mask) → stratum result`.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<HashMap<(usize, u64), Arc<CachedStratum>>>,
    evaluations: AtomicUsize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct stratum searches performed.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, variable: usize, mask: u64) -> Option<Arc<CachedStratum>> {
        self.entries.read().unwrap().get(&(variable, mask)).cloned()
    }

    fn insert(&self, variable: usize, mask: u64, value: CachedStratum) -> Arc<CachedStratum> {
        let mut map = self.entries.write().unwrap();
        if let Some(existing) = map.get(&(variable, mask)) {
            return Arc::clone(existing);
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let value = Arc::new(value);
        map.insert((variable, mask), Arc::clone(&value));
        value
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderScore {
    pub order: Vec<usize>,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct DiscoveryResult {
    /// Data column indices in the selected order.
    pub order: Vec<usize>,
    pub tree: StagedTree,
    /// Sum of stratum BIC contributions along `order`.
    pub score: f64,
    /// Every order and its score (exhaustive mode only), in lexicographic order.
    pub all_orders: Option<Vec<OrderScore>>,
    /// Orders whose score ties the best within [`TIE_TOL`] (exhaustive mode only).
    pub tied_orders: Vec<Vec<usize>>,
}

/// Order search over one dataset, sharing a stratum cache between modes.
pub struct OrderSearch<'a> {
    data: &'a Dataset,
    options: SearchOptions,
    cache: ScoreCache,
    limit: usize,
}

impl<'a> OrderSearch<'a> {
    pub fn new(data: &'a Dataset, options: SearchOptions) -> Self {
        OrderSearch {
            data,
            options,
            cache: ScoreCache::new(),
            limit: DEFAULT_DP_LIMIT,
        }
    }

    pub fn with_limit(mut self, limit: usize) -> Self {
        self.limit = limit.min(63);
        self
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    /// Memoized stratum score of `variable` given the predecessor set `mask`.
    pub fn stratum_score(&self, variable: usize, mask: u64) -> Result<Arc<CachedStratum>> {
        if variable >= self.data.p() || mask >> self.data.p() != 0 {
            return Err(Error::InvalidOption(format!(
                "variable {variable} / predecessor mask {mask:#b} outside {} variables",
                self.data.p()
            )));
        }
        if let Some(hit) = self.cache.get(variable, mask) {
            return Ok(hit);
        }
        let result = search_stratum(self.data, variable, mask, &self.options)?;
        Ok(self.cache.insert(
            variable,
            mask,
            CachedStratum {
                score: result.score,
                stages: result.stages,
            },
        ))
    }

    /// Sum of cached stratum scores along `order`, accumulated left to right.
    pub fn order_score(&self, order: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (i, &v) in order.iter().enumerate() {
            total += self.stratum_score(v, mask_of(&order[..i]))?.score;
        }
        Ok(total)
    }

    fn tree_for(&self, order: &[usize]) -> Result<StagedTree> {
        let strata = order
            .iter()
            .enumerate()
            .map(|(i, &v)| self.stratum_score(v, mask_of(&order[..i])))
            .collect::<Result<Vec<_>>>()?;
        let canonical: Vec<&[StageId]> = strata.iter().map(|s| s.stages.as_slice()).collect();
        assemble_tree(self.data, order, &canonical, self.options.smoothing)
    }

    fn fill_cache(&self) -> Result<()> {
        let p = self.data.p();
        let keys: Vec<(usize, u64)> = (0..p)
            .flat_map(|v| {
                (0u64..1 << p)
                    .filter(move |m| m >> v & 1 == 0)
                    .map(move |m| (v, m))
            })
            .collect();
        keys.par_iter()
            .try_for_each(|&(v, m)| self.stratum_score(v, m).map(|_| ()))
    }

    /// Globally optimal order by dynamic programming over subsets:
    /// `best(S) = min_{i∈S} best(S∖{i}) + s(i, S∖{i})`, ties to the smallest `i`.
    pub fn best_order_dp(&self) -> Result<DiscoveryResult> {
        let p = self.data.p();
        if p > self.limit {
            return Err(Error::TooManyVariables {
                p,
                limit: self.limit,
            });
        }
        self.fill_cache()?;
        let full = (1usize << p) - 1;
        let mut best = vec![f64::INFINITY; full + 1];
        let mut last = vec![usize::MAX; full + 1];
        best[0] = 0.0;
        for set in 1..=full {
            for v in (0..p).filter(|v| set >> v & 1 == 1) {
                let rest = set & !(1 << v);
                let cand = best[rest] + self.stratum_score(v, rest as u64)?.score;
                if cand < best[set] {
                    best[set] = cand;
                    last[set] = v;
                }
            }
        }
        let mut order = Vec::with_capacity(p);
        let mut set = full;
        while set != 0 {
            let v = last[set];
            order.push(v);
            set &= !(1 << v);
        }
        order.reverse();
        Ok(DiscoveryResult {
            tree: self.tree_for(&order)?,
            score: best[full],
            order,
            all_orders: None,
            tied_orders: Vec::new(),
        })
    }

    /// Score every permutation; the minimum matches [`Self::best_order_dp`].
    pub fn best_order_exhaustive(&self) -> Result<DiscoveryResult> {
        let p = self.data.p();
        if p > EXHAUSTIVE_LIMIT {
            return Err(Error::TooManyVariables {
                p,
                limit: EXHAUSTIVE_LIMIT,
            });
        }
        self.fill_cache()?;
        let all: Vec<OrderScore> = (0..p)
            .permutations(p)
            .map(|order| {
                let score = self.order_score(&order)?;
                Ok(OrderScore { order, score })
            })
            .collect::<Result<_>>()?;
        let best = all
            .iter()
            .reduce(|a, b| if b.score < a.score { b } else { a })
            .expect("at least one order");
        let tol = TIE_TOL * best.score.abs().max(1.0);
        let tied_orders = all
            .iter()
            .filter(|o| o.score - best.score <= tol)
            .map(|o| o.order.clone())
            .collect();
        Ok(DiscoveryResult {
            tree: self.tree_for(&best.order)?,
            order: best.order.clone(),
            score: best.score,
            all_orders: Some(all.clone()),
            tied_orders,
        })
    }
}

pub fn best_order_dp(data: &Dataset, options: SearchOptions) -> Result<DiscoveryResult> {
    OrderSearch::new(data, options).best_order_dp()
}

pub fn best_order_exhaustive(data: &Dataset, options: SearchOptions) -> Result<DiscoveryResult> {
    OrderSearch::new(data, options).best_order_exhaustive()
}

/// Tree for a given order through the shared cache; `order` is checked.
pub fn fit_order_cached(search: &OrderSearch<'_>, order: &[usize]) -> Result<StagedTree> {
    check_order(search.data.p(), order)?;
    search.tree_for(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariableMeta;
    use crate::staging::Method;

    fn data3() -> Dataset {
        let vars = (0..3)
            .map(|i| VariableMeta::with_levels(format!("V{i}"), 2).unwrap())
            .collect();
        let rows: Vec<Vec<usize>> = (0..60)
            .map(|i| {
                let a = i % 2;
                let b = if i % 5 == 0 { 1 - a } else { a };
                vec![a, b, (i / 4) % 2]
            })
            .collect();
        Dataset::new(vars, &rows).unwrap()
    }

    #[test]
    fn empty_predecessors_give_one_stage() {
        let data = data3();
        let search = OrderSearch::new(&data, SearchOptions::new(Method::Bhc));
        assert_eq!(search.stratum_score(1, 0).unwrap().stages, vec![0]);
    }

    #[test]
    fn cache_is_keyed_by_set() {
        let data = data3();
        let search = OrderSearch::new(&data, SearchOptions::new(Method::Bhc));
        let a = search.stratum_score(2, 0b011).unwrap();
        let n = search.cache().evaluations();
        let b = search.stratum_score(2, mask_of(&[1, 0])).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(search.cache().evaluations(), n);
    }

    #[test]
    fn dp_counts_evaluations_and_matches_exhaustive() {
        let data = data3();
        let search = OrderSearch::new(&data, SearchOptions::new(Method::Bhc));
        let dp = search.best_order_dp().unwrap();
        assert_eq!(search.cache().evaluations(), 3 * 4);
        let ex = search.best_order_exhaustive().unwrap();
        assert_eq!(ex.all_orders.as_ref().unwrap().len(), 6);
        assert_eq!(dp.score, ex.score);
        assert!(ex.tied_orders.contains(&dp.order));
    }

    #[test]
    fn single_variable() {
        let data = Dataset::new(
            vec![VariableMeta::with_levels("A", 2).unwrap()],
            &[vec![0], vec![1]],
        )
        .unwrap();
        let ex = best_order_exhaustive(&data, SearchOptions::new(Method::Bhc)).unwrap();
        assert_eq!(ex.order, vec![0]);
        assert_eq!(ex.all_orders.unwrap().len(), 1);
    }

    #[test]
    fn limits() {
        let data = data3();
        let search = OrderSearch::new(&data, SearchOptions::new(Method::Bhc)).with_limit(2);
        assert!(matches!(
            search.best_order_dp(),
            Err(Error::TooManyVariables { p: 3, limit: 2 })
        ));
    }
}
