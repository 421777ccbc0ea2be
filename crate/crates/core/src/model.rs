//! Staged-tree data types.
//!
//! Vertices of a stratified, X-compatible staged tree are never materialized.
//! A vertex at depth `d` is identified with its context, the assignment of the
//! first `d` variables of the order, and each stratum stores one stage id per
//! context in lexicographic (mixed-radix, first variable most significant)
//! order.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StageId = u32;

/// Tolerance used when checking that a probability vector sums to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A categorical variable: a name and its ordered level labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    pub levels: Vec<String>,
}

impl VariableMeta {
    pub fn new(name: impl Into<String>, levels: Vec<String>) -> Result<Self> {
        let var = VariableMeta {
            name: name.into(),
            levels,
        };
        if let Some(reason) = var.problem() {
            return Err(Error::InvalidVariable {
                name: var.name,
                reason,
            });
        }
        Ok(var)
    }

    /// Variable with levels labelled `0..n_levels`.
    pub fn with_levels(name: impl Into<String>, n_levels: usize) -> Result<Self> {
        Self::new(name, (0..n_levels).map(|l| l.to_string()).collect())
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    fn problem(&self) -> Option<String> {
        if self.levels.len() < 2 {
            return Some(format!("needs at least 2 levels, got {}", self.levels.len()));
        }
        let mut seen = HashSet::new();
        for l in &self.levels {
            if !seen.insert(l.as_str()) {
                return Some(format!("duplicate level `{l}`"));
            }
        }
        None
    }
}

/// Assignment of level indices to the first `depth` variables of an order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Context(pub Vec<usize>);

impl Context {
    pub fn root() -> Self {
        Context(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Context {
    fn from(v: Vec<usize>) -> Self {
        Context(v)
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Number of joint assignments of variables with the given level counts.
pub fn context_count(levels: &[usize]) -> usize {
    levels.iter().product()
}

/// Mixed-radix index of `ctx`, first coordinate most significant.
pub fn context_index(levels: &[usize], ctx: &[usize]) -> Option<usize> {
    if ctx.len() > levels.len() {
        return None;
    }
    let mut idx = 0usize;
    for (&x, &l) in ctx.iter().zip(levels) {
        if x >= l {
            return None;
        }
        idx = idx * l + x;
    }
    Some(idx)
}

/// Inverse of [`context_index`] for contexts of length `levels.len()`.
pub fn context_at(levels: &[usize], mut index: usize) -> Context {
    let mut out = vec![0; levels.len()];
    for (slot, &l) in out.iter_mut().zip(levels).rev() {
        *slot = index % l;
        index /= l;
    }
    Context(out)
}

/// Relabel stage ids densely, in order of first appearance.
pub fn canonical_stage_ids(ids: &[StageId]) -> Vec<StageId> {
    let mut map = std::collections::HashMap::new();
    ids.iter()
        .map(|id| {
            let next = map.len() as StageId;
            *map.entry(*id).or_insert(next)
        })
        .collect()
}

/// One stage id per context, per stratum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staging {
    strata: Vec<Vec<StageId>>,
}

impl Staging {
    pub fn new(strata: Vec<Vec<StageId>>) -> Self {
        Staging { strata }
    }

    pub fn saturated(levels: &[usize]) -> Self {
        let strata = (0..levels.len())
            .map(|i| (0..context_count(&levels[..i]) as StageId).collect())
            .collect();
        Staging { strata }
    }

    pub fn independent(levels: &[usize]) -> Self {
        let strata = (0..levels.len())
            .map(|i| vec![0; context_count(&levels[..i])])
            .collect();
        Staging { strata }
    }

    pub fn strata(&self) -> &[Vec<StageId>] {
        &self.strata
    }

    pub fn stratum(&self, depth: usize) -> &[StageId] {
        &self.strata[depth]
    }

    pub fn depth(&self) -> usize {
        self.strata.len()
    }

    pub fn n_stages(&self, depth: usize) -> usize {
        self.strata[depth]
            .iter()
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn into_strata(self) -> Vec<Vec<StageId>> {
        self.strata
    }
}

/// Per depth, per stage, a probability vector over the levels of the variable.
pub type Params = Vec<Vec<Vec<f64>>>;

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InvalidVariable { name: String, reason: String },
    DuplicateVariable { name: String },
    StrataCount { expected: usize, found: usize },
    StagingNotTotal { depth: usize, expected: usize, found: usize },
    NonDenseStageIds { depth: usize, missing: Vec<StageId> },
    ParamStrataCount { expected: usize, found: usize },
    ParamStageCount { depth: usize, expected: usize, found: usize },
    VectorLength { depth: usize, stage: StageId, expected: usize, found: usize },
    SimplexSum { depth: usize, stage: StageId, sum: f64 },
    EntryOutOfRange { depth: usize, stage: StageId, value: f64 },
    NotInterior { depth: usize, stage: StageId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidVariable { name, reason } => {
                write!(f, "variable `{name}`: {reason}")
            }
            Violation::DuplicateVariable { name } => write!(f, "duplicate variable `{name}`"),
            Violation::StrataCount { expected, found } => {
                write!(f, "expected {expected} strata, found {found}")
            }
            Violation::StagingNotTotal {
                depth,
                expected,
                found,
            } => write!(
                f,
                "staging not total at depth {depth}: {found} of {expected} contexts assigned"
            ),
            Violation::NonDenseStageIds { depth, missing } => {
                write!(f, "non-dense stage ids at depth {depth}: unused {missing:?}")
            }
            Violation::ParamStrataCount { expected, found } => {
                write!(f, "expected parameters for {expected} strata, found {found}")
            }
            Violation::ParamStageCount {
                depth,
                expected,
                found,
            } => write!(
                f,
                "depth {depth}: expected {expected} stage vectors, found {found}"
            ),
            Violation::VectorLength {
                depth,
                stage,
                expected,
                found,
            } => write!(
                f,
                "depth {depth} stage {stage}: vector length {found}, expected {expected}"
            ),
            Violation::SimplexSum { depth, stage, sum } => {
                write!(f, "simplex sum ≠ 1 at depth {depth} stage {stage}: {sum}")
            }
            Violation::EntryOutOfRange {
                depth,
                stage,
                value,
            } => write!(
                f,
                "depth {depth} stage {stage}: probability {value} outside [0,1]"
            ),
            Violation::NotInterior { depth, stage } => write!(
                f,
                "depth {depth} stage {stage}: tree declared interior but vector has 0 or 1"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A stratified, X-compatible staged tree.
#[derive(Clone, Debug, PartialEq)]
pub struct StagedTree {
    vars: Vec<VariableMeta>,
    staging: Staging,
    params: Option<Params>,
    interior: bool,
}

impl StagedTree {
    /// Build a tree without parameters, rejecting invalid stagings.
    pub fn new(vars: Vec<VariableMeta>, staging: Staging) -> Result<Self> {
        Self::from_parts_unchecked(vars, staging, None, false).checked()
    }

    /// Build a tree from raw parts without validation; see [`validate_tree`].
    pub fn from_parts_unchecked(
        vars: Vec<VariableMeta>,
        staging: Staging,
        params: Option<Params>,
        interior: bool,
    ) -> Self {
        StagedTree {
            vars,
            staging,
            params,
            interior,
        }
    }

    pub fn saturated(vars: Vec<VariableMeta>) -> Result<Self> {
        let levels: Vec<usize> = vars.iter().map(VariableMeta::n_levels).collect();
        Self::new(vars, Staging::saturated(&levels))
    }

    pub fn independent(vars: Vec<VariableMeta>) -> Result<Self> {
        let levels: Vec<usize> = vars.iter().map(VariableMeta::n_levels).collect();
        Self::new(vars, Staging::independent(&levels))
    }

    /// Attach parameters. `interior` declares every entry to lie in (0,1).
    pub fn with_params(mut self, params: Params, interior: bool) -> Result<Self> {
        self.params = Some(params);
        self.interior = interior;
        self.checked()
    }

    pub fn without_params(&self) -> Self {
        StagedTree {
            vars: self.vars.clone(),
            staging: self.staging.clone(),
            params: None,
            interior: false,
        }
    }

    fn checked(self) -> Result<Self> {
        let report = validate_tree(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidTree(report.to_string()))
        }
    }

    pub fn vars(&self) -> &[VariableMeta] {
        &self.vars
    }

    pub fn p(&self) -> usize {
        self.vars.len()
    }

    /// Variable names in tree order.
    pub fn order(&self) -> Vec<&str> {
        self.vars.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.vars.iter().map(VariableMeta::n_levels).collect()
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn staging(&self) -> &Staging {
        &self.staging
    }

    pub fn params(&self) -> Option<&Params> {
        self.params.as_ref()
    }

    pub fn is_interior(&self) -> bool {
        self.interior
    }

    pub fn n_stages(&self, depth: usize) -> usize {
        self.staging.n_stages(depth)
    }

    /// Number of contexts at `depth` (1 at the root).
    pub fn n_contexts(&self, depth: usize) -> usize {
        self.vars[..depth].iter().map(VariableMeta::n_levels).product()
    }

    /// All contexts of the given depth in lexicographic order.
    pub fn contexts(&self, depth: usize) -> Result<Vec<Context>> {
        if depth > self.p() {
            return Err(Error::DepthOutOfRange {
                depth,
                p: self.p(),
            });
        }
        let levels = &self.levels()[..depth];
        Ok((0..context_count(levels))
            .map(|i| context_at(levels, i))
            .collect())
    }

    pub fn context_index(&self, ctx: &[usize]) -> Option<usize> {
        context_index(&self.levels(), ctx)
    }

    pub fn stage_of(&self, ctx: &[usize]) -> Result<StageId> {
        let depth = ctx.len();
        let unknown = || Error::UnknownContext {
            depth,
            context: ctx.to_vec(),
        };
        if depth >= self.p() {
            return Err(unknown());
        }
        let idx = self.context_index(ctx).ok_or_else(unknown)?;
        self.staging
            .strata
            .get(depth)
            .and_then(|s| s.get(idx))
            .copied()
            .ok_or_else(unknown)
    }

    pub fn stage_vector(&self, depth: usize, stage: StageId) -> Result<&[f64]> {
        let params = self.params.as_ref().ok_or(Error::MissingParams)?;
        params
            .get(depth)
            .and_then(|d| d.get(stage as usize))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidTree(format!("no vector for stage {stage} at depth {depth}")))
    }

    /// Free parameters: sum over strata of stages × (levels − 1).
    pub fn df(&self) -> usize {
        (0..self.p())
            .map(|i| self.n_stages(i) * (self.vars[i].n_levels() - 1))
            .sum()
    }
}

/// Report every violated structural or parametric invariant of `tree`.
pub fn validate_tree(tree: &StagedTree) -> ValidationReport {
    let mut violations = Vec::new();
    let mut names = HashSet::new();
    for v in &tree.vars {
        if let Some(reason) = v.problem() {
            violations.push(Violation::InvalidVariable {
                name: v.name.clone(),
                reason,
            });
        }
        if !names.insert(v.name.as_str()) {
            violations.push(Violation::DuplicateVariable {
                name: v.name.clone(),
            });
        }
    }

    let p = tree.p();
    let strata = tree.staging.strata();
    if strata.len() != p {
        violations.push(Violation::StrataCount {
            expected: p,
            found: strata.len(),
        });
    }
    let mut n_stages = Vec::with_capacity(p);
    for (depth, stratum) in strata.iter().enumerate().take(p) {
        let expected = tree.n_contexts(depth);
        if stratum.len() != expected {
            violations.push(Violation::StagingNotTotal {
                depth,
                expected,
                found: stratum.len(),
            });
        }
        let m = stratum.iter().max().map_or(0, |&m| m as usize + 1);
        let mut used = vec![false; m];
        for &s in stratum {
            used[s as usize] = true;
        }
        let missing: Vec<StageId> = used
            .iter()
            .enumerate()
            .filter(|(_, &u)| !u)
            .map(|(s, _)| s as StageId)
            .collect();
        if !missing.is_empty() {
            violations.push(Violation::NonDenseStageIds { depth, missing });
        }
        n_stages.push(m);
    }

    if let Some(params) = &tree.params {
        if params.len() != n_stages.len() {
            violations.push(Violation::ParamStrataCount {
                expected: n_stages.len(),
                found: params.len(),
            });
        }
        for (depth, (vectors, &m)) in params.iter().zip(&n_stages).enumerate() {
            if vectors.len() != m {
                violations.push(Violation::ParamStageCount {
                    depth,
                    expected: m,
                    found: vectors.len(),
                });
            }
            let l = tree.vars[depth].n_levels();
            for (s, vec) in vectors.iter().enumerate() {
                let stage = s as StageId;
                if vec.len() != l {
                    violations.push(Violation::VectorLength {
                        depth,
                        stage,
                        expected: l,
                        found: vec.len(),
                    });
                }
                let sum: f64 = vec.iter().sum();
                if !((sum - 1.0).abs() <= SIMPLEX_TOL) {
                    violations.push(Violation::SimplexSum { depth, stage, sum });
                }
                for &value in vec {
                    if !(0.0..=1.0).contains(&value) {
                        violations.push(Violation::EntryOutOfRange {
                            depth,
                            stage,
                            value,
                        });
                    }
                }
                if tree.interior && vec.iter().any(|&x| x <= 0.0 || x >= 1.0) {
                    violations.push(Violation::NotInterior { depth, stage });
                }
            }
        }
    }
    ValidationReport { violations }
}
