//! Categorical datasets and contingency counts.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::model::{context_count, VariableMeta};

/// Upper bound on contexts in one contingency table.
pub const MAX_STRATUM_CONTEXTS: usize = 1 << 24;

/// Placeholder level added to columns that only ever take one value.
pub const UNOBSERVED_LEVEL: &str = "__unobserved__";

/// Counts of one variable against every joint assignment of a predecessor set.
///
/// Contexts are ordered by mixed radix over `predecessors` sorted ascending,
/// so the table only depends on the set, never on an order.
#[derive(Clone, Debug, PartialEq)]
pub struct StratumCounts {
    pub variable: usize,
    pub predecessors: Vec<usize>,
    pub context_levels: Vec<usize>,
    pub levels: usize,
    /// Row-major `n_contexts × levels`.
    pub counts: Vec<u64>,
    /// Dataset size N, used by the BIC penalty.
    pub n_total: usize,
}

impl StratumCounts {
    /// Build from explicit per-context count vectors.
    pub fn from_rows(rows: &[Vec<u64>], n_total: usize) -> Self {
        let levels = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == levels), "ragged count rows");
        StratumCounts {
            variable: 0,
            predecessors: Vec::new(),
            context_levels: vec![rows.len()],
            levels,
            counts: rows.concat(),
            n_total,
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.counts.len() / self.levels.max(1)
    }

    pub fn row(&self, ctx: usize) -> &[u64] {
        &self.counts[ctx * self.levels..(ctx + 1) * self.levels]
    }

    pub fn context_total(&self, ctx: usize) -> u64 {
        self.row(ctx).iter().sum()
    }
}

/// Column-labelled categorical observations.
pub struct Dataset {
    vars: Vec<VariableMeta>,
    n_rows: usize,
    cells: Vec<u16>,
    counts: RwLock<HashMap<(usize, u64), Arc<StratumCounts>>>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            vars: self.vars.clone(),
            n_rows: self.n_rows,
            cells: self.cells.clone(),
            counts: RwLock::new(HashMap::new()),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.n_rows == other.n_rows && self.cells == other.cells
    }
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("vars", &self.vars)
            .field("n_rows", &self.n_rows)
            .finish()
    }
}

impl Dataset {
    pub fn new(vars: Vec<VariableMeta>, rows: &[Vec<usize>]) -> Result<Self> {
        let p = vars.len();
        let mut cells = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Parse {
                    line: r + 1,
                    message: format!("expected {p} values, got {}", row.len()),
                });
            }
            for (c, &x) in row.iter().enumerate() {
                if x >= vars[c].n_levels() {
                    return Err(Error::Parse {
                        line: r + 1,
                        message: format!("level {x} out of range for `{}`", vars[c].name),
                    });
                }
                cells.push(x as u16);
            }
        }
        Self::from_cells(vars, rows.len(), cells)
    }

    fn from_cells(vars: Vec<VariableMeta>, n_rows: usize, cells: Vec<u16>) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::NoRows);
        }
        if vars.iter().any(|v| v.n_levels() > u16::MAX as usize) {
            return Err(Error::InvalidOption("more than 65535 levels".into()));
        }
        Ok(Dataset {
            vars,
            n_rows,
            cells,
            counts: RwLock::new(HashMap::new()),
        })
    }

    pub fn vars(&self) -> &[VariableMeta] {
        &self.vars
    }

    pub fn p(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn row(&self, r: usize) -> &[u16] {
        &self.cells[r * self.p()..(r + 1) * self.p()]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.cells.chunks_exact(self.p().max(1))
    }

    pub fn value(&self, r: usize, c: usize) -> usize {
        self.cells[r * self.p() + c] as usize
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Column indices of `names`, erroring on unknown names or level mismatch.
    pub fn columns_for(&self, vars: &[VariableMeta]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|v| {
                let c = self.column_index(&v.name).ok_or_else(|| {
                    Error::VariableMismatch(format!("variable `{}` not in data", v.name))
                })?;
                if self.vars[c].levels != v.levels {
                    return Err(Error::VariableMismatch(format!(
                        "levels of `{}` differ between model and data",
                        v.name
                    )));
                }
                Ok(c)
            })
            .collect()
    }

    /// New dataset whose column `j` is column `columns[j]` of this one.
    pub fn select_columns(&self, columns: &[usize]) -> Dataset {
        let vars = columns.iter().map(|&c| self.vars[c].clone()).collect();
        let mut cells = Vec::with_capacity(self.n_rows * columns.len());
        for row in self.rows() {
            cells.extend(columns.iter().map(|&c| row[c]));
        }
        Dataset {
            vars,
            n_rows: self.n_rows,
            cells,
            counts: RwLock::new(HashMap::new()),
        }
    }

    /// Contingency table of `variable` against the predecessor set `mask`.
    ///
    /// Cached per `(variable, mask)`.
    pub fn stratum_counts(&self, variable: usize, mask: u64) -> Result<Arc<StratumCounts>> {
        if self.p() > 64 {
            return Err(Error::TooManyVariables {
                p: self.p(),
                limit: 64,
            });
        }
        if mask & (1u64 << variable) != 0 {
            return Err(Error::InvalidOption(format!(
                "variable {variable} is in its own predecessor set"
            )));
        }
        if let Some(hit) = self.counts.read().unwrap().get(&(variable, mask)) {
            return Ok(Arc::clone(hit));
        }
        let predecessors: Vec<usize> = (0..self.p()).filter(|&j| mask >> j & 1 == 1).collect();
        let counts = Arc::new(self.count_contexts(variable, &predecessors)?);
        let mut cache = self.counts.write().unwrap();
        Ok(Arc::clone(cache.entry((variable, mask)).or_insert(counts)))
    }

    /// Counts with contexts over `predecessors` in the given (not sorted) order.
    pub fn count_contexts(&self, variable: usize, predecessors: &[usize]) -> Result<StratumCounts> {
        let context_levels: Vec<usize> = predecessors
            .iter()
            .map(|&j| self.vars[j].n_levels())
            .collect();
        let n_ctx = context_levels
            .iter()
            .fold(1usize, |acc, &l| acc.saturating_mul(l));
        if n_ctx > MAX_STRATUM_CONTEXTS {
            return Err(Error::StratumTooLarge { contexts: n_ctx });
        }
        let levels = self.vars[variable].n_levels();
        let mut counts = vec![0u64; n_ctx * levels];
        for row in self.rows() {
            let mut ctx = 0usize;
            for (&j, &l) in predecessors.iter().zip(&context_levels) {
                ctx = ctx * l + row[j] as usize;
            }
            counts[ctx * levels + row[variable] as usize] += 1;
        }
        Ok(StratumCounts {
            variable,
            predecessors: predecessors.to_vec(),
            context_levels,
            levels,
            counts,
            n_total: self.n_rows,
        })
    }

    /// Read a CSV with a header of variable names and level labels as values.
    ///
    /// Levels are the distinct labels of each column, sorted numerically when
    /// every label is an integer and lexicographically otherwise. A column
    /// with a single observed label gets [`UNOBSERVED_LEVEL`] as second level.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let (names, records) = read_records(reader)?;
        let vars = names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let labels: BTreeSet<&str> = records.iter().map(|(_, r)| r[c].as_str()).collect();
                let mut levels: Vec<String> = labels.into_iter().map(String::from).collect();
                if levels.iter().all(|l| l.parse::<i64>().is_ok()) {
                    levels.sort_by_key(|l| l.parse::<i64>().unwrap());
                }
                if levels.len() == 1 {
                    levels.push(UNOBSERVED_LEVEL.to_string());
                }
                VariableMeta::new(name.clone(), levels)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(vars, &names, &records)
    }

    /// Read a CSV whose columns must match `vars` by name; labels must be known levels.
    pub fn from_csv_with_vars<R: Read>(reader: R, vars: &[VariableMeta]) -> Result<Self> {
        let (names, records) = read_records(reader)?;
        Self::from_records(vars.to_vec(), &names, &records)
    }

    fn from_records(
        vars: Vec<VariableMeta>,
        names: &[String],
        records: &[(usize, Vec<String>)],
    ) -> Result<Self> {
        let columns: Vec<usize> = vars
            .iter()
            .map(|v| {
                names.iter().position(|n| *n == v.name).ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("missing column `{}`", v.name),
                })
            })
            .collect::<Result<_>>()?;
        let mut cells = Vec::with_capacity(records.len() * vars.len());
        for (line, record) in records {
            for (var, &c) in vars.iter().zip(&columns) {
                let label = &record[c];
                let x = var.level_index(label).ok_or_else(|| Error::Parse {
                    line: *line,
                    message: format!("unknown level `{label}` for `{}`", var.name),
                })?;
                cells.push(x as u16);
            }
        }
        Self::from_cells(vars, records.len(), cells)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.vars.iter().map(|v| v.name.as_str()))?;
        for row in self.rows() {
            w.write_record(
                row.iter()
                    .zip(&self.vars)
                    .map(|(&x, v)| v.levels[x as usize].as_str()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Number of cells in the full contingency table.
    pub fn table_size(&self) -> usize {
        context_count(&self.vars.iter().map(VariableMeta::n_levels).collect::<Vec<_>>())
    }
}

type Records = (Vec<String>, Vec<(usize, Vec<String>)>);

fn read_records<R: Read>(reader: R) -> Result<Records> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut iter = rdr.records();
    let header = match iter.next() {
        None => return Err(Error::NoRows),
        Some(h) => h.map_err(|e| csv_parse_error(e, 1))?,
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.iter().any(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "empty column name".into(),
        });
    }
    let mut records = Vec::new();
    for (i, rec) in iter.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_parse_error(e, line))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != names.len() {
            return Err(Error::Parse {
                line: rec.position().map_or(line, |p| p.line() as usize),
                message: format!("expected {} fields, got {}", names.len(), rec.len()),
            });
        }
        records.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    if records.is_empty() {
        return Err(Error::NoRows);
    }
    Ok((names, records))
}

fn csv_parse_error(e: csv::Error, line: usize) -> Error {
    let line = e.position().map_or(line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
