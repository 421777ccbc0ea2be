//! Simulation grid: random trees, sampled data, order discovery, and recovery metrics.
//!
//! Every (cell, repetition) draws its true tree, sample, column shuffle and
//! search seed from the master seed:
//!
//! ```text
//! tree_seed    = derive_seed(seed, [0, rep, p, k, l])
//! data_seed    = derive_seed(seed, [1, rep, p, k, l, n])
//! shuffle_seed = derive_seed(seed, [2, rep, p, k, l, n])
//! search_seed  = derive_seed(seed, [3, rep, p, k, l, n])
//! ```
//!
//! so the true tree of a repetition is shared across sample sizes and all
//! methods see the same data. Results are written sorted by grid position,
//! which makes the CSV independent of scheduling. Wall-clock times go to a
//! separate `*.timing.csv` file so the results file is bit-reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{cid, kendall_distance};
use crate::order::{best_order_dp, DEFAULT_DP_LIMIT};
use crate::probability::sample;
use crate::randgen::{random_staged_tree, shuffle_variables, GenConfig};
use crate::rng::derive_seed;
use crate::staging::{Method, SearchOptions};

pub const DESK_REPS: usize = 20;
pub const FULL_REPS: usize = 100;

/// Column names of the results file, in order.
pub const RESULT_COLUMNS: [&str; 11] = [
    "p", "k", "l", "n", "rep", "method", "cid", "kendall", "bic", "tree_seed", "data_seed",
];

const TIMING_COLUMNS: [&str; 7] = ["p", "k", "l", "n", "rep", "method", "seconds"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Bhc,
    Kmeans,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Bhc => "bhc",
            MethodName::Kmeans => "kmeans",
        }
    }
}

fn default_p() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn default_k() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_l() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_n() -> Vec<usize> {
    vec![100, 250, 500, 1000, 2500, 5000, 10000]
}
fn default_reps() -> usize {
    DESK_REPS
}
fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Bhc, MethodName::Kmeans]
}
fn default_kmeans_k() -> usize {
    Method::DEFAULT_K
}
fn default_restarts() -> usize {
    Method::DEFAULT_RESTARTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_p")]
    pub p: Vec<usize>,
    /// Stages per stratum of the true trees.
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    /// Levels per variable.
    #[serde(default = "default_l")]
    pub l: Vec<usize>,
    /// Sample sizes.
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub seed: u64,
    /// Clusters used by the k-means method.
    #[serde(default = "default_kmeans_k")]
    pub kmeans_k: usize,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: default_p(),
            k: default_k(),
            l: default_l(),
            n: default_n(),
            reps: default_reps(),
            methods: default_methods(),
            seed: 0,
            kmeans_k: default_kmeans_k(),
            kmeans_restarts: default_restarts(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_yaml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_yaml::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_yaml_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_yaml_str(&fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidOption(format!("experiment config: {msg}")));
        if self.p.is_empty() || self.k.is_empty() || self.l.is_empty() || self.n.is_empty() {
            return bad("every grid axis needs at least one value");
        }
        if self.methods.is_empty() {
            return bad("no methods");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.p.iter().any(|&p| p == 0 || p > DEFAULT_DP_LIMIT) {
            return bad("p must lie in 1..=20");
        }
        if self.l.iter().any(|&l| l < 2) || self.k.contains(&0) || self.n.contains(&0) {
            return bad("need l ≥ 2, k ≥ 1, n ≥ 1");
        }
        for axis in [&self.p, &self.k, &self.l, &self.n] {
            if axis.iter().collect::<BTreeSet<_>>().len() != axis.len() {
                return bad("repeated grid value");
            }
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("repeated method");
        }
        if self.kmeans_k == 0 || self.kmeans_restarts == 0 {
            return bad("kmeans_k and kmeans_restarts must be at least 1");
        }
        Ok(())
    }

    /// Rows of a complete run.
    pub fn n_rows(&self) -> usize {
        self.p.len() * self.k.len() * self.l.len() * self.n.len() * self.reps * self.methods.len()
    }

    fn method(&self, name: MethodName) -> Method {
        match name {
            MethodName::Bhc => Method::Bhc,
            MethodName::Kmeans => Method::Kmeans {
                k: self.kmeans_k,
                restarts: self.kmeans_restarts,
            },
        }
    }

    fn tasks(&self) -> Vec<Task> {
        let mut tasks = Vec::new();
        for &p in &self.p {
            for &k in &self.k {
                for &l in &self.l {
                    for &n in &self.n {
                        for rep in 0..self.reps {
                            tasks.push(Task { p, k, l, n, rep });
                        }
                    }
                }
            }
        }
        tasks
    }

    fn key(&self, t: Task, method: MethodName) -> Option<RowKey> {
        let find = |axis: &[usize], v: usize| axis.iter().position(|&x| x == v);
        Some((
            find(&self.p, t.p)?,
            find(&self.k, t.k)?,
            find(&self.l, t.l)?,
            find(&self.n, t.n)?,
            (t.rep < self.reps).then_some(t.rep)?,
            self.methods.iter().position(|&m| m == method)?,
        ))
    }
}

type RowKey = (usize, usize, usize, usize, usize, usize);

#[derive(Clone, Copy, Debug)]
struct Task {
    p: usize,
    k: usize,
    l: usize,
    n: usize,
    rep: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub p: usize,
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub rep: usize,
    pub method: MethodName,
    /// CID of the estimate against the true tree.
    pub cid: f64,
    /// Kendall distance between the estimated and true orders.
    pub kendall: usize,
    pub bic: f64,
    pub tree_seed: u64,
    pub data_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub p: usize,
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub rep: usize,
    pub method: MethodName,
    pub seconds: f64,
}

impl Task {
    fn of(row: &ResultRow) -> Task {
        Task {
            p: row.p,
            k: row.k,
            l: row.l,
            n: row.n,
            rep: row.rep,
        }
    }
}

fn run_task(cfg: &ExperimentConfig, t: Task) -> Result<Vec<(ResultRow, f64)>> {
    let keys = [t.rep as u64, t.p as u64, t.k as u64, t.l as u64, t.n as u64];
    let tree_seed = derive_seed(cfg.seed, &[0, keys[0], keys[1], keys[2], keys[3]]);
    let data_seed = derive_seed(cfg.seed, &[&[1], &keys[..]].concat());
    let shuffle_seed = derive_seed(cfg.seed, &[&[2], &keys[..]].concat());
    let search_seed = derive_seed(cfg.seed, &[&[3], &keys[..]].concat());

    let truth = random_staged_tree(&GenConfig::new(t.p, t.l, t.k, tree_seed)?)?;
    let data = sample(&truth, t.n, data_seed)?;
    let (shuffled, perm) = shuffle_variables(&data, shuffle_seed);
    let true_order: Vec<usize> = (0..t.p).collect();

    cfg.methods
        .iter()
        .map(|&name| {
            let start = Instant::now();
            let options = SearchOptions::new(cfg.method(name)).with_seed(search_seed);
            let found = best_order_dp(&shuffled, options)?;
            let seconds = start.elapsed().as_secs_f64();
            let estimated: Vec<usize> = found.order.iter().map(|&c| perm[c]).collect();
            let row = ResultRow {
                p: t.p,
                k: t.k,
                l: t.l,
                n: t.n,
                rep: t.rep,
                method: name,
                cid: cid(&truth, &found.tree)?.total,
                kendall: kendall_distance(&estimated, &true_order)?,
                bic: found.score,
                tree_seed,
                data_seed,
            };
            Ok((row, seconds))
        })
        .collect()
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidOption(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Run the whole grid in memory; rows come back in grid order.
pub fn run_rows(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    cfg.check()?;
    let tasks = cfg.tasks();
    let rows = with_pool(threads, || {
        tasks
            .par_iter()
            .map(|&t| run_task(cfg, t))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(rows.into_iter().flatten().map(|(r, _)| r).collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub total_rows: usize,
    pub computed_rows: usize,
    pub reused_rows: usize,
}

pub fn timing_path(out: &Path) -> PathBuf {
    out.with_extension("timing.csv")
}

pub fn meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

#[derive(Serialize, Deserialize)]
struct Meta {
    tool: String,
    version: String,
    config: ExperimentConfig,
    columns: Vec<String>,
    generator: BTreeMap<String, String>,
}

fn meta(cfg: &ExperimentConfig) -> Meta {
    let generator = [
        ("staging", "uniform over surjective maps onto min(k, #contexts) stages"),
        ("params", "Dirichlet(1) per stage, clamped at 1e-12"),
        ("rng", "ChaCha8 seeded by SplitMix64-folded keys"),
        (
            "seeds",
            "tree [0,rep,p,k,l]; data [1,rep,p,k,l,n]; shuffle [2,…]; search [3,…]",
        ),
        ("search", "dynamic programming over predecessor sets, BIC"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    Meta {
        tool: "stagecause".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        columns: RESULT_COLUMNS.iter().map(|s| s.to_string()).collect(),
        generator,
    }
}

/// Rows already on disk. A truncated final record from an interrupted run is dropped.
fn read_existing<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let records: Vec<_> = reader.deserialize::<T>().collect();
    let n = records.len();
    let mut rows = Vec::with_capacity(n);
    for (i, rec) in records.into_iter().enumerate() {
        match rec {
            Ok(r) => rows.push(r),
            Err(_) if i + 1 == n => {}
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 2,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(rows)
}

fn write_all<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&tmp)?));
        if rows.is_empty() {
            w.write_record(header)?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn append<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Run the grid into `out`, skipping rows already present there.
///
/// Rows are appended batch by batch while running; the file is rewritten in
/// grid order at the end. Timing goes to [`timing_path`], provenance to
/// [`meta_path`].
pub fn run_to_file(cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<RunSummary> {
    cfg.check()?;
    let meta_file = meta_path(out);
    if meta_file.exists() {
        let previous: Meta = serde_json::from_str(&fs::read_to_string(&meta_file)?)?;
        if previous.config != *cfg {
            return Err(Error::InvalidOption(format!(
                "{} was produced with a different configuration",
                out.display()
            )));
        }
    }
    crate::io::write_json_path(&meta_file, &meta(cfg))?;

    let timing_file = timing_path(out);
    let mut done: BTreeMap<RowKey, ResultRow> = BTreeMap::new();
    for row in read_existing::<ResultRow>(out)? {
        let key = cfg.key(Task::of(&row), row.method).ok_or_else(|| {
            Error::InvalidOption(format!("{} holds rows outside the grid", out.display()))
        })?;
        done.insert(key, row);
    }
    let mut timing: BTreeMap<RowKey, TimingRow> = BTreeMap::new();
    for t in read_existing::<TimingRow>(&timing_file)? {
        let task = Task {
            p: t.p,
            k: t.k,
            l: t.l,
            n: t.n,
            rep: t.rep,
        };
        if let Some(key) = cfg.key(task, t.method) {
            timing.insert(key, t);
        }
    }
    let reused_rows = done.len();
    // rewrite what was kept so a truncated tail does not linger
    write_all(out, &RESULT_COLUMNS, &done.values().cloned().collect::<Vec<_>>())?;

    let pending: Vec<Task> = cfg
        .tasks()
        .into_iter()
        .filter(|&t| {
            cfg.methods
                .iter()
                .any(|&m| !done.contains_key(&cfg.key(t, m).expect("grid row")))
        })
        .collect();

    let batch = rayon::current_num_threads().max(threads.unwrap_or(1)) * 4;
    let mut computed_rows = 0;
    for chunk in pending.chunks(batch) {
        let results = with_pool(threads, || {
            chunk
                .par_iter()
                .map(|&t| run_task(cfg, t))
                .collect::<Result<Vec<_>>>()
        })??;
        let mut new_rows = Vec::new();
        let mut new_timing = Vec::new();
        for (row, seconds) in results.into_iter().flatten() {
            let key = cfg.key(Task::of(&row), row.method).expect("grid row");
            if done.contains_key(&key) {
                continue;
            }
            new_timing.push(TimingRow {
                p: row.p,
                k: row.k,
                l: row.l,
                n: row.n,
                rep: row.rep,
                method: row.method,
                seconds,
            });
            timing.insert(key, new_timing.last().unwrap().clone());
            new_rows.push(row.clone());
            done.insert(key, row);
        }
        computed_rows += new_rows.len();
        append(out, &new_rows)?;
        append(&timing_file, &new_timing)?;
    }

    write_all(out, &RESULT_COLUMNS, &done.values().cloned().collect::<Vec<_>>())?;
    write_all(&timing_file, &TIMING_COLUMNS, &timing.values().cloned().collect::<Vec<_>>())?;
    Ok(RunSummary {
        total_rows: done.len(),
        computed_rows,
        reused_rows,
    })
}
