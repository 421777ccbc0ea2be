use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stagecause::convert::{binary_vars, consensus_pdag, dag_to_staged_tree, staged_tree_to_minimal_dag};
use stagecause::experiment::{self, ExperimentConfig, FULL_REPS};
use stagecause::graph::{DagJson, PdagJson};
use stagecause::io::{read_tree_path, tree_to_json_string, write_json_path, ModelJson};
use stagecause::metrics::{cid, cid_vs_sid, kendall_distance, sid_pairs};
use stagecause::order::OrderSearch;
use stagecause::probability::{bic, fit_mle, sample};
use stagecause::randgen::{random_dag_uniform, random_staged_tree, GenConfig};
use stagecause::{Dag, Dataset, Method, SearchOptions, StagedTree, VariableMeta};

#[derive(Parser)]
#[command(name = "stagecause", version, about = "Causal discovery with staged event trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the best variable order and staging for a CSV dataset.
    Discover(DiscoverArgs),
    /// Fit a staged tree for a given order or a given structure.
    Fit(FitArgs),
    /// Sample rows from a model.
    Sample(SampleArgs),
    /// Generate a random staged tree or DAG.
    Generate(GenerateArgs),
    /// CID between a reference model and an estimate.
    Cid(CidArgs),
    /// SID between a reference DAG and an estimate.
    Sid(SidArgs),
    /// Kendall distance between two orders.
    Kendall(KendallArgs),
    /// Convert between staged trees and DAGs.
    #[command(subcommand)]
    Convert(ConvertCommand),
    /// Run the simulation grid or the CID/SID comparison.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bhc,
    Kmeans,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dp,
    Exhaustive,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value = "bhc")]
    method: MethodArg,
    /// Clusters for k-means.
    #[arg(long, default_value_t = Method::DEFAULT_K)]
    k: usize,
    /// k-means restarts.
    #[arg(long, default_value_t = Method::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pseudo-count added when fitting the final parameters.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
}

impl SearchArgs {
    fn options(&self) -> SearchOptions {
        let method = match self.method {
            MethodArg::Bhc => Method::Bhc,
            MethodArg::Kmeans => Method::Kmeans {
                k: self.k,
                restarts: self.restarts,
            },
        };
        SearchOptions::new(method)
            .with_seed(self.seed)
            .with_smoothing(self.smoothing)
    }
}

#[derive(Args)]
struct DiscoverArgs {
    data: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_enum, default_value = "dp")]
    mode: ModeArg,
    /// Model JSON output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run report JSON output; printed to stderr when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    data: PathBuf,
    /// Comma-separated variable names; defaults to the CSV column order.
    #[arg(long, conflicts_with = "structure")]
    order: Option<String>,
    /// Model JSON whose order and staging are kept; only parameters are fitted.
    #[arg(long)]
    structure: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    model: PathBuf,
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Tree,
    Dag,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "tree")]
    kind: KindArg,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// Stages per stratum.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CidArgs {
    reference: PathBuf,
    estimate: PathBuf,
}

#[derive(Args)]
struct SidArgs {
    reference: PathBuf,
    estimate: PathBuf,
}

#[derive(Args)]
struct KendallArgs {
    /// Comma-separated order, or a file holding one.
    a: String,
    b: String,
}

#[derive(Subcommand)]
enum ConvertCommand {
    /// Minimal DAG of a staged tree.
    TreeToDag {
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Staged tree of a DAG over variables with `levels` levels each.
    DagToTree {
        dag: PathBuf,
        /// Comma-separated topological order; defaults to the smallest-first one.
        #[arg(long)]
        order: Option<String>,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Consensus PDAG of several DAGs.
    Consensus {
        #[arg(required = true)]
        dags: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// YAML grid configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use 100 repetitions.
    #[arg(long)]
    paper: bool,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Compare CID with SID on random DAG pairs instead of running the grid.
    #[arg(long)]
    cid_sid: bool,
    #[arg(long, default_value_t = 500)]
    pairs: usize,
    /// Variables per DAG in the CID/SID comparison.
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long)]
    out: PathBuf,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                writeln!(stdout)?;
            }
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_data(path: &Path) -> Result<Dataset> {
    Dataset::from_csv_path(path).with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> Result<StagedTree> {
    read_tree_path(path).with_context(|| format!("reading {}", path.display()))
}

fn read_dag(path: &Path) -> Result<Dag> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json: DagJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Dag::try_from(&json)?)
}

fn split_names(list: &str) -> Vec<String> {
    list.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn columns(data: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| data.column_index(n).ok_or_else(|| anyhow!("no column named `{n}`")))
        .collect()
}

#[derive(Serialize)]
struct DiscoverReport {
    mode: &'static str,
    method: &'static str,
    order: Vec<String>,
    score: f64,
    df: usize,
    n: usize,
    stratum_evaluations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    tied_orders: Vec<Vec<String>>,
}

fn discover(args: DiscoverArgs) -> Result<()> {
    let data = read_data(&args.data)?;
    let options = args.search.options();
    let search = OrderSearch::new(&data, options);
    let result = match args.mode {
        ModeArg::Dp => search.best_order_dp()?,
        ModeArg::Exhaustive => search.best_order_exhaustive()?,
    };
    let names = |order: &[usize]| -> Vec<String> {
        order.iter().map(|&c| data.vars()[c].name.clone()).collect()
    };
    let report = DiscoverReport {
        mode: match args.mode {
            ModeArg::Dp => "dp",
            ModeArg::Exhaustive => "exhaustive",
        },
        method: options.method.name(),
        order: names(&result.order),
        score: result.score,
        df: result.tree.df(),
        n: data.n_rows(),
        stratum_evaluations: search.cache().evaluations(),
        tied_orders: result.tied_orders.iter().map(|o| names(o)).collect(),
    };
    let mut model = ModelJson::from(&result.tree);
    model.meta = Some(serde_json::json!({ "score": result.score, "method": report.method }));
    emit(args.out.as_deref(), &to_json(&model)?)?;
    match &args.report {
        Some(path) => emit(Some(path), &to_json(&report)?),
        None => {
            eprint!("{}", to_json(&report)?);
            Ok(())
        }
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let data = read_data(&args.data)?;
    let tree = if let Some(path) = &args.structure {
        let structure = read_model(path)?;
        fit_mle(&structure, &data, args.search.smoothing)?
    } else {
        let order = match &args.order {
            Some(list) => columns(&data, &split_names(list))?,
            None => (0..data.p()).collect(),
        };
        stagecause::fit_order(&data, &order, &args.search.options())?
    };
    let mut model = ModelJson::from(&tree);
    if let Ok(score) = bic(&tree, &data) {
        model.meta = Some(serde_json::json!({ "bic": score.bic, "df": score.df }));
    }
    emit(args.out.as_deref(), &to_json(&model)?)
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let tree = read_model(&args.model)?;
    let data = sample(&tree, args.n, args.seed)?;
    match &args.out {
        Some(path) => data.write_csv_path(path)?,
        None => data.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let text = match args.kind {
        KindArg::Tree => {
            let cfg = GenConfig::new(args.p, args.levels, args.k, args.seed)?;
            let tree = random_staged_tree(&cfg)?;
            let mut model = ModelJson::from(&tree);
            model.meta = Some(serde_json::to_value(cfg)?);
            to_json(&model)?
        }
        KindArg::Dag => to_json(&DagJson::from(&random_dag_uniform(args.p, args.seed)))?,
    };
    emit(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct SidReport {
    sid: usize,
    wrong_pairs: Vec<[String; 2]>,
}

fn sid_cmd(args: SidArgs) -> Result<()> {
    let g = read_dag(&args.reference)?;
    let h = read_dag(&args.estimate)?;
    let pairs = sid_pairs(&g, &h)?;
    let report = SidReport {
        sid: pairs.len(),
        wrong_pairs: pairs
            .iter()
            .map(|&(i, j)| [g.names()[i].clone(), g.names()[j].clone()])
            .collect(),
    };
    emit(None, &to_json(&report)?)
}

fn read_order(arg: &str) -> Result<Vec<String>> {
    let path = Path::new(arg);
    if path.is_file() {
        Ok(split_names(&fs::read_to_string(path)?))
    } else {
        Ok(split_names(arg))
    }
}

fn convert(cmd: ConvertCommand) -> Result<()> {
    match cmd {
        ConvertCommand::TreeToDag { model, out } => {
            let dag = staged_tree_to_minimal_dag(&read_model(&model)?);
            emit(out.as_deref(), &to_json(&DagJson::from(&dag))?)
        }
        ConvertCommand::DagToTree {
            dag,
            order,
            levels,
            out,
        } => {
            let g = read_dag(&dag)?;
            let order = match order {
                Some(list) => split_names(&list)
                    .iter()
                    .map(|n| {
                        g.names()
                            .iter()
                            .position(|m| m == n)
                            .ok_or_else(|| anyhow!("no node named `{n}`"))
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => g.topological_order().expect("acyclic"),
            };
            let vars = if levels == 2 {
                binary_vars(&g)
            } else {
                g.names()
                    .iter()
                    .map(|n| VariableMeta::with_levels(n.clone(), levels))
                    .collect::<stagecause::Result<Vec<_>>>()?
            };
            let tree = dag_to_staged_tree(&g, &order, &vars)?;
            emit(out.as_deref(), &tree_to_json_string(&tree)?)
        }
        ConvertCommand::Consensus { dags, out } => {
            let graphs = dags.iter().map(|p| read_dag(p)).collect::<Result<Vec<_>>>()?;
            let pdag = consensus_pdag(&graphs)?;
            emit(out.as_deref(), &to_json(&PdagJson::from(&pdag))?)
        }
    }
}

fn experiment_cmd(args: ExperimentArgs) -> Result<()> {
    if args.cid_sid {
        let seed = args.seed.unwrap_or(0);
        let table = cid_vs_sid(args.pairs, args.p, seed)?;
        let file = fs::File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
        table.write_csv(io::BufWriter::new(file))?;
        let summary_path = args.out.with_extension("summary.json");
        let summary = serde_json::json!({
            "tool": "stagecause",
            "version": env!("CARGO_PKG_VERSION"),
            "summary": table.summary,
        });
        write_json_path(&summary_path, &summary)?;
        eprintln!(
            "pearson {:.4}, spearman {:.4} over {} pairs",
            table.summary.pearson, table.summary.spearman, table.summary.pairs
        );
        return Ok(());
    }
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_yaml_path(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if args.paper {
        cfg.reps = FULL_REPS;
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let summary = experiment::run_to_file(&cfg, &args.out, None)?;
    eprintln!(
        "{} rows ({} computed, {} reused) in {}",
        summary.total_rows,
        summary.computed_rows,
        summary.reused_rows,
        args.out.display()
    );
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("STAGECAUSE_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| anyhow!("STAGECAUSE_THREADS must be a positive integer, got `{value}`"))?;
        if n == 0 {
            bail!("STAGECAUSE_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Discover(a) => discover(a),
        Command::Fit(a) => fit(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Generate(a) => generate(a),
        Command::Cid(a) => {
            let report = cid(&read_model(&a.reference)?, &read_model(&a.estimate)?)?;
            emit(None, &to_json(&report)?)
        }
        Command::Sid(a) => sid_cmd(a),
        Command::Kendall(a) => {
            let d = kendall_distance(&read_order(&a.a)?, &read_order(&a.b)?)?;
            emit(None, &d.to_string())
        }
        Command::Convert(c) => convert(c),
        Command::Experiment(a) => experiment_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
