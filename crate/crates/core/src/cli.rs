//! Command-line driver.
//!
//! Configuration precedence for `generate`, highest first: environment
//! variables (`HYPOFORGE_MAX_CYCLES`, `HYPOFORGE_ACCEPT_THRESHOLD`,
//! `HYPOFORGE_EMIT_FLOOR`, `HYPOFORGE_CUTOFF`, `HYPOFORGE_SEED`), command-line
//! flags, the TOML config file, built-in defaults.
//!
//! Exit codes: 0 success, 1 error, 2 success with nothing to report (every
//! branch discarded).

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::embed::HashedEmbedder;
use crate::eval::{
    self, classification_metrics, comparison_interval, fit_bradley_terry, fit_davidson, fit_rasch_map,
    quasi_variances, quasi_variances_from_cov, temporal_similarity_eval, BtOptions, ComparisonRecord, EvalError,
    Identification, QvObjective, RaschData, RaschPriors,
};
use crate::kg::{retrieve_subgraph, serialize_subgraph, KgError, KnowledgeGraph, RetrievalLimits};
use crate::lit::{EutilsClient, InMemoryCorpus, LitError, LiteratureSource};
use crate::llm::{ChatBackend, Gateway, HttpBackend, LlmError, ScriptedBackend};
use crate::model::{Metric, PipelineConfig};
use crate::pipeline::{run_pipeline, PipelineError, Services};

pub const ENV_MAX_CYCLES: &str = "HYPOFORGE_MAX_CYCLES";
pub const ENV_ACCEPT_THRESHOLD: &str = "HYPOFORGE_ACCEPT_THRESHOLD";
pub const ENV_EMIT_FLOOR: &str = "HYPOFORGE_EMIT_FLOOR";
pub const ENV_CUTOFF: &str = "HYPOFORGE_CUTOFF";
pub const ENV_SEED: &str = "HYPOFORGE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("graph: {0}")]
    Kg(#[from] KgError),
    #[error("literature: {0}")]
    Lit(#[from] LitError),
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "hypoforge", version, about = "Grounded hypothesis generation and evaluation statistics")]
pub struct Cli {
    /// Seed for every randomised step; runs are reproducible under fixture backends
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, critique and refine hypotheses for a research topic
    Generate(GenerateArgs),
    /// Fit evaluation models to judgement data
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Import or query a knowledge graph
    #[command(subcommand)]
    Kg(KgCommand),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    /// Research topic or keyword phrase
    #[arg(long)]
    pub topic: String,
    /// TOML pipeline configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replay a fixture directory (llm/, graph.tsv, corpus.jsonl, config.toml) instead of live services
    #[arg(long, value_name = "DIR")]
    pub scripted: Option<PathBuf>,
    /// Knowledge graph TSV; defaults to graph.tsv in the fixture directory
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Literature corpus as JSON lines; defaults to corpus.jsonl in the fixture directory, PubMed otherwise
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Exclude literature published after this date
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub cutoff: Option<NaiveDate>,
    #[arg(long)]
    pub max_cycles: Option<u32>,
    #[arg(long)]
    pub accept_threshold: Option<u8>,
    #[arg(long)]
    pub emit_floor: Option<u8>,
    /// Directory for the run result and step trace
    #[arg(long, value_name = "DIR", default_value = "hypoforge-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QvMode {
    Variance,
    Log,
}

#[derive(Debug, Clone, Args)]
pub struct PairedArgs {
    /// Comparison CSV with columns first,second,metric,outcome
    #[arg(long)]
    pub input: PathBuf,
    /// Fit only this metric; by default every metric present is fitted
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Drop the presentation-order intercept
    #[arg(long)]
    pub no_order_effect: bool,
    /// Fix this system at zero instead of centring the abilities
    #[arg(long)]
    pub reference: Option<String>,
    /// Quasi-variance objective
    #[arg(long, value_enum, default_value = "variance")]
    pub qv: QvMode,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Bradley-Terry fit with quasi-variance comparison intervals; writes fits_<metric>.csv
    Bt(PairedArgs),
    /// Davidson fit with an explicit tie parameter; writes davidson_<metric>.csv
    Davidson(PairedArgs),
    /// Cumulative-probit rating model; writes rasch_fit.csv
    Rasch {
        /// Rating CSV with columns rater,hypothesis,metric,rating
        #[arg(long)]
        input: PathBuf,
        /// Number of rating categories; defaults to the largest rating seen
        #[arg(long)]
        k: Option<u8>,
        #[arg(long, default_value_t = 1.0)]
        sigma_u: f64,
        /// Prior sd of the hypothesis-on-metric effects; 0 drops them
        #[arg(long, default_value_t = 1.0)]
        sigma_v: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Embedding similarity of generated against gold hypotheses; writes similarity.csv
    Similarity {
        /// CSV with columns background,generated,gold
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Precision, recall and F1 for relation labels
    Metrics {
        /// CSV with columns predicted,truth
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Tsv,
    Primekg,
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Validate a graph file and report its size
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: GraphFormat,
        /// Write the validated graph as TSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieve the subgraph around seed entities
    Query {
        /// Graph TSV
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated node ids or names
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<String>,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Comma-separated relation types to keep
        #[arg(long, value_delimiter = ',')]
        relations: Vec<String>,
        #[arg(long, default_value_t = 20)]
        max_edges: usize,
        #[arg(long, default_value_t = 10)]
        max_paths: usize,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let env = |k: &str| std::env::var(k).ok();
    match execute(cli, &env, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, cli.seed, env, out),
        Command::Eval(cmd) => cmd_eval(cmd, out),
        Command::Kg(cmd) => cmd_kg(cmd, out),
    }
}

fn parse_env<T: std::str::FromStr>(env: &dyn Fn(&str) -> Option<String>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    env(key)
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| CliError::Config(format!("{key}=`{v}`: {e}")))
        })
        .transpose()
}

/// Layers defaults, the optional file, flags and environment overrides.
pub fn resolve_config(
    file: Option<PipelineConfig>,
    args: &GenerateArgs,
    seed: Option<u64>,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<PipelineConfig, CliError> {
    let mut c = file.unwrap_or_default();
    if let Some(v) = args.max_cycles {
        c.max_cycles = v;
    }
    if let Some(v) = args.accept_threshold {
        c.accept_threshold = v;
    }
    if let Some(v) = args.emit_floor {
        c.emit_floor = v;
    }
    if let Some(v) = args.cutoff {
        c.temporal_cutoff = Some(v);
    }
    if let Some(v) = seed {
        c.seed = v;
    }
    if let Some(v) = parse_env(env, ENV_MAX_CYCLES)? {
        c.max_cycles = v;
    }
    if let Some(v) = parse_env(env, ENV_ACCEPT_THRESHOLD)? {
        c.accept_threshold = v;
    }
    if let Some(v) = parse_env(env, ENV_EMIT_FLOOR)? {
        c.emit_floor = v;
    }
    if let Some(v) = parse_env(env, ENV_CUTOFF)? {
        c.temporal_cutoff = Some(v);
    }
    if let Some(v) = parse_env(env, ENV_SEED)? {
        c.seed = v;
    }
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

pub fn load_config_file(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cmd_generate(
    args: &GenerateArgs,
    seed: Option<u64>,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    if args.topic.trim().is_empty() {
        return Err(CliError::Usage("--topic must not be empty".into()));
    }
    let fixture = |name: &str| args.scripted.as_ref().map(|d| d.join(name)).filter(|p| p.exists());
    let config_path = args.config.clone().or_else(|| fixture("config.toml"));
    let file = config_path.as_deref().map(load_config_file).transpose()?;
    let config = resolve_config(file, args, seed, env)?;

    let backend: Arc<dyn ChatBackend> = match &args.scripted {
        Some(dir) => Arc::new(ScriptedBackend::from_dir(dir.join("llm"))?),
        None => Arc::new(HttpBackend::from_env()?),
    };
    let graph_path = args
        .graph
        .clone()
        .or_else(|| fixture("graph.tsv"))
        .ok_or_else(|| CliError::Usage("no knowledge graph: pass --graph <tsv>".into()))?;
    let graph = KnowledgeGraph::load_tsv_path(&graph_path)?;
    let literature: Box<dyn LiteratureSource> = match args.corpus.clone().or_else(|| fixture("corpus.jsonl")) {
        Some(p) => Box::new(InMemoryCorpus::from_jsonl_path(&p)?),
        None if args.scripted.is_some() => {
            return Err(CliError::Usage("scripted runs need a corpus: add corpus.jsonl or pass --corpus".into()))
        }
        None => Box::new(EutilsClient::from_env()),
    };
    let gateway = Gateway::new(backend)
        .with_temperature(config.temperature)
        .with_seed(Some(config.seed))
        .with_budget(config.token_budget);
    let embedder = HashedEmbedder::default();
    let services = Services {
        gateway: &gateway,
        graph: &graph,
        embedder: &embedder,
        literature: literature.as_ref(),
    };
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let outcome = run_pipeline(&args.topic, &config, services, Some(&args.out))?;
    let result = &outcome.result;
    let result_path = args.out.join(format!("{}.result.json", result.run_id));
    fs::write(&result_path, result.to_json()).map_err(io_err(&result_path))?;

    let w = |e| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    writeln!(out, "run {} on `{}`", result.run_id, result.topic).map_err(w)?;
    for (rank, o) in result.outputs.iter().enumerate() {
        let s = o.scores.as_array();
        writeln!(
            out,
            "{}. [{}/20] (N{} R{} S{} V{}) {}: {}",
            rank + 1,
            o.scores.overall(),
            s[0],
            s[1],
            s[2],
            s[3],
            o.hypothesis.id,
            o.hypothesis.text
        )
        .map_err(w)?;
    }
    for b in &result.branches {
        writeln!(
            out,
            "branch {}: {:?} after {} refinement(s), {} critic call(s)",
            b.branch, b.status, b.refinement_cycles, b.critic_calls
        )
        .map_err(w)?;
    }
    for warning in &result.warnings {
        writeln!(out, "warning: {warning}").map_err(w)?;
    }
    writeln!(out, "tokens: {} in, {} out", result.tokens_in, result.tokens_out).map_err(w)?;
    writeln!(out, "result: {}", result_path.display()).map_err(w)?;
    if let Some(t) = &result.trace_path {
        writeln!(out, "trace: {}", t.display()).map_err(w)?;
    }
    Ok(if result.outputs.is_empty() { EXIT_EMPTY } else { EXIT_OK })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn create(path: &Path) -> Result<File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map_err(io_err(path))
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn bt_options(args: &PairedArgs) -> BtOptions {
    let mut o = if args.no_order_effect {
        BtOptions::without_order_effect()
    } else {
        BtOptions::default()
    };
    if let Some(r) = &args.reference {
        o.identification = Identification::Reference(r.clone());
    }
    o
}

fn by_metric(records: Vec<ComparisonRecord>, only: Option<Metric>) -> Result<Vec<(Metric, Vec<ComparisonRecord>)>, CliError> {
    let metrics: BTreeSet<Metric> = records.iter().map(|r| r.metric).collect();
    let groups: Vec<_> = metrics
        .into_iter()
        .filter(|m| only.map_or(true, |o| o == *m))
        .map(|m| (m, records.iter().filter(|r| r.metric == m).cloned().collect()))
        .collect();
    if groups.is_empty() {
        return Err(CliError::Usage("no comparisons for the requested metric".into()));
    }
    Ok(groups)
}

fn qv_objective(mode: QvMode) -> QvObjective {
    match mode {
        QvMode::Variance => QvObjective::Variance,
        QvMode::Log => QvObjective::Log,
    }
}

fn cmd_eval(cmd: EvalCommand, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        EvalCommand::Bt(args) => {
            let records = eval::io::read_comparisons(open(&args.input)?)?;
            for (metric, recs) in by_metric(records, args.metric)? {
                let fit = fit_bradley_terry(&recs, &bt_options(&args))?;
                let qv = quasi_variances(&fit, qv_objective(args.qv))?;
                let name = metric.name().to_lowercase();
                let path = args.out.join(format!("fits_{name}.csv"));
                eval::io::write_fits(create(&path)?, &fit, &qv)?;
                writeln!(out, "{} ({} comparisons)", metric.name(), recs.len()).map_err(stdout_err)?;
                for s in &fit.systems {
                    let (lo, hi) = comparison_interval(&fit, &qv, s).unwrap_or((f64::NAN, f64::NAN));
                    writeln!(
                        out,
                        "  {s}: beta {:.4} se {:.4} qv {:.5} ci95 [{lo:.4}, {hi:.4}]",
                        fit.beta[s],
                        fit.se(s).unwrap_or(f64::NAN),
                        qv.q[s]
                    )
                    .map_err(stdout_err)?;
                }
                if let Some(a) = fit.alpha {
                    writeln!(out, "  order effect alpha {a:.4} se {:.4}", fit.alpha_se().unwrap_or(f64::NAN))
                        .map_err(stdout_err)?;
                }
                writeln!(out, "  max |qv relative error| {:.2e}", qv.max_abs_relative_error()).map_err(stdout_err)?;
                for w in fit.warnings.iter().chain(&qv.notes) {
                    writeln!(out, "  note: {w}").map_err(stdout_err)?;
                }
                writeln!(out, "  wrote {}", path.display()).map_err(stdout_err)?;
            }
            Ok(EXIT_OK)
        }
        EvalCommand::Davidson(args) => {
            let records = eval::io::read_comparisons(open(&args.input)?)?;
            for (metric, recs) in by_metric(records, args.metric)? {
                let fit = fit_davidson(&recs, &bt_options(&args))?;
                let n = fit.systems.len();
                let cov = fit.vcov.view((0, 0), (n, n)).into_owned();
                let qv = quasi_variances_from_cov(&fit.systems, &cov, qv_objective(args.qv))?;
                let path = args.out.join(format!("davidson_{}.csv", metric.name().to_lowercase()));
                let mut w = csv::Writer::from_writer(create(&path)?);
                w.write_record(eval::io::FIT_HEADER).map_err(EvalError::from)?;
                writeln!(out, "{} ({} comparisons), tie parameter nu {:.4}", metric.name(), recs.len(), fit.nu)
                    .map_err(stdout_err)?;
                for s in &fit.systems {
                    let (b, q) = (fit.beta[s], qv.q[s]);
                    let half = 1.959963984540054 * q.sqrt();
                    w.write_record([s.clone(), b.to_string(), q.to_string(), (b - half).to_string(), (b + half).to_string()])
                        .map_err(EvalError::from)?;
                    writeln!(out, "  {s}: beta {b:.4} qv {q:.5}").map_err(stdout_err)?;
                }
                w.flush().map_err(io_err(&path))?;
                if let Some(a) = fit.alpha {
                    writeln!(out, "  order effect alpha {a:.4}").map_err(stdout_err)?;
                }
                for note in &fit.warnings {
                    writeln!(out, "  note: {note}").map_err(stdout_err)?;
                }
                writeln!(out, "  wrote {}", path.display()).map_err(stdout_err)?;
            }
            Ok(EXIT_OK)
        }
        EvalCommand::Rasch {
            input,
            k,
            sigma_u,
            sigma_v,
            out: dir,
        } => {
            let ratings = eval::io::read_ratings(open(&input)?)?;
            let k = k.unwrap_or_else(|| ratings.iter().map(|r| r.rating).max().unwrap_or(2));
            let priors = RaschPriors {
                sigma_u,
                sigma_v: (sigma_v > 0.0).then_some(sigma_v),
                ..RaschPriors::default()
            };
            let fit = fit_rasch_map(&RaschData { ratings, k }, priors)?;
            let path = dir.join("rasch_fit.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["parameter", "estimate", "se"]).map_err(EvalError::from)?;
            for p in &fit.laplace_se {
                w.write_record([p.name.clone(), p.estimate.to_string(), p.se.to_string()])
                    .map_err(EvalError::from)?;
            }
            w.flush().map_err(io_err(&path))?;
            let taus: Vec<String> = fit.tau.iter().map(|t| format!("{t:.4}")).collect();
            writeln!(out, "thresholds: {}", taus.join(" < ")).map_err(stdout_err)?;
            for (m, b) in &fit.beta_m {
                writeln!(out, "metric {}: {b:.4}", m.name()).map_err(stdout_err)?;
            }
            for (r, u) in &fit.u {
                writeln!(out, "rater {r}: {u:.4}").map_err(stdout_err)?;
            }
            writeln!(out, "log posterior {:.4}, converged {}", fit.logpost, fit.converged).map_err(stdout_err)?;
            for note in &fit.warnings {
                writeln!(out, "note: {note}").map_err(stdout_err)?;
            }
            writeln!(out, "wrote {}", path.display()).map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
        EvalCommand::Similarity { input, out: dir } => {
            let pairs = eval::io::read_similarity_pairs(open(&input)?)?;
            let report = temporal_similarity_eval(&pairs, &HashedEmbedder::default())?;
            let path = dir.join("similarity.csv");
            eval::io::write_similarity(create(&path)?, &report)?;
            writeln!(out, "matched median {:.4} over {} pairs", report.matched_median, report.matched.len())
                .map_err(stdout_err)?;
            match report.null_median {
                Some(m) => writeln!(out, "null median {m:.4} over {} pairs", report.null.len()),
                None => writeln!(out, "null median unavailable (fewer than two backgrounds)"),
            }
            .map_err(stdout_err)?;
            writeln!(out, "wrote {}", path.display()).map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
        EvalCommand::Metrics { input } => {
            let (pred, truth) = eval::io::read_labels(open(&input)?)?;
            let r = classification_metrics(&pred, &truth)?;
            for (class, m) in &r.per_class {
                writeln!(
                    out,
                    "{}: precision {:.4} recall {:.4} f1 {:.4} support {}",
                    class.as_str(),
                    m.precision,
                    m.recall,
                    m.f1,
                    m.support
                )
                .map_err(stdout_err)?;
            }
            writeln!(
                out,
                "macro: precision {:.4} recall {:.4} f1 {:.4}",
                r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1
            )
            .map_err(stdout_err)?;
            writeln!(out, "accuracy {:.4}", r.accuracy).map_err(stdout_err)?;
            writeln!(
                out,
                "confusion (rows truth, columns predicted; positive, negative): {:?}",
                r.confusion
            )
            .map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
    }
}

fn cmd_kg(cmd: KgCommand, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        KgCommand::Import { input, format, out: dest } => {
            let graph = match format {
                GraphFormat::Tsv => KnowledgeGraph::load_tsv_path(&input)?,
                GraphFormat::Primekg => KnowledgeGraph::import_primekg_path(&input)?,
            };
            writeln!(out, "{} nodes, {} edges", graph.node_count(), graph.edge_count()).map_err(stdout_err)?;
            if let Some(dest) = dest {
                graph.write_tsv(create(&dest)?)?;
                writeln!(out, "wrote {}", dest.display()).map_err(stdout_err)?;
            }
            Ok(EXIT_OK)
        }
        KgCommand::Query {
            graph,
            seeds,
            depth,
            relations,
            max_edges,
            max_paths,
        } => {
            let g = KnowledgeGraph::load_tsv_path(&graph)?;
            let ids = seeds
                .iter()
                .map(|s| {
                    if g.contains(s) {
                        Ok(s.clone())
                    } else {
                        g.find_by_name(s)
                            .map(|n| n.node_id.clone())
                            .ok_or_else(|| CliError::Kg(KgError::UnknownSeed(s.clone())))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let filter = (!relations.is_empty()).then(|| relations.into_iter().collect());
            let sg = retrieve_subgraph(&g, &ids, depth, &filter, RetrievalLimits { max_edges, max_paths })?;
            writeln!(out, "{}", serialize_subgraph(&sg)).map_err(stdout_err)?;
            Ok(if sg.is_empty() { EXIT_EMPTY } else { EXIT_OK })
        }
    }
}
