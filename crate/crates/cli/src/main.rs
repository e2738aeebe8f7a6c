//! `edgepoison` command line: dataset conversion, synthetic graphs, attacks,
//! victim evaluation, diagnostics and homophily traces.
//!
//! Failures print `{"error": <kind>, "message": <text>}` on stderr and exit
//! with status 1 (2 for unparseable arguments).

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use edgepoison::attack::{dice_attack, run_attack_with, AttackConfig, AttackMethod, LossKind};
use edgepoison::diagnostics::{
    interclass_fraction, homophily_trajectory, lemma1_gcn_trials, lpa_report, random_connected_graph,
    smoothing_trace, LpaScenario,
};
use edgepoison::graph::generate_sbm;
use edgepoison::io;
use edgepoison::rng::{self, streams};
use edgepoison::victim::evaluate_victim_labeled;
use edgepoison::{Architecture, Error, Graph, LabelData, Result};
use serde::Serialize;

const OUT_ENV: &str = "EDGEPOISON_OUT";
const RUN_LOG: &str = "run.log";
const RUN_CONFIG: &str = "run_config.json";

#[derive(Parser, Debug)]
#[command(name = "edgepoison", version, about = "Edge-flip poisoning attacks on graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a LINQS directory (*.content, *.cites) into a bundle.
    Ingest {
        raw: PathBuf,
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Write a stochastic block model bundle.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        p_intra: f64,
        #[arg(long)]
        p_inter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Poison a bundle; writes a poisoned bundle with its trace.
    Attack(AttackArgs),
    /// Retrain GCN victims on a clean or poisoned bundle.
    Evaluate {
        bundle: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical checks of the analytical claims.
    Diagnose {
        #[command(subcommand)]
        which: Diagnose,
        /// Also write the report to this file.
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Homophily dynamics of a trace as CSV (iter,h_gt,h_pseudo,lower_limit,upper_limit).
    Trace {
        perturbations: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct OutArg {
    /// Output directory; defaults to `$EDGEPOISON_OUT/<command>` or
    /// `./edgepoison-out/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn resolve(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("edgepoison-out"))
                .join(command)
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum SurrogateArg {
    Gcn,
    Multihop,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum LossArg {
    Ce,
    Restricted,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Saliency,
    Dice,
}

#[derive(Args, Debug, Clone)]
struct AttackArgs {
    bundle: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    budget_fraction: f64,
    /// Exact number of flips; overrides --budget-fraction.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = SurrogateArg::Multihop)]
    surrogate: SurrogateArg,
    #[arg(long, value_enum, default_value_t = LossArg::Ce)]
    loss: LossArg,
    #[arg(long, default_value_t = 1)]
    retrain_every: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Saliency)]
    method: MethodArg,
    /// Surrogate training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand, Debug)]
enum Diagnose {
    /// Discrete versus gradient ranking on GCN adjacency slices.
    Lemma1 {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 1e-3)]
        delta_a: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Distance shrinkage and its per-step rate under repeated aggregation.
    Theorem1 {
        /// Use this bundle's graph and features instead of random graphs.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        graphs: usize,
        #[arg(long, default_value_t = 20)]
        n_min: usize,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        #[arg(long, default_value_t = 0.15)]
        p: f64,
        #[arg(long, default_value_t = 200)]
        tau: usize,
        #[arg(long, default_value_t = 100)]
        shrink_tau: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Label-propagation toy model.
    Lpa {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        delta: f64,
    },
    /// Addition/removal and inter/intra statistics of a trace.
    Interclass { trace: PathBuf },
}

/// Resolved attack configuration, echoed into the output directory.
#[derive(Debug, Serialize)]
struct RunConfig {
    subcommand: &'static str,
    dataset: PathBuf,
    method: MethodArg,
    budget_fraction: f64,
    budget: usize,
    epsilon: f64,
    surrogate: SurrogateArg,
    loss: LossArg,
    retrain_every: usize,
    seed: u64,
    split_seed: u64,
    output: PathBuf,
    attack: AttackConfig,
}

struct RunLog {
    file: fs::File,
}

impl RunLog {
    fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_LOG);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| Error::Io { path, source })?;
        Ok(Self { file })
    }

    fn line(&mut self, message: &str) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let _ = writeln!(self.file, "{}.{:03} {message}", now.as_secs(), now.subsec_millis());
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Write to stdout; a closed pipe (`| head`) ends output quietly.
fn print_stdout(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    print_stdout(&(text + "\n"))?;
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        io::write_json(path, value)?;
    }
    Ok(())
}

fn ingest(raw: &Path, bundle: &Path, split_seed: u64) -> Result<()> {
    create_dir(bundle)?;
    let summary = io::ingest_linqs(raw, bundle, split_seed)?;
    emit(&summary, None)
}

fn synth(n: usize, k: usize, p_intra: f64, p_inter: f64, seed: u64, out: &Path) -> Result<()> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("need 1 <= k ({k}) <= n ({n})")));
    }
    let (graph, labels) = generate_sbm(n, k, p_intra, p_inter, seed)?;
    create_dir(out)?;
    io::save_dataset(out, &graph, &labels, seed)?;
    #[derive(Serialize)]
    struct SynthConfig {
        n: usize,
        k: usize,
        p_intra: f64,
        p_inter: f64,
        seed: u64,
        feature_noise: f64,
        edges: usize,
    }
    let config = SynthConfig {
        n,
        k,
        p_intra,
        p_inter,
        seed,
        feature_noise: edgepoison::graph::SBM_FEATURE_NOISE,
        edges: graph.edge_count(),
    };
    io::write_json(&out.join(io::CONFIG_FILE), &config)?;
    emit(&config, None)
}

fn attack_config(args: &AttackArgs) -> Result<AttackConfig> {
    let arch = match args.surrogate {
        SurrogateArg::Gcn => Architecture::Gcn,
        SurrogateArg::Multihop => Architecture::Multihop,
    };
    let mut config = AttackConfig::new(arch, args.seed);
    config.budget_fraction = args.budget_fraction;
    config.budget = args.budget;
    config.epsilon = args.epsilon;
    config.loss = match args.loss {
        LossArg::Ce => LossKind::Ce,
        LossArg::Restricted => LossKind::Restricted,
    };
    config.retrain_every = args.retrain_every;
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    config.validate()?;
    Ok(config)
}

fn attack(args: &AttackArgs) -> Result<()> {
    let config = attack_config(args)?;
    let (graph, labels) = io::load_dataset_with_seed(&args.bundle, args.split_seed)?;
    let out = args.out.resolve("attack");
    create_dir(&out)?;
    let budget = config.budget_for(graph.edge_count());
    let run = RunConfig {
        subcommand: "attack",
        dataset: args.bundle.clone(),
        method: args.method,
        budget_fraction: args.budget_fraction,
        budget,
        epsilon: args.epsilon,
        surrogate: args.surrogate,
        loss: args.loss,
        retrain_every: args.retrain_every,
        seed: args.seed,
        split_seed: args.split_seed,
        output: out.clone(),
        attack: config.clone(),
    };
    io::write_json(&out.join(RUN_CONFIG), &run)?;
    let mut log = RunLog::open(&out)?;
    log.line(&format!("attack start: {} flips on {} edges", budget, graph.edge_count()));
    let (poisoned, trace) = match args.method {
        MethodArg::Saliency => run_attack_with(&graph, &labels, &config, |r| {
            log.line(&format!(
                "iter {} {} ({}, {}) h_pseudo {:.6} lambda2 {:.4}",
                r.iter,
                r.action.as_str(),
                r.i,
                r.j,
                r.h_pseudo,
                r.lambda2
            ))
        })?,
        MethodArg::Dice => {
            let mut result = dice_attack(&graph, &labels, budget, args.seed)?;
            result.1.config = config.clone();
            result
        }
    };
    io::save_poisoned(&out, &graph, &poisoned, &labels, &trace, args.split_seed)?;
    log.line("attack done");
    let stats = interclass_fraction(&trace);
    #[derive(Serialize)]
    struct Summary<'a> {
        output: &'a Path,
        method: AttackMethod,
        flips: usize,
        clean_edges: usize,
        poisoned_edges: usize,
        clean_h_gt: f64,
        final_h_gt: f64,
        addition_fraction: f64,
        inter_fraction_of_additions: f64,
    }
    emit(
        &Summary {
            output: &out,
            method: trace.method,
            flips: trace.len(),
            clean_edges: graph.edge_count(),
            poisoned_edges: poisoned.edge_count(),
            clean_h_gt: trace.clean_h_gt,
            final_h_gt: trace.records.last().map_or(trace.clean_h_gt, |r| r.h_gt),
            addition_fraction: stats.addition_fraction,
            inter_fraction_of_additions: stats.inter_fraction_pseudo,
        },
        None,
    )
}

fn load_for_eval(bundle: &Path) -> Result<(Graph, LabelData, String)> {
    if bundle.join(io::PERTURBATIONS_FILE).exists() {
        let b = io::load_poisoned(bundle)?;
        let name = format!("poisoned:{}", io::edge_hash(&b.poisoned));
        Ok((b.poisoned, b.labels, name))
    } else {
        let (g, l) = io::load_dataset(bundle)?;
        Ok((g, l, "clean".into()))
    }
}

fn evaluate(bundle: &Path, runs: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    if runs == 0 {
        return Err(Error::InvalidConfig("--runs must be >= 1".into()));
    }
    let (graph, labels, name) = load_for_eval(bundle)?;
    let report = evaluate_victim_labeled(&graph, &labels, runs, seed, &name)?;
    emit(&report, out)
}

#[derive(Serialize)]
struct SmoothingSummary {
    graph: usize,
    n: usize,
    edges: usize,
    limit_target: f64,
    features_regenerated: bool,
    shrinks: bool,
    collapsed_pairs: usize,
    transient_kappa_error: f64,
    raw_kappa_error: f64,
}

#[derive(Serialize)]
struct Theorem1Report {
    tau: usize,
    shrink_tau: usize,
    graphs: Vec<SmoothingSummary>,
    all_shrink: bool,
    graphs_within_1e3: usize,
}

fn summarize(idx: usize, graph: &Graph, x: &ndarray::Array2<f64>, tau: usize, shrink_tau: usize, seed: u64) -> Result<SmoothingSummary> {
    let steps = tau.max(shrink_tau) + 1;
    let t = smoothing_trace(graph, x, steps, None, seed)?;
    Ok(SmoothingSummary {
        graph: idx,
        n: graph.n_nodes(),
        edges: graph.edge_count(),
        limit_target: t.limit_target,
        features_regenerated: t.features_regenerated,
        shrinks: t.shrinks_at(shrink_tau),
        collapsed_pairs: t.collapsed_pairs(tau).len(),
        transient_kappa_error: t.transient_kappa_error(tau),
        raw_kappa_error: t.raw_kappa_error(tau),
    })
}

fn diagnose(which: &Diagnose, out: Option<&Path>) -> Result<()> {
    match which {
        Diagnose::Lemma1 {
            trials,
            dim,
            delta_a,
            seed,
        } => emit(&lemma1_gcn_trials(*trials, *dim, *delta_a, *seed)?, out),
        Diagnose::Lpa { n1, n2, delta } => emit(&lpa_report(&LpaScenario::new(*n1, *n2, *delta)?), out),
        Diagnose::Interclass { trace } => emit(&interclass_fraction(&io::load_trace(trace)?), out),
        Diagnose::Theorem1 {
            bundle,
            graphs,
            n_min,
            n_max,
            p,
            tau,
            shrink_tau,
            seed,
        } => {
            let mut summaries = Vec::new();
            if let Some(bundle) = bundle {
                let (g, _) = io::load_dataset(bundle)?;
                let x = g.features().to_dense();
                summaries.push(summarize(0, &g, &x, *tau, *shrink_tau, *seed)?);
            } else {
                if *n_min < 3 || n_min > n_max {
                    return Err(Error::InvalidConfig(format!("need 3 <= n_min ({n_min}) <= n_max ({n_max})")));
                }
                let mut r = rng::substream(*seed, streams::DIAGNOSTICS, 1);
                for idx in 0..*graphs {
                    use rand_distr::{Distribution, StandardNormal};
                    let n = rand::Rng::random_range(&mut r, *n_min..=*n_max);
                    let g = random_connected_graph(n, *p, &mut r)?;
                    let x = ndarray::Array2::from_shape_simple_fn((n, 8), || StandardNormal.sample(&mut r));
                    summaries.push(summarize(idx, &g, &x, *tau, *shrink_tau, *seed)?);
                }
            }
            let report = Theorem1Report {
                tau: *tau,
                shrink_tau: *shrink_tau,
                all_shrink: summaries.iter().all(|s| s.shrinks),
                graphs_within_1e3: summaries.iter().filter(|s| s.transient_kappa_error < 1e-3).count(),
                graphs: summaries,
            };
            emit(&report, out)
        }
    }
}

fn trace(perturbations: &Path, out: Option<&Path>) -> Result<()> {
    let trace = io::load_trace(perturbations)?;
    let points = homophily_trajectory(&trace);
    match out {
        Some(path) => io::write_trajectory(path, &points),
        None => print_stdout(&io::trajectory_csv(&points)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { raw, bundle, split_seed } => ingest(&raw, &bundle, split_seed),
        Command::Synth {
            n,
            k,
            p_intra,
            p_inter,
            seed,
            out,
        } => synth(n, k, p_intra, p_inter, seed, &out.resolve("synth")),
        Command::Attack(args) => attack(&args),
        Command::Evaluate { bundle, runs, seed, out } => evaluate(&bundle, runs, seed, out.as_deref()),
        Command::Diagnose { which, out } => diagnose(&which, out.as_deref()),
        Command::Trace { perturbations, out } => trace(&perturbations, out.as_deref()),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", error_json("UsageError", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
