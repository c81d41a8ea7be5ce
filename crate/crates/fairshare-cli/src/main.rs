//! Command-line pipelines: generate experiment instances, solve them,
//! verify solutions, simulate the online policy, and report convergence.
//!
//! Exit codes: 0 when the command (and every requested check) succeeded,
//! 1 when a requested check failed, 2 on operational errors such as
//! malformed files.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairshare_core::io::{
    load_instance, load_solution, read_trace_csv, save_json, write_report_columns,
    write_trace_csv, Instance, ReportDoc, SolutionDoc,
};
use fairshare_core::netgen::{self, EndowmentProfile, GenSpec, GraphModel, HotspotPlacement};
use fairshare_core::num::{format_rat, parse_rat, Rat};
use fairshare_core::sim::{self, DistributionSpec, Estimator, SimConfig, TieBreak};
use fairshare_core::solver::{certify_lexopt, extract_allocation, peel_solve};
use fairshare_core::verify::{
    check_sharing_equilibrium, check_structure, find_blocking_coalition, CheckReport,
    StabilityMode,
};
use fairshare_core::NodeId;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fairshare", version, about = "Fair resource sharing on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph instance with endowments
    Generate(GenerateArgs),
    /// Solve an instance for its lex-optimal sharing ratios
    Solve(SolveArgs),
    /// Verify a solution document
    Verify(VerifyArgs),
    /// Simulate the online sharing policy
    Simulate(SimulateArgs),
    /// Summarize a trace against a reference solution
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Lattice,
    Er,
    Ba,
    Ws,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndowmentArg {
    Homogeneous,
    Hotspots,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Constant,
    Uniform,
    Bernoulli,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    seed: u64,
    /// Lattice rows
    #[arg(long)]
    rows: Option<usize>,
    /// Lattice columns
    #[arg(long)]
    cols: Option<usize>,
    /// Node count (er, ba, ws)
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability (er)
    #[arg(long)]
    p: Option<f64>,
    /// Edges per arriving node (ba)
    #[arg(long)]
    m: Option<usize>,
    /// Attachment skew exponent (ba)
    #[arg(long)]
    power: Option<f64>,
    /// Ring degree (ws)
    #[arg(long)]
    k: Option<usize>,
    /// Rewiring probability (ws)
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    endowment: EndowmentArg,
    /// Base mean endowment, exact rational
    #[arg(long, default_value = "30")]
    d: String,
    /// Hotspot mean endowment, exact rational
    #[arg(long, default_value = "300")]
    hot_d: String,
    /// Number of seeded-random hotspots
    #[arg(long)]
    hot_count: Option<usize>,
    /// Explicit hotspot ids, comma separated (overrides --hot-count)
    #[arg(long, value_delimiter = ',')]
    hot_ids: Option<Vec<NodeId>>,
    /// Draw distribution shape derived from each mean
    #[arg(long, value_enum, default_value = "constant")]
    dist: DistArg,
    /// Success probability for --dist bernoulli
    #[arg(long)]
    dist_p: Option<String>,
    /// Accept disconnected samples instead of resampling
    #[arg(long)]
    allow_disconnected: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    graph: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also run the optimality certificate and embed its report
    #[arg(long)]
    certify: bool,
}

#[derive(Args)]
struct VerifyArgs {
    solution: PathBuf,
    /// Comma-separated subset of structure, equilibrium, stability
    #[arg(long, value_delimiter = ',', default_value = "structure,equilibrium,stability")]
    checks: Vec<String>,
    #[arg(long, value_enum, default_value = "exhaustive")]
    stability_mode: StabilityModeArg,
    /// Sampled-mode coalition budget
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StabilityModeArg {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Running,
    Discounted,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Split,
    Lowest,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    graph: PathBuf,
    #[arg(long)]
    steps: u64,
    #[arg(long, value_enum, default_value = "exact")]
    estimator: EstimatorArg,
    /// Discount factor in (0, 1) for --estimator discounted
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "split")]
    tie_break: TieBreakArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    record_every: u64,
    /// Solution document supplying reference rates for Lyapunov columns
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    trace: PathBuf,
    solution: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write gnuplot-friendly columns to this file
    #[arg(long)]
    columns: Option<PathBuf>,
}

fn parse_rational(text: &str, what: &str) -> Result<Rat> {
    parse_rat(text).map_err(|e| anyhow!("{what}: {e}"))
}

fn run_generate(args: GenerateArgs) -> Result<i32> {
    let need = |value: Option<usize>, name: &str| {
        value.ok_or_else(|| anyhow!("--model requires --{name}"))
    };
    let model = match args.model {
        ModelArg::Lattice => GraphModel::Lattice {
            rows: need(args.rows, "rows")?,
            cols: need(args.cols, "cols")?,
        },
        ModelArg::Er => GraphModel::ErdosRenyi {
            n: need(args.n, "n")?,
            p: args.p.ok_or_else(|| anyhow!("--model er requires --p"))?,
        },
        ModelArg::Ba => GraphModel::PreferentialAttachment {
            n: need(args.n, "n")?,
            m: need(args.m, "m")?,
            power: args.power.unwrap_or(1.0),
        },
        ModelArg::Ws => GraphModel::SmallWorld {
            n: need(args.n, "n")?,
            k: need(args.k, "k")?,
            beta: args.beta.unwrap_or(0.0),
        },
    };
    let base = parse_rational(&args.d, "--d")?;
    let endowment = match args.endowment {
        EndowmentArg::Homogeneous => EndowmentProfile::Homogeneous { mean: base },
        EndowmentArg::Hotspots => {
            let hot = parse_rational(&args.hot_d, "--hot-d")?;
            let placement = match &args.hot_ids {
                Some(ids) => HotspotPlacement::Listed(ids.clone()),
                None => HotspotPlacement::SeededRandom {
                    count: args.hot_count.unwrap_or(2),
                },
            };
            EndowmentProfile::Hotspots {
                base,
                hot,
                placement,
            }
        }
    };
    let spec = GenSpec {
        model,
        seed: args.seed,
        require_connected: !args.allow_disconnected,
        endowment,
    };
    let (graph, endowments) = netgen::generate(&spec)?;
    let mut dists: BTreeMap<NodeId, DistributionSpec> = BTreeMap::new();
    for (id, mean) in endowments.iter() {
        let spec = match args.dist {
            DistArg::Constant => DistributionSpec::constant(mean.clone())?,
            DistArg::Uniform => {
                DistributionSpec::uniform(Rat::from_integer(0.into()), mean * Rat::from_integer(2.into()))?
            }
            DistArg::Bernoulli => {
                let p = parse_rational(
                    args.dist_p.as_deref().unwrap_or("1/2"),
                    "--dist-p",
                )?;
                DistributionSpec::scaled_bernoulli(p.clone(), mean / &p)?
            }
        };
        dists.insert(id, spec);
    }
    let doc = fairshare_core::io::GraphDoc::from_instance(
        &graph,
        &endowments,
        &dists,
        Some(args.seed),
    )?;
    save_json(&args.output, &doc)?;
    eprintln!(
        "wrote {} ({} nodes, {} edges)",
        args.output.display(),
        graph.node_count(),
        graph.edge_count()
    );
    Ok(0)
}

fn run_solve(args: SolveArgs) -> Result<i32> {
    let instance = load_instance(&args.graph)
        .with_context(|| format!("loading {}", args.graph.display()))?;
    let Instance {
        graph,
        endowments,
        dists,
        seed,
        ..
    } = instance;
    let dec = peel_solve(&graph, &endowments)?;
    let alloc = extract_allocation(&graph, &endowments, &dec)?;
    let cert = if args.certify {
        Some(certify_lexopt(&graph, &endowments, &dec)?)
    } else {
        None
    };
    let doc = SolutionDoc::build(
        &graph,
        &endowments,
        &dists,
        &dec,
        &alloc,
        cert.as_ref(),
        Some(args.graph.display().to_string()),
        seed,
    )?;
    save_json(&args.output, &doc)?;
    let cert_failed = cert.as_ref().is_some_and(|c| !c.passed());
    eprintln!(
        "wrote {} ({} levels{})",
        args.output.display(),
        dec.level_count(),
        if args.certify {
            if cert_failed {
                ", certificate FAILED"
            } else {
                ", certified"
            }
        } else {
            ""
        }
    );
    Ok(if cert_failed { 1 } else { 0 })
}

fn check_json(report: &CheckReport) -> serde_json::Value {
    json!({
        "passed": report.passed(),
        "checked": report.checked,
        "failures": report.failures,
    })
}

fn run_verify(args: VerifyArgs) -> Result<i32> {
    let doc = load_solution(&args.solution)
        .with_context(|| format!("loading {}", args.solution.display()))?;
    let (instance, dec, alloc) = doc.restore()?;
    let graph = &instance.graph;
    let endowments = &instance.endowments;
    let mut results = serde_json::Map::new();
    let mut all_passed = true;
    for check in &args.checks {
        match check.as_str() {
            "structure" => {
                let report = check_structure(graph, endowments, &dec)?;
                all_passed &= report.passed();
                results.insert("structure".to_string(), check_json(&report));
            }
            "equilibrium" => {
                let report = check_sharing_equilibrium(graph, endowments, &alloc, &dec)?;
                all_passed &= report.passed();
                results.insert("equilibrium".to_string(), check_json(&report));
            }
            "stability" => {
                let mode = match args.stability_mode {
                    StabilityModeArg::Exhaustive => StabilityMode::Exhaustive,
                    StabilityModeArg::Sampled => StabilityMode::Sampled,
                };
                let report = find_blocking_coalition(
                    graph,
                    endowments,
                    &dec,
                    mode,
                    args.budget,
                    args.seed,
                )?;
                all_passed &= report.stable();
                let blocking = report.blocking.as_ref().map(|w| {
                    json!({
                        "coalition": w.coalition.iter().copied().collect::<Vec<_>>(),
                        "improving_rates": w
                            .improving_rates
                            .iter()
                            .map(|(id, r)| (id.to_string(), format_rat(r)))
                            .collect::<BTreeMap<_, _>>(),
                    })
                });
                results.insert(
                    "stability".to_string(),
                    json!({
                        "passed": report.stable(),
                        "mode": match report.mode {
                            StabilityMode::Exhaustive => "exhaustive",
                            StabilityMode::Sampled => "sampled",
                        },
                        "checked_coalitions": report.checked_coalitions,
                        "blocking": blocking,
                        "seed": args.seed,
                    }),
                );
            }
            other => bail!("unknown check {other:?} (expected structure, equilibrium, stability)"),
        }
    }
    let output = json!({
        "solution": args.solution.display().to_string(),
        "graph_sha256": doc.graph_sha256,
        "checks": results,
        "passed": all_passed,
    });
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(if all_passed { 0 } else { 1 })
}

fn run_simulate(args: SimulateArgs) -> Result<i32> {
    let instance = load_instance(&args.graph)
        .with_context(|| format!("loading {}", args.graph.display()))?;
    let estimator = match args.estimator {
        EstimatorArg::Exact => Estimator::ExactMean,
        EstimatorArg::Running => Estimator::RunningAverage,
        EstimatorArg::Discounted => Estimator::Discounted {
            alpha: args
                .alpha
                .ok_or_else(|| anyhow!("--estimator discounted requires --alpha"))?,
        },
    };
    let cfg = SimConfig {
        horizon: args.steps,
        estimator,
        tie_break: match args.tie_break {
            TieBreakArg::Split => TieBreak::SplitEqually,
            TieBreakArg::Lowest => TieBreak::LowestIndex,
            TieBreakArg::Random => TieBreak::UniformRandom,
        },
        seed: args.seed,
        record_every: args.record_every,
    };
    let reference = match &args.reference {
        Some(path) => {
            let doc = load_solution(path).with_context(|| format!("loading {}", path.display()))?;
            let (ref_instance, dec, _) = doc.restore()?;
            if ref_instance.sha256 != instance.sha256 {
                bail!(
                    "reference solution was computed for a different instance \
                     (hash {} vs {})",
                    ref_instance.sha256,
                    instance.sha256
                );
            }
            Some(dec.received(&ref_instance.endowments)?)
        }
        None => None,
    };
    let trace = sim::run(&instance.graph, &instance.dists, &cfg, reference.as_ref())?;
    let file = File::create(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let mut writer = BufWriter::new(file);
    write_trace_csv(&trace, &mut writer)?;
    eprintln!(
        "wrote {} ({} slots recorded, seed {})",
        args.output.display(),
        trace.records.len(),
        args.seed
    );
    Ok(0)
}

fn run_report(args: ReportArgs) -> Result<i32> {
    let file = File::open(&args.trace)
        .with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = read_trace_csv(BufReader::new(file))?;
    let doc = load_solution(&args.solution)
        .with_context(|| format!("loading {}", args.solution.display()))?;
    let (instance, dec, _) = doc.restore()?;
    let rstar = dec.received(&instance.endowments)?;
    let metrics = sim::convergence_report(&trace, &rstar, &instance.endowments)?;
    save_json(&args.output, &ReportDoc::from_metrics(&metrics))?;
    if let Some(path) = &args.columns {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = BufWriter::new(file);
        write_report_columns(&metrics, &mut writer)?;
    }
    eprintln!(
        "wrote {} (final deviation {:.3e})",
        args.output.display(),
        metrics.final_max_abs_dev
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Solve(args) => run_solve(args),
        Command::Verify(args) => run_verify(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Report(args) => run_report(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
