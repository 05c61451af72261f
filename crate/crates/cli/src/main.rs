//! `persuasion-lab`: solve, analyze, certify and simulate persuasion
//! instances, and run the corpus regression table.

mod export;
mod output;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use persuasion_core::belief::parse_rational;
use persuasion_core::engine::{configure_threads, simulate, RuleFn, Strategy};
use persuasion_core::graph::build_graph;
use persuasion_core::solver::{check_certificate, Tolerances};
use persuasion_core::structure::{default_eps_grid, optimal_exists, support_equivalence_report, AnalysisOptions};
use persuasion_core::{
    corpus, load_instance, regression, value_limit, value_recursion, Belief, Error, GraphLimits, Instance,
    MarkovPolicy, Value,
};
use serde_json::{json, Value as Json};

use output::{emit, write_atomic};

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_TRUNCATED: u8 = 3;
const EXIT_REJECTED: u8 = 4;
const EXIT_NO_OPTIMUM: u8 = 5;

#[derive(Parser)]
#[command(
    name = "persuasion-lab",
    version,
    about = "Sequential persuasion with restricted experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-horizon values v_0..v_n and the limit v_inf at the prior.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Include every node's values, not only the prior's.
        #[arg(long)]
        table: bool,
        /// Fail with exit code 3 when the graph is truncated.
        #[arg(long)]
        certify: bool,
    },
    /// Closure, implementability, decomposition and existence report.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Accuracy grid for implementability, comma separated.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<String>,
        /// Simplex grid resolution for the concave closure.
        #[arg(long, default_value_t = persuasion_core::structure::DEFAULT_GRID)]
        grid: usize,
        /// JSON list of beliefs to use as O instead of the contact set.
        #[arg(long)]
        support: Option<PathBuf>,
    },
    /// Checks a node-value file as a superharmonic certificate.
    Certify {
        #[command(flatten)]
        run: RunArgs,
        /// `{"constant": v}` or `{"values": [{"belief": [...], "value": v}], "default"?: v}`.
        #[arg(long)]
        g: PathBuf,
    },
    /// Optimal Markov policy, or the obstruction when none exists.
    Policy {
        #[command(flatten)]
        run: RunArgs,
        /// Where to write the existence report (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte Carlo play of a policy file, or of the limit-greedy rule by default.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        /// Step cap per run.
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        /// A MarkovPolicy document to play instead.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Belief graph with per-level values and argmax edges.
    Export {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// The shipped example instances.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Names of the shipped instances.
    List,
    /// Writes the shipped instance files into a directory.
    Write {
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the regression table; exits nonzero if any criterion fails.
    RunAll {
        /// Read instances from this directory instead of the shipped copies.
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// Random instances for the engine exactness criterion.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// Instance file, or the name of a shipped instance.
    #[arg(long)]
    instance: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = persuasion_core::graph::DEFAULT_DEPTH_LIMIT)]
    depth_limit: usize,
    #[arg(long, default_value_t = persuasion_core::graph::DEFAULT_NODE_LIMIT)]
    node_limit: usize,
    #[arg(long)]
    value_eps: Option<f64>,
    #[arg(long)]
    fix_eps: Option<f64>,
    #[arg(long)]
    term_eps: Option<f64>,
    #[arg(long)]
    delta_floor: Option<f64>,
    /// Overrides the instance's utility tie tolerance.
    #[arg(long)]
    tie_eps: Option<f64>,
}

struct Run {
    instance: Instance,
    limits: GraphLimits,
    tol: Tolerances,
    out: Option<PathBuf>,
}

/// A command failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Lp(_) => EXIT_FAILURE,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

fn positive(name: &str, x: Option<f64>, default: f64) -> Result<f64, Failure> {
    match x {
        None => Ok(default),
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(invalid(format!("--{name} must be positive, got {x}"))),
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<Run, Failure> {
        let mut instance = read_instance(&self.instance)?;
        if let Some(t) = self.tie_eps {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid(format!("--tie-eps must be nonnegative, got {t}")));
            }
            let mut doc = instance.to_json();
            doc["tie_eps"] = json!(t);
            instance = Instance::from_json(&doc)?;
        }
        if self.depth_limit == 0 || self.node_limit == 0 {
            return Err(invalid("--depth-limit and --node-limit must be positive"));
        }
        let d = Tolerances::default();
        let tol = Tolerances {
            value_eps: positive("value-eps", self.value_eps, d.value_eps)?,
            fix_eps: positive("fix-eps", self.fix_eps, d.fix_eps)?,
            term_eps: positive("term-eps", self.term_eps, d.term_eps)?,
            delta_floor: positive("delta-floor", self.delta_floor, d.delta_floor)?,
            ..d
        };
        Ok(Run {
            instance,
            limits: GraphLimits {
                depth_limit: self.depth_limit,
                node_limit: self.node_limit,
            },
            tol,
            out: self.out.clone(),
        })
    }
}

fn read_instance(arg: &str) -> Result<Instance, Failure> {
    let path = Path::new(arg);
    if !path.exists() && corpus::source(arg).is_some() {
        return Ok(corpus::load(arg, None)?);
    }
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{arg}: {e}")))?;
    Ok(load_instance(&bytes)?)
}

fn read_json(path: &Path) -> Result<Json, Failure> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

impl Run {
    /// Settings every report embeds.
    fn settings(&self) -> Json {
        json!({
            "limits": self.limits,
            "tolerances": self.tol,
            "tie_eps": self.instance.tie_eps,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve {
            run,
            steps,
            table,
            certify,
        } => cmd_solve(&run.resolve()?, steps, table, certify),
        Command::Analyze {
            run,
            eps,
            grid,
            support,
        } => cmd_analyze(&run.resolve()?, &eps, grid, support.as_deref()),
        Command::Certify { run, g } => cmd_certify(&run.resolve()?, &g),
        Command::Policy { run, report } => cmd_policy(&run.resolve()?, report.as_deref()),
        Command::Simulate {
            run,
            seed,
            runs,
            steps,
            policy,
        } => cmd_simulate(&run.resolve()?, seed, runs, steps, policy.as_deref()),
        Command::Export { run, steps, format } => {
            let run = run.resolve()?;
            let text = export::render(&run.instance, run.limits, &run.tol, steps, format)?;
            emit(run.out.as_deref(), &text)
        }
        Command::Corpus { action } => cmd_corpus(action),
    }
}

fn cmd_solve(run: &Run, steps: usize, table: bool, certify: bool) -> Result<(), Failure> {
    let inst = &run.instance;
    let graph = build_graph(inst, run.limits);
    let values = value_recursion(&graph, inst, steps)?;
    let limit = value_limit(&graph, inst, &run.tol)?;
    let series: Vec<&Value> = (0..=steps).map(|n| values.at(n, 0)).collect();
    let mut doc = json!({
        "command": "solve",
        "settings": run.settings(),
        "prior": inst.prior,
        "nodes": graph.len(),
        "edges": graph.edge_count(),
        "truncated": graph.truncated,
        "resolution_relative": graph.resolution_relative,
        "lower_bound_only": values.lower_bound_only || limit.lower_bound_only,
        "v": series,
        "v_inf": limit.at(0),
        "v_inf_status": limit.status.label(),
        "rounds": limit.rounds,
    });
    if table {
        doc["table"] = json!({
            "beliefs": graph.nodes,
            "levels": values.levels,
            "argmax": values.argmax,
            "v_inf": limit.values,
        });
    }
    emit(run.out.as_deref(), &output::pretty(&doc))?;
    if certify && graph.truncated {
        return Err(Failure {
            code: EXIT_TRUNCATED,
            message: "graph truncated; values are one-sided bounds".into(),
        });
    }
    Ok(())
}

fn parse_eps(items: &[String]) -> Result<Vec<persuasion_core::Rational>, Failure> {
    if items.is_empty() {
        return Ok(default_eps_grid());
    }
    items
        .iter()
        .map(|s| {
            let r = parse_rational(s.trim())
                .or_else(|| parse_decimal(s.trim()))
                .ok_or_else(|| invalid(format!("--eps entry {s:?} is not a number")))?;
            if r <= persuasion_core::rat(0, 1) || r >= persuasion_core::rat(1, 1) {
                return Err(invalid(format!("--eps entry {s} is not in (0, 1)")));
            }
            Ok(r)
        })
        .collect()
}

/// `"0.001"` or `"1e-3"` as an exact rational.
fn parse_decimal(s: &str) -> Option<persuasion_core::Rational> {
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num = parse_rational(&digits)?;
    let ten = persuasion_core::rat(10, 1);
    Some(num * ten.pow(exp - frac.len() as i32))
}

fn cmd_analyze(run: &Run, eps: &[String], grid: usize, support: Option<&Path>) -> Result<(), Failure> {
    if grid == 0 {
        return Err(invalid("--grid must be positive"));
    }
    let o = match support {
        None => None,
        Some(path) => {
            let doc = read_json(path)?;
            let items = doc
                .as_array()
                .ok_or_else(|| invalid("--support must hold a list of beliefs"))?;
            let set = items
                .iter()
                .enumerate()
                .map(|(i, p)| Belief::from_json(p, &format!("support[{i}]")))
                .collect::<Result<BTreeSet<_>, _>>()?;
            Some(set)
        }
    };
    let opts = AnalysisOptions {
        limits: run.limits,
        tol: run.tol,
        grid,
        eps_grid: parse_eps(eps)?,
        ..AnalysisOptions::default()
    };
    let report = support_equivalence_report(&run.instance, o, &opts)?;
    let doc = json!({
        "command": "analyze",
        "settings": run.settings(),
        "grid": grid,
        "eps": opts.eps_grid.iter().map(persuasion_core::belief::format_rational).collect::<Vec<_>>(),
        "report": report,
    });
    emit(run.out.as_deref(), &output::pretty(&doc))
}

fn parse_value(v: &Json, path: &str) -> Result<Value, Failure> {
    match v {
        Json::String(s) => parse_rational(s)
            .map(Value::Exact)
            .ok_or_else(|| invalid(format!("{path}: malformed rational {s:?}"))),
        Json::Number(n) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Value::Approx)
            .ok_or_else(|| invalid(format!("{path}: not a finite number"))),
        _ => Err(invalid(format!("{path}: expected a number or \"n/d\" string"))),
    }
}

/// Node values from a certificate file, aligned with `nodes`.
fn certificate_values(doc: &Json, nodes: &[Belief]) -> Result<Vec<Value>, Failure> {
    if let Some(c) = doc.get("constant") {
        let c = parse_value(c, "constant")?;
        return Ok(vec![c; nodes.len()]);
    }
    let default = doc.get("default").map(|d| parse_value(d, "default")).transpose()?;
    let items = doc
        .get("values")
        .and_then(Json::as_array)
        .ok_or_else(|| invalid("certificate needs \"constant\" or a \"values\" list"))?;
    let mut given = std::collections::BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let path = format!("values[{i}]");
        let p = Belief::from_json(item.get("belief").unwrap_or(&Json::Null), &format!("{path}.belief"))?;
        let v = parse_value(item.get("value").unwrap_or(&Json::Null), &format!("{path}.value"))?;
        given.insert(p, v);
    }
    nodes
        .iter()
        .map(|p| {
            given
                .get(p)
                .or(default.as_ref())
                .cloned()
                .ok_or_else(|| invalid(format!("certificate has no value for graph belief {p}")))
        })
        .collect()
}

fn cmd_certify(run: &Run, g_path: &Path) -> Result<(), Failure> {
    let inst = &run.instance;
    let graph = build_graph(inst, run.limits);
    let g = certificate_values(&read_json(g_path)?, &graph.nodes)?;
    let verdict = check_certificate(&g, &graph, inst, run.tol.value_eps)?;
    let doc = json!({
        "command": "certify",
        "settings": run.settings(),
        "nodes": graph.len(),
        "truncated": graph.truncated,
        "accepted": verdict.passed && !graph.truncated,
        "upper_bound_at_prior": verdict.passed.then(|| g[0].clone()),
        "verdict": verdict,
    });
    emit(run.out.as_deref(), &output::pretty(&doc))?;
    if graph.truncated {
        return Err(Failure {
            code: EXIT_TRUNCATED,
            message: "graph truncated; the certificate was checked on a partial graph".into(),
        });
    }
    if !verdict.passed {
        return Err(Failure {
            code: EXIT_REJECTED,
            message: format!("certificate rejected with {} violations", verdict.violations.len()),
        });
    }
    Ok(())
}

fn cmd_policy(run: &Run, report_path: Option<&Path>) -> Result<(), Failure> {
    let report = optimal_exists(&run.instance, run.limits, &run.tol)?;
    let doc = json!({
        "command": "policy",
        "settings": run.settings(),
        "status": report.status.label(),
        "report": report,
    });
    emit(report_path, &output::pretty(&doc))?;
    match &report.policy {
        Some(policy) if report.status.exists() => match &run.out {
            Some(out) => write_atomic(out, &output::pretty(&policy.to_json())),
            None => Ok(()),
        },
        _ => Err(Failure {
            code: EXIT_NO_OPTIMUM,
            message: format!(
                "no optimal policy: {}",
                report.obstruction.as_deref().unwrap_or(report.status.label())
            ),
        }),
    }
}

fn cmd_simulate(run: &Run, seed: u64, runs: u64, steps: usize, policy: Option<&Path>) -> Result<(), Failure> {
    let inst = &run.instance;
    let (label, report) = match policy {
        Some(path) => {
            let p = MarkovPolicy::from_json(&read_json(path)?, &inst.prior)?;
            p.check_feasible(inst)?;
            ("policy file", simulate(Strategy::policy(&p), inst, runs, seed, steps)?)
        }
        None => {
            let graph = build_graph(inst, run.limits);
            let limit = value_limit(&graph, inst, &run.tol)?;
            let rule = RuleFn(|p: &Belief| {
                let u = graph.index_of(p)?;
                limit.choice[u].map(|i| graph.edges[u][i].experiment.clone())
            });
            let strategy = Strategy::Markov {
                prior: &inst.prior,
                rule: &rule,
            };
            ("limit-greedy", simulate(strategy, inst, runs, seed, steps)?)
        }
    };
    let doc = json!({
        "command": "simulate",
        "settings": run.settings(),
        "strategy": label,
        "step_cap": steps,
        "report": report,
    });
    emit(run.out.as_deref(), &output::pretty(&doc))
}

fn cmd_corpus(action: CorpusAction) -> Result<(), Failure> {
    match action {
        CorpusAction::List => {
            for name in corpus::names() {
                println!("{name}");
            }
            Ok(())
        }
        CorpusAction::Write { out } => {
            std::fs::create_dir_all(&out).map_err(|e| invalid(format!("{}: {e}", out.display())))?;
            for name in corpus::names() {
                let text = corpus::source(name).expect("listed names have sources");
                write_atomic(&out.join(format!("{name}.json")), text)?;
            }
            Ok(())
        }
        CorpusAction::RunAll { corpus_dir, cases } => {
            let outcomes = regression::run_criteria(corpus_dir.as_deref(), cases);
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                return Err(Failure {
                    code: EXIT_FAILURE,
                    message: format!("{failed} criteria failed"),
                });
            }
            Ok(())
        }
    }
}
