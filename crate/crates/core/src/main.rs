use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use refiner_core::depgraph::{analyze, BuiltinTable};
use refiner_core::equivalence::{check_units, EquivConfig, EquivalenceVerdict, SolverChoice};
use refiner_core::evalkit::{load_ground_truth, score, MetricsTable};
use refiner_core::frontend::parse_unit;
use refiner_core::llm_bridge::{redact, EditSet, HttpProvider, MockProvider, ParseMode, Provider};
use refiner_core::pipeline::{Engine, RunConfig, RunReport};
use refiner_core::typecheck::check;

#[derive(Parser, Debug)]
#[command(name = "refiner", version, about = "Refines decompiled smart-contract pseudocode")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug, -vvv trace with prompts).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write IR, control flow, data flow and dependency graph exports.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Run the refinement loop on each unit.
    Optimize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ProviderKind::Mock)]
        provider: ProviderKind,
        /// Scripted replies for the mock provider.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long, value_enum)]
        parse_mode: Option<ParseModeArg>,
        /// Shell command run on each refined unit; `{file}` is its path.
        #[arg(long)]
        compiler: Option<String>,
        #[command(flatten)]
        common: Common,
        #[arg(short, long, default_value = "refined")]
        out: PathBuf,
    },
    /// Type-check and equivalence-check an original/optimized pair offline.
    Verify {
        original: PathBuf,
        optimized: PathBuf,
        /// Print the results as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score run reports against ground truth.
    Score {
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        #[arg(long = "truth", required = true)]
        truths: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SMT-LIB solver binary, or `builtin` for the offline search.
    #[arg(long)]
    solver: Option<String>,
    /// Loop iterations explored per loop during equivalence checking.
    #[arg(long)]
    unroll: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProviderKind {
    Mock,
    Http,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParseModeArg {
    Strict,
    Lenient,
}

/// JSON-lines logger on stderr that scrubs the auth token.
struct JsonLogger {
    level: log::LevelFilter,
    secrets: Mutex<Vec<String>>,
}

impl JsonLogger {
    fn scrub(&self, text: &str) -> String {
        let secrets = self.secrets.lock().expect("logger lock");
        secrets.iter().fold(text.to_string(), |t, s| redact(&t, s))
    }
}

impl log::Log for JsonLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &log::Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let line = json!({
            "ts": ts,
            "level": record.level().as_str(),
            "target": record.target(),
            "msg": self.scrub(&record.args().to_string()),
        });
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {}
}

static LOGGER: std::sync::OnceLock<JsonLogger> = std::sync::OnceLock::new();

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let logger = LOGGER.get_or_init(|| JsonLogger { level, secrets: Mutex::new(Vec::new()) });
    if log::set_logger(logger).is_ok() {
        log::set_max_level(level);
    }
}

fn add_secret(config: &RunConfig) {
    if let (Some(logger), Ok(token)) = (LOGGER.get(), std::env::var(&config.provider.token_env)) {
        if !token.is_empty() {
            logger.secrets.lock().expect("logger lock").push(token);
        }
    }
}

type Failure = String;

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            RunConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(solver) = &common.solver {
        config.equivalence.solver = solver_choice(solver);
    }
    if let Some(k) = common.unroll {
        config.equivalence.bounds.loop_unroll = k;
    }
    Ok(config)
}

fn solver_choice(arg: &str) -> SolverChoice {
    if arg == "builtin" {
        return SolverChoice::Builtin;
    }
    let args = match SolverChoice::default() {
        SolverChoice::Auto { args, .. } => args,
        _ => Vec::new(),
    };
    SolverChoice::External { program: arg.to_string(), args }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("unit".into(), |s| s.to_string_lossy().into_owned())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run_analyze(inputs: &[PathBuf], out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    for input in inputs {
        let text = std::fs::read_to_string(input).map_err(|e| format!("cannot read {}: {e}", input.display()))?;
        let name = stem(input);
        let unit = parse_unit(&name, &text);
        for skip in &unit.skipped {
            log::warn!("{name}: skipped {} at {}: {}", skip.function.as_deref().unwrap_or("?"), skip.pos, skip.reason);
        }
        let a = analyze(&unit, BuiltinTable::shipped()).map_err(|e| format!("{}: {e}", input.display()))?;
        let mut ir = String::new();
        let mut cfg = String::new();
        let mut dfg = String::new();
        for (f, (c, d)) in a.ir.functions.iter().zip(&a.graphs) {
            ir.push_str(&f.render());
            cfg.push_str(&format!("# {}\n{}", f.name, c.export()));
            dfg.push_str(&format!("# {}\n{}", f.name, d.export(c)));
        }
        write(&out.join(format!("{name}.ir.txt")), &ir)?;
        write(&out.join(format!("{name}.cfg.txt")), &cfg)?;
        write(&out.join(format!("{name}.dfg.txt")), &dfg)?;
        write(&out.join(format!("{name}.dg.txt")), &a.dg.export())?;
        write(&out.join(format!("{name}.dg.json")), &a.dg.to_json())?;
        println!("{}: {} function(s), {} DG node(s), {} DG edge(s)", name, unit.functions.len(), a.dg.nodes.len(), a.dg.edges.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_optimize(
    inputs: &[PathBuf],
    provider: ProviderKind,
    scenario: Option<&Path>,
    iterations: Option<u32>,
    parse_mode: Option<ParseModeArg>,
    compiler: Option<String>,
    common: &Common,
    out: &Path,
) -> Result<bool, Failure> {
    let mut config = load_config(common)?;
    if let Some(n) = iterations {
        config.iteration_limit = n;
    }
    if let Some(m) = parse_mode {
        config.parse_mode = match m {
            ParseModeArg::Strict => ParseMode::Strict,
            ParseModeArg::Lenient => ParseMode::Lenient,
        };
    }
    if compiler.is_some() {
        config.compiler = compiler;
    }
    add_secret(&config);
    let provider: Box<dyn Provider> = match provider {
        ProviderKind::Mock => match scenario {
            Some(path) => Box::new(MockProvider::from_file(path).map_err(|e| format!("scenario {}: {e}", path.display()))?),
            None => return Err("--provider mock needs --scenario".into()),
        },
        ProviderKind::Http => Box::new(HttpProvider::new(config.provider.clone())),
    };
    let engine = Engine::new(provider.as_ref(), config).map_err(|e| e.to_string())?;
    let reports = engine.run_batch(inputs, Some(out));
    let mut ok = true;
    for r in &reports {
        print_run(r);
        if let Some(e) = &r.error {
            log::error!("{}: {e}", r.input.display());
            ok = false;
        }
    }
    Ok(ok)
}

fn print_run(r: &RunReport) {
    let mut counts = std::collections::BTreeMap::new();
    for o in &r.outcomes {
        *counts.entry(format!("{:?}", o.status)).or_insert(0) += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{}: {} target(s) [{}], {} skipped, revision {}, avg {:.2}s / {:.0} tokens -> {}",
        r.unit,
        r.outcomes.len(),
        summary.join(" "),
        r.skipped_targets.len(),
        r.final_revision,
        r.totals.avg_time_s,
        r.totals.avg_tokens,
        r.output.as_ref().map_or("-".into(), |p| p.display().to_string()),
    );
}

fn verdict_line(function: &str, v: &EquivalenceVerdict) -> String {
    match v {
        EquivalenceVerdict::Equivalent => format!("{function}: Equivalent"),
        EquivalenceVerdict::NonEquivalent { witness } => {
            let inputs: Vec<String> = witness.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!(
                "{function}: NonEquivalent ({} is {} vs {}; inputs {})",
                witness.observable,
                witness.original,
                witness.optimized,
                inputs.join(" ")
            )
        }
        EquivalenceVerdict::Inconclusive { reason } => format!("{function}: Inconclusive ({})", serde_json::to_value(reason).unwrap_or_default().as_str().unwrap_or("?")),
    }
}

fn run_verify(original: &Path, optimized: &Path, json_out: bool, common: &Common) -> Result<(), Failure> {
    let config = load_config(common)?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()));
    let a = parse_unit(&stem(original), &read(original)?);
    let b = parse_unit(&stem(optimized), &read(optimized)?);
    let equiv: EquivConfig = config.equivalence;
    let builtins = BuiltinTable::shipped();
    let introduced = check(&b, builtins).new_relative_to(&check(&a, builtins));
    let shared: Vec<String> = a.functions.iter().filter(|f| b.function(&f.name).is_some()).map(|f| f.name.clone()).collect();
    let missing: Vec<String> = a.functions.iter().filter(|f| b.function(&f.name).is_none()).map(|f| f.name.clone()).collect();
    let mut common_a = a.clone();
    common_a.functions.retain(|f| shared.contains(&f.name));
    let verdicts = check_units(&common_a, &b, &EditSet::default(), &equiv).map_err(|e| e.to_string())?;
    if json_out {
        let doc = json!({
            "violations": introduced.violations,
            "verdicts": verdicts.iter().map(|(f, v)| json!({"function": f, "verdict": v})).collect::<Vec<_>>(),
            "missing": missing,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    } else {
        println!("new type violations: {}", introduced.len());
        for v in &introduced.violations {
            println!("  {}", v.feedback());
        }
        for (f, v) in &verdicts {
            println!("{}", verdict_line(f, v));
        }
        for f in &missing {
            println!("{f}: missing from the optimized unit");
        }
    }
    Ok(())
}

fn run_score(reports: &[PathBuf], truths: &[PathBuf], json_out: bool) -> Result<(), Failure> {
    let mut truth_by_unit = std::collections::BTreeMap::new();
    for path in truths {
        let t = load_ground_truth(path).map_err(|e| format!("{}: {e}", path.display()))?;
        truth_by_unit.insert(t.unit.clone(), t);
    }
    let mut total = MetricsTable::default();
    for path in reports {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let report: RunReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let truth = truth_by_unit
            .get(&report.unit)
            .ok_or_else(|| format!("{}: no ground truth for unit `{}`", path.display(), report.unit))?;
        total.merge(&score(&report, truth).map_err(|e| e.to_string())?);
    }
    if json_out {
        println!("{}", serde_json::to_string_pretty(&total.to_json()).expect("json"));
    } else {
        print!("{}", total.to_text());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Analyze { inputs, out } => run_analyze(inputs, out).map(|_| true),
        Command::Optimize { inputs, provider, scenario, iterations, parse_mode, compiler, common, out } => {
            run_optimize(inputs, *provider, scenario.as_deref(), *iterations, *parse_mode, compiler.clone(), common, out)
        }
        Command::Verify { original, optimized, json, common } => run_verify(original, optimized, *json, common).map(|_| true),
        Command::Score { reports, truths, json } => run_score(reports, truths, *json).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
