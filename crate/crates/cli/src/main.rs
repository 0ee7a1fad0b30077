//! Command-line harness: scenario generation, batch experiment runs, offline
//! model fitting, report rendering, and a verbatim dump of the built-in
//! default tables.
//!
//! Exit codes: 0 success, 1 configuration/startup error, 2 a batch finished
//! with some failed cells, 3 a batch finished with every cell failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use negotiator_core::defaults::{
    CREDITOR_TRANSITION_PRIOR, EMOTION_CONTAGION, PAYOFF, TABLE_EMOTION_ORDER,
};
use negotiator_core::experiment::{
    exit_code_for, fit_from_transcripts, list_transcripts, load_params, pin_floats,
    run_experiment, BackendKind, CreditorKind, ExperimentConfig,
};
use negotiator_core::hmm::{FitOptions, HmmParams};
use negotiator_core::metrics::{render_text_table, RunReport};
use negotiator_core::scenario::{generate_scenarios, ScenarioBounds};

#[derive(Parser)]
#[command(
    name = "negotiator",
    version,
    about = "Multi-agent credit negotiation simulator with an emotion-aware creditor policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic delinquency scenarios as JSON.
    Generate(GenerateArgs),
    /// Run a batch experiment (config file plus flag overrides).
    Run(RunArgs),
    /// Fit the debtor mode model to recorded transcripts.
    Fit(FitArgs),
    /// Render the plain-text table for an existing run report.
    Report(ReportArgs),
    /// Print the built-in default tables verbatim as JSON.
    DumpDefaults(DumpDefaultsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    loan_min: Option<u64>,
    #[arg(long)]
    loan_max: Option<u64>,
    #[arg(long)]
    delinquency_min: Option<u32>,
    #[arg(long)]
    delinquency_max: Option<u32>,
    /// Lower bound on the creditor's opening repayment demand, in days.
    #[arg(long)]
    days_min: Option<u32>,
    #[arg(long)]
    days_max: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CreditorArg {
    Vanilla,
    Guided,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Llm,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    creditor: Option<CreditorArg>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    scenario_count: Option<u32>,
    /// Ingest scenarios from a JSON file instead of generating them.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    t_max: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Mode-model parameter JSON overriding the built-in tables.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Payoff matrix JSON overriding the built-in table.
    #[arg(long)]
    payoff: Option<PathBuf>,
    #[arg(long)]
    include_failures_in_speed: Option<bool>,
    /// Suppress the text table on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Directory of transcript `.jsonl` files (all are used).
    #[arg(long, required_unless_present = "paths")]
    transcripts_dir: Option<PathBuf>,
    /// Explicit transcript files.
    #[arg(conflicts_with = "transcripts_dir")]
    paths: Vec<PathBuf>,
    /// Initial parameters JSON; built-in defaults when omitted.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Where to write the fitted parameter JSON.
    #[arg(long, default_value = "fitted_params.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0.01)]
    smoothing: f64,
    /// Also re-estimate the contagion table (off by default).
    #[arg(long)]
    update_contagion: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run output directory containing `report.json`.
    #[arg(long, conflicts_with = "file")]
    dir: Option<PathBuf>,
    /// Explicit report JSON file.
    #[arg(long, required_unless_present = "dir")]
    file: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Order,
    Transition,
    Contagion,
    Payoff,
}

#[derive(Args)]
struct DumpDefaultsArgs {
    /// Print a single table instead of the full document.
    #[arg(long, value_enum)]
    table: Option<TableArg>,
    /// Compact instead of pretty-printed JSON.
    #[arg(long)]
    compact: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are configuration errors (exit 1); help/version exit 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Run(args) => run(args),
        Command::Fit(args) => fit(args),
        Command::Report(args) => report(args),
        Command::DumpDefaults(args) => dump_defaults(args),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let mut bounds = ScenarioBounds::default();
    if let Some(v) = args.loan_min {
        bounds.loan_amount_min = v;
    }
    if let Some(v) = args.loan_max {
        bounds.loan_amount_max = v;
    }
    if let Some(v) = args.delinquency_min {
        bounds.delinquency_months_min = v;
    }
    if let Some(v) = args.delinquency_max {
        bounds.delinquency_months_max = v;
    }
    if let Some(v) = args.days_min {
        bounds.creditor_initial_days_min = v;
    }
    if let Some(v) = args.days_max {
        bounds.creditor_initial_days_max = v;
    }
    let scenarios = generate_scenarios(args.seed, args.count, &bounds)?;
    let mut text = serde_json::to_string_pretty(&scenarios)?;
    text.push('\n');
    write_out(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.out {
        cfg.output_dir = v;
    }
    if let Some(v) = args.creditor {
        cfg.creditor = match v {
            CreditorArg::Vanilla => CreditorKind::Vanilla,
            CreditorArg::Guided => CreditorKind::Guided,
        };
    }
    if let Some(v) = args.backend {
        cfg.backend = match v {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Llm => BackendKind::Llm,
        };
    }
    if let Some(v) = args.scenario_count {
        cfg.scenario_count = v;
    }
    if args.scenarios.is_some() {
        cfg.scenarios_path = args.scenarios;
    }
    if let Some(v) = args.t_max {
        cfg.sim.t_max = v;
    }
    if let Some(v) = args.parallelism {
        cfg.parallelism = v;
    }
    if args.params.is_some() {
        cfg.params_path = args.params;
    }
    if args.payoff.is_some() {
        cfg.payoff_path = args.payoff;
    }
    if let Some(v) = args.include_failures_in_speed {
        cfg.include_failures_in_speed = v;
    }

    let report = run_experiment(&cfg).context("experiment failed before any cells completed")?;
    if !args.quiet {
        print!("{}", render_text_table(&report));
        println!(
            "report: {}",
            cfg.output_dir.join("report.json").display()
        );
    }
    Ok(ExitCode::from(exit_code_for(&report) as u8))
}

fn fit(args: FitArgs) -> anyhow::Result<ExitCode> {
    let paths = match &args.transcripts_dir {
        Some(dir) => list_transcripts(dir)?,
        None => args.paths.clone(),
    };
    if paths.is_empty() {
        anyhow::bail!("no transcript files to fit from");
    }
    let init = match &args.init {
        Some(path) => load_params(path)?,
        None => HmmParams::default(),
    };
    let opts = FitOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        smoothing: args.smoothing,
        update_contagion: args.update_contagion,
    };
    let fit = fit_from_transcripts(&paths, &init, &opts)?;
    let mut value = serde_json::to_value(&fit.params)?;
    pin_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    let trace = &fit.log_likelihood_trace;
    println!(
        "fitted {} sequences' model in {} step(s); log-likelihood {:.6} -> {:.6}; params: {}",
        paths.len(),
        fit.iterations,
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> anyhow::Result<ExitCode> {
    let path = match (&args.dir, &args.file) {
        (Some(dir), None) => dir.join("report.json"),
        (None, Some(file)) => file.clone(),
        _ => unreachable!("clap enforces exactly one source"),
    };
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: RunReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    print!("{}", render_text_table(&report));
    Ok(ExitCode::SUCCESS)
}

fn dump_defaults(args: DumpDefaultsArgs) -> anyhow::Result<ExitCode> {
    let labels: Vec<&str> = TABLE_EMOTION_ORDER.iter().map(|e| e.as_str()).collect();
    let full = serde_json::json!({
        "emotion_order": labels,
        "creditor_transition_prior": CREDITOR_TRANSITION_PRIOR,
        "emotion_contagion": EMOTION_CONTAGION,
        "payoff": PAYOFF,
    });
    let mut value = match args.table {
        None => full,
        Some(TableArg::Order) => full["emotion_order"].clone(),
        Some(TableArg::Transition) => full["creditor_transition_prior"].clone(),
        Some(TableArg::Contagion) => full["emotion_contagion"].clone(),
        Some(TableArg::Payoff) => full["payoff"].clone(),
    };
    pin_floats(&mut value);
    let mut text = if args.compact {
        serde_json::to_string(&value)?
    } else {
        serde_json::to_string_pretty(&value)?
    };
    text.push('\n');
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
