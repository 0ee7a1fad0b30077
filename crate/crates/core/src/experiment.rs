//! Batch experiment orchestration: scenario generation or ingestion, seeded
//! (scenario × persona) cells fanned out on a bounded worker pool, per-cell
//! transcript persistence, metric aggregation into a run report, and offline
//! model fitting from accumulated transcripts.

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::judge::RuleBasedJudge;
use crate::agents::llm::{EndpointConfig, LlmAgent, LlmClient, LlmJudge, LlmRecognizer};
use crate::agents::recognizer::RuleBasedRecognizer;
use crate::agents::scripted::{Persona, ScriptedCreditor, ScriptedDebtor};
use crate::emotion::Emotion;
use crate::hmm::{baum_welch_fit, FitOptions, FitResult, HmmError, HmmParams, ObservationPair};
use crate::metrics::{
    build_section, FailedCell, MetricsError, RuleBasedEthics, RunReport,
};
use crate::payoff::PayoffMatrix;
use crate::policy::CreditorPolicy;
use crate::scenario::{generate_scenarios, parse_scenarios, Scenario, ScenarioBounds, ScenarioError};
use crate::sim::{run_negotiation, CreditorStyle, DialogueTurn, Outcome, SimConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    // the cause is embedded in the message rather than exposed as a source,
    // so chain-walking reporters do not print it twice
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{path}: {cause}")]
    Json {
        path: PathBuf,
        cause: serde_json::Error,
    },
    #[error("transcript {path}: {problem}")]
    BadTranscript { path: PathBuf, problem: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] HmmError),
    #[error("no usable observation sequences in the given transcripts")]
    EmptySequences,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |cause| ExperimentError::Io {
        path: path.to_path_buf(),
        cause,
    }
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditorKind {
    /// Always-neutral emotion baseline.
    Vanilla,
    /// The payoff-game / hidden-mode policy stack.
    Guided,
}

impl CreditorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CreditorKind::Vanilla => "vanilla",
            CreditorKind::Guided => "guided",
        }
    }
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Deterministic persona scripts with the rule-based judge/recognizer.
    Scripted,
    /// HTTP chat-completion backends for both parties, judge, and recognizer.
    Llm,
}

/// Full description of one experiment batch. Every field has a default, so
/// a config file only states what it overrides; unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Number of scenarios to generate (ignored when `scenarios_path` is
    /// given, in which case the ingested file defines the set).
    pub scenario_count: u32,
    pub scenarios_path: Option<PathBuf>,
    pub bounds: ScenarioBounds,
    pub creditor: CreditorKind,
    pub personas: Vec<Persona>,
    pub backend: BackendKind,
    pub endpoint: EndpointConfig,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 means one per available core.
    pub parallelism: usize,
    /// Whether failed negotiations contribute their terminal round count to
    /// the speed average (agreements always count).
    pub include_failures_in_speed: bool,
    /// Optional JSON overrides for the mode-model and payoff tables.
    pub params_path: Option<PathBuf>,
    pub payoff_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            scenario_count: 10,
            scenarios_path: None,
            bounds: ScenarioBounds::default(),
            creditor: CreditorKind::Guided,
            personas: Persona::standard_roster(),
            backend: BackendKind::Scripted,
            endpoint: EndpointConfig::default(),
            sim: SimConfig::default(),
            output_dir: PathBuf::from("out"),
            parallelism: 0,
            include_failures_in_speed: true,
            params_path: None,
            payoff_path: None,
        }
    }
}

pub fn run_id(seed: u64) -> String {
    format!("run-{seed:016x}")
}

/// Per-cell seed: the first eight bytes of SHA-256 over the run seed, the
/// scenario id, and the persona slug. Stable across platforms and work
/// partitioning.
pub fn cell_seed(run_seed: u64, scenario_id: &str, persona: Persona) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(scenario_id.as_bytes());
    hasher.update(persona.slug().as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// One line of a transcript JSONL file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Turn {
        run_id: String,
        scenario_id: String,
        persona: String,
        #[serde(flatten)]
        turn: DialogueTurn,
    },
    Outcome {
        run_id: String,
        scenario_id: String,
        persona: String,
        initial_days: u32,
        #[serde(flatten)]
        outcome: Outcome,
    },
}

/// Pins every float in `value` to nine significant digits so serialized
/// artifacts are byte-identical across platforms and math library versions.
/// Integral numbers pass through untouched.
pub fn pin_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("checked f64");
                let pinned: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
                *n = serde_json::Number::from_f64(pinned).expect("pinned float is finite");
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(pin_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(pin_floats),
        _ => {}
    }
}

fn pinned_json_line<T: Serialize>(record: &T) -> String {
    let mut value = serde_json::to_value(record).expect("record serializes");
    pin_floats(&mut value);
    let mut line = serde_json::to_string(&value).expect("value serializes");
    line.push('\n');
    line
}

/// A parsed transcript file.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptFile {
    pub run_id: String,
    pub scenario_id: String,
    pub persona: String,
    pub initial_days: u32,
    pub turns: Vec<DialogueTurn>,
    pub outcome: Outcome,
}

pub fn write_transcript(
    path: &Path,
    run_id: &str,
    scenario: &Scenario,
    persona: Persona,
    turns: &[DialogueTurn],
    outcome: &Outcome,
) -> Result<(), ExperimentError> {
    let mut buf = String::new();
    for turn in turns {
        buf.push_str(&pinned_json_line(&TranscriptRecord::Turn {
            run_id: run_id.to_string(),
            scenario_id: scenario.id.clone(),
            persona: persona.as_string(),
            turn: turn.clone(),
        }));
    }
    buf.push_str(&pinned_json_line(&TranscriptRecord::Outcome {
        run_id: run_id.to_string(),
        scenario_id: scenario.id.clone(),
        persona: persona.as_string(),
        initial_days: scenario.creditor_initial_days,
        outcome: *outcome,
    }));
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_transcript(path: &Path) -> Result<TranscriptFile, ExperimentError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let bad = |problem: &str| ExperimentError::BadTranscript {
        path: path.to_path_buf(),
        problem: problem.to_string(),
    };
    let mut turns = Vec::new();
    let mut tail: Option<(String, String, String, u32, Outcome)> = None;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if tail.is_some() {
            return Err(bad("records found after the outcome line"));
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|cause| ExperimentError::Json {
                path: path.to_path_buf(),
                cause,
            })?;
        match record {
            TranscriptRecord::Turn { turn, .. } => turns.push(turn),
            TranscriptRecord::Outcome {
                run_id,
                scenario_id,
                persona,
                initial_days,
                outcome,
            } => tail = Some((run_id, scenario_id, persona, initial_days, outcome)),
        }
    }
    let (run_id, scenario_id, persona, initial_days, outcome) =
        tail.ok_or_else(|| bad("missing outcome line"))?;
    if outcome.rounds as usize != turns.len() {
        return Err(bad("outcome round count does not match the turn records"));
    }
    Ok(TranscriptFile {
        run_id,
        scenario_id,
        persona,
        initial_days,
        turns,
        outcome,
    })
}

/// All `*.jsonl` files directly inside `dir`, sorted by name.
pub fn list_transcripts(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_params(path: &Path) -> Result<HmmParams, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|cause| ExperimentError::Json {
        path: path.to_path_buf(),
        cause,
    })
}

pub fn load_payoff(path: &Path) -> Result<PayoffMatrix, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|cause| ExperimentError::Json {
        path: path.to_path_buf(),
        cause,
    })
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    if cfg.personas.is_empty() {
        return Err(ExperimentError::Config("persona list is empty".into()));
    }
    let mut slugs: Vec<String> = cfg.personas.iter().map(|p| p.slug()).collect();
    slugs.sort();
    slugs.dedup();
    if slugs.len() != cfg.personas.len() {
        return Err(ExperimentError::Config(
            "persona list contains duplicates".into(),
        ));
    }
    if cfg.scenario_count == 0 && cfg.scenarios_path.is_none() {
        return Err(ExperimentError::Config(
            "scenario_count must be at least 1 (or provide scenarios_path)".into(),
        ));
    }
    cfg.sim
        .validate()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    Ok(())
}

fn load_scenarios(cfg: &ExperimentConfig) -> Result<Vec<Scenario>, ExperimentError> {
    match &cfg.scenarios_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(parse_scenarios(&text)?)
        }
        None => Ok(generate_scenarios(cfg.seed, cfg.scenario_count as usize, &cfg.bounds)?),
    }
}

fn build_style(cfg: &ExperimentConfig) -> Result<CreditorStyle, ExperimentError> {
    match cfg.creditor {
        CreditorKind::Vanilla => Ok(CreditorStyle::Vanilla),
        CreditorKind::Guided => {
            let params = match &cfg.params_path {
                Some(p) => load_params(p)?,
                None => HmmParams::default(),
            };
            let payoff = match &cfg.payoff_path {
                Some(p) => load_payoff(p)?,
                None => PayoffMatrix::default(),
            };
            Ok(CreditorStyle::Guided(CreditorPolicy {
                params,
                payoff,
                activation: cfg.sim.activation,
                ..CreditorPolicy::default()
            }))
        }
    }
}

struct CellOutput {
    persona_idx: usize,
    initial_days: u32,
    scenario_id: String,
    file: String,
    result: Result<(Vec<DialogueTurn>, Outcome), String>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    rid: &str,
    scenario: &Scenario,
    persona: Persona,
    style: &CreditorStyle,
    transcripts_dir: &Path,
) -> Result<(Vec<DialogueTurn>, Outcome), String> {
    let seed = cell_seed(cfg.seed, &scenario.id, persona);
    let sim_cfg = SimConfig { seed, ..cfg.sim };
    let outcome = match cfg.backend {
        BackendKind::Scripted => run_negotiation(
            scenario,
            &ScriptedCreditor,
            &ScriptedDebtor::new(persona, scenario, seed),
            &RuleBasedJudge,
            &RuleBasedRecognizer,
            style,
            &sim_cfg,
        ),
        BackendKind::Llm => {
            let client = |label: &str| {
                LlmClient::new(cfg.endpoint.clone())
                    .map_err(|e| format!("{label} client: {e}"))
            };
            let creditor = LlmAgent::creditor(client("creditor")?);
            let debtor = LlmAgent::debtor(client("debtor")?, persona);
            let judge = LlmJudge::new(client("judge")?);
            let recognizer = LlmRecognizer::new(client("recognizer")?);
            run_negotiation(scenario, &creditor, &debtor, &judge, &recognizer, style, &sim_cfg)
        }
    }
    .map_err(|e| e.to_string())?;

    let file = transcripts_dir.join(format!("{}__{}.jsonl", scenario.id, persona.slug()));
    write_transcript(&file, rid, scenario, persona, &outcome.0, &outcome.1)
        .map_err(|e| e.to_string())?;
    Ok(outcome)
}

/// Runs every (scenario × persona) cell and aggregates the results. Cell
/// failures are isolated: they appear in the report's `failed_cells` and
/// leave the other cells' metrics intact.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    validate(cfg)?;
    let scenarios = load_scenarios(cfg)?;
    let style = build_style(cfg)?;
    let rid = run_id(cfg.seed);

    let transcripts_dir = cfg.output_dir.join("transcripts");
    fs::create_dir_all(&transcripts_dir).map_err(io_err(&transcripts_dir))?;
    // fail before any negotiation runs if the location is not writable
    let probe = transcripts_dir.join(".write-probe");
    fs::write(&probe, b"").map_err(io_err(&probe))?;
    fs::remove_file(&probe).map_err(io_err(&probe))?;

    let cells: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..cfg.personas.len()).map(move |p| (s, p)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| ExperimentError::Config(format!("worker pool: {e}")))?;
    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, p)| {
                let scenario = &scenarios[s];
                let persona = cfg.personas[p];
                CellOutput {
                    persona_idx: p,
                    initial_days: scenario.creditor_initial_days,
                    scenario_id: scenario.id.clone(),
                    file: format!("transcripts/{}__{}.jsonl", scenario.id, persona.slug()),
                    result: run_cell(cfg, &rid, scenario, persona, &style, &transcripts_dir),
                }
            })
            .collect()
    });

    let mut personas = Vec::with_capacity(cfg.personas.len());
    for (p, persona) in cfg.personas.iter().enumerate() {
        let mut completed = Vec::new();
        let mut transcripts = Vec::new();
        let mut failed = 0u32;
        for out in outputs.iter().filter(|o| o.persona_idx == p) {
            match &out.result {
                Ok((turns, outcome)) => {
                    completed.push((out.initial_days, *outcome));
                    transcripts.push(turns.as_slice());
                }
                Err(_) => failed += 1,
            }
        }
        personas.push(build_section(
            &persona.as_string(),
            &completed,
            &transcripts,
            failed,
            &RuleBasedEthics,
            cfg.include_failures_in_speed,
        )?);
    }

    let mut completed = Vec::new();
    let mut transcripts = Vec::new();
    let mut failed_cells = Vec::new();
    let mut transcript_files = Vec::new();
    for out in &outputs {
        match &out.result {
            Ok((turns, outcome)) => {
                completed.push((out.initial_days, *outcome));
                transcripts.push(turns.as_slice());
                transcript_files.push(out.file.clone());
            }
            Err(error) => failed_cells.push(FailedCell {
                scenario_id: out.scenario_id.clone(),
                persona: cfg.personas[out.persona_idx].as_string(),
                error: error.clone(),
            }),
        }
    }
    let overall = build_section(
        "overall",
        &completed,
        &transcripts,
        failed_cells.len() as u32,
        &RuleBasedEthics,
        cfg.include_failures_in_speed,
    )?;

    let report = RunReport {
        run_id: rid,
        seed: cfg.seed,
        creditor: cfg.creditor.as_str().to_string(),
        scenario_count: scenarios.len() as u32,
        include_failures_in_speed: cfg.include_failures_in_speed,
        personas,
        overall,
        failed_cells,
        transcript_files,
    };
    write_report(&report, &cfg.output_dir)?;
    Ok(report)
}

/// Writes `report.json` (floats pinned, keys sorted) and the plain-text
/// table `report.txt` into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), ExperimentError> {
    let mut value = serde_json::to_value(report).expect("report serializes");
    pin_floats(&mut value);
    let json_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(io_err(&json_path))?;
    let txt_path = dir.join("report.txt");
    fs::write(&txt_path, crate::metrics::render_text_table(report)).map_err(io_err(&txt_path))?;
    Ok(())
}

/// CLI exit status for a finished run: 0 when every cell completed, 2 when
/// some failed, 3 when all did.
pub fn exit_code_for(report: &RunReport) -> i32 {
    let failed = report.overall.failed_cells;
    if failed == 0 {
        0
    } else if failed < report.overall.cells {
        2
    } else {
        3
    }
}

/// The observation sequence a transcript induces for the mode model: the
/// debtor's emotion at each turn paired with the creditor display the debtor
/// was reacting to — i.e. the previous turn's chosen emotion, neutral on the
/// opening turn. This mirrors exactly how the online filter sees a live
/// negotiation.
pub fn observation_sequence(turns: &[DialogueTurn]) -> Vec<ObservationPair> {
    let mut prev_creditor = Emotion::Neutral;
    let mut seq = Vec::with_capacity(turns.len());
    for turn in turns {
        seq.push(ObservationPair::new(turn.debtor_emotion, prev_creditor));
        prev_creditor = turn.creditor_emotion;
    }
    seq
}

/// Fits the mode model to the observation sequences extracted from the given
/// transcript files, starting from `init`.
pub fn fit_from_transcripts(
    paths: &[PathBuf],
    init: &HmmParams,
    opts: &FitOptions,
) -> Result<FitResult, ExperimentError> {
    let mut sequences = Vec::new();
    for path in paths {
        let transcript = read_transcript(path)?;
        if !transcript.turns.is_empty() {
            sequences.push(observation_sequence(&transcript.turns));
        }
    }
    if sequences.is_empty() {
        return Err(ExperimentError::EmptySequences);
    }
    Ok(baum_welch_fit(&sequences, init, opts)?)
}
