//! Command implementations behind the `dpdp` binary: scenario loading,
//! one-shot planning, full runs with trace/results/SVG outputs, and random
//! plan evaluation tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::error::{ScenarioError, SimError};
use crate::fitness::{AggregationMode, Evaluator, FitnessBreakdown, FitnessParams};
use crate::ga::{evolve, genome_to_actions, random_genome, stops_for_requests, GaConfig};
use crate::render::render_svg;
use crate::replan::plan_context_for;
use crate::scenario::{load_scenario, ScenarioDocument};
use crate::sim::{plan_seed, RunOutcome, Simulation};
use crate::world::{Action, ActionKind, AgentId};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("invalid DPDP_SEED value {0:?}")]
    BadSeedEnv(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run stopped early: {0}")]
    Incomplete(String),
}

impl CliError {
    /// 1 for validation-class failures, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) | CliError::UnknownAgent(_) | CliError::BadSeedEnv(_) => 1,
            CliError::Sim(_) | CliError::Write { .. } | CliError::Incomplete(_) => 2,
        }
    }
}

/// Seed precedence: explicit flag, then `DPDP_SEED`, then the scenario's
/// own default.
pub fn resolve_seed(flag: Option<u64>, scenario_default: u64) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("DPDP_SEED") {
        Ok(raw) => raw.trim().parse().map_err(|_| CliError::BadSeedEnv(raw)),
        Err(_) => Ok(scenario_default),
    }
}

/// Formats like Java's `Double.toString`, which the reference tables use:
/// plain decimal in [1e-3, 1e7), scientific with an uppercase `E` outside.
pub fn fmt_java(v: f64) -> String {
    if v == 0.0 {
        return "0.0".to_owned();
    }
    let magnitude = v.abs();
    if (1e-3..1e7).contains(&magnitude) {
        let s = format!("{v}");
        if s.contains('.') || s.contains('e') || s.contains('E') {
            s
        } else {
            format!("{s}.0")
        }
    } else {
        format!("{v:E}")
    }
}

/// One action in the `(Name args,flag)` listing style.
pub fn format_action(action: &Action) -> String {
    match &action.kind {
        ActionKind::Move { target } => format!("(Move {},{})", target, action.executed),
        ActionKind::Take {
            depot,
            article,
            quantity,
        } => format!("(Take {depot},{article},{quantity},{})", action.executed),
        ActionKind::Delivery {
            client,
            article,
            quantity,
        } => format!("(Delivery {client},{article},{quantity},{})", action.executed),
        ActionKind::ChargeBattery { charger } => {
            format!("(ChargeBattery {charger},{})", action.executed)
        }
    }
}

pub fn format_action_list(actions: &[Action]) -> String {
    actions.iter().map(format_action).collect::<Vec<_>>().join("")
}

/// The `F_C1 =... F_C2 =... F_A =...` line.
pub fn format_fitness_line(breakdown: &FitnessBreakdown) -> String {
    let mut line = String::new();
    for (i, score) in breakdown.scores.iter().enumerate() {
        let _ = write!(line, "F_C{} ={} ", i + 1, fmt_java(score.fitness));
    }
    let _ = write!(line, "F_A ={}", fmt_java(breakdown.aggregate));
    line
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Weighted,
    Legacy,
}

fn apply_mode(params: FitnessParams, mode: Option<ModeArg>) -> FitnessParams {
    match mode {
        None => params,
        Some(ModeArg::Weighted) => FitnessParams {
            mode: AggregationMode::WeightedMean,
            ..params
        },
        Some(ModeArg::Legacy) => FitnessParams {
            mode: match params.mode {
                legacy @ AggregationMode::Legacy { .. } => legacy,
                AggregationMode::WeightedMean => AggregationMode::legacy_default(),
            },
            ..params
        },
    }
}

fn sorted_agent_index(doc: &ScenarioDocument, agent: &AgentId) -> usize {
    let mut ids: Vec<&AgentId> = doc.agents.iter().map(|a| &a.id).collect();
    ids.sort();
    ids.iter().position(|id| *id == agent).expect("known agent")
}

#[derive(Debug, Clone)]
pub struct PlanArgs {
    pub scenario: PathBuf,
    pub agent: String,
    pub seed: Option<u64>,
    pub mode: Option<ModeArg>,
    pub out: Option<PathBuf>,
}

/// Evolves one agent's initial plan and renders the listing plus its
/// fitness line.
pub fn cmd_plan(args: &PlanArgs) -> Result<String, CliError> {
    let doc = load_scenario(&args.scenario)?;
    let spec = doc
        .agent(&args.agent)
        .ok_or_else(|| CliError::UnknownAgent(args.agent.clone()))?
        .clone();
    let seed = resolve_seed(args.seed, doc.ga.config.seed)?;
    let params = apply_mode(doc.ga.fitness, args.mode);

    let state = doc.initial_state();
    let stops = stops_for_requests(state.pending_requests_of(&spec.id));
    let ctx = plan_context_for(&spec, spec.start, &stops, &state, params)
        .map_err(SimError::Fitness)?;
    let config = GaConfig {
        seed: plan_seed(seed, sorted_agent_index(&doc, &spec.id) as u64, 0),
        ..doc.ga.config
    };
    let report = evolve(&stops, &ctx, &config);
    let actions = genome_to_actions(&report.best, &state.requests);

    let mut text = String::new();
    let _ = writeln!(text, "P({})={}", spec.id, format_action_list(&actions));
    let _ = writeln!(text, "{}", format_fitness_line(&report.best_breakdown));
    let _ = writeln!(
        text,
        "generations={} early_stop={}",
        report.generations, report.early_stopped
    );

    if let Some(out) = &args.out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(text)
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub max_ticks: Option<u64>,
    pub trace: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Runs the full simulation and writes the requested artifacts. The run
/// outcome comes back even when it did not complete, so callers decide the
/// exit code.
pub fn cmd_run(args: &RunArgs) -> Result<(RunOutcome, String), CliError> {
    let doc = load_scenario(&args.scenario)?;
    let seed = resolve_seed(args.seed, doc.ga.config.seed)?;
    let mut sim = Simulation::from_scenario(&doc).with_seed(seed);
    if let Some(max_ticks) = args.max_ticks {
        sim = sim.with_max_ticks(max_ticks);
    }
    let outcome = sim.run()?;

    if let Some(path) = &args.trace {
        write_atomic(path, trace_csv(&outcome).as_bytes())?;
    }
    if let Some(path) = &args.results {
        write_atomic(path, results_json(&outcome).as_bytes())?;
    }
    if let Some(path) = &args.svg {
        let svg = render_svg(doc.world.bounds, &outcome.final_state, &outcome);
        write_atomic(path, svg.as_bytes())?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "termination: {:?}", outcome.termination);
    let _ = writeln!(summary, "ticks: {}", outcome.metrics.ticks);
    for (agent, metrics) in &outcome.metrics.agents {
        let _ = writeln!(
            summary,
            "{agent}: distance={:.3} replans={} plans={}",
            metrics.total_distance,
            metrics.replan_count,
            metrics.plan_fitness.len()
        );
    }
    Ok((outcome, summary))
}

/// Trace CSV: `tick,agent_id,x,y,battery,action_kind,request_id,event_flag`
/// with a header row, one row per (tick, agent), LF endings.
pub fn trace_csv(outcome: &RunOutcome) -> String {
    let mut csv = String::from("tick,agent_id,x,y,battery,action_kind,request_id,event_flag\n");
    for record in &outcome.trace {
        let event_flag = if record.events_fired > 0 { 1 } else { 0 };
        for (agent, row) in &record.agents {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                record.tick,
                agent,
                row.position.x,
                row.position.y,
                row.battery,
                row.action.as_deref().unwrap_or(""),
                row.request.map(|r| r.0.to_string()).unwrap_or_default(),
                event_flag
            );
        }
    }
    csv
}

/// Results JSON: run metrics plus every evolution report per agent.
pub fn results_json(outcome: &RunOutcome) -> String {
    let value = serde_json::json!({
        "termination": outcome.termination,
        "metrics": outcome.metrics,
        "reports": outcome.reports,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("serializable outcome");
    text.push('\n');
    text
}

#[derive(Debug, Clone)]
pub struct FitnessTableArgs {
    pub scenario: PathBuf,
    pub agent: String,
    pub count: usize,
    pub seed: Option<u64>,
}

/// Evaluates `count` random feasible plans for one agent, one table row
/// per plan.
pub fn cmd_fitness_table(args: &FitnessTableArgs) -> Result<String, CliError> {
    let doc = load_scenario(&args.scenario)?;
    let spec = doc
        .agent(&args.agent)
        .ok_or_else(|| CliError::UnknownAgent(args.agent.clone()))?
        .clone();
    let seed = resolve_seed(args.seed, doc.ga.config.seed)?;

    let state = doc.initial_state();
    let stops = stops_for_requests(state.pending_requests_of(&spec.id));
    let ctx = plan_context_for(&spec, spec.start, &stops, &state, doc.ga.fitness)
        .map_err(SimError::Fitness)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for i in 0..args.count {
        let genome = random_genome(&stops, &mut rng);
        let breakdown = ctx.evaluate(genome.stops());
        let mut line = format!("Plan {i}");
        for (j, score) in breakdown.scores.iter().enumerate() {
            let _ = write!(line, "\tF_C{} ={}", j + 1, fmt_java(score.fitness));
        }
        let _ = write!(line, "\tF_A ={}", fmt_java(breakdown.aggregate));
        let _ = writeln!(text, "{line}");
    }
    Ok(text)
}

pub fn cmd_validate(path: &Path) -> Result<String, CliError> {
    let doc = load_scenario(path)?;
    Ok(format!(
        "ok: {} agents, {} requests, {} events\n",
        doc.agents.len(),
        doc.requests.len(),
        doc.events.len()
    ))
}

/// Writes through a sibling temp file and renames, so readers never see a
/// half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let display = path.display().to_string();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|source| CliError::Write {
        path: display.clone(),
        source,
    })?;
    std::fs::rename(&tmp, path).map_err(|source| CliError::Write {
        path: display,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn java_style_formatting_matches_the_reference_tables() {
        assert_eq!(fmt_java(6.323401357583406e-4), "6.323401357583406E-4");
        assert_eq!(fmt_java(7.781241907869489e-5), "7.781241907869489E-5");
        assert_eq!(fmt_java(0.01), "0.01");
        assert_eq!(fmt_java(0.0), "0.0");
        assert_eq!(fmt_java(1.0), "1.0");
        assert_eq!(fmt_java(1581.43), "1581.43");
    }

    #[test]
    fn actions_render_in_listing_style() {
        use crate::world::{LocationRef, RequestId};
        let mut action = Action::new(
            ActionKind::Move {
                target: LocationRef::Depot("S2".into()),
            },
            Some(RequestId(3)),
        );
        assert_eq!(format_action(&action), "(Move S2,false)");
        action.executed = true;
        assert_eq!(format_action(&action), "(Move S2,true)");

        let take = Action::new(
            ActionKind::Take {
                depot: "S2".into(),
                article: "Art2".into(),
                quantity: 150,
            },
            Some(RequestId(3)),
        );
        assert_eq!(format_action(&take), "(Take S2,Art2,150,false)");
    }
}
