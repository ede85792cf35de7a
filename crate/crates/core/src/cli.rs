//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 model or validation error, 3
//! inference error. Results go to standard output, diagnostics to standard
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::dbn::{filter_with_cap, DbnError, DEFAULT_STEP_CAP};
use crate::decision::{
    optimal_policy, recommend_with_guards, DecisionError, DwellGuard, RecommendationLog,
    SafetyOverride, Trigger,
};
use crate::hazid::{parse_pha_csv, rank_hazards, render_pha, HazidError, PhaFormat};
use crate::inference::{
    posterior_enumeration, posterior_ve, InferenceError, LikelihoodWeighting, Posterior, Query,
};
use crate::model_file::ModelDocument;
use crate::models::{self, ModelsError, ScenarioBundle};
use crate::network::{Evidence, ModelError, NodeId};
use crate::report::{emit_tornado_svg, tornado_csv, trajectory_csv};
use crate::sensitivity::{
    node_importance, tornado, SensitivityError, SensitivityTarget, TornadoOptions, DEFAULT_POINTS,
    DEFAULT_SWEEP,
};

#[derive(Debug, Parser)]
#[command(
    name = "riskbn",
    version,
    about = "Discrete Bayesian, dynamic and decision network risk engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior marginals of target nodes.
    Query(QueryArgs),
    /// Forward-filtered trajectories of the temporal model.
    Dbn(DbnArgs),
    /// One-way tornado sensitivity of a target posterior.
    Sensitivity(SensitivityArgs),
    /// Expected-utility decision recommendation.
    Decide(DecideArgs),
    /// PHA table with risk priority numbers.
    Hazid(HazidArgs),
    /// Validate a model and report every violation.
    Validate(ModelArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ModelArgs {
    /// Model file (JSON).
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Bundled scenario: seabed or confined.
    #[arg(long, value_name = "LABEL")]
    scenario: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Ve,
    Enumeration,
    Lw,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target nodes, comma-separated.
    #[arg(long, required = true, value_delimiter = ',')]
    target: Vec<String>,
    /// Evidence as node=STATE pairs, comma-separated.
    #[arg(long, default_value = "")]
    evidence: String,
    #[arg(long, value_enum, default_value_t = Method::Ve)]
    method: Method,
    /// Likelihood-weighting sample count.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Sampler seed.
    #[arg(long, env = "RISKBN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct DbnArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of time slices.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Slice length in hours.
    #[arg(long, default_value_t = models::DEFAULT_STEP_HOURS)]
    step_hours: f64,
    /// Monitored nodes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "loss_of_eely")]
    monitor: Vec<String>,
    /// Raise the slice cap (a warning is logged above the default).
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    max_steps: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target as NODE=STATE.
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "")]
    evidence: String,
    /// Relative sweep half-width in (0, 1].
    #[arg(long, default_value_t = DEFAULT_SWEEP)]
    sweep: f64,
    /// Odd number of sweep points.
    #[arg(long, default_value_t = DEFAULT_POINTS)]
    points: usize,
    /// Also write a tornado diagram as SVG.
    #[arg(long, value_name = "PATH")]
    svg: Option<PathBuf>,
    /// Sweep root priors only.
    #[arg(long)]
    roots_only: bool,
    /// Also sweep the target node's own CPT.
    #[arg(long)]
    include_target: bool,
    /// Limit output (and SVG) to the top K parameters.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct DecideArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Evidence for one call; repeat for a sequence of calls.
    #[arg(long)]
    evidence: Vec<String>,
    /// Dwell guard: calls a new recommendation must persist before it is emitted.
    #[arg(long, default_value_t = 3)]
    guard: usize,
    /// Safety override `node=STATE:decision=alt` or `node=STATE>p:decision=alt`.
    #[arg(long = "override", value_name = "RULE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).multiple(false))]
struct HazidArgs {
    /// Bundled scenario: seabed or confined.
    #[arg(long, group = "source")]
    scenario: Option<String>,
    /// PHA CSV file.
    #[arg(long, group = "source", value_name = "PATH")]
    pha: Option<PathBuf>,
    /// Sort by descending rpn.
    #[arg(long)]
    rank: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Model(String),
    Inference(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Model(_) => 2,
            CliError::Inference(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Model(m) | CliError::Inference(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MalformedEvidence(_) | ModelError::DuplicateEvidence(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Model(m) => m.into(),
            InferenceError::InvalidQuery(_) | InferenceError::NoSamples => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Inference(e.to_string()),
        }
    }
}

impl From<DbnError> for CliError {
    fn from(e: DbnError) -> Self {
        match e {
            DbnError::Model(m) => m.into(),
            DbnError::Inference(i) => i.into(),
            DbnError::StepCapExceeded { .. } | DbnError::NoSteps | DbnError::Domain(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::Model(m) => m.into(),
            SensitivityError::Inference(i) => i.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DecisionError> for CliError {
    fn from(e: DecisionError) -> Self {
        match e {
            DecisionError::Model(m) => m.into(),
            DecisionError::Inference(i) => i.into(),
            DecisionError::UnknownDecision(_)
            | DecisionError::UnknownAlternative { .. }
            | DecisionError::ConflictingOverrides { .. }
            | DecisionError::DecisionObserved(_)
            | DecisionError::InvalidGuard => CliError::Usage(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<HazidError> for CliError {
    fn from(e: HazidError) -> Self {
        match e {
            HazidError::UnsupportedFormat(_) => CliError::Usage(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<ModelsError> for CliError {
    fn from(e: ModelsError) -> Self {
        match e {
            ModelsError::UnknownScenario(_) => CliError::Usage(e.to_string()),
            ModelsError::Model(m) => m.into(),
            ModelsError::Dbn(d) => d.into(),
            ModelsError::Decision(d) => d.into(),
            ModelsError::Hazid(h) => h.into(),
            _ => CliError::Model(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn load_document(args: &ModelArgs) -> Result<ModelDocument, CliError> {
    match (&args.model, &args.scenario) {
        (Some(path), _) => Ok(ModelDocument::load(path)?),
        (None, Some(label)) => Ok(models::scenario(label)?.document),
        (None, None) => Err(CliError::Usage(
            "one of --model or --scenario is required".into(),
        )),
    }
}

fn load_bundle(args: &ModelArgs) -> Result<ScenarioBundle, CliError> {
    match &args.scenario {
        Some(label) => Ok(models::scenario(label)?),
        None => Ok(models::bundle_from_document(load_document(args)?)?),
    }
}

fn parse_evidence(text: &str) -> Result<Evidence, CliError> {
    Ok(Evidence::parse(text)?)
}

fn parse_assignment(text: &str) -> Result<(String, String), CliError> {
    match text.split_once('=') {
        Some((n, s)) if !n.trim().is_empty() && !s.trim().is_empty() => {
            Ok((n.trim().to_owned(), s.trim().to_owned()))
        }
        _ => Err(CliError::Usage(format!(
            "expected NODE=STATE, got `{text}`"
        ))),
    }
}

fn parse_override(rule: &str) -> Result<SafetyOverride, CliError> {
    let bad = || CliError::Usage(format!("malformed override `{rule}`"));
    let (trigger, force) = rule.rsplit_once(':').ok_or_else(bad)?;
    let trigger = match trigger.split_once('>') {
        Some((cond, p)) => {
            let (node, state) = parse_assignment(cond)?;
            let threshold: f64 = p.trim().parse().map_err(|_| bad())?;
            Trigger::ProbabilityAbove {
                node: node.into(),
                state,
                threshold,
            }
        }
        None => {
            let (node, state) = parse_assignment(trigger)?;
            Trigger::Observed {
                node: node.into(),
                state,
            }
        }
    };
    let force = force
        .split(',')
        .map(|f| parse_assignment(f).map(|(d, a)| (NodeId::new(d), a)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SafetyOverride {
        name: rule.to_owned(),
        trigger,
        force,
    })
}

fn to_text(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

fn csv_to_markdown(text: &str) -> String {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut out = String::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.expect("csv produced by this crate");
        let cells: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if i == 0 {
            out.push_str(&format!("|{}\n", "---|".repeat(cells.len())));
        }
    }
    out
}

fn posterior_csv(post: &Posterior) -> String {
    let mut s = String::from("node,state,probability\n");
    for m in &post.marginals {
        for (state, p) in m.states.iter().zip(&m.probabilities) {
            s.push_str(&format!("{},{},{}\n", m.node, state, p));
        }
    }
    s
}

fn posterior_json(post: &Posterior) -> Value {
    let marginals: Vec<Value> = post
        .marginals
        .iter()
        .map(|m| {
            let mut v = json!({
                "node": m.node,
                "states": m.states,
                "probabilities": m.probabilities,
            });
            if let Some(se) = &m.std_errors {
                v["std_errors"] = json!(se);
            }
            v
        })
        .collect();
    json!({ "log_evidence": post.log_evidence, "marginals": marginals })
}

fn cmd_query(a: &QueryArgs) -> Result<String, CliError> {
    let net = load_document(&a.model)?.network()?;
    let evidence = parse_evidence(&a.evidence)?;
    let query = Query::new(
        a.target.iter().map(|t| NodeId::new(t.trim())),
        evidence.clone(),
    );
    let (post, extra) = match a.method {
        Method::Ve => (posterior_ve(&net, &query)?, Value::Null),
        Method::Enumeration => (posterior_enumeration(&net, &query)?, Value::Null),
        Method::Lw => {
            let est = LikelihoodWeighting::new(a.samples, a.seed).run(&net, &query)?;
            let diag = json!({
                "samples": a.samples,
                "seed": a.seed,
                "effective_sample_size": est.effective_sample_size,
                "min_weight": est.min_weight,
                "max_weight": est.max_weight,
            });
            (est.posterior, diag)
        }
    };
    match a.format {
        Format::Json => {
            let mut v = posterior_json(&post);
            v["method"] = json!(format!("{:?}", a.method).to_lowercase());
            v["evidence"] = json!(evidence);
            if !extra.is_null() {
                v["sampler"] = extra;
            }
            Ok(to_text(&v))
        }
        Format::Csv => Ok(posterior_csv(&post)),
        Format::Md => Ok(csv_to_markdown(&posterior_csv(&post))),
    }
}

fn cmd_dbn(a: &DbnArgs) -> Result<String, CliError> {
    let bundle = load_bundle(&a.model)?;
    let tsn = bundle.two_slice_with_step(a.step_hours)?;
    let monitored: Vec<NodeId> = a.monitor.iter().map(|m| NodeId::new(m.trim())).collect();
    let traj = filter_with_cap(&tsn, a.steps, &monitored, a.step_hours, a.max_steps)?;
    match a.format {
        Format::Csv => Ok(trajectory_csv(&traj)),
        Format::Md => Ok(csv_to_markdown(&trajectory_csv(&traj))),
        Format::Json => Ok(to_text(
            &serde_json::to_value(&traj).expect("trajectory serializes"),
        )),
    }
}

fn cmd_sensitivity(a: &SensitivityArgs) -> Result<String, CliError> {
    let net = load_document(&a.model)?.network()?;
    let (node, state) = parse_assignment(&a.target)?;
    let target = SensitivityTarget::new(node, state).with_evidence(parse_evidence(&a.evidence)?);
    let options = TornadoOptions {
        sweep: a.sweep,
        points: a.points,
        roots_only: a.roots_only,
        include_target: a.include_target,
    };
    let mut entries = tornado(&net, &target, &options)?;
    let importance = node_importance(&entries);
    if let Some(k) = a.top {
        entries.truncate(k);
    }
    if let Some(path) = &a.svg {
        let title = format!("Sensitivity of P({}={})", target.node, target.state);
        emit_tornado_svg(&entries, &title, path).map_err(|e| io_error(path, e))?;
    }
    match a.format {
        Format::Csv => Ok(tornado_csv(&entries)),
        Format::Md => Ok(csv_to_markdown(&tornado_csv(&entries))),
        Format::Json => Ok(to_text(&json!({
            "target": {"node": target.node, "state": target.state},
            "evidence": target.evidence,
            "sweep": a.sweep,
            "points": a.points,
            "node_importance": importance,
            "entries": entries,
        }))),
    }
}

fn cmd_decide(a: &DecideArgs) -> Result<String, CliError> {
    let bundle = load_bundle(&a.model)?;
    let guard = DwellGuard::new(a.guard)?;
    let overrides = a
        .overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<Result<Vec<_>, _>>()?;
    let calls: Vec<Evidence> = if a.evidence.is_empty() {
        vec![Evidence::new()]
    } else {
        a.evidence
            .iter()
            .map(|e| parse_evidence(e))
            .collect::<Result<_, _>>()?
    };
    if calls.len() == 1 && overrides.is_empty() && guard.calls() == 1 {
        return Ok(to_text(
            &optimal_policy(&bundle.decision, &calls[0])?.to_json(),
        ));
    }
    let mut log = RecommendationLog::new();
    let mut emitted = Vec::new();
    for ev in &calls {
        let policy = recommend_with_guards(&bundle.decision, ev, &mut log, guard, &overrides)?;
        emitted.push(policy.to_json());
    }
    if emitted.len() == 1 {
        Ok(to_text(&emitted[0]))
    } else {
        Ok(to_text(&Value::Array(emitted)))
    }
}

fn cmd_hazid(a: &HazidArgs) -> Result<String, CliError> {
    let mut records = match (&a.scenario, &a.pha) {
        (Some(label), _) => models::scenario(label)?.pha,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            parse_pha_csv(&text)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --scenario or --pha is required".into(),
            ))
        }
    };
    if a.rank {
        records = rank_hazards(&records);
    }
    match a.format {
        Format::Csv => Ok(render_pha(&records, PhaFormat::Csv)),
        Format::Md => Ok(render_pha(&records, PhaFormat::Markdown)),
        Format::Json => {
            let rows: Vec<Value> = records
                .iter()
                .map(|r| {
                    json!({
                        "scenario": r.scenario,
                        "hazard": r.hazard,
                        "event": r.event,
                        "causes": r.causes,
                        "consequences": r.consequences,
                        "freq": r.frequency.score(),
                        "conseq": r.consequence.score(),
                        "detect": r.detectability.score(),
                        "rpn": crate::hazid::compute_rpn(r).value(),
                    })
                })
                .collect();
            Ok(to_text(&Value::Array(rows)))
        }
    }
}

fn cmd_validate(a: &ModelArgs) -> Result<(String, bool), CliError> {
    let doc = load_document(a)?;
    let mut violations: Vec<String> = doc.validate().iter().map(ToString::to_string).collect();
    if violations.is_empty() && doc.has_decisions() {
        if let Err(e) = doc.decision_network() {
            violations.push(e.to_string());
        }
    }
    let valid = violations.is_empty();
    let report = json!({
        "name": doc.name,
        "valid": valid,
        "nodes": doc.nodes.len(),
        "violations": violations,
    });
    Ok((to_text(&report), valid))
}

/// Parse `argv` (including the program name), run the command and return the
/// process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Query(a) => cmd_query(a),
        Command::Dbn(a) => cmd_dbn(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Decide(a) => cmd_decide(a),
        Command::Hazid(a) => cmd_hazid(a),
        Command::Validate(a) => match cmd_validate(a) {
            Ok((text, true)) => Ok(text),
            Ok((text, false)) => {
                let _ = out.write_all(text.as_bytes());
                let _ = writeln!(err, "error: model has violations");
                return 2;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(text) => {
            if out.write_all(text.as_bytes()).is_err() {
                return 1;
            }
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}
