//! The refinement loop: prompt, reply, edit, check, and retry with feedback.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::depgraph::{analyze, Analysis, BuiltinTable};
use crate::equivalence::{check_functions, EquivConfig, EquivError, EquivalenceVerdict, InconclusiveReason};
use crate::evalkit::{recompile_check, Labels, RecompileStatus};
use crate::frontend::{parse_unit, render_function, render_unit, SkipReport, SourceUnit};
use crate::llm_bridge::{
    apply_edits, parse_edits, redact, submit, ChatRequest, Edit, EditSet, ParseMode, ParseNote, Provider, ProviderConfig, ReplySource, Throttle,
};
use crate::promptgen::{build_bundle, enumerate_targets, OptimizationTarget, Subject, TemplateSet};
use crate::typecheck::{check, Violation, ViolationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub iteration_limit: u32,
    pub equivalence: EquivConfig,
    pub token_budget: usize,
    pub parse_mode: ParseMode,
    /// Requests allowed in flight at once across all units.
    pub max_in_flight: usize,
    /// Request starts per second; 0 disables spacing.
    pub requests_per_second: f64,
    /// Units processed at once; 0 lets the thread pool decide.
    pub unit_parallelism: usize,
    /// Compiler command run on each refined unit, with `{file}` standing
    /// for the rendered unit.
    pub compiler: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            provider: ProviderConfig::default(),
            iteration_limit: 3,
            equivalence: EquivConfig::default(),
            token_budget: 6000,
            parse_mode: ParseMode::Lenient,
            max_in_flight: 4,
            requests_per_second: 0.0,
            unit_parallelism: 0,
            compiler: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iteration_limit < 1 {
            return Err(ConfigError::Invalid("iteration_limit must be at least 1".into()));
        }
        if self.token_budget == 0 {
            return Err(ConfigError::Invalid("token_budget must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("max_in_flight must be positive".into()));
        }
        if !(self.requests_per_second >= 0.0) {
            return Err(ConfigError::Invalid("requests_per_second must be non-negative".into()));
        }
        if self.equivalence.bounds.max_paths == 0 {
            return Err(ConfigError::Invalid("equivalence.bounds.max_paths must be positive".into()));
        }
        self.provider.validate().map_err(ConfigError::Invalid)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Accepted,
    RejectedViolations,
    RejectedNonEquivalent,
    Inconclusive,
    MalformedReply,
    ProviderFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    /// sha256 of the prompt text, hex.
    pub prompt_hash: String,
    pub status: OutcomeStatus,
    pub source: Option<ReplySource>,
    pub edits: EditSet,
    /// Violations introduced by the edits.
    pub violations: Vec<Violation>,
    /// Per-function verdicts; `None` when no executable code changed.
    pub verdicts: Option<Vec<(String, EquivalenceVerdict)>>,
    pub note: Option<String>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub target: String,
    pub status: OutcomeStatus,
    pub iterations: Vec<IterationRecord>,
    /// Revision holding the accepted edits.
    pub accepted_revision: Option<u32>,
    pub elapsed_ms: u64,
}

impl OptimizationOutcome {
    pub fn tokens(&self) -> u64 {
        self.iterations.iter().map(|i| i.prompt_tokens + i.completion_tokens).sum()
    }
}

/// An immutable snapshot of a unit.
#[derive(Debug, Clone)]
pub struct Revision {
    pub id: u32,
    pub parent: Option<u32>,
    /// Target whose accepted edits produced this revision.
    pub target: Option<String>,
    pub unit: Arc<SourceUnit>,
}

/// Append-only chain of unit revisions.
#[derive(Debug, Clone, Default)]
pub struct RevisionLog {
    revisions: Vec<Revision>,
}

impl RevisionLog {
    pub fn new(initial: SourceUnit) -> Self {
        RevisionLog { revisions: vec![Revision { id: 0, parent: None, target: None, unit: Arc::new(initial) }] }
    }

    pub fn push(&mut self, unit: SourceUnit, target: &str) -> u32 {
        let id = self.revisions.len() as u32;
        let parent = Some(id - 1);
        self.revisions.push(Revision { id, parent, target: Some(target.to_string()), unit: Arc::new(unit) });
        id
    }

    pub fn head(&self) -> &Revision {
        self.revisions.last().expect("revision log starts non-empty")
    }

    pub fn get(&self, id: u32) -> Option<&Revision> {
        self.revisions.get(id as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Revision> {
        self.revisions.iter()
    }

    pub fn len(&self) -> usize {
        self.revisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revisions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionInfo {
    pub id: u32,
    pub parent: Option<u32>,
    pub target: Option<String>,
    /// sha256 of the canonical rendering, hex.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub target: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub targets: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    /// Mean wall time per optimized target, in seconds.
    pub avg_time_s: f64,
    /// Mean prompt plus completion tokens per optimized target.
    pub avg_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub unit: String,
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    /// A failure that stopped the unit before any target ran.
    pub error: Option<String>,
    pub skipped_functions: Vec<SkipReport>,
    pub skipped_targets: Vec<SkippedTarget>,
    pub outcomes: Vec<OptimizationOutcome>,
    pub revisions: Vec<RevisionInfo>,
    pub final_revision: u32,
    pub totals: Totals,
    /// Facts read off the final revision, for scoring.
    pub predictions: Labels,
    pub recompile: Option<RecompileStatus>,
}

impl RunReport {
    fn failed(unit: &str, input: &Path, error: String) -> Self {
        RunReport {
            unit: unit.to_string(),
            input: input.to_path_buf(),
            output: None,
            report_path: None,
            error: Some(error),
            skipped_functions: Vec::new(),
            skipped_targets: Vec::new(),
            outcomes: Vec::new(),
            revisions: Vec::new(),
            final_revision: 0,
            totals: Totals::default(),
            predictions: Labels::default(),
            recompile: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Functions whose canonical text differs between the two units.
fn touched_functions(before: &SourceUnit, after: &SourceUnit) -> Vec<String> {
    before
        .functions
        .iter()
        .filter(|f| after.function(&f.name).map(render_function) != Some(render_function(f)))
        .map(|f| f.name.clone())
        .collect()
}

fn scope_of(target: &OptimizationTarget) -> Option<&str> {
    match &target.subject {
        Subject::Variable { function, .. } => function.as_deref(),
        Subject::Function(f) => Some(f),
    }
}

fn witness_feedback(function: &str, verdict: &EquivalenceVerdict) -> Option<String> {
    match verdict {
        EquivalenceVerdict::NonEquivalent { witness } => {
            let inputs: Vec<String> = witness.inputs.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            Some(format!(
                "Your edits change the behaviour of function {function}: with inputs [{}] the {} is {} originally but {} after the edits. Keep the semantics unchanged.",
                inputs.join(", "),
                witness.observable,
                witness.original,
                witness.optimized
            ))
        }
        EquivalenceVerdict::Inconclusive { reason } => {
            let why = match reason {
                InconclusiveReason::BoundHit => "the function has more paths or loop iterations than the checker explores",
                InconclusiveReason::SolverTimeout => "the solver timed out",
                InconclusiveReason::SolverUnknown => "the solver could not decide",
            };
            Some(format!("The edits to function {function} could not be shown to preserve its behaviour ({why}). Propose a smaller change."))
        }
        EquivalenceVerdict::Equivalent => None,
    }
}

/// Shared state for a batch: provider, configuration, throttle and tables.
pub struct Engine<'a> {
    pub provider: &'a dyn Provider,
    pub config: RunConfig,
    throttle: Throttle,
    builtins: &'static BuiltinTable,
    templates: &'static TemplateSet,
}

impl<'a> Engine<'a> {
    pub fn new(provider: &'a dyn Provider, config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let throttle = Throttle::new(config.max_in_flight, config.requests_per_second);
        Ok(Engine { provider, config, throttle, builtins: BuiltinTable::shipped(), templates: TemplateSet::shipped() })
    }

    fn token(&self) -> String {
        std::env::var(&self.config.provider.token_env).unwrap_or_default()
    }

    /// Runs the repair loop for one target against an analysed unit.
    ///
    /// Returns the outcome and, when accepted, the edited unit. Errors are
    /// prompt-construction failures; everything after that is recorded in
    /// the outcome.
    pub fn optimize_target(
        &self,
        unit: &SourceUnit,
        analysis: &Analysis,
        target: &OptimizationTarget,
    ) -> Result<(OptimizationOutcome, Option<SourceUnit>), crate::promptgen::PromptError> {
        let started = Instant::now();
        let bundle = build_bundle(target, unit, analysis, self.templates, self.config.token_budget)?;
        let baseline = check(unit, self.builtins);
        let limit = self.config.iteration_limit;
        let mut iterations: Vec<IterationRecord> = Vec::new();
        let mut feedback: Option<String> = None;
        let mut accepted = None;
        let id = target.id();

        for index in 1..=limit {
            let request = ChatRequest::from_bundle(&bundle, feedback.as_deref());
            let mut rec = IterationRecord {
                index,
                prompt_hash: sha256_hex(&request.prompt),
                status: OutcomeStatus::MalformedReply,
                source: None,
                edits: EditSet::default(),
                violations: Vec::new(),
                verdicts: None,
                note: None,
                prompt_tokens: 0,
                completion_tokens: 0,
                latency_ms: 0,
            };
            log::trace!("{id}: prompt {index}:\n{}", redact(&request.prompt, &self.token()));
            let reply = {
                let _permit = self.throttle.acquire();
                submit(&request, self.provider, &self.config.provider)
            };
            let reply = match reply {
                Ok(r) => r,
                Err(e) => {
                    let msg = redact(&e.to_string(), &self.token());
                    log::warn!("{id}: provider failure: {msg}");
                    rec.status = OutcomeStatus::ProviderFailure;
                    rec.note = Some(msg);
                    iterations.push(rec);
                    break;
                }
            };
            rec.prompt_tokens = reply.meta.prompt_tokens;
            rec.completion_tokens = reply.meta.completion_tokens;
            rec.latency_ms = reply.meta.latency_ms;

            let parsed = parse_edits(&reply.text, unit, self.config.parse_mode);
            rec.source = Some(parsed.source);
            rec.edits = parsed.edits.clone();
            if let Some(ParseNote::MalformedReply(why)) = &parsed.note {
                rec.note = Some(why.clone());
                feedback = Some(format!(
                    "Your previous answer could not be used: {why}. Answer with a fenced json list of edits as described in the output format."
                ));
                iterations.push(rec);
                continue;
            }

            let candidate = match apply_edits(unit, &parsed.edits, scope_of(target)) {
                Ok(u) => u,
                Err(conflict) => {
                    rec.note = Some(conflict.to_string());
                    feedback = Some(format!("Your edits could not be applied: {conflict}. Propose edits that refer to existing names and whole statements."));
                    iterations.push(rec);
                    continue;
                }
            };

            // Renames alone never add violations, so they are replayed on the
            // baseline to keep its statements comparable with the candidate's.
            let renames: Vec<Edit> = parsed.edits.edits.iter().filter(|e| matches!(e, Edit::Rename { .. })).cloned().collect();
            let renamed_baseline = if renames.is_empty() {
                None
            } else {
                apply_edits(unit, &EditSet { edits: renames }, scope_of(target)).ok().map(|u| check(&u, self.builtins))
            };
            let introduced: ViolationReport = check(&candidate, self.builtins).new_relative_to(renamed_baseline.as_ref().unwrap_or(&baseline));
            if !introduced.is_empty() {
                rec.status = OutcomeStatus::RejectedViolations;
                feedback = Some(introduced.feedback());
                rec.violations = introduced.violations;
                iterations.push(rec);
                continue;
            }

            if parsed.edits.edits.iter().any(|e| e.is_executable()) {
                let touched = touched_functions(unit, &candidate);
                match check_functions(unit, &candidate, &touched, &parsed.edits, &self.config.equivalence) {
                    Ok(verdicts) => {
                        let differ = verdicts.iter().find(|(_, v)| matches!(v, EquivalenceVerdict::NonEquivalent { .. }));
                        let unsure = verdicts.iter().find(|(_, v)| matches!(v, EquivalenceVerdict::Inconclusive { .. }));
                        if let Some((f, v)) = differ.or(unsure) {
                            rec.status = if differ.is_some() { OutcomeStatus::RejectedNonEquivalent } else { OutcomeStatus::Inconclusive };
                            feedback = witness_feedback(f, v);
                        }
                        rec.verdicts = Some(verdicts);
                    }
                    Err(e @ EquivError::SolverUnavailable(_)) => {
                        rec.status = OutcomeStatus::Inconclusive;
                        rec.note = Some(e.to_string());
                        feedback = None;
                    }
                    Err(e) => {
                        rec.status = OutcomeStatus::RejectedNonEquivalent;
                        feedback = Some(format!("Your edits change the code's interface: {e}. Keep every function's parameters unchanged."));
                        rec.note = Some(e.to_string());
                    }
                }
                if rec.status != OutcomeStatus::MalformedReply {
                    iterations.push(rec);
                    continue;
                }
            }

            rec.status = OutcomeStatus::Accepted;
            iterations.push(rec);
            accepted = Some(candidate);
            break;
        }

        assert!(iterations.len() <= limit as usize, "{id}: {} iterations exceed the limit of {limit}", iterations.len());
        let status = iterations.last().map_or(OutcomeStatus::MalformedReply, |r| r.status);
        let outcome = OptimizationOutcome {
            target: id,
            status,
            iterations,
            accepted_revision: None,
            elapsed_ms: started.elapsed().as_millis() as u64,
        };
        Ok((outcome, accepted))
    }

    /// Optimizes every target of a unit and writes the refined unit and
    /// report into `out_dir` when given.
    pub fn run_unit(&self, path: &Path, out_dir: Option<&Path>) -> RunReport {
        let stem = path.file_stem().map_or("unit".to_string(), |s| s.to_string_lossy().into_owned());
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return RunReport::failed(&stem, path, format!("cannot read {}: {e}", path.display())),
        };
        let unit = parse_unit(&stem, &text);
        let (mut report, last) = self.run_source(unit, path);
        if let (Some(dir), Some(last)) = (out_dir, last) {
            if let Err(e) = write_outputs(&text, &last, &mut report, dir) {
                report.error = Some(e);
            }
        }
        report
    }

    /// Runs every target of a parsed unit; also returns the final revision.
    pub fn run_source(&self, unit: SourceUnit, path: &Path) -> (RunReport, Option<Arc<SourceUnit>>) {
        let name = unit.file_id.clone();
        let skipped_functions = unit.skipped.clone();
        let mut log = RevisionLog::new(unit);
        let mut outcomes = Vec::new();
        let mut skipped_targets = Vec::new();

        let targets = enumerate_targets(&log.head().unit);
        let mut analysis: Option<(u32, Analysis)> = None;
        for target in targets {
            let head = log.head().clone();
            if let Err(e) = target.validate(&head.unit) {
                skipped_targets.push(SkippedTarget { target: target.id(), reason: e.to_string() });
                continue;
            }
            if analysis.as_ref().map(|(id, _)| *id) != Some(head.id) {
                match analyze(&head.unit, self.builtins) {
                    Ok(a) => analysis = Some((head.id, a)),
                    Err(e) => {
                        let mut r = RunReport::failed(&name, path, format!("analysis of revision {} failed: {e}", head.id));
                        r.skipped_functions = skipped_functions;
                        return (r, None);
                    }
                }
            }
            let (_, a) = analysis.as_ref().expect("analysis present");
            match self.optimize_target(&head.unit, a, &target) {
                Ok((mut outcome, edited)) => {
                    if outcome.status == OutcomeStatus::Accepted {
                        let changed = outcome.iterations.last().is_some_and(|r| !r.edits.is_empty());
                        outcome.accepted_revision = Some(match edited {
                            Some(u) if changed => log.push(u, &outcome.target),
                            _ => head.id,
                        });
                    }
                    log::info!("{}: {:?} after {} iteration(s)", outcome.target, outcome.status, outcome.iterations.len());
                    outcomes.push(outcome);
                }
                Err(e) => skipped_targets.push(SkippedTarget { target: target.id(), reason: e.to_string() }),
            }
        }

        let head = log.head();
        let n = outcomes.len();
        let mut totals = Totals { targets: n, ..Totals::default() };
        for o in &outcomes {
            for i in &o.iterations {
                totals.prompt_tokens += i.prompt_tokens;
                totals.completion_tokens += i.completion_tokens;
                totals.latency_ms += i.latency_ms;
            }
        }
        if n > 0 {
            totals.avg_time_s = outcomes.iter().map(|o| o.elapsed_ms as f64 / 1000.0).sum::<f64>() / n as f64;
            totals.avg_tokens = (totals.prompt_tokens + totals.completion_tokens) as f64 / n as f64;
        }
        let recompile = self.config.compiler.as_deref().map(|c| recompile_check(&head.unit, Some(c)));
        let report = RunReport {
            unit: name,
            input: path.to_path_buf(),
            output: None,
            report_path: None,
            error: None,
            skipped_functions,
            skipped_targets,
            outcomes,
            revisions: log
                .iter()
                .map(|r| RevisionInfo { id: r.id, parent: r.parent, target: r.target.clone(), digest: sha256_hex(&render_unit(&r.unit)) })
                .collect(),
            final_revision: head.id,
            totals,
            predictions: Labels::from_unit(&head.unit),
            recompile,
        };
        (report, Some(head.unit.clone()))
    }

    /// Runs several units in parallel; one failing unit does not stop the rest.
    pub fn run_batch(&self, paths: &[PathBuf], out_dir: Option<&Path>) -> Vec<RunReport> {
        let run = || paths.par_iter().map(|p| self.run_unit(p, out_dir)).collect();
        if self.config.unit_parallelism == 0 {
            return run();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.config.unit_parallelism).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("cannot build a pool of {} threads ({e}); using the global pool", self.config.unit_parallelism);
                run()
            }
        }
    }
}

fn write_outputs(original_text: &str, last: &SourceUnit, report: &mut RunReport, dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let out = dir.join(format!("{}.dsol", report.unit));
    let report_path = dir.join(format!("{}.report.json", report.unit));
    report.output = Some(out.clone());
    report.report_path = Some(report_path.clone());
    // An untouched unit is copied verbatim so a no-op run is byte-identical.
    let body = if report.final_revision == 0 { original_text.to_string() } else { render_unit(last) };
    std::fs::write(&out, body).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    std::fs::write(&report_path, report.to_json()).map_err(|e| format!("cannot write {}: {e}", report_path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_bridge::MockProvider;
    use crate::promptgen::OptimizationTarget;

    const FIG: &str = "mapping(uint256=>uint256) uintStorage;

function _getTokenKey(bytes varg0) private returns (bytes32) {
    return keccak256(abi.encodePacked(varg0));
}

function setStorage(uint256 varg1, bytes varg2) public {
    v0 = _getTokenKey(varg2);
    uintStorage[v0] = varg1;
}
";
    const GOOD: &str = "```json\n[{\"op\": \"retype\", \"name\": \"uintStorage\", \"type\": \"mapping(bytes32=>uint256)\"}]\n```";
    const BAD: &str = "```json\n[{\"op\": \"retype\", \"name\": \"setStorage::v0\", \"type\": \"bool\"}]\n```";

    fn engine(provider: &dyn Provider, limit: u32) -> Engine<'_> {
        let config = RunConfig { iteration_limit: limit, ..RunConfig::default() };
        Engine::new(provider, config).unwrap()
    }

    fn storage_target() -> OptimizationTarget {
        OptimizationTarget::variable("t", None, "uintStorage")
    }

    fn optimize(provider: &dyn Provider, limit: u32, target: &OptimizationTarget) -> (OptimizationOutcome, Option<SourceUnit>) {
        let unit = parse_unit("t", FIG);
        let a = analyze(&unit, BuiltinTable::shipped()).unwrap();
        engine(provider, limit).optimize_target(&unit, &a, target).unwrap()
    }

    #[test]
    fn accepted_on_first_iteration() {
        let mock = MockProvider::always(&[GOOD]);
        let (o, u) = optimize(&mock, 3, &storage_target());
        assert_eq!(o.status, OutcomeStatus::Accepted);
        assert_eq!(o.iterations.len(), 1);
        assert!(render_unit(&u.unwrap()).contains("mapping(bytes32=>uint256) uintStorage;"));
    }

    #[test]
    fn bad_then_good_takes_two_iterations() {
        let mock = MockProvider::always(&[BAD, GOOD]);
        let (o, _) = optimize(&mock, 3, &storage_target());
        assert_eq!(o.status, OutcomeStatus::Accepted);
        assert_eq!(o.iterations.len(), 2);
        assert_eq!(o.iterations[0].status, OutcomeStatus::RejectedViolations);
        assert!(!o.iterations[0].violations.is_empty());
        assert_ne!(o.iterations[0].prompt_hash, o.iterations[1].prompt_hash);
    }

    #[test]
    fn always_bad_stops_at_the_limit() {
        let mock = MockProvider::always(&[BAD]);
        let (o, u) = optimize(&mock, 3, &storage_target());
        assert_eq!(o.status, OutcomeStatus::RejectedViolations);
        assert_eq!(o.iterations.len(), 3);
        assert!(u.is_none());
        assert_eq!(mock.served("t/type:uintStorage"), 3);
    }

    #[test]
    fn limit_of_one_is_respected() {
        let mock = MockProvider::always(&[BAD, GOOD]);
        let (o, _) = optimize(&mock, 1, &storage_target());
        assert_eq!(o.iterations.len(), 1);
        assert_eq!(o.status, OutcomeStatus::RejectedViolations);
    }

    #[test]
    fn feedback_reaches_the_next_prompt() {
        struct Recorder(std::sync::Mutex<Vec<String>>, MockProvider);
        impl Provider for Recorder {
            fn name(&self) -> &str {
                "recorder"
            }
            fn complete(&self, r: &ChatRequest) -> Result<crate::llm_bridge::RawResponse, crate::llm_bridge::LlmError> {
                self.0.lock().unwrap().push(r.prompt.clone());
                self.1.complete(r)
            }
        }
        let rec = Recorder(Default::default(), MockProvider::always(&[BAD, GOOD]));
        optimize(&rec, 3, &storage_target());
        let prompts = rec.0.lock().unwrap();
        assert!(!prompts[0].contains("Feedback on your previous answer"));
        assert!(prompts[1].contains("Type violation"), "{}", prompts[1]);
    }

    #[test]
    fn conflicting_edit_is_a_malformed_reply() {
        let reply = "```json\n[{\"op\": \"retype\", \"name\": \"nowhere\", \"type\": \"uint8\"}]\n```";
        let mock = MockProvider::always(&[reply]);
        let (o, u) = optimize(&mock, 2, &storage_target());
        assert_eq!(o.status, OutcomeStatus::MalformedReply);
        assert!(o.iterations[0].note.as_deref().unwrap().contains("nowhere"));
        assert!(u.is_none());
    }

    #[test]
    fn provider_failure_is_recorded() {
        let mock = MockProvider::new(Default::default());
        let (o, _) = optimize(&mock, 3, &storage_target());
        assert_eq!(o.status, OutcomeStatus::ProviderFailure);
        assert_eq!(o.iterations.len(), 1);
    }

    #[test]
    fn attribute_edits_skip_equivalence() {
        let reply = "```json\n[{\"op\": \"attribute\", \"name\": \"uintStorage\", \"label\": \"Asset\"}]\n```";
        let mock = MockProvider::always(&[reply]);
        let (o, _) = optimize(&mock, 3, &OptimizationTarget::attribute("t", "uintStorage"));
        assert_eq!(o.status, OutcomeStatus::Accepted);
        assert_eq!(o.iterations[0].verdicts, None);
    }

    #[test]
    fn rename_is_checked_and_accepted() {
        let reply = "```json\n[{\"op\": \"rename\", \"old\": \"setStorage::varg1\", \"new\": \"amount\"}]\n```";
        let mock = MockProvider::always(&[reply]);
        let (o, u) = optimize(&mock, 3, &OptimizationTarget::variable("t", Some("setStorage"), "varg1"));
        assert_eq!(o.status, OutcomeStatus::Accepted, "{o:#?}");
        let verdicts = o.iterations[0].verdicts.clone().unwrap();
        assert_eq!(verdicts, vec![("setStorage".to_string(), EquivalenceVerdict::Equivalent)]);
        assert!(render_unit(&u.unwrap()).contains("uintStorage[v0] = amount;"));
    }

    #[test]
    fn run_unit_writes_refined_unit_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("fig.dsol");
        std::fs::write(&input, FIG).unwrap();
        let mock = MockProvider::new(Default::default()).with("type:uintStorage", &[GOOD]).with("*", &["```json\n[]\n```"]);
        let report = engine(&mock, 3).run_unit(&input, Some(&dir.path().join("out")));
        assert_eq!(report.error, None);
        let out = std::fs::read_to_string(report.output.as_ref().unwrap()).unwrap();
        assert!(out.contains("mapping(bytes32=>uint256) uintStorage;"), "{out}");
        assert_eq!(report.final_revision, 1);
        assert_eq!(report.revisions.len(), 2);
        assert!(report.outcomes.iter().all(|o| o.status == OutcomeStatus::Accepted));
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.report_path.unwrap()).unwrap()).unwrap();
        assert!(json["totals"]["avg_tokens"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn targets_run_types_then_attributes_then_boundaries() {
        let mock = MockProvider::always(&["```json\n[]\n```"]);
        let (report, _) = engine(&mock, 3).run_source(parse_unit("t", FIG), Path::new("t.dsol"));
        let kinds: Vec<&str> = report.outcomes.iter().chain([]).map(|o| o.target.split(['/', ':']).nth(1).unwrap()).collect();
        let first_attr = kinds.iter().position(|k| *k == "attribute").unwrap();
        let first_boundary = kinds.iter().position(|k| *k == "boundary").unwrap_or(kinds.len());
        assert!(kinds[..first_attr].iter().all(|k| *k == "type"));
        assert!(first_attr < first_boundary);
    }

    #[test]
    fn malformed_replies_leave_the_unit_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("fig.dsol");
        std::fs::write(&input, FIG).unwrap();
        let mock = MockProvider::always(&["I believe the types are fine."]);
        let report = engine(&mock, 2).run_unit(&input, Some(dir.path()));
        assert!(!report.outcomes.is_empty());
        assert!(report.outcomes.iter().all(|o| o.status == OutcomeStatus::MalformedReply));
        assert_eq!(std::fs::read_to_string(report.output.unwrap()).unwrap(), FIG);
    }

    #[test]
    fn config_validation_and_json() {
        assert!(RunConfig { iteration_limit: 0, ..RunConfig::default() }.validate().is_err());
        let c = RunConfig::from_json(r#"{"iteration_limit": 5, "parse_mode": "strict"}"#).unwrap();
        assert_eq!(c.iteration_limit, 5);
        assert_eq!(c.token_budget, 6000);
        assert_eq!(c.parse_mode, ParseMode::Strict);
        assert!(RunConfig::from_json(r#"{"iteration_limit": 0}"#).is_err());
    }
}
