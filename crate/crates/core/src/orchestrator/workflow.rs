//! Task execution, commit scheduling and multi-epoch runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{CommitMode, ConfigError, PrgiiConfig};
use super::hooks::{AgentContext, ExampleView, Hooks, OracleVerdict, TaskSpec, TeacherReport};
use crate::embedding::EmbedError;
use crate::ids::{NodeId, NodeKind};
use crate::ingest::{commit, compute_quality, decompose_feedback, EvaluationInput, IngestError};
use crate::memory::{Memory, SharedMemory};
use crate::metrics::{compute_metrics, MetricsError, MetricsLedger, TaskResult};
use crate::ontology::{
    assemble_experience, compress_for_prompt, Budgets, EntityBinding, EvaluationBlock, EvidenceItem, EvidenceKind,
    ExperienceDraft, ExperienceRecord, Intent, IterationStep, OntologyError, PlanDecomposition, PlanStep,
    StructuralSignature, TaskUnderstanding, Trust, Violation,
};
use crate::retrieval::{retrieve, RetrievalBundle, RetrievalQuery, RetrievedExperience};
use crate::signature::{canonical_signature, StepSpec};

pub const WITHHELD_FEEDBACK: &str = "[feedback withheld: it contained the task answer]";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("task {task}: {source}")]
    Embed { task: String, source: EmbedError },
    #[error("task {task}: {source}")]
    Ingest { task: String, source: IngestError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Plan,
    Retrieve,
    Generate,
    Validate,
    Grade,
    Judge,
    Assemble,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookFailure {
    pub phase: Phase,
    pub message: String,
}

/// Result of one task execution.
#[derive(Clone, Debug, Serialize)]
pub struct ExecutionOutcome {
    pub task_id: String,
    pub solved: bool,
    pub iterations_used: u32,
    pub final_artifact: String,
    pub retrieved: Vec<NodeId>,
    pub positives: usize,
    pub negatives: usize,
    pub divergence_injected: bool,
    pub hook_failures: Vec<HookFailure>,
    /// Assembled record; `None` when no valid record could be built.
    #[serde(skip)]
    pub experience: Option<ExperienceRecord>,
    pub committed: Option<NodeId>,
    /// Wall-clock seconds per phase. Diagnostic only.
    pub timings: BTreeMap<Phase, f64>,
}

impl ExecutionOutcome {
    pub fn first_attempt(&self) -> bool {
        self.solved && self.iterations_used == 1
    }

    pub fn task_result(&self) -> TaskResult {
        TaskResult {
            task_id: self.task_id.clone(),
            solved: self.solved,
            iterations: self.iterations_used,
            positives: self.positives,
            negatives: self.negatives,
        }
    }
}

/// A record waiting to be committed together with the plan steps that
/// produce its graph writes.
#[derive(Clone, Debug)]
pub struct PendingCommit {
    pub record: ExperienceRecord,
    pub steps: Vec<StepSpec>,
}

#[derive(Debug)]
pub struct TaskRun {
    pub outcome: ExecutionOutcome,
    pub pending: Option<PendingCommit>,
}

struct Plan {
    understanding: TaskUnderstanding,
    bindings: Vec<EntityBinding>,
    steps: Vec<StepSpec>,
    signature: StructuralSignature,
}

struct Timer<'a> {
    timings: &'a mut BTreeMap<Phase, f64>,
}

impl Timer<'_> {
    fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(phase).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

/// Planning reads memory but never writes it: entity bindings are looked up
/// and the signature is computed from the canon alone. The graph writes
/// happen with the commit.
fn plan(mem: &Memory, task: &TaskSpec, hooks: &Hooks, failures: &mut Vec<HookFailure>) -> Plan {
    let view = task.view();
    let mut fail = |e: super::hooks::HookError| failures.push(HookFailure { phase: Phase::Plan, message: e.0 });
    let understanding = hooks.adapter.understand(&view).unwrap_or_else(|e| {
        fail(e);
        TaskUnderstanding::default()
    });
    let mentions = hooks.adapter.extract_entities(&view).unwrap_or_else(|e| {
        fail(e);
        Vec::new()
    });
    let steps = hooks.adapter.extract_procedural_steps(&view).unwrap_or_else(|e| {
        fail(e);
        Vec::new()
    });
    let mut bindings: Vec<EntityBinding> = Vec::new();
    for mention in mentions {
        if bindings.iter().any(|b| b.mention == mention) {
            continue;
        }
        let node = match mem.resolver().lookup(mem.store(), &mention, NodeKind::Entity, &task.domain) {
            Ok(found) => found.map(|o| o.node),
            Err(err) => {
                log::warn!("entity lookup for `{mention}` failed: {err}");
                None
            }
        };
        bindings.push(EntityBinding { mention, node });
    }
    let signature = canonical_signature(mem.canon(), &steps);
    Plan { understanding, bindings, steps, signature }
}

fn example_view(hit: &RetrievedExperience, budget: usize) -> ExampleView {
    let rendered = compress_for_prompt(&hit.record, budget).unwrap_or_else(|err| {
        log::warn!("example {} not rendered: {err}", hit.id);
        String::new()
    });
    let mut error_classes: Vec<_> = hit.record.error_registry.iter().map(|e| e.error_class).collect();
    error_classes.sort();
    error_classes.dedup();
    ExampleView {
        id: hit.id,
        status: hit.status,
        total: hit.scores.total,
        signature: hit.record.signature.ops.clone(),
        error_classes,
        rendered,
    }
}

fn plan_steps(mem: &Memory, steps: &[StepSpec]) -> Vec<PlanStep> {
    steps
        .iter()
        .map(|s| {
            let mut args = BTreeMap::new();
            for (i, e) in s.entities.iter().enumerate() {
                args.insert(format!("entity_{}", i + 1), e.clone());
            }
            for (i, p) in s.properties.iter().enumerate() {
                args.insert(format!("property_{}", i + 1), p.clone());
            }
            PlanStep { op: mem.canon().canonicalize(&s.text), description: s.text.clone(), args }
        })
        .collect()
}

/// Runs plan, retrieve, generate/iterate and evaluation for one task. The
/// memory is only read; the assembled record is returned for committing.
pub fn execute_task(
    mem: &Memory,
    task: &TaskSpec,
    cfg: &PrgiiConfig,
    hooks: &Hooks,
) -> Result<TaskRun, OrchestratorError> {
    let mut timings = BTreeMap::new();
    let mut timer = Timer { timings: &mut timings };
    let mut failures = Vec::new();

    let plan = if cfg.enable_planning {
        timer.time(Phase::Plan, || plan(mem, task, hooks, &mut failures))
    } else {
        Plan {
            understanding: TaskUnderstanding::default(),
            bindings: Vec::new(),
            steps: Vec::new(),
            signature: StructuralSignature::empty(),
        }
    };

    let embedding = mem
        .embedder()
        .embed(&task.description)
        .map_err(|source| OrchestratorError::Embed { task: task.id.clone(), source })?;

    let bundle = if cfg.enable_retrieval {
        timer.time(Phase::Retrieve, || {
            let query = RetrievalQuery { embedding: embedding.clone(), signature: plan.signature.clone() };
            retrieve(mem, &query, &cfg.retrieval)
        })
    } else {
        RetrievalBundle::default()
    };
    let positives: Vec<ExampleView> = bundle.positives.iter().map(|h| example_view(h, cfg.prompt_budget)).collect();
    let negatives: Vec<ExampleView> = bundle.negatives.iter().map(|h| example_view(h, cfg.prompt_budget)).collect();

    let max_iter = cfg.effective_iterations();
    let mut trace: Vec<IterationStep> = Vec::new();
    let mut prior_feedback: Vec<String> = Vec::new();
    let mut intent = Intent::Exploration;
    let mut divergence = false;
    let mut divergence_injected = false;
    let mut aborted = false;
    for j in 1..=max_iter {
        if j > 1 {
            let next = if prior_feedback.last().is_some_and(|f| !f.is_empty()) {
                Intent::ErrorCorrection
            } else {
                Intent::Refinement
            };
            intent = intent.max(next);
        }
        let ctx = AgentContext {
            task: task.view(),
            understanding: plan.understanding.clone(),
            entities: plan.bindings.iter().map(|b| b.mention.clone()).collect(),
            steps: plan.steps.clone(),
            signature: plan.signature.ops.clone(),
            positives: positives.clone(),
            negatives: negatives.clone(),
            iteration: j,
            intent,
            prior_feedback: prior_feedback.clone(),
            divergence,
            generate_tests: cfg.generate_tests,
        };
        divergence_injected |= divergence;
        let artifact = match timer.time(Phase::Generate, || hooks.agent.generate(&ctx)) {
            Ok(a) => a,
            Err(e) => {
                failures.push(HookFailure { phase: Phase::Generate, message: e.0.clone() });
                trace.push(IterationStep {
                    iteration: j,
                    intent,
                    artifact: String::new(),
                    result: format!("agent failure: {}", e.0),
                    validation: false,
                    feedback: String::new(),
                });
                aborted = true;
                break;
            }
        };
        if !cfg.enable_iteration {
            trace.push(IterationStep {
                iteration: j,
                intent,
                artifact,
                result: "not validated".into(),
                validation: false,
                feedback: String::new(),
            });
            break;
        }
        match timer.time(Phase::Validate, || hooks.validator.validate(task, &artifact)) {
            Ok(v) => {
                divergence = prior_feedback.last().is_some_and(|prev| *prev == v.feedback);
                trace.push(IterationStep {
                    iteration: j,
                    intent,
                    artifact,
                    result: v.result,
                    validation: v.passed,
                    feedback: v.feedback.clone(),
                });
                prior_feedback.push(v.feedback);
                if v.passed {
                    break;
                }
            }
            Err(e) => {
                failures.push(HookFailure { phase: Phase::Validate, message: e.0.clone() });
                trace.push(IterationStep {
                    iteration: j,
                    intent,
                    artifact,
                    result: format!("validator failure: {}", e.0),
                    validation: false,
                    feedback: String::new(),
                });
                aborted = true;
                break;
            }
        }
    }
    let iterations_used = trace.len() as u32;
    let final_artifact = trace.last().map(|s| s.artifact.clone()).unwrap_or_default();

    let verdict = if aborted && final_artifact.is_empty() {
        OracleVerdict { solved: false, correctness: 0.0, reject: true, detail: "no artifact".into() }
    } else {
        match timer.time(Phase::Grade, || hooks.oracle.grade(task, &final_artifact)) {
            Ok(v) => v,
            Err(e) => {
                failures.push(HookFailure { phase: Phase::Grade, message: e.0.clone() });
                OracleVerdict { solved: false, correctness: 0.0, reject: true, detail: format!("ungraded: {}", e.0) }
            }
        }
    };
    let c = verdict.correctness.clamp(0.0, 1.0);
    let report = if cfg.enable_judge {
        match timer.time(Phase::Judge, || hooks.teacher.evaluate(task, &trace, &verdict)) {
            Ok(r) => r,
            Err(e) => {
                failures.push(HookFailure { phase: Phase::Judge, message: e.0.clone() });
                TeacherReport { efficiency: c, completeness: c, feedback: String::new() }
            }
        }
    } else {
        TeacherReport { efficiency: c, completeness: c, feedback: String::new() }
    };

    let mut evidence = vec![EvidenceItem::new(
        EvidenceKind::ToolOutput,
        format!("oracle://{}", task.id),
        format!("solved={} correctness={c:.3} {}", verdict.solved, verdict.detail),
        Trust { source_type: "oracle".into(), authority_score: 1.0 },
    )];
    if cfg.enable_iteration {
        if let Some(last) = trace.last() {
            evidence.push(EvidenceItem::new(
                EvidenceKind::ToolOutput,
                format!("validator://{}/iter/{}", task.id, last.iteration),
                last.result.clone(),
                Trust { source_type: "validator".into(), authority_score: 0.9 },
            ));
        }
    }

    let experience = timer.time(Phase::Assemble, || {
        assemble(mem, task, cfg, hooks, &plan, embedding, evidence, trace, &report, &verdict, &bundle, &mut failures)
    });
    let steps = plan.steps.clone();
    let pending = match (&experience, cfg.enable_ingest) {
        (Some(record), true) => Some(PendingCommit { record: record.clone(), steps }),
        _ => None,
    };
    let outcome = ExecutionOutcome {
        task_id: task.id.clone(),
        solved: verdict.solved,
        iterations_used,
        final_artifact,
        retrieved: bundle.ids().collect(),
        positives: bundle.positives.len(),
        negatives: bundle.negatives.len(),
        divergence_injected,
        hook_failures: failures,
        experience,
        committed: None,
        timings,
    };
    Ok(TaskRun { outcome, pending })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    mem: &Memory,
    task: &TaskSpec,
    cfg: &PrgiiConfig,
    hooks: &Hooks,
    plan: &Plan,
    embedding: crate::embedding::EmbeddingVector,
    evidence: Vec<EvidenceItem>,
    trace: Vec<IterationStep>,
    report: &TeacherReport,
    verdict: &OracleVerdict,
    bundle: &RetrievalBundle,
    failures: &mut Vec<HookFailure>,
) -> Option<ExperienceRecord> {
    if plan.signature.is_empty() {
        log::debug!("task {}: no plan signature, no experience assembled", task.id);
        return None;
    }
    let c = verdict.correctness.clamp(0.0, 1.0);
    let build = |feedback: &str| {
        let input = EvaluationInput {
            correctness: c,
            efficiency: report.efficiency.clamp(0.0, 1.0),
            completeness: report.completeness.clamp(0.0, 1.0),
            teacher_feedback: feedback.to_string(),
            oracle_reject: verdict.reject,
        };
        let quality = compute_quality(&input, &cfg.quality_weights).ok()?;
        let (error_registry, patches) = decompose_feedback(feedback, hooks.extractor.as_ref());
        let draft = ExperienceDraft {
            task_description: task.description.clone(),
            task_embedding: embedding.clone(),
            domain: task.domain.clone(),
            plan: PlanDecomposition {
                understanding: plan.understanding.clone(),
                entities: plan.bindings.clone(),
                steps: plan_steps(mem, &plan.steps),
                signature: Some(plan.signature.clone()),
            },
            signature: plan.signature.clone(),
            budgets: Budgets {
                max_iterations: cfg.effective_iterations(),
                max_retries: cfg.effective_iterations() - 1,
                ..Budgets::default()
            },
            evidence: evidence.clone(),
            trace: trace.clone(),
            error_registry,
            patches,
            evaluation: EvaluationBlock {
                correctness: input.correctness,
                efficiency: input.efficiency,
                completeness: input.completeness,
                quality,
                teacher_feedback: input.teacher_feedback,
                weights: cfg.quality_weights,
                theta: cfg.theta,
                oracle_reject: input.oracle_reject,
            },
            derived_from: bundle.ids().collect(),
            ground_truth: Some(task.hidden_oracle.clone()),
        };
        Some(assemble_experience(draft))
    };
    match build(&report.feedback)? {
        Ok(rec) => Some(rec),
        Err(OntologyError::InvariantViolation(v)) if v == [Violation::AnswerLeak] => {
            log::warn!("task {}: teacher feedback leaked the answer; withholding it", task.id);
            failures.push(HookFailure { phase: Phase::Judge, message: "feedback contained the answer".into() });
            build(WITHHELD_FEEDBACK)?.ok()
        }
        Err(err) => {
            failures.push(HookFailure { phase: Phase::Assemble, message: err.to_string() });
            None
        }
    }
}

fn apply_pending(mem: &mut Memory, run: &mut TaskRun) -> Result<(), OrchestratorError> {
    if let Some(p) = run.pending.take() {
        let report = commit(mem, p.record, &p.steps)
            .map_err(|source| OrchestratorError::Ingest { task: run.outcome.task_id.clone(), source })?;
        run.outcome.committed = report.node;
    }
    Ok(())
}

/// Runs one task against shared memory, committing right away when
/// ingestion is enabled.
pub fn run_task(mem: &SharedMemory, task: &TaskSpec, cfg: &PrgiiConfig, hooks: &Hooks) -> Result<ExecutionOutcome, OrchestratorError> {
    cfg.validate()?;
    let mut run = execute_task(&mem.read(), task, cfg, hooks)?;
    apply_pending(&mut mem.write(), &mut run)?;
    Ok(run.outcome)
}

/// Runs every task once. Workers pull tasks from a shared counter; in
/// epoch-boundary mode all commits are applied afterwards in task order.
pub fn run_epoch(
    mem: &SharedMemory,
    tasks: &[TaskSpec],
    cfg: &PrgiiConfig,
    hooks: &Hooks,
) -> Result<Vec<ExecutionOutcome>, OrchestratorError> {
    cfg.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<TaskRun, OrchestratorError>>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= tasks.len() {
            break;
        }
        let result = match cfg.commit_mode {
            CommitMode::EpochBoundary => execute_task(&mem.read(), &tasks[i], cfg, hooks),
            CommitMode::Immediate => {
                let run = execute_task(&mem.read(), &tasks[i], cfg, hooks);
                run.and_then(|mut r| apply_pending(&mut mem.write(), &mut r).map(|_| r))
            }
        };
        *slots[i].lock() = Some(result);
    };
    let workers = cfg.parallelism.min(tasks.len().max(1));
    if workers <= 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }
    let mut runs = Vec::with_capacity(tasks.len());
    for slot in slots {
        runs.push(slot.into_inner().expect("every task ran")?);
    }
    if cfg.commit_mode == CommitMode::EpochBoundary {
        let mut guard = mem.write();
        for run in &mut runs {
            apply_pending(&mut guard, run)?;
        }
    }
    Ok(runs.into_iter().map(|r| r.outcome).collect())
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub outcomes: Vec<Vec<ExecutionOutcome>>,
    pub ledger: MetricsLedger,
}

/// Runs `epochs` passes over the same task list.
pub fn run_epochs(
    mem: &SharedMemory,
    tasks: &[TaskSpec],
    epochs: usize,
    cfg: &PrgiiConfig,
    hooks: &Hooks,
) -> Result<RunReport, OrchestratorError> {
    let mut outcomes = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let out = run_epoch(mem, tasks, cfg, hooks)?;
        log::info!(
            "epoch {epoch}: {}/{} solved",
            out.iter().filter(|o| o.solved).count(),
            out.len()
        );
        outcomes.push(out);
    }
    let rows: Vec<Vec<TaskResult>> =
        outcomes.iter().map(|epoch| epoch.iter().map(ExecutionOutcome::task_result).collect()).collect();
    let ledger = compute_metrics(&rows)?;
    Ok(RunReport { outcomes, ledger })
}
