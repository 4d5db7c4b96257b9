//! Wires the synthetic actors into multi-epoch runs.

use std::sync::Arc;

use super::actors::sim_hooks;
use super::universe::SimTask;
use crate::embedding::StubEmbedder;
use crate::memory::{Memory, SharedMemory};
use crate::orchestrator::{run_epochs, OrchestratorError, PrgiiConfig, RunReport, TaskSpec};

/// Empty in-memory namespace using the stub embedder.
pub fn fresh_memory(namespace: &str, dim: usize) -> SharedMemory {
    Memory::new(namespace, Arc::new(StubEmbedder::new(dim))).into_shared()
}

pub fn task_specs(tasks: &[SimTask]) -> Vec<TaskSpec> {
    tasks.iter().map(|t| t.spec.clone()).collect()
}

/// Runs `epochs` passes of the synthetic actors over `tasks` against `mem`.
/// Outcomes depend only on the seed, the tasks, the config and the memory.
pub fn run_simulation(
    mem: &SharedMemory,
    tasks: &[SimTask],
    cfg: &PrgiiConfig,
    seed: u64,
    epochs: usize,
) -> Result<RunReport, OrchestratorError> {
    let hooks = sim_hooks(tasks, seed, cfg.max_iterations, cfg.judge);
    run_epochs(mem, &task_specs(tasks), epochs, cfg, &hooks)
}
