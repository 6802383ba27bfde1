//! The growth orchestrator: plans, phases, checkpoints.
//!
//! An N-modality alignment runs as an ordered sequence of binary phases.
//! The orchestrator owns the model exclusively while a phase runs; between
//! phases everything round-trips through checkpoints bit-exactly, so an
//! interrupted plan resumed from disk matches an uninterrupted run.

pub mod assemble;
pub mod checkpoint;
pub mod config;
pub mod phase;
pub mod plan;

pub use assemble::{assemble_model, ModelDims};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, LoadedCheckpoint,
};
pub use config::{PhasePolicy, TrainConfig};
pub use phase::{run_phase, PhaseRecord, StepLogLine};
pub use plan::{resolve_plan, DatasetSummary, GrowthPlan, OrderHeuristic, PhaseKind, PlannedPhase};

use crate::data::DatasetStore;
use crate::error::Result;
use crate::model::AlignmentModel;

/// Run every phase of a plan from `start_phase` on, updating the history.
/// Logs, when given, receive one JSONL line per step, one writer per phase.
pub fn run_plan<'a>(
    model: &mut AlignmentModel,
    plan: &GrowthPlan,
    cfg: &TrainConfig,
    store: &DatasetStore,
    history: &mut Vec<PhaseRecord>,
    start_phase: usize,
    mut log_for_phase: Option<&mut dyn FnMut(usize) -> Result<Box<dyn std::io::Write + 'a>>>,
) -> Result<()> {
    plan.validate()?;
    for (i, phase) in plan.phases.iter().enumerate().skip(start_phase) {
        let policy = PhasePolicy::for_phase(phase, i, cfg, model)?;
        let mut writer = match log_for_phase.as_mut() {
            Some(f) => Some(f(i)?),
            None => None,
        };
        let record = run_phase(
            model,
            phase,
            i,
            &policy,
            store,
            writer.as_mut().map(|w| w as &mut dyn std::io::Write),
        )?;
        history.push(record);
    }
    Ok(())
}
