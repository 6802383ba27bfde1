//! Training configuration and per-phase policies.

use serde::{Deserialize, Serialize};

use crate::contrastive::DenominatorMode;
use crate::growth::plan::{PhaseKind, PlannedPhase};
use crate::model::AlignmentModel;

/// The training recipe. `default()` is the full-scale recipe
/// (τ = 0.07, batch 256, lr 1e-4, up to 500 epochs); [`TrainConfig::desk`]
/// shrinks batch and epochs for minutes-scale runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Per-step EMA decay of the prototype shadow.
    pub ema_decay: f64,
    /// Weight of the prototype distillation term during growth.
    pub distill_weight: f64,
    /// EMA + distillation protection on growth phases.
    pub protect_prototype: bool,
    /// Inverse gradient-norm weighting (false: fixed equal weights).
    pub adaptive_weighting: bool,
    /// Include the positive pair in the softmax denominator.
    pub include_positive: bool,
    /// Momentum of the cross-step weight smoother.
    pub weight_momentum: f64,
    /// Stop when relative loss improvement over this many epochs falls
    /// below `plateau_rel_improvement`.
    pub plateau_window: usize,
    pub plateau_rel_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.07,
            batch_size: 256,
            lr: 1e-4,
            weight_decay: 0.01,
            max_epochs: 500,
            seed: 0,
            ema_decay: 0.999,
            distill_weight: 0.3,
            protect_prototype: true,
            adaptive_weighting: true,
            include_positive: true,
            weight_momentum: 0.9,
            plateau_window: 10,
            plateau_rel_improvement: 1e-4,
        }
    }
}

impl TrainConfig {
    /// Desk-scale profile: small batches, bounded epochs, faster EMA so a
    /// few hundred steps still move the shadow meaningfully.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 100,
            lr: 1e-2,
            ema_decay: 0.995,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn denominator(&self) -> DenominatorMode {
        if self.include_positive {
            DenominatorMode::WithPositive
        } else {
            DenominatorMode::NegativesOnly
        }
    }
}

/// What one phase trains and with which knobs; derived from the config,
/// the planned phase, and the model's group names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePolicy {
    pub trainable_groups: Vec<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub ema_decay: f64,
    pub distill_weight: f64,
    /// EMA + distillation active (growth phases only; there is nothing to
    /// protect during the initial alignment).
    pub protect: bool,
    pub adaptive: bool,
    pub include_positive: bool,
    pub weight_momentum: f64,
    pub plateau_window: usize,
    pub plateau_rel_improvement: f64,
    pub batch_seed: u64,
}

impl PhasePolicy {
    pub fn for_phase(
        phase: &PlannedPhase,
        phase_index: usize,
        cfg: &TrainConfig,
        model: &AlignmentModel,
    ) -> crate::Result<Self> {
        let (ma, mb) = phase.modalities();
        let ga = model.tower_of(ma)?.concept.mlp.group.name.clone();
        let gb = model.tower_of(mb)?.concept.mlp.group.name.clone();
        let proto = model.prototype.mlp.group.name.clone();
        let is_growth = matches!(phase.kind, PhaseKind::Growth { .. });
        let protect = cfg.protect_prototype && is_growth;
        Ok(PhasePolicy {
            trainable_groups: vec![ga, gb, proto],
            epochs: cfg.max_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            tau: cfg.tau,
            ema_decay: cfg.ema_decay,
            distill_weight: cfg.distill_weight,
            protect,
            // The weighting strategy targets growth: the initial phase has
            // no established side to protect, so it trains with the plain
            // equal-weight objective.
            adaptive: cfg.adaptive_weighting && is_growth,
            include_positive: cfg.include_positive,
            weight_momentum: cfg.weight_momentum,
            plateau_window: cfg.plateau_window,
            plateau_rel_improvement: cfg.plateau_rel_improvement,
            batch_seed: crate::rng::derive_seed_indexed(cfg.seed, "phase-batches", phase_index as u64),
        })
    }

    pub fn denominator(&self) -> DenominatorMode {
        if self.include_positive {
            DenominatorMode::WithPositive
        } else {
            DenominatorMode::NegativesOnly
        }
    }
}
