//! The shared prototype network.
//!
//! One instance per model, placed after every tower's concept-alignment
//! module; it projects the shared feature width into the unified embedding
//! space and is the locus of cross-modality knowledge. Alongside the live
//! parameters it keeps an EMA shadow (adopted at the end of each growth
//! phase) and, during growth, a frozen teacher snapshot for distillation.

use crate::autodiff::mat::Mat;
use crate::autodiff::{Tape, TensorId};
use crate::error::Result;
use crate::model::mlp::Mlp;

pub const GROUP_NAME: &str = "prototype";

#[derive(Clone, Debug)]
pub struct PrototypeNetwork {
    pub mlp: Mlp,
    pub ema_shadow: Vec<Mat>,
    pub frozen_teacher: Option<Vec<Mat>>,
}

impl PrototypeNetwork {
    /// `layers` counts linear layers and must be in 2..=4; widths run
    /// `d_f → d_f → … → d_e`.
    pub fn new(feature_dim: usize, embed_dim: usize, layers: usize, seed: u64) -> Self {
        assert!((2..=4).contains(&layers), "prototype must have 2-4 layers");
        let mut dims = vec![feature_dim; layers];
        dims.push(embed_dim);
        let mlp = Mlp::new(GROUP_NAME, &dims, seed, true);
        let ema_shadow = mlp.snapshot();
        PrototypeNetwork {
            mlp,
            ema_shadow,
            frozen_teacher: None,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn forward_value(&self, features: &Mat) -> Result<Mat> {
        self.mlp.forward_value(features)
    }

    pub fn forward_tape(&self, tape: &mut Tape, features: TensorId) -> Result<TensorId> {
        self.mlp.forward_tape(tape, features)
    }

    /// Reset the shadow to the current live parameters (phase start).
    pub fn reset_shadow(&mut self) {
        self.ema_shadow = self.mlp.snapshot();
    }

    /// One EMA step: shadow ← ρ·shadow + (1−ρ)·live.
    pub fn ema_update(&mut self, rho: f64) {
        for (s, t) in self.ema_shadow.iter_mut().zip(&self.mlp.group.tensors) {
            for (sv, tv) in s.data_mut().iter_mut().zip(t.value.data()) {
                *sv = rho * *sv + (1.0 - rho) * tv;
            }
        }
    }

    /// The live parameters adopt the shadow (phase end).
    pub fn adopt_shadow(&mut self) {
        let shadow = self.ema_shadow.clone();
        self.mlp.restore(&shadow);
    }

    /// Freeze the current live parameters as the distillation teacher.
    pub fn snapshot_teacher(&mut self) {
        self.frozen_teacher = Some(self.mlp.snapshot());
    }

    pub fn clear_teacher(&mut self) {
        self.frozen_teacher = None;
    }

    /// Run the frozen teacher on a feature batch (no tape, no teacher set
    /// is a caller bug).
    pub fn teacher_forward_value(&self, features: &Mat) -> Result<Mat> {
        let teacher = self
            .frozen_teacher
            .as_ref()
            .expect("teacher_forward_value called without a teacher snapshot");
        self.mlp.forward_value_with(teacher, features)
    }
}
