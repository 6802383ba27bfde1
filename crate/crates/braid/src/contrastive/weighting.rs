//! Inverse gradient-norm weighting of the two loss directions.
//!
//! Each direction's weight is the reciprocal of the gradient norm its loss
//! induces on the concept-alignment modules, normalized so the two weights
//! sum to one: the direction that already changes the modules little (the
//! established side) gets the large weight and pulls the other toward it.

use serde::{Deserialize, Serialize};

/// Below this both directions count as converged and weights fall back to
/// parity, guarding the reciprocal against division blow-up.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub a_from_b: f64,
    pub b_from_a: f64,
    /// Both norms were under [`NORM_FLOOR`].
    pub converged: bool,
}

impl Weights {
    pub fn equal() -> Self {
        Weights {
            a_from_b: 0.5,
            b_from_a: 0.5,
            converged: false,
        }
    }

    /// The normalization contract: weights sum to exactly 1 and lie in [0, 1].
    pub fn validate(&self) -> bool {
        self.a_from_b + self.b_from_a == 1.0
            && (0.0..=1.0).contains(&self.a_from_b)
            && (0.0..=1.0).contains(&self.b_from_a)
    }
}

/// Map the two directional gradient norms to normalized weights
/// w = (1/‖∇‖) / Σ(1/‖∇‖).
pub fn adaptive_weights(norm_a_from_b: f64, norm_b_from_a: f64) -> Weights {
    debug_assert!(norm_a_from_b >= 0.0 && norm_b_from_a >= 0.0);
    let a_floor = norm_a_from_b < NORM_FLOOR;
    let b_floor = norm_b_from_a < NORM_FLOOR;
    let (a_from_b, b_from_a, converged) = match (a_floor, b_floor) {
        (true, true) => (0.5, 0.5, true),
        // A vanished norm means that direction has converged; its weight
        // tends to one in the limit of Eq.-style normalization.
        (true, false) => (1.0, 0.0, false),
        (false, true) => (0.0, 1.0, false),
        (false, false) => {
            // raw (1/na, 1/nb) normalized = (nb, na)/(na + nb).
            let w_ab = norm_b_from_a / (norm_a_from_b + norm_b_from_a);
            (w_ab, 1.0 - w_ab, false)
        }
    };
    Weights {
        a_from_b,
        b_from_a,
        converged,
    }
}

/// Exponential smoothing of the per-step weights; raw per-batch norms are
/// noisy at desk-scale batch sizes. The first observation initializes the
/// state, so trajectories start at the raw value rather than at parity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightSmoother {
    pub momentum: f64,
    state: Option<f64>,
}

impl WeightSmoother {
    pub fn new(momentum: f64) -> Self {
        assert!((0.0..1.0).contains(&momentum));
        WeightSmoother {
            momentum,
            state: None,
        }
    }

    pub fn apply(&mut self, raw: Weights) -> Weights {
        let smoothed = match self.state {
            None => raw.a_from_b,
            Some(prev) => self.momentum * prev + (1.0 - self.momentum) * raw.a_from_b,
        };
        self.state = Some(smoothed);
        Weights {
            a_from_b: smoothed,
            b_from_a: 1.0 - smoothed,
            converged: raw.converged,
        }
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}
