//! Small dense perceptrons with tanh between layers.
//!
//! Both the concept-alignment modules and the prototype network are plain
//! MLPs whose parameters live in one [`ParameterGroup`]: tensors laid out
//! as [W1, b1, W2, b2, ...], weights fan-in-scaled uniform, biases zero.


use crate::autodiff::mat::{self, Mat};
use crate::autodiff::{ParameterGroup, Tape, TensorId};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Fan-in-scaled uniform limit that keeps unit-variance inputs at unit
/// output variance for a linear layer: Var(W) = 1/fan_in.
pub fn init_limit(fan_in: usize) -> f64 {
    (3.0 / fan_in as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub group: ParameterGroup,
    pub dims: Vec<usize>,
}

impl Mlp {
    /// Build an MLP with the given layer widths, e.g. `[in, hidden, out]`.
    /// Weights are uniform in ±sqrt(3/fan_in), biases zero; reproducible
    /// from the seed.
    pub fn new(name: impl Into<String>, dims: &[usize], seed: u64, trainable: bool) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        let mut rng = rng_from_seed(seed);
        let mut tensors = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            tensors.push(Mat::uniform(fan_in, fan_out, init_limit(fan_in), &mut rng));
            tensors.push(Mat::zeros(1, fan_out));
        }
        Mlp {
            group: ParameterGroup::new(name, tensors, trainable),
            dims: dims.to_vec(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn check_input(&self, what: &str, cols: usize) -> Result<()> {
        if cols != self.in_dim() {
            return Err(Error::DimensionMismatch {
                what: format!("{} '{}'", what, self.group.name),
                expected: self.in_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Gradient-free forward pass. tanh between layers, linear output.
    pub fn forward_value(&self, x: &Mat) -> Result<Mat> {
        self.check_input("input to", x.cols())?;
        let mut h = x.clone();
        let layers = self.num_layers();
        for l in 0..layers {
            let w = &self.group.tensors[2 * l].value;
            let b = &self.group.tensors[2 * l + 1].value;
            h = mat::add_bias(&mat::matmul(&h, w)?, b)?;
            if l + 1 < layers {
                h = mat::tanh(&h);
            }
        }
        Ok(h)
    }

    /// Forward pass recorded on a tape. Each call leases the parameters
    /// onto the tape; repeated calls accumulate gradients additively into
    /// the same group, which is the correct treatment of shared weights.
    pub fn forward_tape(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        self.check_input("input to", tape.value(x).cols())?;
        let mut h = x;
        let layers = self.num_layers();
        for l in 0..layers {
            let w = tape.param(&self.group, 2 * l);
            let b = tape.param(&self.group, 2 * l + 1);
            let lin = tape.matmul(h, w)?;
            h = tape.add_bias(lin, b)?;
            if l + 1 < layers {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass through an explicit parameter snapshot (same layout as
    /// the live group). Used to run the frozen distillation teacher.
    pub fn forward_value_with(&self, params: &[Mat], x: &Mat) -> Result<Mat> {
        self.check_input("input to snapshot of", x.cols())?;
        assert_eq!(params.len(), self.group.tensors.len(), "snapshot layout mismatch");
        let mut h = x.clone();
        let layers = self.num_layers();
        for l in 0..layers {
            h = mat::add_bias(&mat::matmul(&h, &params[2 * l])?, &params[2 * l + 1])?;
            if l + 1 < layers {
                h = mat::tanh(&h);
            }
        }
        Ok(h)
    }

    /// Copy of all parameter values in group layout.
    pub fn snapshot(&self) -> Vec<Mat> {
        self.group.tensors.iter().map(|t| t.value.clone()).collect()
    }

    /// Overwrite parameter values from a snapshot.
    pub fn restore(&mut self, snapshot: &[Mat]) {
        assert_eq!(snapshot.len(), self.group.tensors.len(), "snapshot layout mismatch");
        for (t, s) in self.group.tensors.iter_mut().zip(snapshot) {
            assert_eq!(t.value.shape(), s.shape(), "snapshot shape mismatch");
            t.value = s.clone();
        }
    }
}

/// Sample an unused `Rng` draw count so sibling MLPs built from consecutive
/// seeds do not share their leading weights.
pub fn jitter_seed(seed: u64, salt: &str) -> u64 {
    crate::rng::derive_seed(seed, salt)
}
