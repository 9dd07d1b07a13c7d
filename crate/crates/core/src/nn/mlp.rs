use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{LayoutBuilder, ParamVector};
use super::tape::{Activation, Tape, Var};
use crate::error::{IslError, Result};

/// Dense feed-forward architecture. `layer_widths[0]` is the input width;
/// each following entry adds one dense layer with the matching activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub dropout: Vec<f64>,
}

impl MlpSpec {
    /// Hidden widths with a shared activation and an identity output layer.
    pub fn new(input: usize, hidden: &[usize], output: usize, act: Activation) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![act; hidden.len()];
        activations.push(Activation::Identity);
        Self { layer_widths: widths, activations, dropout: Vec::new() }
    }

    /// The 1 → 7 → 13 → 7 → 1 ELU generator used for the 1D experiments.
    pub fn generator_1d() -> Self {
        Self::new(1, &[7, 13, 7], 1, Activation::Elu)
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        let n = self.num_layers();
        // no dropout after the output layer
        self.dropout = (0..n).map(|i| if i + 1 < n { rate } else { 0.0 }).collect();
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len().saturating_sub(1)
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths.first().copied().unwrap_or(0)
    }

    pub fn output_width(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 || self.layer_widths.iter().any(|&w| w == 0) {
            return Err(IslError::InvalidParameter(format!(
                "MLP needs at least two positive widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.activations.len() != self.num_layers() {
            return Err(IslError::InvalidParameter(format!(
                "{} activations for {} dense layers",
                self.activations.len(),
                self.num_layers()
            )));
        }
        if !self.dropout.is_empty()
            && (self.dropout.len() != self.num_layers() || self.dropout.iter().any(|p| !(0.0..1.0).contains(p)))
        {
            return Err(IslError::InvalidParameter("dropout rates must be in [0, 1), one per layer".into()));
        }
        Ok(())
    }

    /// Registers this network's tensors with `builder`.
    pub fn build(&self, builder: &mut LayoutBuilder, prefix: &str) -> Mlp {
        let mut layers = Vec::new();
        let mut fan_in = Vec::new();
        for (i, pair) in self.layer_widths.windows(2).enumerate() {
            let w = builder.push(format!("{prefix}dense{i}.weight"), pair[0], pair[1]);
            let b = builder.push(format!("{prefix}dense{i}.bias"), 1, pair[1]);
            layers.push(DenseOffsets { weight: w, bias: b, fan_in: pair[0], fan_out: pair[1] });
            fan_in.extend([pair[0], pair[0]]);
        }
        Mlp { spec: self.clone(), layers, fan_in }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DenseOffsets {
    weight: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

/// An [`MlpSpec`] bound to positions in a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<DenseOffsets>,
    fan_in: Vec<usize>,
}

impl Mlp {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Fan-in per registered tensor, for [`ParamVector::init_uniform`].
    pub fn fan_in(&self) -> &[usize] {
        &self.fan_in
    }

    /// Forward pass over a batch `x` (rows are inputs). Dropout is applied
    /// only when a mask stream is supplied.
    pub fn forward<R: Rng + ?Sized>(&self, tape: &mut Tape<'_>, x: Var, mut dropout: Option<&mut R>) -> Var {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(layer.weight, layer.fan_in, layer.fan_out);
            let b = tape.param(layer.bias, 1, layer.fan_out);
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = tape.activation(z, self.spec.activations[i]);
            let rate = self.spec.dropout.get(i).copied().unwrap_or(0.0);
            if rate > 0.0 {
                if let Some(rng) = dropout.as_deref_mut() {
                    let (r, c) = tape.shape(h);
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> =
                        (0..r * c).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
                    let m = tape.constant(Matrix::from_vec(r, c, mask));
                    h = tape.mul(h, m);
                }
            }
        }
        h
    }

    /// Inference-mode forward pass over a batch of inputs.
    pub fn forward_batch(&self, theta: &[f64], inputs: Matrix) -> Result<Matrix> {
        if inputs.cols != self.spec.input_width() {
            return Err(IslError::Shape {
                op: "mlp_forward",
                detail: format!("input width {} but network expects {}", inputs.cols, self.spec.input_width()),
            });
        }
        let mut tape = Tape::new(theta);
        let x = tape.constant(inputs);
        let y = self.forward::<rand_chacha::ChaCha8Rng>(&mut tape, x, None);
        tape.check()?;
        Ok(tape.value(y).clone())
    }
}

/// Applies the network to a single input vector (inference mode).
pub fn mlp_forward(spec: &MlpSpec, theta: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut b = LayoutBuilder::new();
    let mlp = spec.build(&mut b, "");
    if b.len() != theta.len() {
        return Err(IslError::Shape {
            op: "mlp_forward",
            detail: format!("θ has {} values, architecture needs {}", theta.len(), b.len()),
        });
    }
    Ok(mlp.forward_batch(&theta.values, Matrix::row(input.to_vec()))?.data)
}

/// A one-dimensional implicit generator `z ↦ g_θ(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    mlp: Mlp,
    n_params: usize,
}

impl Generator {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        if spec.input_width() != 1 || spec.output_width() != 1 {
            return Err(IslError::InvalidParameter(format!(
                "a 1D generator maps 1 → 1, got {} → {}",
                spec.input_width(),
                spec.output_width()
            )));
        }
        let mut b = LayoutBuilder::new();
        let mlp = spec.build(&mut b, "");
        Ok(Self { mlp, n_params: b.len() })
    }

    pub fn spec(&self) -> &MlpSpec {
        self.mlp.spec()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn layout(&self) -> Vec<super::params::TensorLayout> {
        let mut b = LayoutBuilder::new();
        self.spec().build(&mut b, "");
        b.finish()
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        ParamVector::init_uniform(self.layout(), self.mlp.fan_in(), rng)
    }

    /// Checks that `theta` was produced for this architecture.
    pub fn check_params(&self, theta: &ParamVector) -> Result<()> {
        theta.validate()?;
        if theta.layout != self.layout() {
            return Err(IslError::Shape {
                op: "generator",
                detail: "parameter layout does not match the architecture".into(),
            });
        }
        Ok(())
    }

    /// `g_θ` applied to each latent value.
    pub fn apply(&self, theta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mlp.forward_batch(theta, Matrix::column(z.to_vec()))?.data)
    }
}
