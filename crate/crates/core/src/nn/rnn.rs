use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{LayoutBuilder, ParamVector};
use super::tape::{Activation, Tape, Var};
use crate::error::{IslError, Result};

/// Stacked Elman recurrent network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnSpec {
    pub input_width: usize,
    pub hidden_width: usize,
    pub num_layers: usize,
    pub activation: Activation,
}

impl RnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.hidden_width == 0 || self.num_layers == 0 {
            return Err(IslError::InvalidParameter(format!(
                "RNN widths and depth must be positive, got {self:?}"
            )));
        }
        if matches!(self.activation, Activation::Sigmoid | Activation::Identity) {
            return Err(IslError::InvalidParameter("RNN activation must be relu, elu or tanh".into()));
        }
        Ok(())
    }

    pub fn build(&self, builder: &mut LayoutBuilder, prefix: &str) -> Rnn {
        let mut layers = Vec::new();
        let mut fan_in = Vec::new();
        for l in 0..self.num_layers {
            let inp = if l == 0 { self.input_width } else { self.hidden_width };
            let h = self.hidden_width;
            let wx = builder.push(format!("{prefix}rnn{l}.w_input"), inp, h);
            let wh = builder.push(format!("{prefix}rnn{l}.w_hidden"), h, h);
            let b = builder.push(format!("{prefix}rnn{l}.bias"), 1, h);
            layers.push(RnnLayerOffsets { wx, wh, b, input: inp });
            fan_in.extend([h, h, h]);
        }
        Rnn { spec: self.clone(), layers, fan_in }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RnnLayerOffsets {
    wx: usize,
    wh: usize,
    b: usize,
    input: usize,
}

/// An [`RnnSpec`] bound to positions in a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Rnn {
    spec: RnnSpec,
    layers: Vec<RnnLayerOffsets>,
    fan_in: Vec<usize>,
}

/// Hidden state of every layer for a batch: one `B × hidden` matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnState {
    pub layers: Vec<Matrix>,
}

impl RnnState {
    pub fn zeros(spec: &RnnSpec, batch: usize) -> Self {
        Self { layers: (0..spec.num_layers).map(|_| Matrix::zeros(batch, spec.hidden_width)).collect() }
    }

    /// Output of the top layer.
    pub fn top(&self) -> &Matrix {
        self.layers.last().expect("at least one layer")
    }
}

impl Rnn {
    pub fn spec(&self) -> &RnnSpec {
        &self.spec
    }

    pub fn fan_in(&self) -> &[usize] {
        &self.fan_in
    }

    /// One step: `h_l = act(x_l W_x + h_l' W_h + b)` where `x_0` is the input
    /// and `x_l` the new state of layer `l − 1`.
    pub fn step(&self, tape: &mut Tape<'_>, input: Var, prev: &[Var]) -> Vec<Var> {
        let h = self.spec.hidden_width;
        let mut x = input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (layer, &hp) in self.layers.iter().zip(prev) {
            let wx = tape.param(layer.wx, layer.input, h);
            let wh = tape.param(layer.wh, h, h);
            let b = tape.param(layer.b, 1, h);
            let a = tape.matmul(x, wx);
            let r = tape.matmul(hp, wh);
            let s = tape.add(a, r);
            let s = tape.add_row(s, b);
            x = tape.activation(s, self.spec.activation);
            out.push(x);
        }
        out
    }

    /// Gradient-free step on plain matrices.
    pub fn step_values(&self, theta: &[f64], input: &Matrix, prev: &RnnState) -> Result<RnnState> {
        if input.cols != self.spec.input_width || prev.layers.len() != self.spec.num_layers {
            return Err(IslError::Shape {
                op: "rnn_step",
                detail: format!(
                    "input width {} (expects {}), {} state layers (expects {})",
                    input.cols,
                    self.spec.input_width,
                    prev.layers.len(),
                    self.spec.num_layers
                ),
            });
        }
        if prev.layers.iter().any(|m| m.shape() != (input.rows, self.spec.hidden_width)) {
            return Err(IslError::Shape { op: "rnn_step", detail: "hidden state shape".into() });
        }
        let mut tape = Tape::new(theta);
        let x = tape.constant(input.clone());
        let hp: Vec<Var> = prev.layers.iter().map(|m| tape.constant(m.clone())).collect();
        let out = self.step(&mut tape, x, &hp);
        tape.check()?;
        Ok(RnnState { layers: out.iter().map(|v| tape.value(*v).clone()).collect() })
    }
}

/// Single-sequence step for one input vector.
pub fn rnn_step(spec: &RnnSpec, theta: &ParamVector, input: &[f64], prev: &RnnState) -> Result<RnnState> {
    spec.validate()?;
    let mut b = LayoutBuilder::new();
    let rnn = spec.build(&mut b, "");
    if b.len() != theta.len() {
        return Err(IslError::Shape {
            op: "rnn_step",
            detail: format!("θ has {} values, architecture needs {}", theta.len(), b.len()),
        });
    }
    rnn.step_values(&theta.values, &Matrix::row(input.to_vec()), prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(act: Activation, layers: usize) -> RnnSpec {
        RnnSpec { input_width: 1, hidden_width: 3, num_layers: layers, activation: act }
    }

    fn layout(s: &RnnSpec) -> Vec<super::super::params::TensorLayout> {
        let mut b = LayoutBuilder::new();
        s.build(&mut b, "");
        b.finish()
    }

    #[test]
    fn zero_params_zero_state() {
        let s = spec(Activation::Tanh, 2);
        let theta = ParamVector::zeros(layout(&s));
        let h = rnn_step(&s, &theta, &[0.4], &RnnState::zeros(&s, 1)).unwrap();
        assert!(h.layers.iter().all(|m| m.data.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let s = spec(Activation::Relu, 1);
        let mut theta = ParamVector::zeros(layout(&s));
        let bias = theta.layout.iter().find(|t| t.name.ends_with("bias")).unwrap().clone();
        for v in &mut theta.values[bias.offset..bias.offset + bias.len()] {
            *v = -1.0;
        }
        let h = rnn_step(&s, &theta, &[0.0], &RnnState::zeros(&s, 1)).unwrap();
        assert!(h.top().data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tanh_unit_cell() {
        let s = RnnSpec { input_width: 1, hidden_width: 1, num_layers: 1, activation: Activation::Tanh };
        let mut theta = ParamVector::zeros(layout(&s));
        theta.values[0] = 1.0; // W_x
        let h = rnn_step(&s, &theta, &[0.0], &RnnState::zeros(&s, 1)).unwrap();
        assert_eq!(h.top().data, vec![0.0]);
        let h = rnn_step(&s, &theta, &[0.5], &RnnState::zeros(&s, 1)).unwrap();
        assert!((h.top().data[0] - 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_state_is_shape_error() {
        let s = spec(Activation::Tanh, 2);
        let theta = ParamVector::zeros(layout(&s));
        let one_layer = RnnState { layers: vec![Matrix::zeros(1, 3)] };
        assert!(matches!(rnn_step(&s, &theta, &[0.0], &one_layer), Err(IslError::Shape { .. })));
        assert!(rnn_step(&s, &theta, &[0.0, 1.0], &RnnState::zeros(&s, 1)).is_err());
    }
}
