use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{IslError, Result};

/// Shape and position of one tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorLayout {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorLayout {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter vector θ plus the layout of its tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<TensorLayout>,
}

/// Incrementally assigns offsets to named tensors.
#[derive(Debug, Default, Clone)]
pub struct LayoutBuilder {
    layout: Vec<TensorLayout>,
    next: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves a `rows × cols` tensor and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.next;
        self.layout.push(TensorLayout { name: name.into(), rows, cols, offset });
        self.next += rows * cols;
        offset
    }

    pub fn len(&self) -> usize {
        self.next
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }

    pub fn finish(self) -> Vec<TensorLayout> {
        self.layout
    }
}

impl ParamVector {
    pub fn zeros(layout: Vec<TensorLayout>) -> Self {
        let n = layout.iter().map(TensorLayout::len).sum();
        Self { values: vec![0.0; n], layout }
    }

    /// Uniform in ±√(1/fan_in) per tensor; `fan_in` is the row count of
    /// weight matrices and of the weight matrix preceding each bias.
    pub fn init_uniform<R: Rng + ?Sized>(layout: Vec<TensorLayout>, fan_in: &[usize], rng: &mut R) -> Self {
        let mut p = Self::zeros(layout);
        for (t, &fan) in p.layout.iter().zip(fan_in) {
            let bound = (1.0 / fan.max(1) as f64).sqrt();
            for v in &mut p.values[t.offset..t.offset + t.len()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Splits θ into one matrix per tensor.
    pub fn unflatten(&self) -> Vec<Matrix> {
        self.layout
            .iter()
            .map(|t| Matrix::from_vec(t.rows, t.cols, self.values[t.offset..t.offset + t.len()].to_vec()))
            .collect()
    }

    /// Inverse of [`ParamVector::unflatten`].
    pub fn flatten(layout: Vec<TensorLayout>, tensors: &[Matrix]) -> Result<Self> {
        if layout.len() != tensors.len() {
            return Err(IslError::Shape {
                op: "flatten",
                detail: format!("{} tensors for {} layout entries", tensors.len(), layout.len()),
            });
        }
        let mut p = Self::zeros(layout);
        for (t, m) in p.layout.iter().zip(tensors) {
            if (t.rows, t.cols) != m.shape() {
                return Err(IslError::Shape {
                    op: "flatten",
                    detail: format!("{} expects {}x{}, got {}x{}", t.name, t.rows, t.cols, m.rows, m.cols),
                });
            }
            p.values[t.offset..t.offset + t.len()].copy_from_slice(&m.data);
        }
        Ok(p)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Checks that the layout is contiguous and that θ matches it.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for t in &self.layout {
            if t.offset != next {
                return Err(IslError::Shape {
                    op: "param_layout",
                    detail: format!("{} starts at {} instead of {next}", t.name, t.offset),
                });
            }
            next += t.len();
        }
        if next != self.values.len() {
            return Err(IslError::Shape {
                op: "param_layout",
                detail: format!("layout covers {next} values, θ has {}", self.values.len()),
            });
        }
        if !self.is_finite() {
            return Err(IslError::NonFinite { op: "param_layout" });
        }
        Ok(())
    }
}
