//! Parametric function classes `f_w(x)`.
//!
//! The MLP is `f(x) = W2·σ(W1·x + c1) + c2` with a sigmoid hidden layer. Its
//! flattened parameter vector is laid out as `W1` (row-major, `h×d_x`),
//! then `c1` (`h`), `W2` (`h`), `c2` (1).

use crate::error::{check_len, Error, Result};

pub const DEFAULT_HIDDEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpLayout {
    pub input_dim: usize,
    pub hidden: usize,
}

impl MlpLayout {
    pub fn new(input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::invalid(format!(
                "mlp layout needs positive dims, got d_x={input_dim}, h={hidden}"
            )));
        }
        Ok(Self { input_dim, hidden })
    }

    /// `h·d_x + h + h + 1`
    pub fn param_dim(&self) -> usize {
        self.hidden * self.input_dim + 2 * self.hidden + 1
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let c1 = self.hidden * self.input_dim;
        let w2 = c1 + self.hidden;
        let c2 = w2 + self.hidden;
        (c1, w2, c2)
    }
}

/// Which function class a parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Mlp(MlpLayout),
    /// `f(x) = wᵀx`
    Linear { dim: usize },
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Mlp(l) => l.input_dim,
            Model::Linear { dim } => *dim,
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Model::Mlp(l) => l.param_dim(),
            Model::Linear { dim } => *dim,
        }
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector {
            values: vec![0.0; self.param_dim()],
            model: *self,
        }
    }

    pub fn params(&self, values: Vec<f64>) -> Result<ParamVector> {
        ParamVector::new(*self, values)
    }

    pub fn forward(&self, w: &ParamVector, x: &[f64]) -> Result<f64> {
        self.check(w)?;
        match self {
            Model::Mlp(l) => mlp_forward(l, w, x),
            Model::Linear { .. } => linear_forward(w, x),
        }
    }

    pub fn grad(&self, w: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check(w)?;
        match self {
            Model::Mlp(l) => mlp_grad_w(l, w, x),
            Model::Linear { .. } => linear_grad_w(w, x),
        }
    }

    /// Value and parameter gradient in one pass.
    pub fn forward_grad(&self, w: &ParamVector, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(w)?;
        match self {
            Model::Mlp(l) => mlp_forward_grad(l, w, x),
            Model::Linear { .. } => Ok((linear_forward(w, x)?, linear_grad_w(w, x)?)),
        }
    }

    fn check(&self, w: &ParamVector) -> Result<()> {
        if w.model != *self {
            return Err(Error::invalid(format!(
                "parameter vector belongs to {:?}, not {:?}",
                w.model, self
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    model: Model,
}

impl ParamVector {
    pub fn new(model: Model, values: Vec<f64>) -> Result<Self> {
        check_len("param vector", values.len(), model.param_dim())?;
        Ok(Self { values, model })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_mlp(layout: &MlpLayout, w: &ParamVector, x: &[f64]) -> Result<()> {
    check_len("mlp params", w.len(), layout.param_dim())?;
    check_len("mlp input", x.len(), layout.input_dim)
}

fn hidden_activations(layout: &MlpLayout, w: &[f64], x: &[f64]) -> Vec<f64> {
    let (c1, _, _) = layout.offsets();
    let d = layout.input_dim;
    (0..layout.hidden)
        .map(|j| {
            let row = &w[j * d..(j + 1) * d];
            let a: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + w[c1 + j];
            sigmoid(a)
        })
        .collect()
}

pub fn mlp_forward(layout: &MlpLayout, w: &ParamVector, x: &[f64]) -> Result<f64> {
    check_mlp(layout, w, x)?;
    let w = w.values();
    let (_, w2, c2) = layout.offsets();
    let s = hidden_activations(layout, w, x);
    // same accumulation order as `mlp_forward_grad`
    Ok(s.iter().zip(&w[w2..c2]).fold(w[c2], |acc, (a, b)| acc + b * a))
}

pub fn mlp_grad_w(layout: &MlpLayout, w: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    mlp_forward_grad(layout, w, x).map(|(_, g)| g)
}

pub fn mlp_forward_grad(layout: &MlpLayout, w: &ParamVector, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_mlp(layout, w, x)?;
    let w = w.values();
    let d = layout.input_dim;
    let (c1, w2, c2) = layout.offsets();
    let s = hidden_activations(layout, w, x);
    let mut grad = vec![0.0; layout.param_dim()];
    let mut value = w[c2];
    for j in 0..layout.hidden {
        let out_w = w[w2 + j];
        value += out_w * s[j];
        let back = out_w * s[j] * (1.0 - s[j]);
        for k in 0..d {
            grad[j * d + k] = back * x[k];
        }
        grad[c1 + j] = back;
        grad[w2 + j] = s[j];
    }
    grad[c2] = 1.0;
    Ok((value, grad))
}

pub fn linear_forward(w: &ParamVector, x: &[f64]) -> Result<f64> {
    check_len("linear input", x.len(), w.len())?;
    Ok(w.values().iter().zip(x).map(|(a, b)| a * b).sum())
}

pub fn linear_grad_w(w: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    check_len("linear input", x.len(), w.len())?;
    Ok(x.to_vec())
}
