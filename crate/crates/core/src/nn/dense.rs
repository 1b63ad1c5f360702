use rand::Rng;

use super::{Activation, Matrix, Parameterized};
use crate::{Error, Result};

/// Fully connected layer `activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Matrix,
    pub b: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            w: Matrix::zeros(output, input),
            b: Matrix::zeros(output, 1),
            activation,
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            w: Matrix::uniform(output, input, bound, rng),
            b: Matrix::uniform(output, 1, bound, rng),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim(), self.activation)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut z = self.b.as_slice().to_vec();
        self.w.matvec_acc(x, &mut z);
        let y = self.activation.apply(&z);
        Ok((
            y.clone(),
            DenseCache {
                x: x.to_vec(),
                z,
                y,
            },
        ))
    }

    /// Backpropagates `dL/dy`; accumulates into `grads` and returns `dL/dx`.
    pub fn backward(&self, dy: &[f64], cache: &DenseCache, grads: &mut DenseParams) -> Vec<f64> {
        let dz = self.activation.backward(&cache.z, &cache.y, dy);
        self.backward_preactivation(&dz, cache, grads)
    }

    /// Like [`DenseParams::backward`] but starting from `dL/dz`.
    pub fn backward_preactivation(
        &self,
        dz: &[f64],
        cache: &DenseCache,
        grads: &mut DenseParams,
    ) -> Vec<f64> {
        grads.w.add_outer(dz, &cache.x);
        grads.b.add_vec(dz);
        let mut dx = vec![0.0; self.input_dim()];
        self.w.matvec_t_acc(dz, &mut dx);
        dx
    }
}

impl Parameterized for DenseParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.w, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Convenience wrapper returning only the output.
pub fn dense_forward(x: &[f64], params: &DenseParams) -> Result<Vec<f64>> {
    params.forward(x).map(|(y, _)| y)
}
