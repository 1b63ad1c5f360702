use super::Matrix;

/// A container of trainable tensors with a fixed visiting order.
///
/// The same type doubles as its own gradient container.
pub trait Parameterized {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// `self += scale * other`.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::matrix::axpy(scale, b.as_slice(), a.as_mut_slice());
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.as_slice())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
