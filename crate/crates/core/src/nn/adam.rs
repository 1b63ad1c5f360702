use super::{Matrix, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: Parameterized>(params: &P) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper<P: Parameterized>(params: &P, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when the
/// gradient is not finite.
pub fn adam_step<P: Parameterized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let g = grads.tensors();
    if g.len() != state.first_moment.len() {
        return Err(Error::Shape("gradient and optimizer state differ".into()));
    }
    if let Some(i) = g.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("gradient tensor {i}")));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(g)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!(
                "parameter {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        for (((p, &g), m), v) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
