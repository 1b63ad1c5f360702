//! Central finite-difference gradient checking.

use super::Parameterized;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Perturbation size.
    pub step: f64,
    /// Denominator floor for the relative error, so that entries where both
    /// gradients are ~0 are compared absolutely.
    pub floor: f64,
    /// Check every `stride`-th entry of each tensor.
    pub stride: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-7,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (tensor, entry) of the worst match.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against `(L(p + h e_i) - L(p - h e_i)) / 2h`.
pub fn check_gradients<P, F>(
    params: &P,
    analytic: &P,
    mut loss: F,
    cfg: GradCheck,
) -> GradCheckReport
where
    P: Parameterized + Clone,
    F: FnMut(&P) -> f64,
{
    let mut probe = params.clone();
    let analytic_tensors: Vec<Vec<f64>> = analytic
        .tensors()
        .iter()
        .map(|t| t.as_slice().to_vec())
        .collect();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    for (ti, &n) in sizes.iter().enumerate() {
        for ei in (0..n).step_by(cfg.stride.max(1)) {
            let original = probe.tensors()[ti].as_slice()[ei];
            probe.tensors_mut()[ti].as_mut_slice()[ei] = original + cfg.step;
            let up = loss(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[ei] = original - cfg.step;
            let down = loss(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[ei] = original;

            let numeric = (up - down) / (2.0 * cfg.step);
            let a = analytic_tensors[ti][ei];
            let err = relative_error(a, numeric, cfg.floor);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = (ti, ei);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report
}
