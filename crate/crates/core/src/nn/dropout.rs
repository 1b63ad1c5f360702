use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// (0 or `1 / (1 - rate)` in training, 1 in evaluation).
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, mask))
}
