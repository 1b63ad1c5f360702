#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }

    pub fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Linear => z.to_vec(),
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Maps `dL/dy` to `dL/dz` given the pre-activation `z` and output `y`.
    pub fn backward(self, z: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
        match self {
            Activation::Linear => dy.to_vec(),
            Activation::Relu => z
                .iter()
                .zip(dy)
                .map(|(&z, &d)| if z > 0.0 { d } else { 0.0 })
                .collect(),
            Activation::Tanh => y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect(),
            Activation::Sigmoid => y.iter().zip(dy).map(|(y, d)| d * y * (1.0 - y)).collect(),
            Activation::Softmax => {
                let s: f64 = y.iter().zip(dy).map(|(y, d)| y * d).sum();
                y.iter().zip(dy).map(|(y, d)| y * (d - s)).collect()
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}
