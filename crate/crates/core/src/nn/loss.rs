use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};

/// Probabilities are clamped to this window before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy `-(y ln p + (1-y) ln(1-p))` for a single prediction.
pub fn cross_entropy(p: f64, y: u8) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::Domain(format!("probability {p} outside [0,1]")));
    }
    if y > 1 {
        return Err(Error::Domain(format!("class label {y} is not binary")));
    }
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok(if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over outputs of binary cross-entropy; expects a sigmoid head.
    BinaryCrossEntropy,
    /// Mean squared error over outputs.
    Mse,
}

impl Loss {
    pub fn value(self, output: &[f64], target: &[f64]) -> f64 {
        let m = output.len() as f64;
        match self {
            Loss::BinaryCrossEntropy => {
                output
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
                    / m
            }
            Loss::Mse => output.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / m,
        }
    }

    /// dL/dz for the output layer's pre-activation `z`.
    pub fn output_delta(self, activation: Activation, z: &[f64], output: &[f64], target: &[f64]) -> Vec<f64> {
        let m = output.len() as f64;
        match (self, activation) {
            // Sigmoid and cross-entropy cancel to the familiar p - y.
            (Loss::BinaryCrossEntropy, Activation::Sigmoid) => {
                output.iter().zip(target).map(|(p, t)| (p - t) / m).collect()
            }
            (Loss::BinaryCrossEntropy, act) => output
                .iter()
                .zip(target)
                .zip(z)
                .map(|((&p, &t), &z)| {
                    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    let d_out = (p - t) / (p * (1.0 - p));
                    d_out * activation_grad(act, z, p) / m
                })
                .collect(),
            (Loss::Mse, act) => output
                .iter()
                .zip(target)
                .zip(z)
                .map(|((&o, &t), &z)| 2.0 * (o - t) * activation_grad(act, z, o) / m)
                .collect(),
        }
    }
}

fn activation_grad(act: Activation, z: f64, y: f64) -> f64 {
    match act {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Sigmoid => y * (1.0 - y),
        Activation::Identity => 1.0,
    }
}
