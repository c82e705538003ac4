use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Loss, Matrix, MlpNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-buffer optimizer state (Adam moments, or nothing for SGD).
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, buffer_sizes: &[usize]) -> Self {
        let zeros = || buffer_sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let adam = cfg.optimizer == OptimizerKind::Adam;
        Self {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            step: 0,
            m: if adam { zeros() } else { Vec::new() },
            v: if adam { zeros() } else { Vec::new() },
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    p.iter_mut().zip(g.iter()).for_each(|(p, g)| *p -= self.lr * g);
                }
            }
            OptimizerKind::Adam => {
                self.step += 1;
                let bc1 = 1.0 - self.beta1.powi(self.step);
                let bc2 = 1.0 - self.beta2.powi(self.step);
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for k in 0..p.len() {
                        m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                        v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch training of `net` on `inputs` against `targets` (one row per sample).
///
/// The result is a pure function of the data, the config and its seed.
pub fn train(net: &mut MlpNetwork, inputs: &Matrix, targets: &Matrix, loss: Loss, cfg: &TrainConfig) -> Result<TrainReport> {
    train_weighted(net, inputs, targets, None, loss, cfg)
}

/// As [`train`], with each sample's loss and gradient scaled by its weight.
pub fn train_weighted(
    net: &mut MlpNetwork,
    inputs: &Matrix,
    targets: &Matrix,
    weights: Option<&[f64]>,
    loss: Loss,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if let Some(w) = weights {
        if w.len() != inputs.rows() {
            return Err(Error::Shape(format!("{} weights for {} samples", w.len(), inputs.rows())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("sample weights must be finite and >= 0".into()));
        }
    }
    if inputs.rows() != targets.rows() {
        return Err(Error::Shape(format!(
            "{} input rows but {} target rows",
            inputs.rows(),
            targets.rows()
        )));
    }
    if inputs.rows() == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    if inputs.cols() != net.input_dim() || targets.cols() != net.output_dim() {
        return Err(Error::Shape(format!(
            "data is {}->{} but network is {}->{}",
            inputs.cols(),
            targets.cols(),
            net.input_dim(),
            net.output_dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes: Vec<usize> = Gradients::zeros_like(net).buffers().iter().map(|b| b.len()).collect();
    let mut opt = Optimizer::new(cfg, &sizes);
    let mut grads = Gradients::zeros_like(net);
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let out_act = net.output_activation();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let trace = net.forward_trace(inputs.row(i), Some(&mut rng))?;
                let out = trace.output();
                let w = weights.map_or(1.0, |w| w[i]);
                total += w * loss.value(out, targets.row(i));
                let z = trace.last_preactivation();
                let mut delta = loss.output_delta(out_act, z, out, targets.row(i));
                if w != 1.0 {
                    delta.iter_mut().for_each(|d| *d *= w);
                }
                net.backward(&trace, &delta, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(net.param_buffers_mut(), &grads.buffers());
        }
        let mean = total / inputs.rows() as f64;
        if !mean.is_finite() || !net.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                learning_rate: cfg.learning_rate,
            });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainReport { loss_history: history })
}
