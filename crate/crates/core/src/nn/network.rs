//! Dense feed-forward networks: forward pass, training traces and backprop.
//!
//! Each layer computes `y = activation(W x + b)` with `W` stored row-major as
//! `(out, in)`. Dropout (inverted) is applied to a layer's output only when a
//! training trace is requested with an RNG; [`MlpNetwork::forward`] is always
//! inference mode.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
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
}

/// Logistic function, evaluated without overflow for large |z|.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub dropout: f64,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("layer dimensions must be > 0".into()));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit)
            .map_err(|e| Error::Config(format!("weight init: {e}")))?;
        let data = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self::new(
            Matrix::from_vec(out_dim, in_dim, data)?,
            vec![0.0; out_dim],
            activation,
            dropout,
        )
    }

    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation, dropout: f64) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias length {} != weight rows {}",
                bias.len(),
                weights.rows()
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout rate {dropout} not in [0,1)")));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("bias contains non-finite values".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            dropout,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.in_dim();
        self.weights
            .data()
            .chunks_exact(cols)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// Layer specification used when building a fresh network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl LayerSpec {
    pub const fn new(width: usize, activation: Activation, dropout: f64) -> Self {
        Self {
            width,
            activation,
            dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    input_dim: usize,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer (the last entry is the network output).
    activations: Vec<Vec<f64>>,
    preactivations: Vec<Vec<f64>>,
    /// Inverted-dropout scale per unit, when dropout was active.
    masks: Vec<Option<Vec<f64>>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn last_preactivation(&self) -> &[f64] {
        self.preactivations.last().expect("network has at least one layer")
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.data().len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for g in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            g.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Buffers in the same order as [`MlpNetwork::param_buffers_mut`].
    pub fn buffers(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl MlpNetwork {
    pub fn from_layers(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != prev {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but previous width is {prev}",
                    layer.in_dim()
                )));
            }
            prev = layer.out_dim();
        }
        if layers.last().is_some_and(|l| l.dropout > 0.0) {
            return Err(Error::Config("output layer cannot use dropout".into()));
        }
        Ok(Self { layers, input_dim })
    }

    pub fn new<R: Rng + ?Sized>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev = input_dim;
        for spec in specs {
            layers.push(DenseLayer::glorot(prev, spec.width, spec.activation, spec.dropout, rng)?);
            prev = spec.width;
        }
        Self::from_layers(input_dim, layers)
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, DenseLayer::out_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> Activation {
        self.layers.last().expect("non-empty").activation
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer
                .preactivation(&cur)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(cur)
    }

    /// Forward pass that records everything backprop needs. Dropout is
    /// applied only when `rng` is given.
    pub fn forward_trace<R: Rng + ?Sized>(&self, x: &[f64], mut rng: Option<&mut R>) -> Result<Trace> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut preactivations = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.preactivation(activations.last().expect("non-empty"));
            let mut y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            let mask = match rng.as_deref_mut() {
                Some(rng) if layer.dropout > 0.0 => {
                    let keep = 1.0 - layer.dropout;
                    let m: Vec<f64> = (0..y.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    y.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                    Some(m)
                }
                _ => None,
            };
            preactivations.push(z);
            activations.push(y);
            masks.push(mask);
        }
        Ok(Trace {
            activations,
            preactivations,
            masks,
        })
    }

    /// Backpropagates `delta` (dL/d pre-activation of the output layer),
    /// accumulating into `grads`. Returns dL/d input.
    pub fn backward(&self, trace: &Trace, delta: &[f64], grads: &mut Gradients) -> Vec<f64> {
        debug_assert_eq!(delta.len(), self.output_dim());
        let mut delta = delta.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[li];
            let cols = layer.in_dim();
            let gw = &mut grads.weights[li];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * cols..(r + 1) * cols];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
            }
            grads.bias[li].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);

            let mut d_input = vec![0.0; cols];
            for (row, d) in layer.weights.data().chunks_exact(cols).zip(&delta) {
                if *d == 0.0 {
                    continue;
                }
                d_input.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
            if li == 0 {
                return d_input;
            }
            // Turn dL/d(output of layer li-1) into dL/d(pre-activation of li-1).
            let prev = &self.layers[li - 1];
            let z = &trace.preactivations[li - 1];
            let y = &trace.activations[li];
            let mask = trace.masks[li - 1].as_deref();
            delta = d_input
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let scale = mask.map_or(1.0, |m| m[k]);
                    if scale == 0.0 {
                        return 0.0;
                    }
                    // y holds the dropout-scaled output; undo the scale for the derivative.
                    let raw = y[k] / scale;
                    g * scale * prev.activation.derivative(z[k], raw)
                })
                .collect();
        }
        unreachable!("network has at least one layer")
    }

    /// Mutable parameter buffers: weights then bias, layer by layer.
    pub fn param_buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let DenseLayer { weights, bias, .. } = l;
                [weights.data_mut(), bias.as_mut_slice()]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.data().iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_net_with_sigmoid_head_outputs_half() {
        let layer = DenseLayer::new(Matrix::zeros(2, 3), vec![0.0; 2], Activation::Sigmoid, 0.0).unwrap();
        let net = MlpNetwork::from_layers(3, vec![layer]).unwrap();
        assert_eq!(net.forward(&[0.3, -7.0, 12.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let layer = DenseLayer::new(w, vec![0.0; 2], Activation::Identity, 0.0).unwrap();
        let net = MlpNetwork::from_layers(2, vec![layer]).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [
            LayerSpec::new(8, Activation::Relu, 0.1),
            LayerSpec::new(1, Activation::Sigmoid, 0.0),
        ];
        let net = MlpNetwork::new(4, &specs, &mut rng).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn wrong_input_length_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = MlpNetwork::new(3, &[LayerSpec::new(1, Activation::Identity, 0.0)], &mut rng).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let a = DenseLayer::new(Matrix::zeros(4, 3), vec![0.0; 4], Activation::Relu, 0.0).unwrap();
        let b = DenseLayer::new(Matrix::zeros(1, 5), vec![0.0], Activation::Sigmoid, 0.0).unwrap();
        assert!(MlpNetwork::from_layers(3, vec![a, b]).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(-7.0) - 9.110_511_944_006_454e-4).abs() < 1e-15);
    }
}
