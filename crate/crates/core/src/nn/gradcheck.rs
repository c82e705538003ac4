use rand_chacha::ChaCha8Rng;

use super::{Gradients, Loss, MlpNetwork};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Below this magnitude gradients are compared by absolute difference.
const RELATIVE_FLOOR: f64 = 1e-7;

/// Backprop gradients of `loss(net(x), target)` for one sample, no dropout.
pub fn backprop_gradients(net: &MlpNetwork, x: &[f64], target: &[f64], loss: Loss) -> Result<Gradients> {
    let trace = net.forward_trace::<ChaCha8Rng>(x, None)?;
    let delta = loss.output_delta(net.output_activation(), trace.last_preactivation(), trace.output(), target);
    let mut grads = Gradients::zeros_like(net);
    net.backward(&trace, &delta, &mut grads);
    Ok(grads)
}

/// Largest relative error between backprop and central finite differences
/// over every parameter of `net`.
pub fn grad_check(net: &MlpNetwork, x: &[f64], target: &[f64], loss: Loss, h: f64) -> Result<f64> {
    let analytic = backprop_gradients(net, x, target, loss)?;
    let analytic: Vec<f64> = analytic.buffers().concat();

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let buffer_count = probe.param_buffers_mut().len();
    for b in 0..buffer_count {
        let len = probe.param_buffers_mut()[b].len();
        for k in 0..len {
            let orig = probe.param_buffers_mut()[b][k];
            probe.param_buffers_mut()[b][k] = orig + h;
            let plus = loss.value(&probe.forward(x)?, target);
            probe.param_buffers_mut()[b][k] = orig - h;
            let minus = loss.value(&probe.forward(x)?, target);
            probe.param_buffers_mut()[b][k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[flat], numeric));
            flat += 1;
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    let scale = a.abs().max(b.abs());
    if scale < RELATIVE_FLOOR {
        diff
    } else {
        diff / scale
    }
}
