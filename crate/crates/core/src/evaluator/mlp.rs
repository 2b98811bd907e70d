//! A plain multilayer perceptron with a softmax output, trained by
//! mini-batch gradient descent with classical momentum.
//!
//! Everything runs in `f64` with fixed summation order, so results are
//! reproducible bit for bit.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }

    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Derivative with respect to the pre-activation, given the output.
    /// Not used for softmax, whose gradient is folded into the loss.
    fn derivative(self, out: f64) -> f64 {
        match self {
            Activation::Linear | Activation::Softmax => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(z))) - z[label]`.
fn cross_entropy_from_logits(z: &[f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        DenseLayer {
            inputs,
            outputs,
            weights,
            bias: bias.then(|| vec![0.0; outputs]),
            activation,
        }
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                dot + self.bias.as_ref().map_or(0.0, |b| b[o])
            })
            .collect()
    }
}

/// Parameter-shaped gradient (or velocity) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: mlp
                .layers
                .iter()
                .map(|l| l.bias.as_ref().map(|b| vec![0.0; b.len()]))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            if let Some(b) = b {
                out.extend_from_slice(b);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `spec` lists `(units, bias, activation)` per layer; the last must be
    /// softmax.
    pub fn new<R: Rng + ?Sized>(inputs: usize, spec: &[(usize, bool, Activation)], rng: &mut R) -> Self {
        let mut fan_in = inputs;
        let layers = spec
            .iter()
            .map(|&(units, bias, act)| {
                let l = DenseLayer::glorot(fan_in, units, bias, act, rng);
                fan_in = units;
                l
            })
            .collect();
        Mlp { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Output of every layer; the last entry holds the logits, not the
    /// softmax.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.pre_activation(&trace[i]);
            if i != last || layer.activation != Activation::Softmax {
                layer.activation.apply(&mut z);
            }
            trace.push(z);
        }
        trace
    }

    /// Class confidences.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.forward_trace(x).pop().unwrap_or_default();
        if self.layers.last().is_some_and(|l| l.activation == Activation::Softmax) {
            softmax_in_place(&mut out);
        }
        out
    }

    /// Mean categorical cross-entropy over the batch.
    pub fn loss(&self, xs: &[&[f64]], ys: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| cross_entropy_from_logits(self.forward_trace(x).last().unwrap(), y))
            .sum();
        total / xs.len() as f64
    }

    /// Mean cross-entropy and its gradient by backpropagation.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, Gradients) {
        let mut grad = Gradients::zeros_like(self);
        let mut total = 0.0;
        let scale = 1.0 / xs.len() as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let trace = self.forward_trace(x);
            let logits = trace.last().unwrap();
            total += cross_entropy_from_logits(logits, y);
            let mut delta = logits.clone();
            softmax_in_place(&mut delta);
            delta[y] -= 1.0;
            for (i, layer) in self.layers.iter().enumerate().rev() {
                let input = &trace[i];
                let gw = &mut grad.weights[i];
                for o in 0..layer.outputs {
                    let d = delta[o] * scale;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                if let Some(gb) = grad.bias[i].as_mut() {
                    for (g, d) in gb.iter_mut().zip(&delta) {
                        *g += d * scale;
                    }
                }
                if i == 0 {
                    break;
                }
                let below = &self.layers[i - 1];
                delta = (0..layer.inputs)
                    .map(|j| {
                        let back: f64 = (0..layer.outputs)
                            .map(|o| layer.weights[o * layer.inputs + j] * delta[o])
                            .sum();
                        back * below.activation.derivative(input[j])
                    })
                    .collect();
            }
        }
        (total * scale, grad)
    }

    /// `v = momentum * v - lr * g; w += v`.
    pub fn momentum_step(&mut self, grad: &Gradients, velocity: &mut Gradients, lr: f64, momentum: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for ((w, v), g) in layer.weights.iter_mut().zip(&mut velocity.weights[i]).zip(&grad.weights[i]) {
                *v = momentum * *v - lr * g;
                *w += *v;
            }
            if let (Some(b), Some(vb), Some(gb)) = (layer.bias.as_mut(), velocity.bias[i].as_mut(), grad.bias[i].as_ref()) {
                for ((w, v), g) in b.iter_mut().zip(vb).zip(gb) {
                    *v = momentum * *v - lr * g;
                    *w += *v;
                }
            }
        }
    }

    /// All parameters in [`Gradients::flatten`] order.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().expect("parameter count");
            }
            if let Some(b) = l.bias.as_mut() {
                for w in b.iter_mut() {
                    *w = it.next().expect("parameter count");
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixed(rng: &mut ChaCha8Rng) -> Mlp {
        Mlp::new(
            4,
            &[
                (5, true, Activation::Linear),
                (6, false, Activation::Relu),
                (5, true, Activation::Sigmoid),
                (3, true, Activation::Softmax),
            ],
            rng,
        )
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let xs = (0..n).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys = (0..n).map(|_| rng.random_range(0..3)).collect();
        (xs, ys)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut net = mixed(&mut rng);
            for l in &mut net.layers {
                if let Some(b) = l.bias.as_mut() {
                    b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
                }
            }
            let (xs, ys) = batch(&mut rng, 8);
            let xr: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            let analytic = net.loss_and_gradient(&xr, &ys).1.flatten();
            let base = net.parameters();
            let h = 1e-5;
            let numeric: Vec<f64> = (0..base.len())
                .map(|i| {
                    let mut p = base.clone();
                    p[i] += h;
                    net.set_parameters(&p);
                    let up = net.loss(&xr, &ys);
                    p[i] -= 2.0 * h;
                    net.set_parameters(&p);
                    let down = net.loss(&xr, &ys);
                    (up - down) / (2.0 * h)
                })
                .collect();
            net.set_parameters(&base);
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
                + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-4, "relative error {}", diff / norm);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = mixed(&mut rng);
        let (xs, ys) = batch(&mut rng, 100);
        for (x, &y) in xs.iter().zip(&ys) {
            let p = net.predict_proba(x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(net.loss(&[x], &[y]) >= 0.0);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = mixed(&mut rng);
        let before = net.clone();
        let (xs, ys) = batch(&mut rng, 8);
        let xr: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let (_, g) = net.loss_and_gradient(&xr, &ys);
        let mut v = Gradients::zeros_like(&net);
        net.momentum_step(&g, &mut v, 0.0, 0.9);
        let bits = |m: &Mlp| m.parameters().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net), bits(&before));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = DenseLayer::glorot(10, 20, true, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() <= limit));
        assert_eq!(l.bias.unwrap(), vec![0.0; 20]);
    }

    #[test]
    fn stable_for_large_logits() {
        let z = [1000.0, 0.0];
        assert_eq!(cross_entropy_from_logits(&z, 0), 0.0);
        assert_eq!(cross_entropy_from_logits(&z, 1), 1000.0);
    }
}
