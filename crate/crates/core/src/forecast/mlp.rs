//! Feedforward network with softplus hidden units and a linear output layer,
//! trained on the pinball loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pinball;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Layer<T: Real = f64> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Mlp<T: Real = f64> {
    pub layers: Vec<Layer<T>>,
}

fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng>(inputs: usize, hidden: &[usize], outputs: usize, rng: &mut R) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| T::lit(rng.random_range(-limit..limit))).collect(),
                    bias: vec![T::zero(); w[1]],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.param_count(), "parameter vector length");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    /// Applies `f(param, gradient)` to every parameter in [`Mlp::params`]
    /// order.
    pub(crate) fn update(&mut self, grad: &[T], mut f: impl FnMut(usize, &mut T, T)) {
        let mut at = 0;
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                f(at, p, grad[at]);
                at += 1;
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                *zo = *zo + dot(row, &a);
            }
            a = if k == last { z } else { z.into_iter().map(softplus).collect() };
        }
        a
    }

    /// Mean pinball loss over every output of a batch and its gradient with
    /// respect to [`Mlp::params`].
    ///
    /// `inputs` holds `batch` rows of `input_size()` values; `targets` holds
    /// `batch` rows of `output_size() / quantiles.len()` values. Output `j`
    /// predicts target `j / |Q|` at quantile `j % |Q|`.
    pub fn loss_and_gradient(&self, inputs: &[T], targets: &[T], quantiles: &[T]) -> (T, Vec<T>) {
        let n_in = self.input_size();
        let n_out = self.output_size();
        let nq = quantiles.len();
        let horizon = n_out / nq;
        let batch = inputs.len() / n_in;
        assert_eq!(targets.len(), batch * horizon, "target batch shape");
        let norm = T::one() / T::from_usize_lossy(batch * horizon);

        let mut grad = vec![T::zero(); self.param_count()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |at, l| {
                let start = *at;
                *at += l.weights.len() + l.bias.len();
                Some(start)
            })
            .collect();
        let mut loss = T::zero();
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len() + 1);
        for b in 0..batch {
            acts.clear();
            acts.push(inputs[b * n_in..(b + 1) * n_in].to_vec());
            let mut pre: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
            for (k, l) in self.layers.iter().enumerate() {
                let prev = &acts[k];
                let z: Vec<T> = (0..l.outputs)
                    .map(|o| l.bias[o] + dot(&l.weights[o * l.inputs..(o + 1) * l.inputs], prev))
                    .collect();
                let a = if k == last { z.clone() } else { z.iter().map(|&v| softplus(v)).collect() };
                pre.push(z);
                acts.push(a);
            }

            let y = &targets[b * horizon..(b + 1) * horizon];
            let out = &acts[last + 1];
            let mut delta: Vec<T> = (0..n_out)
                .map(|j| {
                    let q = quantiles[j % nq];
                    let r = y[j / nq] - out[j];
                    loss = loss + pinball(r, q);
                    let d = if r > T::zero() { -q } else { T::one() - q };
                    d * norm
                })
                .collect();

            for k in (0..self.layers.len()).rev() {
                let l = &self.layers[k];
                let prev = &acts[k];
                let base = offsets[k];
                let bias_base = base + l.weights.len();
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let g = &mut grad[base + o * l.inputs..base + (o + 1) * l.inputs];
                    for (gi, &pi) in g.iter_mut().zip(prev) {
                        *gi = *gi + d * pi;
                    }
                    grad[bias_base + o] = grad[bias_base + o] + d;
                }
                if k > 0 {
                    let mut next = vec![T::zero(); l.inputs];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == T::zero() {
                            continue;
                        }
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (ni, &w) in next.iter_mut().zip(row) {
                            *ni = *ni + w * d;
                        }
                    }
                    for (ni, &z) in next.iter_mut().zip(&pre[k - 1]) {
                        *ni = *ni * sigmoid(z);
                    }
                    delta = next;
                }
            }
        }
        (loss * norm, grad)
    }

    /// Mean pinball loss without gradients.
    pub fn loss(&self, inputs: &[T], targets: &[T], quantiles: &[T]) -> T {
        let n_in = self.input_size();
        let nq = quantiles.len();
        let horizon = self.output_size() / nq;
        let batch = inputs.len() / n_in;
        let mut total = T::zero();
        for b in 0..batch {
            let out = self.forward(&inputs[b * n_in..(b + 1) * n_in]);
            for (j, &o) in out.iter().enumerate() {
                total = total + pinball(targets[b * horizon + j / nq] - o, quantiles[j % nq]);
            }
        }
        total / T::from_usize_lossy((batch * horizon).max(1))
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Mlp<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(5, &[7, 6], 3 * 2, &mut rng);
        let x: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..4 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        (net, x, y, vec![0.25, 0.75])
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (mut net, x, y, q) = setup();
        let (loss, grad) = net.loss_and_gradient(&x, &y, &q);
        assert!((loss - net.loss(&x, &y, &q)).abs() < 1e-14);
        let base = net.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            net.set_params(&p);
            let up = net.loss(&x, &y, &q);
            p[i] -= 2.0 * h;
            net.set_params(&p);
            let down = net.loss(&x, &y, &q);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!((fd - grad[i]).abs() / scale < 1e-4, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn params_round_trip() {
        let (mut net, ..) = setup();
        let p: Vec<f64> = (0..net.param_count()).map(|i| i as f64 * 0.01).collect();
        net.set_params(&p);
        assert_eq!(net.params(), p);
    }

    #[test]
    fn single_precision_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Mlp<f32> = Mlp::new(3, &[4], 2, &mut rng);
        assert_eq!(net.forward(&[0.1, 0.2, 0.3]).len(), 2);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(100.0f64), 100.0);
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(-100.0f64) > 0.0);
    }
}
