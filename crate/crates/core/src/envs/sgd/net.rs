//! Fully connected softmax classifier with exact backpropagation, and Adam.
//!
//! Parameters live in one flat vector: for each layer the row-major
//! `out x in` weight matrix followed by the `out` biases.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_classes: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_layers);
        w.push(self.output_classes);
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Rows of features with integer class labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
}

impl LayerShape {
    fn bias_offset(&self) -> usize {
        self.offset + self.input * self.output
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: NetworkSpec,
    shapes: Vec<LayerShape>,
    pub parameters: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: NetworkSpec) -> Self {
        let mut shapes = Vec::new();
        let mut offset = 0;
        for w in spec.widths().windows(2) {
            shapes.push(LayerShape {
                input: w[0],
                output: w[1],
                offset,
            });
            offset += w[0] * w[1] + w[1];
        }
        Mlp {
            parameters: vec![0.0; offset],
            spec,
            shapes,
        }
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(spec: NetworkSpec, rng: &mut Rng) -> Self {
        let mut net = Mlp::zeros(spec);
        for shape in net.shapes.clone() {
            let bound = 1.0 / (shape.input as f64).sqrt();
            let end = shape.bias_offset() + shape.output;
            for p in &mut net.parameters[shape.offset..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Multiplies the final layer (weights and biases) by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = *self.shapes.last().expect("at least one layer");
        let end = last.bias_offset() + last.output;
        self.parameters[last.offset..end].iter_mut().for_each(|p| *p *= factor);
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<()> {
        let n = batch.len();
        if batch.features.len() != n * self.spec.input_dim {
            return Err(Error::Domain(format!(
                "batch has {} feature values for {n} rows of width {}",
                batch.features.len(),
                self.spec.input_dim
            )));
        }
        if batch.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite input feature".into()));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= self.spec.output_classes) {
            return Err(Error::Domain(format!("label {bad} outside {} classes", self.spec.output_classes)));
        }
        Ok(())
    }

    /// Pre-activations `z` and activations `a` of every layer; the last `z` are the logits.
    fn forward_all(&self, features: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.shapes.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.shapes.len() + 1);
        acts.push(features.to_vec());
        let last = self.shapes.len() - 1;
        for (l, shape) in self.shapes.iter().enumerate() {
            let input = &acts[l];
            let w = &self.parameters[shape.offset..shape.bias_offset()];
            let b = &self.parameters[shape.bias_offset()..shape.bias_offset() + shape.output];
            let mut z = vec![0.0; n * shape.output];
            for r in 0..n {
                let x = &input[r * shape.input..(r + 1) * shape.input];
                let out = &mut z[r * shape.output..(r + 1) * shape.output];
                for (o, zo) in out.iter_mut().enumerate() {
                    let row = &w[o * shape.input..(o + 1) * shape.input];
                    *zo = b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                }
            }
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.spec.activation.apply(v)).collect()
            };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
        let mut p = logits.to_vec();
        for row in p.chunks_mut(k) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        p
    }

    fn nll(logits: &[f64], labels: &[usize], k: usize) -> Vec<f64> {
        logits
            .chunks(k)
            .zip(labels)
            .map(|(row, &y)| {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - row[y]
            })
            .collect()
    }

    /// Class probabilities, `n x classes` row-major.
    pub fn probabilities(&self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let (zs, _) = self.forward_all(batch.features, batch.len());
        Ok(Self::softmax_rows(zs.last().expect("layers"), self.spec.output_classes))
    }

    pub fn losses(&self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let (zs, _) = self.forward_all(batch.features, batch.len());
        Ok(Self::nll(zs.last().expect("layers"), batch.labels, self.spec.output_classes))
    }

    pub fn mean_loss(&self, batch: &Batch<'_>) -> Result<f64> {
        let l = self.losses(batch)?;
        Ok(l.iter().sum::<f64>() / l.len() as f64)
    }

    /// Per-example NLL and the exact gradient of the mean loss (flat, parameter layout).
    pub fn forward_backward(&self, batch: &Batch<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_batch(batch)?;
        let n = batch.len();
        if n == 0 {
            return Err(Error::Domain("empty batch".into()));
        }
        let k = self.spec.output_classes;
        let (zs, acts) = self.forward_all(batch.features, n);
        let logits = zs.last().expect("layers");
        let losses = Self::nll(logits, batch.labels, k);

        // d(mean loss)/d logits = (softmax - onehot) / n
        let mut delta = Self::softmax_rows(logits, k);
        for (r, &y) in batch.labels.iter().enumerate() {
            delta[r * k + y] -= 1.0;
        }
        let inv_n = 1.0 / n as f64;
        delta.iter_mut().for_each(|d| *d *= inv_n);

        let mut grad = vec![0.0; self.parameters.len()];
        for l in (0..self.shapes.len()).rev() {
            let shape = self.shapes[l];
            let input = &acts[l];
            {
                let (gw, gb) = grad[shape.offset..shape.bias_offset() + shape.output].split_at_mut(shape.input * shape.output);
                for r in 0..n {
                    let x = &input[r * shape.input..(r + 1) * shape.input];
                    let d = &delta[r * shape.output..(r + 1) * shape.output];
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        gb[o] += dv;
                        let row = &mut gw[o * shape.input..(o + 1) * shape.input];
                        for (g, xi) in row.iter_mut().zip(x) {
                            *g += dv * xi;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.parameters[shape.offset..shape.bias_offset()];
            let z_prev = &zs[l - 1];
            let a_prev = &acts[l];
            let mut next = vec![0.0; n * shape.input];
            for r in 0..n {
                let d = &delta[r * shape.output..(r + 1) * shape.output];
                let out = &mut next[r * shape.input..(r + 1) * shape.input];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let row = &w[o * shape.input..(o + 1) * shape.input];
                    for (acc, wi) in out.iter_mut().zip(row) {
                        *acc += dv * wi;
                    }
                }
                for i in 0..shape.input {
                    let idx = r * shape.input + i;
                    out[i] *= self.spec.activation.derivative(z_prev[idx], a_prev[idx]);
                }
            }
            delta = next;
        }
        Ok((losses, grad))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl Adam {
    pub fn new(parameter_count: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; parameter_count],
            second_moment: vec![0.0; parameter_count],
            step_count: 0,
        }
    }

    pub fn update(&mut self, parameters: &mut [f64], gradients: &[f64], learning_rate: f64) -> Result<()> {
        if !(learning_rate > 0.0) {
            return Err(Error::Domain(format!("learning rate must be positive, got {learning_rate}")));
        }
        if parameters.len() != self.first_moment.len() || gradients.len() != parameters.len() {
            return Err(Error::Domain("parameter, gradient and moment shapes differ".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..parameters.len() {
            let g = gradients[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / c1;
            let v_hat = self.second_moment[i] / c2;
            parameters[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn spec(input: usize, classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: input,
            hidden_layers: vec![16, 16],
            output_classes: classes,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let net = Mlp::zeros(spec(4, 7));
        let x = vec![0.3; 8];
        let y = vec![1, 6];
        let losses = net.losses(&Batch { features: &x, labels: &y }).unwrap();
        for l in losses {
            assert!((l - 7f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_layer_blocks_hidden_gradients() {
        let mut rng = rng_from_seed(3);
        let mut net = Mlp::init(spec(5, 3), &mut rng);
        net.scale_output_layer(0.0);
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = vec![0, 1, 2, 1];
        let (_, g) = net.forward_backward(&Batch { features: &x, labels: &y }).unwrap();
        let last = net.shapes[2];
        assert!(g[..last.offset].iter().all(|&v| v == 0.0));
        assert!(g[last.bias_offset()..].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn non_finite_input_rejected() {
        let net = Mlp::zeros(spec(2, 2));
        let x = vec![1.0, f64::NAN];
        assert!(matches!(
            net.forward_backward(&Batch { features: &x, labels: &[0] }),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 1e-3];
        adam.update(&mut p, &g, 0.01).unwrap();
        for (i, (&after, &before)) in p.iter().zip(&[1.0, -2.0, 0.5]).enumerate() {
            let expected = 0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!(((before - after) - expected).abs() < 1e-12, "component {i}");
        }
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn adam_zero_gradient_fixed_point() {
        let mut adam = Adam::new(2);
        let mut p = vec![0.25, 3.0];
        for _ in 0..50 {
            adam.update(&mut p, &[0.0, 0.0], 0.1).unwrap();
        }
        assert_eq!(p, vec![0.25, 3.0]);
        assert!(adam.update(&mut p, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn adam_tiny_learning_rate_bound() {
        let mut rng = rng_from_seed(12);
        let mut adam = Adam::new(50);
        let start: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = start.clone();
        for _ in 0..100 {
            let g: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
            adam.update(&mut p, &g, 1e-10).unwrap();
        }
        let max_disp = p.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_disp <= 1e-8, "{max_disp}");
    }
}
