//! A small fully-connected network with analytic backprop, trained by
//! full-batch gradient descent. Deliberately self-contained so the gradient
//! check stays honest.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn forward(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Training objective. The network output is always a raw score; for binary
/// cross-entropy it is interpreted as a logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    SquaredError,
    /// Numerically stable BCE on logits; targets in {0, 1}.
    LogisticCrossEntropy,
}

impl LossKind {
    /// Per-sample loss and d(loss)/d(output).
    #[inline]
    fn value_and_grad(self, output: f64, target: f64) -> (f64, f64) {
        match self {
            LossKind::SquaredError => {
                let e = output - target;
                (e * e, 2.0 * e)
            }
            LossKind::LogisticCrossEntropy => {
                let z = output;
                let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
                let sigma = 1.0 / (1.0 + (-z).exp());
                (loss, sigma - target)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major (out_dim x in_dim).
    w: Vec<f64>,
    b: Vec<f64>,
    act: Activation,
}

/// Feed-forward network: tanh hidden layers, identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Xavier-uniform initialization from a fixed seed; `sizes` chains input
    /// through hidden dims to the output dim.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    w: (0..fan_in * fan_out).map(|_| rng.gen_range(-r..r)).collect(),
                    b: vec![0.0; fan_out],
                    act: if i == last { Activation::Identity } else { Activation::Tanh },
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].in_dim];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Forward pass for one sample.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_dim());
        let mut cur = input.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.out_dim];
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                let z: f64 = row.iter().zip(&cur).map(|(w, x)| w * x).sum::<f64>() + layer.b[o];
                *out = layer.act.forward(z);
            }
            cur = next;
        }
        cur
    }

    /// Mean loss and mean parameter gradients over a full batch.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64], loss: LossKind) -> (f64, Gradients) {
        assert_eq!(xs.len(), ys.len());
        assert_eq!(self.output_dim(), 1, "scalar-output training only");
        let mut grads = Gradients::zeros(self);
        let mut total_loss = 0.0;
        let n = xs.len() as f64;

        // per-sample activation stack, reused
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);

        for (x, &y) in xs.iter().zip(ys) {
            acts.clear();
            acts.push(x.clone());
            for layer in &self.layers {
                let prev = acts.last().unwrap();
                let mut out = vec![0.0; layer.out_dim];
                for (o, slot) in out.iter_mut().enumerate() {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let z: f64 =
                        row.iter().zip(prev).map(|(w, v)| w * v).sum::<f64>() + layer.b[o];
                    *slot = layer.act.forward(z);
                }
                acts.push(out);
            }

            let output = acts.last().unwrap()[0];
            let (l, dl) = loss.value_and_grad(output, y);
            total_loss += l;

            // backward
            let mut delta = vec![dl];
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let layer_out = &acts[li + 1];
                let layer_in = &acts[li];
                for (o, d) in delta.iter_mut().enumerate() {
                    *d *= layer.act.grad_from_output(layer_out[o]);
                }
                let gw = &mut grads.w[li];
                let gb = &mut grads.b[li];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (slot, &v) in row.iter_mut().zip(layer_in) {
                        *slot += d * v;
                    }
                }
                if li > 0 {
                    let mut prev_delta = vec![0.0; layer.in_dim];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (pd, &w) in prev_delta.iter_mut().zip(row) {
                            *pd += d * w;
                        }
                    }
                    delta = prev_delta;
                }
            }
        }

        grads.scale(1.0 / n);
        (total_loss / n, grads)
    }

    pub fn gd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.w.iter().zip(&grads.b)) {
            for (w, g) in layer.w.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.b.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter indexing (weights then biases, per layer) used by the
    /// finite-difference check.
    pub fn get_param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for layer in &self.layers {
            if i < layer.w.len() {
                return layer.w[i];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut i = idx;
        for layer in &mut self.layers {
            if i < layer.w.len() {
                layer.w[i] = value;
                return;
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                layer.b[i] = value;
                return;
            }
            i -= layer.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    fn grad_param(grads: &Gradients, idx: usize) -> f64 {
        let mut i = idx;
        for (gw, gb) in grads.w.iter().zip(&grads.b) {
            if i < gw.len() {
                return gw[i];
            }
            i -= gw.len();
            if i < gb.len() {
                return gb[i];
            }
            i -= gb.len();
        }
        panic!("parameter index {idx} out of range");
    }
}

/// Parameter gradients shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(mlp: &Mlp) -> Self {
        Gradients {
            w: mlp.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: mlp.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            for x in v.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// Compare analytic gradients against central finite differences at
/// `n_coords` random parameter coordinates; returns the maximum relative
/// error observed.
pub fn gradient_check(
    mlp: &Mlp,
    xs: &[Vec<f64>],
    ys: &[f64],
    loss: LossKind,
    n_coords: usize,
    seed: u64,
) -> f64 {
    let (_, grads) = mlp.loss_and_grad(xs, ys, loss);
    let mut probe = mlp.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..n_coords {
        let idx = rng.gen_range(0..mlp.param_count());
        let orig = probe.get_param(idx);
        probe.set_param(idx, orig + h);
        let (lp, _) = probe.loss_and_grad(xs, ys, loss);
        probe.set_param(idx, orig - h);
        let (lm, _) = probe.loss_and_grad(xs, ys, loss);
        probe.set_param(idx, orig);
        let numeric = (lp - lm) / (2.0 * h);
        let analytic = Mlp::grad_param(&grads, idx);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Outcome of a full-batch training loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// Full-batch gradient descent with early stop once the loss plateaus
/// (no relative improvement of 1e-7 over `patience` epochs). Aborts on a
/// non-finite loss.
pub fn fit_full_batch(
    mlp: &mut Mlp,
    xs: &[Vec<f64>],
    ys: &[f64],
    loss: LossKind,
    lr: f64,
    max_epochs: usize,
    patience: usize,
) -> Result<FitStats, String> {
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut last = f64::NAN;
    let mut epochs = 0usize;
    for epoch in 0..max_epochs {
        let (l, grads) = mlp.loss_and_grad(xs, ys, loss);
        if !l.is_finite() {
            return Err(format!("non-finite training loss at epoch {epoch}"));
        }
        mlp.gd_step(&grads, lr);
        last = l;
        epochs = epoch + 1;
        if l < best * (1.0 - 1e-7) {
            best = l;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    Ok(FitStats { epochs_run: epochs, final_loss: last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        // four clusters in the XOR pattern, jittered
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            for (cx, cy, label) in [(0.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 1.0), (1.0, 0.0, 1.0)] {
                let jx: f64 = rng.gen_range(-0.15..0.15);
                let jy: f64 = rng.gen_range(-0.15..0.15);
                xs.push(vec![cx + jx, cy + jy]);
                ys.push(label);
            }
        }
        (xs, ys)
    }

    #[test]
    fn gradient_check_passes_for_both_losses() {
        let (xs, ys) = xor_data();
        let mlp = Mlp::new(&[2, 16, 16, 1], 7);
        assert!(gradient_check(&mlp, &xs, &ys, LossKind::SquaredError, 10, 3) < 1e-4);
        assert!(gradient_check(&mlp, &xs, &ys, LossKind::LogisticCrossEntropy, 10, 3) < 1e-4);
    }

    #[test]
    fn constant_labels_are_learned_exactly() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0, 0.3]).collect();
        let ys = vec![0.25; 20];
        let mut mlp = Mlp::new(&[2, 8, 1], 5);
        fit_full_batch(&mut mlp, &xs, &ys, LossKind::SquaredError, 0.1, 5000, 1000).unwrap();
        for x in &xs {
            assert!((mlp.forward(x)[0] - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn xor_clusters_separate_within_budget() {
        let (xs, ys) = xor_data();
        let mut mlp = Mlp::new(&[2, 16, 16, 1], 11);
        fit_full_batch(&mut mlp, &xs, &ys, LossKind::LogisticCrossEntropy, 0.5, 5000, 5000)
            .unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| {
                let p = 1.0 / (1.0 + (-mlp.forward(x)[0]).exp());
                (p >= 0.5) == (y >= 0.5)
            })
            .count();
        let acc = correct as f64 / xs.len() as f64;
        assert!(acc >= 0.99, "xor accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = xor_data();
        let mut a = Mlp::new(&[2, 8, 1], 9);
        let mut b = Mlp::new(&[2, 8, 1], 9);
        fit_full_batch(&mut a, &xs, &ys, LossKind::SquaredError, 0.05, 500, 500).unwrap();
        fit_full_batch(&mut b, &xs, &ys, LossKind::SquaredError, 0.05, 500, 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_is_pure() {
        let mlp = Mlp::new(&[2, 4, 1], 2);
        let x = vec![0.3, -0.8];
        assert_eq!(mlp.forward(&x), mlp.forward(&x));
    }
}
