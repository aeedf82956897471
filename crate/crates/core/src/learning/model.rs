use rand::Rng;

use super::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Multinomial logistic regression; parameters `[W (C x b), bias (C)]`.
    Logistic,
    /// One tanh hidden layer; parameters `[W1 (H x b), b1 (H), W2 (C x H), b2 (C)]`.
    Mlp { hidden: usize },
}

/// Architecture and loss of one model. Parameters live in plain `Vec<f64>`s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub num_features: usize,
    pub num_classes: usize,
    /// Coefficient of `(l2 / 2) ||theta||^2` added to the mean loss.
    pub l2: f64,
}

impl Model {
    pub fn logistic(num_features: usize, num_classes: usize, l2: f64) -> Self {
        Self {
            kind: ModelKind::Logistic,
            num_features,
            num_classes,
            l2,
        }
    }

    pub fn mlp(num_features: usize, hidden: usize, num_classes: usize, l2: f64) -> Self {
        Self {
            kind: ModelKind::Mlp { hidden },
            num_features,
            num_classes,
            l2,
        }
    }

    pub fn dim(&self) -> usize {
        let (b, c) = (self.num_features, self.num_classes);
        match self.kind {
            ModelKind::Logistic => c * (b + 1),
            ModelKind::Mlp { hidden: h } => h * (b + 1) + c * (h + 1),
        }
    }

    /// Zeros for the logistic model; Glorot-uniform weights and zero biases
    /// for the MLP (zero would leave the hidden units symmetric).
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            ModelKind::Logistic => vec![0.0; self.dim()],
            ModelKind::Mlp { hidden: h } => {
                let (b, c) = (self.num_features, self.num_classes);
                let mut theta = Vec::with_capacity(self.dim());
                let r1 = (6.0 / (b + h) as f64).sqrt();
                theta.extend((0..h * b).map(|_| rng.random_range(-r1..r1)));
                theta.extend(std::iter::repeat_n(0.0, h));
                let r2 = (6.0 / (h + c) as f64).sqrt();
                theta.extend((0..c * h).map(|_| rng.random_range(-r2..r2)));
                theta.extend(std::iter::repeat_n(0.0, c));
                theta
            }
        }
    }

    fn check(&self, theta: &[f64], data: &Dataset) -> Result<()> {
        if theta.len() != self.dim() || data.num_features != self.num_features || data.num_classes > self.num_classes {
            return Err(Error::Domain(format!(
                "model expects D = {}, b = {}, C = {}; got D = {}, b = {}, C = {}",
                self.dim(),
                self.num_features,
                self.num_classes,
                theta.len(),
                data.num_features,
                data.num_classes
            )));
        }
        Ok(())
    }

    /// Class scores for one sample; `hidden` receives the hidden activations
    /// of an MLP.
    fn forward(&self, theta: &[f64], x: &[f64], hidden: &mut Vec<f64>, logits: &mut [f64]) {
        let (b, c) = (self.num_features, self.num_classes);
        match self.kind {
            ModelKind::Logistic => {
                let (w, bias) = theta.split_at(c * b);
                for k in 0..c {
                    logits[k] = bias[k] + dot(&w[k * b..(k + 1) * b], x);
                }
            }
            ModelKind::Mlp { hidden: h } => {
                let (w1, rest) = theta.split_at(h * b);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                hidden.clear();
                hidden.extend((0..h).map(|j| (b1[j] + dot(&w1[j * b..(j + 1) * b], x)).tanh()));
                for k in 0..c {
                    logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], hidden);
                }
            }
        }
    }

    /// Index of the largest score, lowest index on ties.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> usize {
        let mut logits = vec![0.0; self.num_classes];
        let mut hidden = Vec::new();
        self.forward(theta, x, &mut hidden, &mut logits);
        let mut best = 0;
        for k in 1..logits.len() {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        best
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax in place; returns `log sum exp` of the input.
fn softmax(z: &mut [f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

/// Mean cross-entropy over `batch` (indices into `data`) plus the L2 term,
/// and its gradient.
pub fn sample_loss_grad(model: &Model, theta: &[f64], data: &Dataset, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    model.check(theta, data)?;
    if batch.is_empty() {
        return Err(Error::Domain("empty mini-batch".into()));
    }
    let (b, c) = (model.num_features, model.num_classes);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut logits = vec![0.0; c];
    let mut hidden = Vec::new();
    for &i in batch {
        let x = data.row(i);
        let y = data.labels[i];
        model.forward(theta, x, &mut hidden, &mut logits);
        let z_y = logits[y];
        loss += softmax(&mut logits) - z_y;
        logits[y] -= 1.0;
        let delta = &logits;
        match model.kind {
            ModelKind::Logistic => {
                let (gw, gb) = grad.split_at_mut(c * b);
                for k in 0..c {
                    let d = delta[k] * scale;
                    gb[k] += d;
                    gw[k * b..(k + 1) * b].iter_mut().zip(x).for_each(|(g, xv)| *g += d * xv);
                }
            }
            ModelKind::Mlp { hidden: h } => {
                let w2 = &theta[h * (b + 1)..h * (b + 1) + c * h];
                let (gw1, rest) = grad.split_at_mut(h * b);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                let mut dh = vec![0.0; h];
                for k in 0..c {
                    let d = delta[k] * scale;
                    gb2[k] += d;
                    for j in 0..h {
                        gw2[k * h + j] += d * hidden[j];
                        dh[j] += delta[k] * w2[k * h + j];
                    }
                }
                for j in 0..h {
                    let d = dh[j] * (1.0 - hidden[j] * hidden[j]) * scale;
                    gb1[j] += d;
                    gw1[j * b..(j + 1) * b].iter_mut().zip(x).for_each(|(g, xv)| *g += d * xv);
                }
            }
        }
    }
    loss *= scale;
    if model.l2 > 0.0 {
        loss += 0.5 * model.l2 * theta.iter().map(|t| t * t).sum::<f64>();
        grad.iter_mut().zip(theta).for_each(|(g, t)| *g += model.l2 * t);
    }
    Ok((loss, grad))
}

/// Fraction of `test` predicted correctly.
pub fn test_accuracy(model: &Model, theta: &[f64], test: &Dataset) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let correct = (0..test.len())
        .filter(|&i| model.predict(theta, test.row(i)) == test.labels[i])
        .count();
    correct as f64 / test.len() as f64
}
