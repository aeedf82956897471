//! Convergence-analysis quantities: the per-frame aggregation error bound,
//! its beamforming-dependent part `H(w, p)`, the contraction factors `G_n`,
//! the constant terms `C_n`, and the optimality-gap bound after `S` frames.
//!
//! Everything here is diagnostic. The beamforming solver already minimizes
//! the per-frame share of `H`; these functions only evaluate the bound.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::beamform::{p2_sum, BeamformerState};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::learning::{sample_loss_grad, Dataset, Model};
use crate::scheduler::Schedule;

/// Constants of the smoothness / bounded-model / bounded-divergence
/// assumptions, plus the learning and noise parameters the bound uses.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    /// Smoothness `L`. Not used by the bound itself; kept for auditing `eta`.
    pub smoothness: f64,
    /// Strong convexity `lambda`.
    pub strong_convexity: f64,
    /// `r` with `||theta~^{k,J}||^2 <= r`.
    pub model_norm_bound: f64,
    /// Gradient-divergence bound `phi`.
    pub phi: f64,
    /// Mini-batch variance bound `delta`.
    pub delta: f64,
    /// Convex weights `c_k` of the divergence assumption (default `1/K`).
    pub device_weights: Vec<f64>,
    /// Learning rate per frame; a single entry applies to every frame.
    pub eta: Vec<f64>,
    pub local_iters: usize,
    pub models: usize,
    pub devices: usize,
    /// Initial gaps `Gamma_m = E||theta_{m,0} - theta*_m||^2`.
    pub gamma: Vec<f64>,
    pub sigma2_d_tilde: f64,
    pub sigma2_u_tilde: f64,
}

impl BoundConstants {
    pub fn eta_at(&self, frame: usize) -> f64 {
        if self.eta.len() == 1 {
            self.eta[0]
        } else {
            self.eta[frame]
        }
    }

    /// Non-negativity, `c_k` in `[0, 1]`, and `eta_n < 1 / lambda` for the
    /// first `frames` frames.
    pub fn validate(&self, frames: usize) -> Result<()> {
        let scalars = [
            ("L", self.smoothness),
            ("lambda", self.strong_convexity),
            ("r", self.model_norm_bound),
            ("phi", self.phi),
            ("delta", self.delta),
            ("sigma_d~^2", self.sigma2_d_tilde),
            ("sigma_u~^2", self.sigma2_u_tilde),
        ];
        if let Some((name, v)) = scalars.iter().find(|(_, v)| !(*v >= 0.0)) {
            return Err(Error::Domain(format!("bound constant {name} must be >= 0, got {v}")));
        }
        if self.device_weights.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Domain("device weights c_k must lie in [0, 1]".into()));
        }
        if self.gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Domain("initial gaps must be >= 0".into()));
        }
        if self.eta.is_empty() || (self.eta.len() != 1 && self.eta.len() < frames) {
            return Err(Error::Domain(format!(
                "need one learning rate or one per frame ({frames}), got {}",
                self.eta.len()
            )));
        }
        for n in 0..frames {
            let eta = self.eta_at(n);
            if !(eta > 0.0) || eta * self.strong_convexity >= 1.0 {
                return Err(Error::Hypothesis(format!(
                    "frame {n}: need 0 < eta < 1/lambda, got eta = {eta}, lambda = {}",
                    self.strong_convexity
                )));
            }
        }
        Ok(())
    }

    /// `G_n = 4 (1 - eta_n lambda)^{2JM}`.
    pub fn g_factor(&self, frame: usize) -> f64 {
        let base = 1.0 - self.eta_at(frame) * self.strong_convexity;
        4.0 * base.powi((2 * self.local_iters * self.models) as i32)
    }

    /// `C_n = 4 eta_n^2 J^2 (M^2 phi + K^2 delta) + 8 K sigma_d~^2`.
    pub fn c_term(&self, frame: usize) -> f64 {
        let eta = self.eta_at(frame);
        let (j, m, k) = (self.local_iters as f64, self.models as f64, self.devices as f64);
        4.0 * eta * eta * j * j * (m * m * self.phi + k * k * self.delta) + 8.0 * k * self.sigma2_d_tilde
    }

    /// `Lambda = sum_{n <= S-2} C_n prod_{s > n} G_s + C_{S-1}`.
    pub fn lambda_term(&self, frames: usize) -> f64 {
        discounted_sum(frames, |n| self.c_term(n), |s| self.g_factor(s))
    }
}

/// `sum_{n <= S-2} x_n prod_{s=n+1}^{S-1} g_s + x_{S-1}`, evaluated backwards.
fn discounted_sum(frames: usize, x: impl Fn(usize) -> f64, g: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut tail = 1.0;
    for n in (0..frames).rev() {
        acc += x(n) * tail;
        tail *= g(n);
    }
    acc
}

fn interference_ratio_sum(
    state: &BeamformerState,
    channels: &ChannelSet,
    schedule: &Schedule,
    consts: &BoundConstants,
) -> Result<f64> {
    p2_sum(state, &channels.h, schedule, consts.sigma2_u_tilde)
}

/// Bound on the accumulated per-frame aggregation error:
/// `r M K sum_i (I_i + sigma_u~^2) / (sum_k sqrt(p_k) |h_k^H w_i|)^2 + 2 K sigma_d~^2`.
pub fn error_bound(
    state: &BeamformerState,
    channels: &ChannelSet,
    schedule: &Schedule,
    consts: &BoundConstants,
) -> Result<f64> {
    let rmk = consts.model_norm_bound * consts.models as f64 * consts.devices as f64;
    Ok(rmk * interference_ratio_sum(state, channels, schedule, consts)?
        + 2.0 * consts.devices as f64 * consts.sigma2_d_tilde)
}

/// `H(w, p) = 4 r M K sum_i (I_i + sigma_u~^2) / (sum_k sqrt(p_k) |h_k^H w_i|)^2`.
pub fn h_term(
    state: &BeamformerState,
    channels: &ChannelSet,
    schedule: &Schedule,
    consts: &BoundConstants,
) -> Result<f64> {
    let rmk = consts.model_norm_bound * consts.models as f64 * consts.devices as f64;
    Ok(4.0 * rmk * interference_ratio_sum(state, channels, schedule, consts)?)
}

/// Optimality-gap bound for model `m` (0-based) after `frames` frames:
/// `Gamma_m prod_n G_n + Lambda + sum_{n <= S-2} H_n prod_{s > n} G_s + H_{S-1}`.
pub fn gap_bound(h_values: &[f64], consts: &BoundConstants, frames: usize, m: usize) -> Result<f64> {
    if frames == 0 || h_values.len() < frames {
        return Err(Error::Domain(format!(
            "need S >= 1 and one H value per frame (S = {frames}, got {})",
            h_values.len()
        )));
    }
    consts.validate(frames)?;
    let gamma = *consts
        .gamma
        .get(m)
        .ok_or_else(|| Error::Domain(format!("no initial gap for model {m}")))?;
    let mut contraction = 1.0;
    for n in 0..frames {
        let g = consts.g_factor(n);
        debug_assert!(g > 0.0);
        contraction *= g;
    }
    Ok(gamma * contraction
        + consts.lambda_term(frames)
        + discounted_sum(frames, |n| h_values[n], |s| consts.g_factor(s)))
}

/// `(L, lambda)` for L2-regularized multinomial logistic regression:
/// `lambda` is the regularization weight and `L = lambda + lambda_max / 2`
/// with `lambda_max` the top eigenvalue of the bias-augmented feature
/// second-moment matrix (the softmax Hessian has spectral norm at most 1/2).
pub fn logistic_constants(data: &Dataset, l2: f64) -> (f64, f64) {
    (l2 + 0.5 * data.gram_max_eigenvalue(), l2)
}

/// Minimizer of the full-data loss by plain gradient descent.
pub fn reference_optimum(model: &Model, start: &[f64], data: &Dataset, eta: f64, iterations: usize) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut theta = start.to_vec();
    for _ in 0..iterations {
        let (_, g) = sample_loss_grad(model, &theta, data, &all)?;
        theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= eta * gi);
    }
    Ok(theta)
}

/// Sample estimates of `(phi, delta)` at `theta`: the largest squared gap
/// between a device's full local gradient and the `c`-weighted global one,
/// and the largest mean squared deviation of a mini-batch gradient from its
/// device's full gradient over `draws` random batches.
pub fn estimate_divergence<R: Rng + ?Sized>(
    model: &Model,
    theta: &[f64],
    data: &Dataset,
    shards: &[Vec<usize>],
    weights: &[f64],
    batch_size: usize,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let local: Vec<Vec<f64>> = shards
        .iter()
        .map(|s| sample_loss_grad(model, theta, data, s).map(|(_, g)| g))
        .collect::<Result<_>>()?;
    let mut mix = vec![0.0; theta.len()];
    for (g, &c) in local.iter().zip(weights) {
        mix.iter_mut().zip(g).for_each(|(m, x)| *m += c * x);
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let (_, global) = sample_loss_grad(model, theta, data, &all)?;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut phi = sq(&global, &mix);
    for g in &local {
        phi = phi.max(sq(&global, g));
    }
    let mut delta: f64 = 0.0;
    for (shard, g) in shards.iter().zip(&local) {
        let mut acc = 0.0;
        let mut order = shard.clone();
        for _ in 0..draws {
            order.shuffle(rng);
            let b = batch_size.min(order.len());
            let (_, gb) = sample_loss_grad(model, theta, data, &order[..b])?;
            acc += sq(&gb, g);
        }
        delta = delta.max(acc / draws.max(1) as f64);
    }
    Ok((phi, delta))
}
