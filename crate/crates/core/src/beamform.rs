//! Joint transmit-power / receive-beamforming design for one frame.
//!
//! The per-frame problem minimizes the sum over groups of inverse SINRs
//!
//! ```text
//!   sum_i ( sum_{j != i} sum_{q in K_j} p_q |f_q^H w_i|^2 + 1 ) / ( sum_{k in K_i} p_k |f_k^H w_i|^2 )
//! ```
//!
//! over unit-norm receive beamformers `w_i` and powers `0 <= p_k <= cap_k`,
//! where `f_k = h_k / sigma_u~` are noise-normalized channels. Block
//! coordinate descent alternates exact minimization over each `w_i` (a
//! generalized Hermitian eigenproblem) and each group's power vector (a
//! convex problem with a closed-form KKT solution).

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, inner, max_generalized_rayleigh, CVector, HermitianMatrix, C64};
use crate::scheduler::Schedule;

/// Receive beamformers (one per group) and device transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerState {
    pub w: Vec<CVector>,
    pub p: Vec<f64>,
}

impl BeamformerState {
    /// Check unit-norm beamformers, power caps, and strictly positive
    /// received signal power in every group.
    pub fn validate(&self, nch: &NormalizedChannels, schedule: &Schedule, caps: &[f64]) -> Result<()> {
        if self.w.len() != schedule.num_groups() || self.p.len() != schedule.num_devices() {
            return Err(Error::Domain("state dimensions do not match the schedule".into()));
        }
        for (i, w) in self.w.iter().enumerate() {
            let n2 = linalg::norm_sqr(w);
            if (n2 - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("beamformer {i} has squared norm {n2}")));
            }
        }
        for (k, (&p, &cap)) in self.p.iter().zip(caps).enumerate() {
            if !(p >= 0.0 && p <= cap * (1.0 + 1e-12)) {
                return Err(Error::Domain(format!("power of device {k} = {p} outside [0, {cap}]")));
            }
        }
        for (i, g) in schedule.groups.iter().enumerate() {
            if signal_p3(self, nch, g, i) <= 0.0 {
                return Err(Error::degenerate("beamformer", format!("group {i} receives no signal power")));
            }
        }
        Ok(())
    }

    /// Phase-aligning transmit weights `a_k = sqrt(p_k) h_k^H w_i / |h_k^H w_i|`
    /// with `w_i` the beamformer of the device's own group.
    pub fn transmit_weights(&self, channels: &ChannelSet, schedule: &Schedule) -> Vec<C64> {
        let group_of = schedule.group_of();
        channels
            .h
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let proj = inner(h, &self.w[group_of[k]]);
                let mag = proj.norm();
                if mag > 0.0 {
                    proj / mag * self.p[k].sqrt()
                } else {
                    C64::new(self.p[k].sqrt(), 0.0)
                }
            })
            .collect()
    }
}

/// Channels scaled by the effective uplink noise standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedChannels {
    pub f: Vec<CVector>,
    /// `sigma_u~^2 = sigma_u^2 * D_max / 2`.
    pub sigma2_u_tilde: f64,
}

impl NormalizedChannels {
    pub fn new(channels: &ChannelSet, d_max: usize) -> Result<Self> {
        let sigma2_u_tilde = channels.sigma2_ul * d_max as f64 / 2.0;
        if !(sigma2_u_tilde > 0.0) {
            return Err(Error::Domain("scaled uplink noise variance must be positive".into()));
        }
        let s = 1.0 / sigma2_u_tilde.sqrt();
        let f = channels
            .h
            .iter()
            .map(|h| h.iter().map(|z| z * s).collect())
            .collect();
        Ok(Self { f, sigma2_u_tilde })
    }

    pub fn antennas(&self) -> usize {
        self.f[0].len()
    }

    pub fn devices(&self) -> usize {
        self.f.len()
    }

    /// `g = |f_q^H w|^2`.
    #[inline]
    pub fn gain(&self, w: &[C64], q: usize) -> f64 {
        inner(&self.f[q], w).norm_sqr()
    }
}

fn signal_p3(state: &BeamformerState, nch: &NormalizedChannels, group: &[usize], i: usize) -> f64 {
    group.iter().map(|&k| state.p[k] * nch.gain(&state.w[i], k)).sum()
}

fn interference_p3(state: &BeamformerState, nch: &NormalizedChannels, schedule: &Schedule, i: usize) -> f64 {
    schedule
        .groups
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .flat_map(|(_, g)| g.iter())
        .map(|&q| state.p[q] * nch.gain(&state.w[i], q))
        .sum()
}

/// Sum of inverse SINRs (the BCD objective).
pub fn objective_p3(state: &BeamformerState, nch: &NormalizedChannels, schedule: &Schedule) -> Result<f64> {
    let mut total = 0.0;
    for (i, g) in schedule.groups.iter().enumerate() {
        let den = signal_p3(state, nch, g, i);
        if !(den > 0.0) {
            return Err(Error::degenerate("beamformer", format!("group {i} has zero signal power")));
        }
        total += (interference_p3(state, nch, schedule, i) + 1.0) / den;
    }
    Ok(total)
}

/// The frame's share of the optimality-gap bound, written on the raw
/// channels: `sum_i (I_i + sigma_u~^2) / (sum_k sqrt(p_k) |h_k^H w_i|)^2`.
pub fn objective_p2(
    state: &BeamformerState,
    channels: &ChannelSet,
    schedule: &Schedule,
    d_max: usize,
) -> Result<f64> {
    let sigma2_u_tilde = channels.sigma2_ul * d_max as f64 / 2.0;
    p2_sum(state, &channels.h, schedule, sigma2_u_tilde)
}

/// [`objective_p2`] on normalized channels; identical in value.
pub fn objective_p2_normalized(
    state: &BeamformerState,
    nch: &NormalizedChannels,
    schedule: &Schedule,
) -> Result<f64> {
    p2_sum(state, &nch.f, schedule, 1.0)
}

/// `sum_i (sum_{j != i} sum_q p_q |h_q^H w_i|^2 + noise) / (sum_{k in K_i} sqrt(p_k) |h_k^H w_i|)^2`.
pub(crate) fn p2_sum(state: &BeamformerState, h: &[CVector], schedule: &Schedule, noise: f64) -> Result<f64> {
    let group_of = schedule.group_of();
    let mut total = 0.0;
    for (i, w) in state.w.iter().enumerate() {
        let mut amp = 0.0;
        let mut interference = 0.0;
        for (q, hq) in h.iter().enumerate() {
            let g = inner(hq, w).norm_sqr();
            if group_of[q] == i {
                amp += state.p[q].sqrt() * g.sqrt();
            } else {
                interference += state.p[q] * g;
            }
        }
        if !(amp > 0.0) {
            return Err(Error::degenerate("beamformer", format!("group {i} has zero signal amplitude")));
        }
        total += (interference + noise) / (amp * amp);
    }
    Ok(total)
}

/// Interference-plus-noise matrix `I + sum_{j != i} sum_{q in K_j} p_q f_q f_q^H`
/// and signal matrix `sum_{k in K_i} p_k f_k f_k^H` for group `i`.
pub fn group_pencil(
    i: usize,
    p: &[f64],
    nch: &NormalizedChannels,
    schedule: &Schedule,
) -> (HermitianMatrix, HermitianMatrix) {
    let n = nch.antennas();
    let mut a = HermitianMatrix::identity(n);
    let mut b = HermitianMatrix::zeros(n);
    for (j, g) in schedule.groups.iter().enumerate() {
        for &q in g {
            if j == i {
                b.add_outer(p[q], &nch.f[q]);
            } else {
                a.add_outer(p[q], &nch.f[q]);
            }
        }
    }
    (a, b)
}

/// Receive beamformer of group `i` minimizing its inverse SINR for fixed
/// powers: the generalized eigenvector of the pencil `(A, B)` with smallest
/// eigenvalue `w^H A w / w^H B w`, found as the largest eigenvalue of the
/// reciprocal quotient since `A` is positive definite.
pub fn update_w(i: usize, p: &[f64], nch: &NormalizedChannels, schedule: &Schedule) -> Result<CVector> {
    let (a, b) = group_pencil(i, p, nch, schedule);
    if !(b.frobenius() > 0.0) {
        return Err(Error::degenerate("group", format!("group {i} has no transmitting device")));
    }
    max_generalized_rayleigh(&a, &b).map(|(w, _)| w)
}

/// Closed-form minimizer of the sum of inverse SINRs over the powers of
/// group `i`, all other groups' powers and all beamformers fixed. Returns
/// the powers of the devices of group `i` in the order of `schedule.groups[i]`.
///
/// With `A = sum_{j != i} g_ij^T p_j + 1`, `b_k = sum_{j != i} g_jk / (g_jj^T p_j)`
/// and `g_k = g_ik`, the objective in `p_i` is `A / (g^T p_i) + b^T p_i`.
/// Starting from full power, the device with the smallest
/// `a_k = sqrt(A g_k / b_k)` is backed off until the received signal level
/// `g^T p_i` reaches `a_k`. Should that device hit zero first, the next
/// smallest `a_k` continues from there, which keeps the result exact.
pub fn update_p_group(
    i: usize,
    state: &BeamformerState,
    nch: &NormalizedChannels,
    schedule: &Schedule,
    caps: &[f64],
) -> Result<Vec<f64>> {
    let members = &schedule.groups[i];
    let others: Vec<usize> = (0..schedule.num_groups()).filter(|&j| j != i).collect();

    let mut own_signal = Vec::with_capacity(others.len());
    for &j in &others {
        let s = signal_p3(state, nch, &schedule.groups[j], j);
        if !(s > 0.0) {
            return Err(Error::degenerate(
                "state",
                format!("group {j} has zero signal power while updating group {i}"),
            ));
        }
        own_signal.push(s);
    }

    let interference = interference_p3(state, nch, schedule, i) + 1.0;
    let g: Vec<f64> = members.iter().map(|&k| nch.gain(&state.w[i], k)).collect();
    let b: Vec<f64> = members
        .iter()
        .map(|&k| {
            others
                .iter()
                .zip(&own_signal)
                .map(|(&j, s)| nch.gain(&state.w[j], k) / s)
                .sum()
        })
        .collect();
    let cap: Vec<f64> = members.iter().map(|&k| caps[k]).collect();

    let mut p = cap.clone();
    let mut level: f64 = g.iter().zip(&cap).map(|(g, c)| g * c).sum();
    if !(level > 0.0) {
        return Err(Error::degenerate("group", format!("group {i} cannot reach the receiver")));
    }

    // Threshold a_k per device; a device with no signal but some leakage
    // only hurts and is switched off.
    let mut thresholds: Vec<(usize, f64)> = Vec::with_capacity(members.len());
    for idx in 0..members.len() {
        if b[idx] > 0.0 {
            if g[idx] > 0.0 {
                thresholds.push((idx, (interference * g[idx] / b[idx]).sqrt()));
            } else {
                p[idx] = 0.0;
            }
        }
    }
    // Stable sort: ties go to the lowest device position.
    thresholds.sort_by(|x, y| x.1.total_cmp(&y.1));

    for (idx, a_k) in thresholds {
        let excess = level - a_k;
        if excess <= 0.0 {
            break;
        }
        let full = g[idx] * cap[idx];
        if excess <= full {
            p[idx] = (cap[idx] - excess / g[idx]).clamp(0.0, cap[idx]);
            break;
        }
        p[idx] = 0.0;
        level -= full;
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdOptions {
    /// Stop when the relative objective decrease of an outer iteration falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOutcome {
    pub state: BeamformerState,
    /// Objective after initialization (entry 0) and after every outer iteration.
    pub trace: Vec<f64>,
    /// The raw-channel objective at the same points.
    pub trace_p2: Vec<f64>,
    pub converged: bool,
}

impl BcdOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace has the initial point")
    }
}

/// Full power and, per group, the dominant eigenvector of its own
/// channels' Gram matrix.
pub fn initial_state(nch: &NormalizedChannels, schedule: &Schedule, caps: &[f64]) -> BeamformerState {
    let w = schedule
        .groups
        .iter()
        .map(|g| {
            let mut s = HermitianMatrix::zeros(nch.antennas());
            for &k in g {
                s.add_outer(1.0, &nch.f[k]);
            }
            s.dominant_eigenpair().1
        })
        .collect();
    BeamformerState {
        w,
        p: caps.to_vec(),
    }
}

/// Block coordinate descent: every outer iteration updates `w_1..w_M`, then
/// the power vectors of groups `1..M`.
pub fn bcd_solve(
    nch: &NormalizedChannels,
    schedule: &Schedule,
    caps: &[f64],
    init: Option<BeamformerState>,
    options: BcdOptions,
) -> Result<BcdOutcome> {
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::Config("BCD needs tol > 0 and max_iter >= 1".into()));
    }
    if caps.len() != nch.devices() || schedule.num_devices() != nch.devices() {
        return Err(Error::Domain("caps, schedule and channels disagree on K".into()));
    }
    let mut state = init.unwrap_or_else(|| initial_state(nch, schedule, caps));
    let mut trace = vec![objective_p3(&state, nch, schedule)?];
    let mut trace_p2 = vec![objective_p2_normalized(&state, nch, schedule)?];
    let mut converged = false;
    for _ in 0..options.max_iter {
        for i in 0..schedule.num_groups() {
            state.w[i] = update_w(i, &state.p, nch, schedule)?;
        }
        for i in 0..schedule.num_groups() {
            let p_i = update_p_group(i, &state, nch, schedule, caps)?;
            for (&k, p) in schedule.groups[i].iter().zip(p_i) {
                state.p[k] = p;
            }
        }
        let prev = *trace.last().expect("non-empty");
        let cur = objective_p3(&state, nch, schedule)?;
        trace.push(cur);
        trace_p2.push(objective_p2_normalized(&state, nch, schedule)?);
        if (prev - cur) / prev.abs() < options.tol {
            converged = true;
            break;
        }
    }
    Ok(BcdOutcome {
        state,
        trace,
        trace_p2,
        converged,
    })
}

/// Single-group baseline: full power on every device and the receive
/// beamformer maximizing the aggregated SNR `sum_k p_k |f_k^H w|^2`.
pub fn snr_max_beamformer(nch: &NormalizedChannels, caps: &[f64]) -> BeamformerState {
    let mut s = HermitianMatrix::zeros(nch.antennas());
    for (f, &c) in nch.f.iter().zip(caps) {
        s.add_outer(c, f);
    }
    BeamformerState {
        w: vec![s.dominant_eigenpair().1],
        p: caps.to_vec(),
    }
}

/// `sum_k p_k |f_k^H w|^2` for a single-group state.
pub fn aggregated_snr(state: &BeamformerState, nch: &NormalizedChannels) -> f64 {
    state
        .p
        .iter()
        .enumerate()
        .map(|(k, p)| p * nch.gain(&state.w[0], k))
        .sum()
}
