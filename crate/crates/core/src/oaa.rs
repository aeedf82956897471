//! The physical aggregation path: complex packing with zero padding, the
//! noisy downlink copy, and the uplink over-the-air superposition recovered
//! group by group through receive beamforming.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::beamform::BeamformerState;
use crate::channel::{complex_gaussian, ChannelSet};
use crate::error::{Error, Result};
use crate::linalg::{inner, norm, norm_sqr, CVector, C64};
use crate::scheduler::Schedule;

/// Number of complex channel uses needed for a `d`-dimensional real vector.
pub fn packed_len(d: usize) -> usize {
    d.div_ceil(2)
}

/// A real model folded into half as many complex entries: the real parts
/// hold the first half, the imaginary parts the second half.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedModel {
    pub values: CVector,
    pub source_dim: usize,
    /// Start of `values` inside the zero-padded transmission, in channel uses.
    pub placement_offset: usize,
}

impl PackedModel {
    /// Inverse of the packing, dropping any pad element.
    pub fn unpack(&self) -> Vec<f64> {
        unpack_complex(&self.values, self.source_dim)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// The zero-padded transmission of length `channel_uses`.
    pub fn padded(&self, channel_uses: usize) -> CVector {
        let mut out = vec![C64::new(0.0, 0.0); channel_uses];
        out[self.placement_offset..self.placement_offset + self.values.len()].copy_from_slice(&self.values);
        out
    }
}

/// Pack an even-length real vector: `values[l] = theta[l] + j theta[D/2 + l]`.
pub fn pack_complex(theta: &[f64], d: usize) -> Result<PackedModel> {
    if !d.is_multiple_of(2) || theta.len() != d {
        return Err(Error::Domain(format!(
            "packing needs an even dimension matching the vector (D = {d}, len = {})",
            theta.len()
        )));
    }
    let half = d / 2;
    let values = (0..half).map(|l| C64::new(theta[l], theta[half + l])).collect();
    Ok(PackedModel {
        values,
        source_dim: d,
        placement_offset: 0,
    })
}

/// Pack any real vector, appending one zero when its length is odd.
pub fn pack_model(theta: &[f64]) -> PackedModel {
    let mut padded = theta.to_vec();
    if padded.len() % 2 == 1 {
        padded.push(0.0);
    }
    let mut packed = pack_complex(&padded, padded.len()).expect("even by construction");
    packed.source_dim = theta.len();
    packed
}

/// `[Re; Im]` truncated to `dim` entries.
pub fn unpack_complex(values: &[C64], dim: usize) -> Vec<f64> {
    let mut out: Vec<f64> = values.iter().map(|z| z.re).chain(values.iter().map(|z| z.im)).collect();
    out.truncate(dim);
    out
}

/// Every receiving device gets `theta + n`, `n ~ N(0, sigma2_dl I)`, drawn
/// independently per device.
pub fn downlink_broadcast<R: Rng + ?Sized>(
    theta: &[f64],
    sigma2_dl: f64,
    devices: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if !(sigma2_dl >= 0.0) {
        return Err(Error::Domain(format!("downlink noise variance must be >= 0, got {sigma2_dl}")));
    }
    if sigma2_dl == 0.0 {
        return Ok(vec![theta.to_vec(); devices]);
    }
    let normal = Normal::new(0.0, sigma2_dl.sqrt()).expect("positive std");
    Ok((0..devices)
        .map(|_| theta.iter().map(|x| x + normal.sample(rng)).collect())
        .collect())
}

/// One offset per group for round `t`: uniform over
/// `0..=packed_len(D_max) - packed_len(D_m)` for the model the group trains.
pub fn place_models<R: Rng + ?Sized>(
    schedule: &Schedule,
    dims: &[usize],
    d_max: usize,
    t: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let uses = packed_len(d_max);
    (0..schedule.num_groups())
        .map(|i| {
            let m = schedule.model_of_group(i, t);
            let d = *dims
                .get(m)
                .ok_or_else(|| Error::Domain(format!("no dimension for model {m}")))?;
            if d > d_max {
                return Err(Error::Domain(format!("model {m} has D = {d} > D_max = {d_max}")));
            }
            let slack = uses - packed_len(d);
            Ok(if slack == 0 { 0 } else { rng.random_range(0..=slack) })
        })
        .collect()
}

/// How the uplink channel is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UplinkFidelity {
    /// Post-beamforming signal assembled term by term in closed form.
    #[default]
    Analytic,
    /// Every channel use synthesized at the antennas, noise included, then
    /// beamformed. Used to cross-check the analytic path.
    PerChannelUse,
}

/// The additive pieces of one group's complex global update.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTerms {
    /// `sum_k rho_k theta~_k`.
    pub signal: CVector,
    /// Cross-group leakage inside this group's window.
    pub interference: CVector,
    /// Receiver noise after beamforming and scaling.
    pub noise: CVector,
    /// The recovered complex update. In per-channel-use mode this comes from
    /// the synthesized antenna signals, not from summing the terms above.
    pub output: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAggregate {
    pub group: usize,
    pub model: usize,
    pub global: Vec<f64>,
    /// `rho_k` for the devices of the group, in schedule order.
    pub weights: Vec<f64>,
    pub alpha_sum: f64,
    pub signal_power: f64,
    pub interference_power: f64,
    pub noise_power: f64,
    pub terms: Option<GroupTerms>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub groups: Vec<GroupAggregate>,
}

impl AggregationResult {
    /// Updated global models indexed by model.
    pub fn global_models(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.groups.len()];
        for g in &self.groups {
            out[g.model] = g.global.clone();
        }
        out
    }
}

/// Everything the base station needs for one round of uplink aggregation.
#[derive(Debug, Clone, Copy)]
pub struct UplinkRound<'a> {
    /// Local model of every device (for whichever model it trained).
    pub locals: &'a [Vec<f64>],
    pub state: &'a BeamformerState,
    pub channels: &'a ChannelSet,
    pub schedule: &'a Schedule,
    pub round: usize,
    /// Placement offset per group, in channel uses.
    pub offsets: &'a [usize],
    pub d_max: usize,
    pub sigma2_ul: f64,
    pub fidelity: UplinkFidelity,
}

/// Over-the-air aggregation of one round for all groups.
pub fn uplink_aggregate<R: Rng + ?Sized>(round: &UplinkRound<'_>, rng: &mut R) -> Result<AggregationResult> {
    let UplinkRound {
        locals,
        state,
        channels,
        schedule,
        round: t,
        offsets,
        d_max,
        sigma2_ul,
        fidelity,
    } = *round;
    if !(sigma2_ul >= 0.0) {
        return Err(Error::Domain("uplink noise variance must be >= 0".into()));
    }
    let k_total = schedule.num_devices();
    if locals.len() != k_total || channels.devices() != k_total || offsets.len() != schedule.num_groups() {
        return Err(Error::Domain("locals, channels, offsets and schedule disagree".into()));
    }
    let uses = packed_len(d_max);
    let group_of = schedule.group_of();

    let mut packed = Vec::with_capacity(k_total);
    for (k, theta) in locals.iter().enumerate() {
        if theta.len() > d_max {
            return Err(Error::Domain(format!("device {k} sends D = {} > D_max", theta.len())));
        }
        let mut pm = pack_model(theta);
        pm.placement_offset = offsets[group_of[k]];
        if pm.placement_offset + pm.values.len() > uses {
            return Err(Error::Domain(format!("placement of device {k} overruns the frame")));
        }
        if !(pm.norm() > 0.0) {
            return Err(Error::degenerate("local model", format!("device {k} sent a zero-norm model")));
        }
        packed.push(pm);
    }
    let norms: Vec<f64> = packed.iter().map(PackedModel::norm).collect();
    // h_q^H w_j for every device against every beam.
    let proj: Vec<Vec<C64>> = state
        .w
        .iter()
        .map(|w| channels.h.iter().map(|h| inner(h, w)).collect())
        .collect();

    // Antenna-level synthesis for the per-channel-use mode; the noise
    // vectors are kept so every group sees the same draw.
    let antenna_level = if fidelity == UplinkFidelity::PerChannelUse {
        let a = state.transmit_weights(channels, schedule);
        let padded: Vec<CVector> = packed.iter().map(|p| p.padded(uses)).collect();
        let n = channels.antennas();
        let mut received = Vec::with_capacity(uses);
        let mut noise = Vec::with_capacity(uses);
        for l in 0..uses {
            let u: CVector = (0..n).map(|_| complex_gaussian(sigma2_ul, rng)).collect();
            let mut v = u.clone();
            for q in 0..k_total {
                let x = a[q] * padded[q][l] / norms[q];
                v.iter_mut().zip(&channels.h[q]).for_each(|(vi, hi)| *vi += hi * x);
            }
            received.push(v);
            noise.push(u);
        }
        Some((received, noise))
    } else {
        None
    };

    let mut groups = Vec::with_capacity(schedule.num_groups());
    for (i, members) in schedule.groups.iter().enumerate() {
        let model = schedule.model_of_group(i, t);
        let w = &state.w[i];
        let alphas: Vec<f64> = members
            .iter()
            .map(|&k| state.p[k].sqrt() * proj[i][k].norm() / norms[k])
            .collect();
        let alpha_sum: f64 = alphas.iter().sum();
        if !(alpha_sum > 0.0) {
            return Err(Error::degenerate("aggregation", format!("group {i} has zero effective gain")));
        }
        let weights: Vec<f64> = alphas.iter().map(|a| a / alpha_sum).collect();
        let dim = locals[members[0]].len();
        if members.iter().any(|&k| locals[k].len() != dim) {
            return Err(Error::Domain(format!("group {i} devices disagree on the model dimension")));
        }
        let len = packed_len(dim);
        let off = offsets[i];

        let mut signal = vec![C64::new(0.0, 0.0); len];
        for (&k, &rho) in members.iter().zip(&weights) {
            signal.iter_mut().zip(&packed[k].values).for_each(|(s, v)| *s += v * rho);
        }

        let mut interference = vec![C64::new(0.0, 0.0); len];
        for (j, others) in schedule.groups.iter().enumerate() {
            if j == i {
                continue;
            }
            for &q in others {
                let own = proj[j][q];
                let phase = if own.norm() > 0.0 { own / own.norm() } else { C64::new(1.0, 0.0) };
                let coef = phase * proj[i][q].conj() * state.p[q].sqrt() / (norms[q] * alpha_sum);
                let src = &packed[q];
                // overlap of [off, off+len) with [src.off, src.off+src.len)
                let lo = off.max(src.placement_offset);
                let hi = (off + len).min(src.placement_offset + src.values.len());
                for l in lo..hi {
                    interference[l - off] += coef * src.values[l - src.placement_offset];
                }
            }
        }

        let (noise, output): (CVector, CVector) = match &antenna_level {
            None => {
                let noise: CVector = (0..len)
                    .map(|_| complex_gaussian(sigma2_ul, rng) / alpha_sum)
                    .collect();
                let output: CVector = signal
                    .iter()
                    .zip(&interference)
                    .zip(&noise)
                    .map(|((s, x), n)| s + x + n)
                    .collect();
                (noise, output)
            }
            Some((received, noise_vectors)) => {
                let noise: CVector = (off..off + len)
                    .map(|l| inner(w, &noise_vectors[l]) / alpha_sum)
                    .collect();
                let output: CVector = (off..off + len).map(|l| inner(w, &received[l]) / alpha_sum).collect();
                (noise, output)
            }
        };

        let global = unpack_complex(&output, dim);
        groups.push(GroupAggregate {
            group: i,
            model,
            global,
            weights,
            alpha_sum,
            signal_power: norm_sqr(&signal),
            interference_power: norm_sqr(&interference),
            noise_power: norm_sqr(&noise),
            terms: Some(GroupTerms {
                signal,
                interference,
                noise,
                output,
            }),
        });
    }
    Ok(AggregationResult { groups })
}

/// Split a group's signal term into the previous global model, the
/// weighted local progress `sum rho_k (theta~_k^J - theta~_k^0)` and the
/// weighted downlink noise `sum rho_k n~_k^dl`, where `received[k]` is the
/// copy device `k` started from.
pub fn split_signal(
    previous_global: &[f64],
    received: &[&[f64]],
    locals: &[&[f64]],
    weights: &[f64],
) -> (CVector, CVector, CVector) {
    let prev = pack_model(previous_global).values;
    let len = prev.len();
    let mut progress = vec![C64::new(0.0, 0.0); len];
    let mut dl_noise = vec![C64::new(0.0, 0.0); len];
    for ((rx, local), &rho) in received.iter().zip(locals).zip(weights) {
        let rx_p = pack_model(rx).values;
        let loc_p = pack_model(local).values;
        for l in 0..len {
            progress[l] += (loc_p[l] - rx_p[l]) * rho;
            dl_noise[l] += (rx_p[l] - prev[l]) * rho;
        }
    }
    (prev, progress, dl_noise)
}

/// Error-free aggregation: each group's plain average of its devices'
/// exact local models.
pub fn ideal_aggregate(locals: &[Vec<f64>], schedule: &Schedule, t: usize) -> Result<AggregationResult> {
    let mut groups = Vec::with_capacity(schedule.num_groups());
    for (i, members) in schedule.groups.iter().enumerate() {
        let dim = locals[members[0]].len();
        if members.iter().any(|&k| locals[k].len() != dim) {
            return Err(Error::Domain(format!("group {i} devices disagree on the model dimension")));
        }
        let share = 1.0 / members.len() as f64;
        let mut global = vec![0.0; dim];
        for &k in members {
            global.iter_mut().zip(&locals[k]).for_each(|(g, x)| *g += x * share);
        }
        groups.push(GroupAggregate {
            group: i,
            model: schedule.model_of_group(i, t),
            signal_power: global.iter().map(|x| x * x).sum(),
            global,
            weights: vec![share; members.len()],
            alpha_sum: 0.0,
            interference_power: 0.0,
            noise_power: 0.0,
            terms: None,
        });
    }
    Ok(AggregationResult { groups })
}
