//! Instance generators and independent reference computations shared by
//! the integration tests and the acceptance target.
#![allow(dead_code)]

use mmfl::beamform::{BeamformerState, NormalizedChannels};
use mmfl::bound::BoundConstants;
use mmfl::channel::{dbm_to_watts, sample_channels, ChannelSet, Geometry, NoiseLevels};
use mmfl::learning::{sample_loss_grad, Dataset, Model};
use mmfl::linalg::{CVector, C64};
use mmfl::oaa::packed_len;
use mmfl::rng::{substream, SimRng, Stream};
use mmfl::scheduler::{partition_devices, Schedule};
use nalgebra::DMatrix;
use rand::Rng;

pub struct Instance {
    pub channels: ChannelSet,
    pub nch: NormalizedChannels,
    pub schedule: Schedule,
    pub caps: Vec<f64>,
    pub d_max: usize,
}

/// A random frame drawn with the default link budget: devices 20-500 m
/// away, 8 dB shadowing, -112 dBm uplink noise, 23 dBm per channel use.
pub fn instance(n: usize, k: usize, m: usize, seed: u64) -> Instance {
    let mut rng = substream(seed, Stream::Geometry, &[0xA11]);
    let geo = Geometry::sample(k, 0.02, 0.5, 8.0, &mut rng).unwrap();
    let noise = NoiseLevels {
        sigma2_ul: dbm_to_watts(-112.0),
        sigma2_dl: dbm_to_watts(-96.0),
    };
    let d_max = 2 * rng.random_range(5..200);
    let channels = sample_channels(&geo, n, 0, noise, &mut rng).unwrap();
    let nch = NormalizedChannels::new(&channels, d_max).unwrap();
    let schedule = partition_devices(k, m, 0, &mut rng).unwrap();
    let caps = (0..k)
        .map(|_| d_max as f64 * dbm_to_watts(23.0) / 2.0 * rng.random_range(0.5..1.0))
        .collect();
    Instance {
        channels,
        nch,
        schedule,
        caps,
        d_max,
    }
}

pub fn rng(seed: u64) -> SimRng {
    substream(seed, Stream::Solver, &[0x7E57])
}

pub fn random_unit(n: usize, rng: &mut SimRng) -> CVector {
    let v: CVector = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let s = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / s).collect()
}

pub fn random_state(inst: &Instance, rng: &mut SimRng) -> BeamformerState {
    BeamformerState {
        w: (0..inst.schedule.num_groups())
            .map(|_| random_unit(inst.nch.antennas(), rng))
            .collect(),
        p: inst.caps.iter().map(|c| c * rng.random_range(0.0..1.0)).collect(),
    }
}

/// `|x^H w|^2` written out.
pub fn gain(x: &[C64], w: &[C64]) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for (a, b) in x.iter().zip(w) {
        s += a.conj() * b;
    }
    s.norm_sqr()
}

fn group_index(groups: &[Vec<usize>], k: usize) -> usize {
    groups.iter().position(|g| g.contains(&k)).unwrap()
}

/// Sum over groups of `(interference + 1) / signal` on normalized channels.
pub fn p3_reference(w: &[CVector], p: &[f64], f: &[CVector], groups: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let mut num = 1.0;
        let mut den = 0.0;
        for q in 0..f.len() {
            let term = p[q] * gain(&f[q], wi);
            if group_index(groups, q) == i {
                den += term;
            } else {
                num += term;
            }
        }
        total += num / den;
    }
    total
}

/// Sum over groups of `(interference + noise) / (sum sqrt(p) |h^H w|)^2`.
pub fn p2_reference(w: &[CVector], p: &[f64], h: &[CVector], groups: &[Vec<usize>], noise: f64) -> f64 {
    let mut total = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let mut interference = 0.0;
        let mut amplitude = 0.0;
        for q in 0..h.len() {
            if group_index(groups, q) == i {
                amplitude += (p[q] * gain(&h[q], wi)).sqrt();
            } else {
                interference += p[q] * gain(&h[q], wi);
            }
        }
        total += (interference + noise) / amplitude.powi(2);
    }
    total
}

pub fn to_dmatrix(rows: &[Vec<C64>]) -> DMatrix<C64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |r, c| rows[r][c])
}

/// `(A, B)` for group `i` built from outer products, as dense nalgebra matrices.
pub fn pencil_reference(i: usize, p: &[f64], f: &[CVector], groups: &[Vec<usize>]) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = f[0].len();
    let mut a = DMatrix::<C64>::identity(n, n);
    let mut b = DMatrix::<C64>::zeros(n, n);
    for (q, fq) in f.iter().enumerate() {
        let v = nalgebra::DVector::from_column_slice(fq);
        let outer = &v * v.adjoint() * C64::new(p[q], 0.0);
        if group_index(groups, q) == i {
            b += outer;
        } else {
            a += outer;
        }
    }
    (a, b)
}

/// Largest eigenvalue of the pencil `B x = mu A x` by Cholesky whitening
/// and a dense Hermitian eigendecomposition.
pub fn generalized_max_reference(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let chol = a.clone().cholesky().expect("A is positive definite");
    let l = chol.l();
    let l_inv = l.clone().try_inverse().unwrap();
    let c = &l_inv * b * l_inv.adjoint();
    let c = (&c + c.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(c);
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn rayleigh(w: &[C64], a: &DMatrix<C64>) -> f64 {
    let v = nalgebra::DVector::from_column_slice(w);
    (v.adjoint() * a * &v)[(0, 0)].re
}

/// `prod_{s=from}^{to-1} G_s` by direct multiplication.
fn product_g(c: &BoundConstants, from: usize, to: usize) -> f64 {
    let mut prod = 1.0;
    for s in from..to {
        let eta = c.eta_at(s);
        prod *= 4.0 * (1.0 - eta * c.strong_convexity).powf(2.0 * (c.local_iters * c.models) as f64);
    }
    prod
}

fn c_reference(c: &BoundConstants, n: usize) -> f64 {
    let eta = c.eta_at(n);
    let (j, m, k) = (c.local_iters as f64, c.models as f64, c.devices as f64);
    4.0 * eta.powi(2) * j.powi(2) * (m.powi(2) * c.phi + k.powi(2) * c.delta) + 8.0 * k * c.sigma2_d_tilde
}

pub fn error_bound_reference(
    state: &BeamformerState,
    h: &[CVector],
    groups: &[Vec<usize>],
    c: &BoundConstants,
) -> f64 {
    let rmk = c.model_norm_bound * c.models as f64 * c.devices as f64;
    rmk * p2_reference(&state.w, &state.p, h, groups, c.sigma2_u_tilde) + 2.0 * c.devices as f64 * c.sigma2_d_tilde
}

pub fn h_term_reference(state: &BeamformerState, h: &[CVector], groups: &[Vec<usize>], c: &BoundConstants) -> f64 {
    4.0 * c.model_norm_bound
        * c.models as f64
        * c.devices as f64
        * p2_reference(&state.w, &state.p, h, groups, c.sigma2_u_tilde)
}

/// `Gamma_m prod G + sum_{n<S-1} C_n prod_{s>n} G_s + C_{S-1} + (same with H)`,
/// evaluated front to back with explicit products.
pub fn gap_bound_reference(h: &[f64], c: &BoundConstants, frames: usize, m: usize) -> f64 {
    let mut total = c.gamma[m] * product_g(c, 0, frames);
    for n in 0..frames {
        let tail = product_g(c, n + 1, frames);
        total += (c_reference(c, n) + h[n]) * tail;
    }
    total
}

pub fn random_constants(rng: &mut SimRng, k: usize, m: usize, frames: usize) -> BoundConstants {
    let lambda = rng.random_range(0.01..1.0);
    BoundConstants {
        smoothness: lambda + rng.random_range(0.0..5.0),
        strong_convexity: lambda,
        model_norm_bound: rng.random_range(0.1..10.0),
        phi: rng.random_range(0.0..2.0),
        delta: rng.random_range(0.0..2.0),
        device_weights: vec![1.0 / k as f64; k],
        eta: (0..frames).map(|_| rng.random_range(0.01..0.99) / lambda).collect(),
        local_iters: rng.random_range(1..5),
        models: m,
        devices: k,
        gamma: (0..m).map(|_| rng.random_range(0.0..10.0)).collect(),
        sigma2_d_tilde: rng.random_range(0.0..1e-3),
        sigma2_u_tilde: rng.random_range(1e-14..1e-12),
    }
}

/// Pack `theta` as `theta[l] + j theta[half + l]` after padding to even length.
pub fn pack_reference(theta: &[f64]) -> Vec<C64> {
    let mut t = theta.to_vec();
    if t.len() % 2 == 1 {
        t.push(0.0);
    }
    let half = t.len() / 2;
    (0..half).map(|l| C64::new(t[l], t[half + l])).collect()
}

/// Exhaustive search over a group's powers on a `points`-per-axis grid
/// spanning `ranges`, everything else fixed. Groups of one or two devices.
pub fn grid_search(i: usize, state: &BeamformerState, inst: &Instance, points: usize, ranges: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let groups = &inst.schedule.groups;
    let members = &groups[i];
    let f = &inst.nch.f;
    // Split each group's numerator and denominator into the part fixed by
    // the other groups' powers and the part linear in this group's powers.
    let mut base_num = vec![1.0; groups.len()];
    let mut base_den = vec![0.0; groups.len()];
    let mut coef: Vec<Vec<f64>> = vec![vec![0.0; members.len()]; groups.len()];
    for (j, wj) in state.w.iter().enumerate() {
        for (q, fq) in f.iter().enumerate() {
            let g = gain(fq, wj);
            if let Some(pos) = members.iter().position(|&k| k == q) {
                coef[j][pos] = g;
            } else if groups[j].contains(&q) {
                base_den[j] += state.p[q] * g;
            } else {
                base_num[j] += state.p[q] * g;
            }
        }
    }
    let eval = |p: &[f64]| {
        let mut total = 0.0;
        for j in 0..groups.len() {
            let lin: f64 = p.iter().zip(&coef[j]).map(|(a, b)| a * b).sum();
            total += if j == i {
                base_num[j] / lin
            } else {
                (base_num[j] + lin) / base_den[j]
            };
        }
        total
    };
    let step = |(lo, hi): (f64, f64), s: usize| lo + (hi - lo) * s as f64 / (points - 1) as f64;
    let mut best = (f64::INFINITY, vec![]);
    match members.len() {
        1 => {
            for s in 0..points {
                let p = [step(ranges[0], s)];
                let v = eval(&p);
                if v < best.0 {
                    best = (v, p.to_vec());
                }
            }
        }
        2 => {
            for s in 0..points {
                let p0 = step(ranges[0], s);
                for u in 0..points {
                    let p = [p0, step(ranges[1], u)];
                    let v = eval(&p);
                    if v < best.0 {
                        best = (v, p.to_vec());
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

/// Uniform grid over `[0, cap]`, then a second grid of the same size over
/// the cells around the first pass's best point.
pub fn grid_minimum(i: usize, state: &BeamformerState, inst: &Instance, points: usize) -> (f64, Vec<f64>) {
    let caps: Vec<f64> = inst.schedule.groups[i].iter().map(|&k| inst.caps[k]).collect();
    let full: Vec<(f64, f64)> = caps.iter().map(|&c| (0.0, c)).collect();
    let (_, coarse) = grid_search(i, state, inst, points, &full);
    let zoom: Vec<(f64, f64)> = coarse
        .iter()
        .zip(&caps)
        .map(|(&p, &c)| {
            let h = c / (points - 1) as f64;
            ((p - h).max(0.0), (p + h).min(c))
        })
        .collect();
    grid_search(i, state, inst, points, &zoom)
}

pub fn full_objective(state: &BeamformerState, inst: &Instance, i: usize, p_i: &[f64]) -> f64 {
    let mut p = state.p.clone();
    for (&k, &v) in inst.schedule.groups[i].iter().zip(p_i) {
        p[k] = v;
    }
    p3_reference(&state.w, &p, &inst.nch.f, &inst.schedule.groups)
}

pub fn idx_images(count: u32, rows: u32, cols: u32, seed: u64) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(16 + (count * rows * cols) as usize);
    for v in [0x0000_0803u32, count, rows, cols] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    let mut r = rng(seed);
    bytes.extend((0..count * rows * cols).map(|_| r.random::<u8>()));
    bytes
}

pub fn idx_labels(count: u32, seed: u64) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + count as usize);
    for v in [0x0000_0801u32, count] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    let mut r = rng(seed);
    bytes.extend((0..count).map(|_| r.random_range(0..10u8)));
    bytes
}

/// The four MNIST files with official headers and sizes and random content.
pub fn write_mnist_fixture(dir: &std::path::Path, train: u32, test: u32) {
    std::fs::write(dir.join("train-images-idx3-ubyte"), idx_images(train, 28, 28, 1)).unwrap();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), idx_labels(train, 2)).unwrap();
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), idx_images(test, 28, 28, 3)).unwrap();
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), idx_labels(test, 4)).unwrap();
}

/// A directory holding the official files: `MNIST_DIR` when it has them,
/// otherwise `None`.
pub fn official_mnist_dir() -> Option<std::path::PathBuf> {
    let dir = std::path::PathBuf::from(std::env::var_os("MNIST_DIR")?);
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(dir)
}

/// The received window of group `i` computed from the literal
/// superposition `w_i^H sum_q h_q a_q x_q[l] / sum_k alpha_k`, no noise.
pub fn literal_window(
    i: usize,
    locals: &[Vec<f64>],
    state: &BeamformerState,
    channels: &ChannelSet,
    groups: &[Vec<usize>],
    offsets: &[usize],
    d_max: usize,
) -> Vec<C64> {
    let uses = packed_len(d_max);
    let k_total = locals.len();
    let group_of = |q: usize| groups.iter().position(|g| g.contains(&q)).unwrap();
    let inner = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(a, b)| a.conj() * b).sum::<C64>();
    let mut x = vec![vec![C64::new(0.0, 0.0); uses]; k_total];
    let mut norms = vec![0.0; k_total];
    for q in 0..k_total {
        let packed = pack_reference(&locals[q]);
        norms[q] = packed.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let off = offsets[group_of(q)];
        for (l, v) in packed.iter().enumerate() {
            x[q][off + l] = *v;
        }
    }
    let a: Vec<C64> = (0..k_total)
        .map(|q| {
            let proj = inner(&channels.h[q], &state.w[group_of(q)]);
            proj / proj.norm() * state.p[q].sqrt()
        })
        .collect();
    let alpha_sum: f64 = groups[i]
        .iter()
        .map(|&k| state.p[k].sqrt() * inner(&channels.h[k], &state.w[i]).norm() / norms[k])
        .sum();
    let len = packed_len(locals[groups[i][0]].len());
    (offsets[i]..offsets[i] + len)
        .map(|l| {
            let mut y = C64::new(0.0, 0.0);
            for q in 0..k_total {
                let beam = inner(&state.w[i], &channels.h[q]);
                y += beam * a[q] * x[q][l] / norms[q];
            }
            y / alpha_sum
        })
        .collect()
}

pub fn random_dataset(n: usize, b: usize, c: usize, r: &mut SimRng) -> Dataset {
    let features = (0..n * b).map(|_| r.random_range(-1.5..1.5)).collect();
    let labels = (0..n).map(|_| r.random_range(0..c)).collect();
    Dataset::new(features, labels, b, c).unwrap()
}

/// Directional derivative of the mini-batch loss along a random direction,
/// analytic and by central differences with step `1e-5`.
pub fn gradient_probe(model: &Model, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let data = random_dataset(30, model.num_features, model.num_classes, &mut r);
    let theta: Vec<f64> = (0..model.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let batch: Vec<usize> = (0..r.random_range(1..30)).map(|_| r.random_range(0..30)).collect();
    let dir: Vec<f64> = (0..model.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, grad) = sample_loss_grad(model, &theta, &data, &batch).unwrap();
    let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
    let h = 1e-5;
    let shifted = |s: f64| {
        let t: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + s * d).collect();
        sample_loss_grad(model, &t, &data, &batch).unwrap().0
    };
    (analytic, (shifted(h) - shifted(-h)) / (2.0 * h))
}

pub fn probe_agrees(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-6 * analytic.abs().max(numeric.abs()).max(1e-3)
}
