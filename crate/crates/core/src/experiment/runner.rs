use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DatasetKind, Scheme, SimConfig};
use super::metrics::MetricsRecord;
use crate::beamform::{bcd_solve, objective_p3, snr_max_beamformer, BcdOptions, BeamformerState, NormalizedChannels};
use crate::bound::{
    estimate_divergence, gap_bound, h_term, logistic_constants, reference_optimum, BoundConstants,
};
use crate::channel::{sample_channels, ChannelSet, Geometry, NoiseLevels};
use crate::error::{Error, Result};
use crate::learning::{
    even_partition, load_mnist_idx, local_sgd, test_accuracy, Dataset, Model, ModelKind, SyntheticTask,
};
use crate::oaa::{downlink_broadcast, ideal_aggregate, place_models, uplink_aggregate, AggregationResult, UplinkRound};
use crate::rng::{substream, Stream};
use crate::scheduler::{partition_devices, Schedule};

/// Per-model data, shards and starting points shared by every scheme and
/// realization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub models: Vec<Model>,
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    /// `shards[m][k]`: training-sample indices device `k` holds for model `m`.
    pub shards: Vec<Vec<Vec<usize>>>,
    pub init: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
    pub d_max: usize,
    pub noise: NoiseLevels,
    /// One set of constants per model when the bound is enabled.
    pub bound: Option<Vec<BoundConstants>>,
}

fn subset(data: &Dataset, limit: Option<usize>) -> Result<Dataset> {
    let n = limit.unwrap_or(data.len()).min(data.len());
    let b = data.num_features;
    Dataset::new(
        data.features[..n * b].to_vec(),
        data.labels[..n].to_vec(),
        b,
        data.num_classes,
    )
}

fn load_mnist(cfg: &SimConfig) -> Result<(Dataset, Dataset)> {
    let dir = Path::new(cfg.mnist_dir.as_deref().ok_or_else(|| Error::Config("mnist_dir is not set".into()))?);
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((subset(&train, cfg.mnist_train_limit)?, subset(&test, cfg.mnist_test_limit)?))
}

pub fn prepare(cfg: &SimConfig) -> Result<Prepared> {
    cfg.validate()?;
    let m_count = cfg.models;
    let (train, test, features) = match cfg.dataset {
        DatasetKind::Synthetic => {
            let mut train = Vec::with_capacity(m_count);
            let mut test = Vec::with_capacity(m_count);
            for (m, &b) in cfg.model_features.iter().enumerate() {
                let mut rng = substream(cfg.seed, Stream::Data, &[m as u64]);
                let task = SyntheticTask::new(cfg.classes, b, cfg.class_margin, &mut rng)?;
                train.push(task.sample(cfg.train_samples, &mut rng)?);
                test.push(task.sample(cfg.test_samples, &mut rng)?);
            }
            (train, test, cfg.model_features.clone())
        }
        DatasetKind::Mnist => {
            let (tr, te) = load_mnist(cfg)?;
            if cfg.classes != tr.num_classes {
                return Err(Error::Config(format!("MNIST has 10 classes, config says {}", cfg.classes)));
            }
            let b = tr.num_features;
            (vec![tr; m_count], vec![te; m_count], vec![b; m_count])
        }
    };
    let models = cfg.build_models(&features);
    let shards = (0..m_count)
        .map(|m| {
            even_partition(
                train[m].len(),
                cfg.devices,
                &mut substream(cfg.seed, Stream::Data, &[m as u64, 1]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(s) = shards.iter().flatten().find(|s| s.len() < cfg.batch()) {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} samples per device",
            cfg.batch(),
            s.len()
        )));
    }
    let init: Vec<Vec<f64>> = models
        .iter()
        .enumerate()
        .map(|(m, model)| model.init(&mut substream(cfg.seed, Stream::Init, &[m as u64])))
        .collect();
    let dims: Vec<usize> = models.iter().map(Model::dim).collect();
    let d_max = *dims.iter().max().expect("M >= 1");
    let noise = cfg.noise_levels()?;
    let mut prep = Prepared {
        models,
        train,
        test,
        shards,
        init,
        dims,
        d_max,
        noise,
        bound: None,
    };
    if cfg.compute_bound {
        prep.bound = Some(bound_constants(cfg, &prep)?);
    }
    Ok(prep)
}

/// Desk-scale estimates of the bound's constants for every model. `r`
/// takes a 1.5x margin over the largest observed squared model norm.
fn bound_constants(cfg: &SimConfig, prep: &Prepared) -> Result<Vec<BoundConstants>> {
    let scale = prep.d_max as f64 / 2.0;
    let weights = vec![1.0 / cfg.devices as f64; cfg.devices];
    let mut out = Vec::with_capacity(cfg.models);
    for (m, model) in prep.models.iter().enumerate() {
        if model.kind != ModelKind::Logistic {
            return Err(Error::Config(format!(
                "compute_bound needs logistic models; model {} is not",
                m + 1
            )));
        }
        let data = &prep.train[m];
        let (smoothness, strong_convexity) = logistic_constants(data, cfg.l2_reg);
        let theta0 = &prep.init[m];
        let optimum = reference_optimum(model, theta0, data, 1.0 / smoothness, cfg.bound_gd_iters)?;
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut rng = substream(cfg.seed, Stream::Solver, &[m as u64]);
        let mut r: f64 = sq(&optimum).max(sq(theta0));
        for start in [theta0.as_slice(), optimum.as_slice()] {
            for shard in &prep.shards[m] {
                let local = local_sgd(
                    model,
                    start,
                    data,
                    shard,
                    cfg.local_iters,
                    cfg.batch(),
                    cfg.learning_rate,
                    &mut rng,
                )?;
                r = r.max(sq(&local));
            }
        }
        let mut phi: f64 = 0.0;
        let mut delta: f64 = 0.0;
        for at in [theta0.as_slice(), optimum.as_slice()] {
            let (p, d) = estimate_divergence(model, at, data, &prep.shards[m], &weights, cfg.batch(), 20, &mut rng)?;
            phi = phi.max(p);
            delta = delta.max(d);
        }
        let gamma = theta0.iter().zip(&optimum).map(|(a, b)| (a - b) * (a - b)).sum();
        out.push(BoundConstants {
            smoothness,
            strong_convexity,
            model_norm_bound: 1.5 * r,
            phi: cfg.phi.unwrap_or(phi),
            delta: cfg.delta.unwrap_or(delta),
            device_weights: weights.clone(),
            eta: vec![cfg.learning_rate],
            local_iters: cfg.local_iters,
            models: cfg.models,
            devices: cfg.devices,
            gamma: vec![gamma; cfg.models],
            sigma2_d_tilde: prep.noise.sigma2_dl * scale,
            sigma2_u_tilde: prep.noise.sigma2_ul * scale,
        });
    }
    Ok(out)
}

/// Rows of the optional diagnostics files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// `(realization, frame, iteration, objective_p3, objective_p2)`
    pub bcd: Vec<(usize, usize, usize, f64, f64)>,
    /// `(realization, frame, round, group, model, alpha_sum, signal, interference, noise)`
    pub powers: Vec<(usize, usize, usize, usize, usize, f64, f64, f64, f64)>,
    /// `(realization, frame, model, h_n, g_n, c_n, gap_bound)`
    pub bound: Vec<(usize, usize, usize, f64, f64, f64, f64)>,
}

impl Diagnostics {
    fn extend(&mut self, other: Diagnostics) {
        self.bcd.extend(other.bcd);
        self.powers.extend(other.powers);
        self.bound.extend(other.bound);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub diagnostics: Diagnostics,
}

struct Tracker {
    scheme: &'static str,
    realization: usize,
    best: Vec<f64>,
    started: Instant,
    timing: bool,
    out: RunOutput,
}

impl Tracker {
    fn new(scheme: Scheme, realization: usize, models: usize, timing: bool) -> Self {
        Self {
            scheme: scheme.name(),
            realization,
            best: vec![f64::NEG_INFINITY; models],
            started: Instant::now(),
            timing,
            out: RunOutput::default(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, frame: usize, round: usize, m: usize, accuracy: f64, obj: Option<f64>, h: Option<f64>, gap: Option<f64>) {
        self.best[m] = self.best[m].max(accuracy);
        let elapsed = self.timing.then(|| self.started.elapsed().as_secs_f64() * 1e3);
        self.out.records.push(MetricsRecord {
            scheme: self.scheme.to_string(),
            realization: self.realization,
            frame,
            round,
            model: m + 1,
            accuracy,
            best_accuracy: self.best[m],
            obj_p3: obj,
            h_term: h,
            gap_bound: gap,
            elapsed_ms: elapsed,
        });
    }
}

fn at_round<T>(frame: usize, round: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Round {
        frame,
        round,
        source: Box::new(e),
    })
}

fn geometry(cfg: &SimConfig, realization: usize) -> Result<Geometry> {
    let mut rng = substream(cfg.seed, Stream::Geometry, &[realization as u64]);
    match &cfg.distances_km {
        Some(d) => Geometry::with_distances(d.clone(), cfg.shadowing_std_db, &mut rng),
        None => Geometry::sample(
            cfg.devices,
            cfg.distance_min_km,
            cfg.distance_max_km,
            cfg.shadowing_std_db,
            &mut rng,
        ),
    }
}

fn frame_channels(cfg: &SimConfig, prep: &Prepared, geo: &Geometry, r: usize, n: usize) -> Result<ChannelSet> {
    sample_channels(
        geo,
        cfg.antennas,
        n,
        prep.noise,
        &mut substream(cfg.seed, Stream::Channel, &[r as u64, n as u64]),
    )
}

/// Local SGD of device `k` for `model` from `start`.
fn train_device(cfg: &SimConfig, prep: &Prepared, r: usize, t: usize, k: usize, m: usize, start: &[f64]) -> Result<Vec<f64>> {
    local_sgd(
        &prep.models[m],
        start,
        &prep.train[m],
        &prep.shards[m][k],
        cfg.local_iters,
        cfg.batch(),
        cfg.learning_rate,
        &mut substream(cfg.seed, Stream::Sgd, &[r as u64, t as u64, k as u64]),
    )
}

/// One realization of simultaneous training, over the air or error-free.
fn run_simultaneous(cfg: &SimConfig, prep: &Prepared, realization: usize, ideal: bool) -> Result<RunOutput> {
    let scheme = if ideal { Scheme::Ideal } else { Scheme::Multimodel };
    let (k_total, m_count) = (cfg.devices, cfg.models);
    let r = realization;
    let mut track = Tracker::new(scheme, r, m_count, cfg.record_timing);
    let geo = if ideal { None } else { Some(geometry(cfg, r)?) };
    let caps = cfg.power_caps(prep.d_max);
    let options = BcdOptions {
        tol: cfg.solver_tol,
        max_iter: cfg.solver_max_iter,
    };
    let mut globals = prep.init.clone();
    let mut h_history: Vec<Vec<f64>> = vec![Vec::new(); m_count];
    for n in 0..cfg.frames() {
        let first = n * m_count;
        let schedule = at_round(
            n,
            first,
            partition_devices(k_total, m_count, n, &mut substream(cfg.seed, Stream::Schedule, &[r as u64, n as u64])),
        )?;
        // Channel draw, beamformer solve and bound term for the frame.
        let mut air: Option<(ChannelSet, BeamformerState, f64)> = None;
        let mut h_values: Option<Vec<f64>> = None;
        if let Some(geo) = &geo {
            let solved = (|| {
                let channels = frame_channels(cfg, prep, geo, r, n)?;
                let nch = NormalizedChannels::new(&channels, prep.d_max)?;
                let outcome = bcd_solve(&nch, &schedule, &caps, None, options)?;
                Ok::<_, Error>((channels, outcome))
            })();
            let (channels, outcome) = at_round(n, first, solved)?;
            for (it, (p3, p2)) in outcome.trace.iter().zip(&outcome.trace_p2).enumerate() {
                track.out.diagnostics.bcd.push((r, n, it, *p3, *p2));
            }
            if let Some(consts) = &prep.bound {
                let hs = consts
                    .iter()
                    .map(|c| h_term(&outcome.state, &channels, &schedule, c))
                    .collect::<Result<Vec<_>>>();
                h_values = Some(at_round(n, first, hs)?);
            }
            let obj = outcome.objective();
            air = Some((channels, outcome.state, obj));
        }
        let last_round = (first + m_count).min(cfg.rounds);
        for t in first..last_round {
            let step = (|| -> Result<AggregationResult> {
                let mut locals: Vec<Vec<f64>> = vec![Vec::new(); k_total];
                let mut dl_rng = substream(cfg.seed, Stream::Downlink, &[r as u64, t as u64]);
                for (i, members) in schedule.groups.iter().enumerate() {
                    let m = schedule.model_of_group(i, t);
                    let received = if ideal {
                        vec![globals[m].clone(); members.len()]
                    } else {
                        downlink_broadcast(&globals[m], prep.noise.sigma2_dl, members.len(), &mut dl_rng)?
                    };
                    for (&k, start) in members.iter().zip(&received) {
                        locals[k] = train_device(cfg, prep, r, t, k, m, start)?;
                    }
                }
                match &air {
                    None => ideal_aggregate(&locals, &schedule, t),
                    Some((channels, state, _)) => {
                        let offsets = place_models(
                            &schedule,
                            &prep.dims,
                            prep.d_max,
                            t,
                            &mut substream(cfg.seed, Stream::Placement, &[r as u64, t as u64]),
                        )?;
                        uplink_aggregate(
                            &UplinkRound {
                                locals: &locals,
                                state,
                                channels,
                                schedule: &schedule,
                                round: t,
                                offsets: &offsets,
                                d_max: prep.d_max,
                                sigma2_ul: prep.noise.sigma2_ul,
                                fidelity: cfg.fidelity(),
                            },
                            &mut substream(cfg.seed, Stream::Uplink, &[r as u64, t as u64]),
                        )
                    }
                }
            })();
            let agg = at_round(n, t, step)?;
            for g in agg.groups {
                if !ideal {
                    track.out.diagnostics.powers.push((
                        r,
                        n,
                        t,
                        g.group,
                        g.model + 1,
                        g.alpha_sum,
                        g.signal_power,
                        g.interference_power,
                        g.noise_power,
                    ));
                }
                globals[g.model] = g.global;
            }
            let frame_end = t + 1 == last_round;
            for m in 0..m_count {
                let acc = test_accuracy(&prep.models[m], &globals[m], &prep.test[m]);
                let h = h_values.as_ref().map(|h| h[m]);
                let gap = match (&prep.bound, &h_values, frame_end) {
                    (Some(consts), Some(hv), true) => {
                        h_history[m].push(hv[m]);
                        let gb = at_round(n, t, gap_bound(&h_history[m], &consts[m], n + 1, m))?;
                        let c = &consts[m];
                        track.out.diagnostics.bound.push((r, n, m + 1, hv[m], c.g_factor(n), c.c_term(n), gb));
                        Some(gb)
                    }
                    _ => None,
                };
                track.record(n, t, m, acc, air.as_ref().map(|a| a.2), h, gap);
            }
        }
    }
    Ok(track.out)
}

/// Rounds each model gets in the sequential baseline; the first `T mod M`
/// models take one extra round when the split is uneven.
pub fn sequential_rounds(rounds: usize, models: usize) -> Vec<usize> {
    (0..models)
        .map(|m| rounds / models + usize::from(m < rounds % models))
        .collect()
}

/// One realization of the sequential baseline: each model in turn is
/// trained by all `K` devices as a single over-the-air group, on the same
/// frame clock as the simultaneous scheme.
fn run_sequential(cfg: &SimConfig, prep: &Prepared, realization: usize) -> Result<RunOutput> {
    let (k_total, m_count) = (cfg.devices, cfg.models);
    let r = realization;
    let mut track = Tracker::new(Scheme::Seqnmodel, r, m_count, cfg.record_timing);
    let geo = geometry(cfg, r)?;
    let schedule = Schedule::single_group(0, k_total)?;
    let mut owner = Vec::with_capacity(cfg.rounds);
    for (m, &count) in sequential_rounds(cfg.rounds, m_count).iter().enumerate() {
        owner.extend(std::iter::repeat_n(m, count));
    }
    let mut globals = prep.init.clone();
    let mut frame: Option<(usize, ChannelSet)> = None;
    for (t, &m) in owner.iter().enumerate() {
        let n = t / m_count;
        let step = (|| -> Result<(AggregationResult, f64)> {
            if frame.as_ref().map(|f| f.0) != Some(n) {
                frame = Some((n, frame_channels(cfg, prep, &geo, r, n)?));
            }
            let channels = &frame.as_ref().expect("set above").1;
            let d = prep.dims[m];
            let caps = cfg.power_caps(d);
            let nch = NormalizedChannels::new(channels, d)?;
            let state = snr_max_beamformer(&nch, &caps);
            let obj = objective_p3(&state, &nch, &schedule)?;
            let mut dl_rng = substream(cfg.seed, Stream::Downlink, &[r as u64, t as u64]);
            let received = downlink_broadcast(&globals[m], prep.noise.sigma2_dl, k_total, &mut dl_rng)?;
            let locals = (0..k_total)
                .map(|k| train_device(cfg, prep, r, t, k, m, &received[k]))
                .collect::<Result<Vec<_>>>()?;
            let agg = uplink_aggregate(
                &UplinkRound {
                    locals: &locals,
                    state: &state,
                    channels,
                    schedule: &schedule,
                    round: t,
                    offsets: &[0],
                    d_max: d,
                    sigma2_ul: prep.noise.sigma2_ul,
                    fidelity: cfg.fidelity(),
                },
                &mut substream(cfg.seed, Stream::Uplink, &[r as u64, t as u64]),
            )?;
            Ok((agg, obj))
        })();
        let (mut agg, obj) = at_round(n, t, step)?;
        let g = agg.groups.pop().expect("one group");
        track
            .out
            .diagnostics
            .powers
            .push((r, n, t, 0, m + 1, g.alpha_sum, g.signal_power, g.interference_power, g.noise_power));
        globals[m] = g.global;
        for q in 0..m_count {
            let acc = test_accuracy(&prep.models[q], &globals[q], &prep.test[q]);
            track.record(n, t, q, acc, (q == m).then_some(obj), None, None);
        }
    }
    Ok(track.out)
}

/// One realization of one scheme.
pub fn run_realization(cfg: &SimConfig, prep: &Prepared, scheme: Scheme, realization: usize) -> Result<RunOutput> {
    match scheme {
        Scheme::Multimodel => run_simultaneous(cfg, prep, realization, false),
        Scheme::Ideal => run_simultaneous(cfg, prep, realization, true),
        Scheme::Seqnmodel => {
            if !cfg.rounds.is_multiple_of(cfg.models) && !cfg.seqn_uneven_split {
                return Err(Error::Config(format!(
                    "seqnmodel needs T mod M = 0 (T = {}, M = {})",
                    cfg.rounds, cfg.models
                )));
            }
            run_sequential(cfg, prep, realization)
        }
        Scheme::All => Err(Error::Config("run_realization takes a single scheme".into())),
    }
}

/// All realizations of `scheme` in parallel, merged in realization order.
pub fn run_scheme(cfg: &SimConfig, prep: &Prepared, scheme: Scheme) -> Result<RunOutput> {
    let parts = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| run_realization(cfg, prep, scheme, r))
        .collect::<Vec<_>>();
    let mut out = RunOutput::default();
    for part in parts {
        let part = part?;
        out.records.extend(part.records);
        out.diagnostics.extend(part.diagnostics);
    }
    Ok(out)
}

pub fn run_multimodel(cfg: &SimConfig, prep: &Prepared) -> Result<RunOutput> {
    run_scheme(cfg, prep, Scheme::Multimodel)
}

pub fn run_ideal(cfg: &SimConfig, prep: &Prepared) -> Result<RunOutput> {
    run_scheme(cfg, prep, Scheme::Ideal)
}

pub fn run_seqnmodel(cfg: &SimConfig, prep: &Prepared) -> Result<RunOutput> {
    run_scheme(cfg, prep, Scheme::Seqnmodel)
}

/// Every scheme the config selects, in the order of [`Scheme::expand`].
/// Diagnostics of the over-the-air schemes are kept apart by scheme name.
pub fn run(cfg: &SimConfig) -> Result<Vec<(Scheme, RunOutput)>> {
    let prep = prepare(cfg)?;
    cfg.scheme
        .expand()
        .into_iter()
        .map(|s| run_scheme(cfg, &prep, s).map(|o| (s, o)))
        .collect()
}
