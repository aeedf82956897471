mod common;

use std::time::Instant;

use common::*;
use mmfl::beamform::{
    bcd_solve, objective_p2, objective_p3, update_p_group, update_w, BcdOptions, BeamformerState,
};
use mmfl::linalg::{max_generalized_rayleigh, HermitianMatrix, C64};
use mmfl::scheduler::Schedule;
use rand::Rng;

#[test]
fn objectives_match_transcription() {
    for seed in 0..50 {
        let inst = instance(4, 4, 2, seed);
        let state = random_state(&inst, &mut rng(seed));
        let p3 = objective_p3(&state, &inst.nch, &inst.schedule).unwrap();
        let want = p3_reference(&state.w, &state.p, &inst.nch.f, &inst.schedule.groups);
        assert!((p3 - want).abs() <= 1e-12 * want.abs(), "{p3} vs {want}");

        let p2 = objective_p2(&state, &inst.channels, &inst.schedule, inst.d_max).unwrap();
        let noise = inst.channels.sigma2_ul * inst.d_max as f64 / 2.0;
        let want = p2_reference(&state.w, &state.p, &inst.channels.h, &inst.schedule.groups, noise);
        assert!((p2 - want).abs() <= 1e-12 * want.abs(), "{p2} vs {want}");
    }
}

#[test]
fn bcd_trace_is_monotone() {
    let mut seed = 0;
    for &n in &[4, 8, 16] {
        for &(k, m) in &[(4, 1), (4, 2), (8, 2), (12, 3)] {
            for _ in 0..5 {
                seed += 1;
                let inst = instance(n, k, m, seed);
                let out = bcd_solve(&inst.nch, &inst.schedule, &inst.caps, None, BcdOptions::default()).unwrap();
                for pair in out.trace.windows(2) {
                    assert!(pair[1] <= pair[0] + 1e-9, "seed {seed}: {} -> {}", pair[0], pair[1]);
                }
                out.state.validate(&inst.nch, &inst.schedule, &inst.caps).unwrap();
            }
        }
    }
}

#[test]
fn update_w_reaches_dense_generalized_optimum() {
    for seed in 0..100 {
        let n = 2 + (seed as usize % 7);
        let inst = instance(n, 4, 2, 1000 + seed);
        let state = random_state(&inst, &mut rng(seed));
        for i in 0..2 {
            let w = update_w(i, &state.p, &inst.nch, &inst.schedule).unwrap();
            let (a, b) = pencil_reference(i, &state.p, &inst.nch.f, &inst.schedule.groups);
            let mu = generalized_max_reference(&a, &b);
            let quotient = rayleigh(&w, &b) / rayleigh(&w, &a);
            assert!((quotient - mu).abs() <= 1e-8 * mu, "seed {seed}: {quotient} vs {mu}");
        }
    }
}

#[test]
fn generalized_eigenvalue_matches_dense_oracle() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let n = 6;
        let vecs: Vec<Vec<C64>> = (0..8).map(|_| random_unit(n, &mut r)).collect();
        let mut a = HermitianMatrix::identity(n);
        let mut b = HermitianMatrix::zeros(n);
        for (q, v) in vecs.iter().enumerate() {
            let s = r.random_range(0.1..5.0);
            if q < 3 {
                b.add_outer(s, v);
            } else {
                a.add_outer(s, v);
            }
        }
        let (_, mu) = max_generalized_rayleigh(&a, &b).unwrap();
        let to_rows = |m: &HermitianMatrix| (0..n).map(|r| (0..n).map(|c| m.get(r, c)).collect()).collect::<Vec<_>>();
        let want = generalized_max_reference(&to_dmatrix(&to_rows(&a)), &to_dmatrix(&to_rows(&b)));
        assert!((mu - want).abs() <= 1e-10 * want, "{mu} vs {want}");
    }
}

#[test]
fn update_p_matches_grid_search() {
    let shapes = [(2, 2), (4, 2), (3, 3), (6, 3), (2, 1), (4, 4)];
    for seed in 0..30u64 {
        let (k, m) = shapes[seed as usize % shapes.len()];
        let inst = instance(4, k, m, 5000 + seed);
        let state = random_state(&inst, &mut rng(seed));
        let i = seed as usize % m;
        let p = update_p_group(i, &state, &inst.nch, &inst.schedule, &inst.caps).unwrap();
        let ours = full_objective(&state, &inst, i, &p);
        let (grid, _) = grid_minimum(i, &state, &inst, 10_000);
        assert!(ours <= grid * (1.0 + 1e-12), "seed {seed}: closed form {ours} above grid {grid}");
        assert!(grid - ours <= 1e-3 * grid, "seed {seed}: {ours} vs {grid}");
    }
}

#[test]
fn symmetric_pair_matches_grid() {
    let mut inst = instance(2, 2, 2, 77);
    let f0 = inst.nch.f[0].clone();
    inst.nch.f[1] = f0.iter().map(|z| z * C64::new(0.0, 1.0)).collect();
    inst.schedule = Schedule::from_groups(0, vec![vec![0], vec![1]]).unwrap();
    inst.caps = vec![1.0, 1.0];
    let w = random_unit(2, &mut rng(3));
    let state = BeamformerState {
        w: vec![w.clone(), w],
        p: vec![0.5, 0.5],
    };
    for i in 0..2 {
        let p = update_p_group(i, &state, &inst.nch, &inst.schedule, &inst.caps).unwrap();
        let ours = full_objective(&state, &inst, i, &p);
        let (grid, _) = grid_minimum(i, &state, &inst, 10_000);
        assert!((ours - grid).abs() <= 1e-3 * grid, "{ours} vs {grid}");
    }
}

#[test]
fn bcd_beats_random_search() {
    let inst = instance(8, 4, 2, 4242);
    let out = bcd_solve(&inst.nch, &inst.schedule, &inst.caps, None, BcdOptions::default()).unwrap();
    let mut r = rng(9);
    let mut best = f64::INFINITY;
    for _ in 0..100_000 {
        let s = random_state(&inst, &mut r);
        best = best.min(p3_reference(&s.w, &s.p, &inst.nch.f, &inst.schedule.groups));
    }
    assert!(out.objective() <= best, "BCD {} vs random search {best}", out.objective());
}

#[test]
fn bcd_is_fast_at_desk_scale() {
    let inst = instance(16, 12, 3, 11);
    let start = Instant::now();
    bcd_solve(&inst.nch, &inst.schedule, &inst.caps, None, BcdOptions::default()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

