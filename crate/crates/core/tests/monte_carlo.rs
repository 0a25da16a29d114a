use wflab_core::bounds::{skeleton_contract_bound, skeleton_event_estimate, SkeletonConfig};
use wflab_core::simulate::path_rng;
use wflab_core::{
    estimate_semigroup, martingale_check, sample_path, sample_tilted, Atom, JumpKernel, McEstimate, Observable,
    RateExpr, RateProfile, SimConfig, TargetSet, TiltConfig,
};

use rand::Rng;
use rayon::prelude::*;

fn sigmoid_kernel() -> JumpKernel {
    let rate = RateExpr::Sigmoid { c0: 1.0, c1: 0.5, a: vec![1.0], b: 0.0 };
    JumpKernel::new(1, vec![Atom { z: vec![1.0], rate }], 1.5).unwrap()
}

fn within(est: &McEstimate, target: f64, k: f64) -> bool {
    (est.mean - target).abs() <= k * est.stderr
}

#[test]
fn unit_jump_moments() {
    let k = JumpKernel::unit_jump(1.0);
    for (h, t) in [(0.5, 1.0), (0.1, 2.0)] {
        let cfg = SimConfig::new(h, t, vec![0.3], 100_000, 21);
        let mean = estimate_semigroup(&k, &cfg, &Observable::Coordinate { index: 0 }).unwrap();
        assert!(within(&mean, 0.3, 4.0), "mean {mean:?}");

        // second moment of the displacement from per-path terminal states
        let sq: Vec<f64> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let traj = sample_path(&k, &cfg, i).unwrap();
                let d = traj.states.last().unwrap()[0] - 0.3;
                d * d
            })
            .collect();
        let est = McEstimate::from_samples(&sq.iter().map(|v| Some(*v)).collect::<Vec<_>>(), 0).unwrap();
        assert!(within(&est, h * t, 4.0), "h={h} t={t}: var {est:?}");
    }
}

#[test]
fn unit_jump_law_is_shifted_poisson() {
    let k = JumpKernel::unit_jump(1.0);
    let cfg = SimConfig::new(1.0, 1.0, vec![0.0], 100_000, 22);
    let counts: Vec<usize> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_path(&k, &cfg, i).unwrap().states.last().unwrap()[0];
            let n = (x + 1.0).round();
            assert!((x + 1.0 - n).abs() < 1e-12);
            (n as usize).min(4)
        })
        .collect();
    let mut observed = [0f64; 5];
    for c in counts {
        observed[c] += 1.0;
    }
    let e1 = (-1.0f64).exp();
    let p = [e1, e1, e1 / 2.0, e1 / 6.0, 1.0 - e1 * (1.0 + 1.0 + 0.5 + 1.0 / 6.0)];
    let n = cfg.n_paths as f64;
    let chi2: f64 = observed.iter().zip(&p).map(|(o, q)| (o - n * q).powi(2) / (n * q)).sum();
    // 99th percentile of chi-square with 4 degrees of freedom
    assert!(chi2 < 13.2767, "chi2 = {chi2}, counts {observed:?}");
}

#[test]
fn plain_estimate_matches_exact_law() {
    let k = JumpKernel::unit_jump(1.0);
    let cfg = SimConfig::new(1.0, 1.0, vec![0.0], 100_000, 23);
    // the state is N - 1 with N ~ Poisson(1)
    let at_least_one = Observable::HalfSpace { normal: vec![1.0], threshold: 0.0 };
    let at_least_two = Observable::HalfSpace { normal: vec![1.0], threshold: 1.0 };
    let one = estimate_semigroup(&k, &cfg, &at_least_one).unwrap();
    let two = estimate_semigroup(&k, &cfg, &at_least_two).unwrap();
    assert!(within(&one, 1.0 - (-1.0f64).exp(), 4.0), "{one:?}");
    assert!(within(&two, 1.0 - 2.0 * (-1.0f64).exp(), 4.0), "{two:?}");
}

#[test]
fn martingale_is_flat_in_time() {
    for k in [JumpKernel::unit_jump(1.0), sigmoid_kernel()] {
        for t in [0.25, 0.5, 1.0] {
            let cfg = SimConfig::new(0.5, t, vec![0.0], 50_000, 24);
            let est = martingale_check(&k, &cfg, &TiltConfig::new(vec![0.5], vec![0.0])).unwrap();
            assert!(within(&est, 1.0, 3.0), "t={t}: {est:?}");
        }
    }
}

#[test]
fn tilted_and_plain_agree() {
    let mut rng = path_rng(99, 0);
    for case in 0..10 {
        let k = if case % 2 == 0 { JumpKernel::symmetric_unit(0.6) } else { sigmoid_kernel() };
        let h = rng.random_range(0.3..1.0);
        let c = rng.random_range(-0.5..0.8);
        let thr = rng.random_range(0.0..1.0);
        let cfg = SimConfig::new(h, 1.0, vec![0.0], 20_000, 100 + case);
        let f = Observable::HalfSpace { normal: vec![1.0], threshold: thr };
        let plain = estimate_semigroup(&k, &cfg, &f).unwrap();
        let tilted = sample_tilted(&k, &cfg, &TiltConfig::new(vec![c], vec![0.0]), &f).unwrap();
        let tol = 4.0 * (plain.stderr.powi(2) + tilted.stderr.powi(2)).sqrt();
        assert!((plain.mean - tilted.mean).abs() <= tol, "case {case}: {plain:?} vs {tilted:?}");
    }
}

#[test]
fn tilting_reduces_variance_on_a_rare_event() {
    let k = JumpKernel::unit_jump(1.0);
    let cfg = SimConfig::new(0.1, 1.0, vec![0.0], 100_000, 25);
    let f = Observable::HalfSpace { normal: vec![1.0], threshold: 1.5 };
    let plain = estimate_semigroup(&k, &cfg, &f).unwrap();
    let tilted = sample_tilted(&k, &cfg, &TiltConfig::new(vec![2.5f64.ln()], vec![0.0]), &f).unwrap();
    let tol = 4.0 * (plain.stderr.powi(2) + tilted.stderr.powi(2)).sqrt();
    assert!((plain.mean - tilted.mean).abs() <= tol);
    assert!(tilted.stderr * 10.0 <= plain.stderr, "{plain:?} vs {tilted:?}");
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let k = sigmoid_kernel();
    let cfg = SimConfig::new(0.2, 1.0, vec![0.0], 5_000, 26);
    let f = Observable::Indicator { target: TargetSet::interval(0.5, 3.0) };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_tilted(&k, &cfg, &TiltConfig::new(vec![0.4], vec![0.0]), &f).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn skeleton_exits_obey_the_union_bound() {
    let k = JumpKernel::unit_jump(1.0);
    let h = 0.05;
    let cfg = SimConfig::new(h, 1.0, vec![0.0], 100_000, 27);
    let skel = SkeletonConfig { delta_t: 0.1, delta: 1.0, radius: f64::INFINITY };
    let est = skeleton_event_estimate(&k, &cfg, &skel).unwrap();
    let bound = skeleton_contract_bound(&RateProfile::from_kernel(&k), &skel, h, 1.0).unwrap();
    assert!(est.mean <= bound + 4.0 * est.stderr, "{est:?} vs {bound}");

    // a tighter increment cap makes exits common, and the estimate still sits below
    let tight = SkeletonConfig { delta_t: 0.1, delta: 0.3, radius: 0.8 };
    let cfg = SimConfig::new(0.2, 1.0, vec![0.0], 20_000, 28);
    let est = skeleton_event_estimate(&k, &cfg, &tight).unwrap();
    let bound = skeleton_contract_bound(&RateProfile::from_kernel(&k), &tight, 0.2, 1.0).unwrap();
    assert!(est.mean > 0.0);
    assert!(est.mean <= bound + 4.0 * est.stderr, "{est:?} vs {bound}");
}
