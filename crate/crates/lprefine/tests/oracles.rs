//! End-to-end checks against the SVD/Newton reference solver.

use lprefine::refinement::pnorm_pow;
use lprefine::rng::{synthetic_instance, SyntheticSpec};
use lprefine::{classic_irls, complete_solve, irls_solve, laplacian_to_regression, line_search, objective, Backend, Vector};
use lprefine_testkit::{random_graph, random_instance, reference_for, relative_gap};

#[test]
fn complete_solve_reaches_reference() {
    for (seed, p) in [(1u64, 4.0), (2, 4.0), (3, 3.0), (4, 6.0)] {
        let inst = random_instance(seed, p, false);
        let r = reference_for(&inst);
        let x0 = inst.min_norm_point().unwrap();
        let (x, rep) = complete_solve(&inst, &x0, 1e-10, Backend::Direct).unwrap();
        assert!(rep.converged, "seed {seed}");
        let f = objective(&inst, &x).unwrap();
        assert!(f - r.f <= 1e-8 * (1.0 + r.f.abs()), "seed {seed}: f {f} ref {}", r.f);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: trace rose");
    }
}

#[test]
fn backends_agree() {
    let inst = random_instance(7, 4.0, false);
    let x0 = inst.min_norm_point().unwrap();
    let (xd, _) = complete_solve(&inst, &x0, 1e-10, Backend::Direct).unwrap();
    let (xm, _) = complete_solve(&inst, &x0, 1e-10, Backend::InverseMaintenance).unwrap();
    let (fd, fm) = (objective(&inst, &xd).unwrap(), objective(&inst, &xm).unwrap());
    assert!(relative_gap(fm, fd).abs() <= 1e-6);
}

#[test]
fn coarse_irls_within_half_again_of_optimum() {
    for seed in 0..5u64 {
        let spec = SyntheticSpec::pure(60, 12, 3, 5.0);
        let inst = synthetic_instance(&spec, seed).unwrap();
        let opt = reference_for(&inst).f;
        let (x, rep) = irls_solve(inst.a(), inst.n_mat(), inst.b(), 5.0, 0.5).unwrap();
        assert!(objective(&inst, &x).unwrap() <= 1.5 * opt, "seed {seed}");
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

#[test]
fn classic_irls_converges_near_two() {
    let spec = SyntheticSpec::pure(40, 8, 2, 2.5);
    let inst = synthetic_instance(&spec, 11).unwrap();
    let opt = reference_for(&inst).f;
    let (x, trace) = classic_irls(inst.a(), inst.n_mat(), inst.b(), 2.5, 200).unwrap();
    assert!(relative_gap(objective(&inst, &x).unwrap(), opt) <= 1e-6);
    assert!(trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
}

#[test]
fn line_search_matches_grid() {
    for (seed, p) in [(3u64, 3.0), (5, 4.0), (8, 7.5)] {
        let inst = random_instance(seed, p, true);
        let n = inst.n_mat();
        let x = inst.quadratic_start().unwrap();
        let delta = &x * 0.3 + Vector::from_fn(x.len(), |i, _| ((i * 7 + 3) % 5) as f64 * 0.1 - 0.2);
        let beta = line_search(n, &x, &delta, p);
        let val = |b: f64| pnorm_pow(&(n * (&x - &delta * b)), p);
        let hi = 4.0 * p;
        let grid = (0..=10_000).map(|k| val(hi * k as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
        assert!(val(beta) <= grid * (1.0 + 1e-9), "seed {seed}: {} vs grid {grid}", val(beta));
    }
}

#[test]
fn graph_solve_matches_reference() {
    let g = random_graph(42, 30, 40, 5);
    let reg = laplacian_to_regression(&g, 4.0).unwrap();
    let inst = reg.to_instance().unwrap();
    let r = reference_for(&inst);
    let z0 = inst.min_norm_point().unwrap();
    let (z, rep) = complete_solve(&inst, &z0, 1e-10, Backend::Direct).unwrap();
    assert!(rep.converged);
    let f = reg.residual_norm(&reg.extract(&z));
    assert!(relative_gap(f, r.f) <= 1e-8, "f {f} ref {}", r.f);
}
