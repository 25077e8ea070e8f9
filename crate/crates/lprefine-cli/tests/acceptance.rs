//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p lprefine-cli --test acceptance`.

use std::f64::consts::E;
use std::process::ExitCode;
use std::time::Instant;

use lprefine::graph::p_laplacian;
use lprefine::homotopy::start_solution;
use lprefine::mwu::{compute_params, mwu_solve, MwuOptions, MwuProblem};
use lprefine::refinement::{abs_pow, build_residual, default_nu0, eval_residual, gamma_p, pnorm_pow, ProblemInstance, SolverReport};
use lprefine::residual::logm_residual_solve;
use lprefine::rng::SplitMix64;
use lprefine::{classic_irls, complete_solve, irls_solve, laplacian_to_regression, objective, Backend, LabeledGraph, Matrix, Vector};
use lprefine_testkit::{planted_mwu, random_graph, random_instance, reference_for, reference_residual_max, PlantedMwu};

#[path = "support/cli_determinism.rs"]
mod cli_determinism;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

const SUITE_P: [f64; 4] = [2.0, 3.0, 4.0, 8.0];
const EPS: f64 = 1e-10;

struct SuiteRun {
    p: f64,
    f_ref: f64,
    kkt: f64,
    f: Result<f64, String>,
    report: Option<SolverReport>,
    irls_f_ref: f64,
    irls_f: Result<f64, String>,
}

fn suite_one() -> Vec<SuiteRun> {
    let seeds: Vec<u64> = (0..30).collect();
    let mut out: Vec<Option<SuiteRun>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let p = SUITE_P[seed as usize % 4];
                    let inst = random_instance(seed, p, false);
                    let r = reference_for(&inst);
                    let x0 = inst.min_norm_point().unwrap();
                    let (f, report) = match complete_solve(&inst, &x0, EPS, Backend::Direct) {
                        Ok((x, rep)) => (Ok(objective(&inst, &x).unwrap()), Some(rep)),
                        Err(e) => (Err(e.to_string()), None),
                    };
                    let pure = pure_of(&inst);
                    let pr = reference_for(&pure);
                    let irls_f = irls_solve(pure.a(), pure.n_mat(), pure.b(), p, EPS)
                        .map(|(x, _)| objective(&pure, &x).unwrap())
                        .map_err(|e| e.to_string());
                    SuiteRun {
                        p,
                        f_ref: r.f,
                        kkt: r.kkt.max(pr.kkt),
                        f,
                        report,
                        irls_f_ref: pr.f,
                        irls_f,
                    }
                })
            })
            .collect();
        for (i, h) in handles.into_iter().enumerate() {
            out[i] = Some(h.join().expect("suite worker panicked"));
        }
    });
    out.into_iter().map(Option::unwrap).collect()
}

fn pure_of(inst: &ProblemInstance) -> ProblemInstance {
    let n = inst.dim();
    ProblemInstance::new(inst.a().clone(), Matrix::zeros(0, n), inst.n_mat().clone(), Vector::zeros(n), inst.b().clone(), inst.p()).unwrap()
}

fn within(f: f64, f_ref: f64, rel: f64) -> bool {
    f - f_ref <= rel * f_ref.abs()
}

fn criterion_1(runs: &[SuiteRun]) -> Verdict {
    let kkt_ok = runs.iter().all(|r| r.kkt <= 1e-10);
    let cs = runs.iter().filter(|r| matches!(r.f, Ok(f) if within(f, r.f_ref, 1e-6))).count();
    let ir = runs.iter().filter(|r| matches!(r.irls_f, Ok(f) if within(f, r.irls_f_ref, 1e-6))).count();
    let worst = runs
        .iter()
        .filter_map(|r| r.f.as_ref().ok().map(|f| (f - r.f_ref) / r.f_ref.abs()))
        .fold(f64::NEG_INFINITY, f64::max);
    let max_kkt = runs.iter().map(|r| r.kkt).fold(0.0, f64::max);
    Verdict::new(
        kkt_ok && cs == runs.len() && ir == runs.len(),
        format!(
            "complete_solve {cs}/{n}, irls_solve {ir}/{n}, worst relative gap {worst:.2e}, reference KKT <= {max_kkt:.1e}",
            n = runs.len()
        ),
    )
}

fn criterion_5(runs: &[SuiteRun]) -> Verdict {
    let mut checked = 0usize;
    let mut bad_steps = 0usize;
    let mut bad_halvings = 0usize;
    for r in runs {
        let Some(rep) = &r.report else {
            bad_halvings += 1;
            continue;
        };
        let floor = 1e-8 * (1.0 + r.f_ref.abs());
        let ceiling = (rep.nu0 / EPS).log2().ceil().max(0.0) as usize;
        if rep.nu_halvings > ceiling {
            bad_halvings += 1;
        }
        // Objective trace holds f after each accepted step, in order.
        let mut f_prev = rep.objective_trace[0];
        let mut accepted = rep.steps.iter().filter(|s| s.accepted);
        for &f_next in &rep.objective_trace[1..] {
            let kappa = accepted.next().map_or(1.0, |s| s.kappa);
            let (gap, gap_next) = (f_prev - r.f_ref, f_next - r.f_ref);
            if gap > floor {
                checked += 1;
                if gap_next > gap * (1.0 - 1.0 / (32.0 * r.p * kappa)) {
                    bad_steps += 1;
                }
            }
            f_prev = f_next;
        }
    }
    Verdict::new(
        bad_steps == 0 && bad_halvings == 0,
        format!("{checked} accepted steps checked, {bad_steps} with too little gap shrinkage, {bad_halvings} runs over the halving ceiling"),
    )
}

fn planted_suite() -> Vec<PlantedMwu> {
    (0..20u64)
        .map(|seed| {
            let p = [3.0, 4.0, 6.0][seed as usize % 3];
            let mut shape = SplitMix64::new(0xC0FFEE + seed);
            let dim = 6 + shape.below(15);
            let d = 1 + shape.below(dim / 3);
            let m1 = shape.below(2) * (1 + shape.below(20));
            let m2 = dim + shape.below(100);
            planted_mwu(seed, dim, d, m1, m2, p)
        })
        .collect()
}

fn criterion_2_3() -> (Verdict, Verdict) {
    let opts = MwuOptions {
        instrument: true,
        ..Default::default()
    };
    let mut ok2 = 0;
    let mut worst_m = 0.0f64;
    let mut worst_n = 0.0f64;
    let mut fail3 = Vec::new();
    let mut checks3 = 0usize;
    let mut gains = 0usize;
    let mut checks3_width = 0usize;
    let suite = planted_suite();
    for (idx, pl) in suite.iter().enumerate() {
        let pr = MwuProblem {
            a: &pl.a,
            m: &pl.m,
            n: &pl.n,
            c: &pl.c,
            zeta: pl.zeta,
            p: pl.p,
        };
        let out = match mwu_solve(&pr, &opts) {
            Ok(o) => o,
            Err(e) => {
                fail3.push(format!("run {idx}: {e}"));
                continue;
            }
        };
        let params = compute_params(pl.n.nrows(), pl.p).unwrap();
        let mm = pl.m.eval(&out.x) / pl.zeta;
        let nn = pnorm_pow(&(&pl.n * &out.x), pl.p) / (E * 3f64.powf(pl.p) * pl.zeta);
        let feas = (&pl.a * &out.x - &pl.c).amax() <= 1e-8 * (1.0 + pl.c.amax());
        worst_m = worst_m.max(mm / 4.0);
        worst_n = worst_n.max(nn);
        if feas && mm <= 4.0 && nn <= 1.0 && out.state.i <= params.t && out.state.k <= params.k_bar && out.params == params {
            ok2 += 1;
        }
        let slack = 1.0 + 1e-6;
        for (j, rec) in out.trace.iter().enumerate() {
            checks3 += 1;
            checks3_width += rec.width as usize;
            let (i_after, k_after) = if rec.width { (rec.i, rec.k + 1) } else { (rec.i + 1, rec.k) };
            if rec.phi_after > params.phi_cap(i_after, k_after) * slack {
                fail3.push(format!("run {idx} step {j}: phi cap"));
            }
            if rec.psi > params.psi_ceiling(pl.zeta, rec.phi) * slack {
                fail3.push(format!("run {idx} step {j}: psi ceiling"));
            }
            if rec.width && params.width_gain_applies(pl.zeta, rec.psi) {
                gains += 1;
                if let Some(next) = out.trace.get(j + 1) {
                    if next.psi * slack < rec.psi + params.width_gain(pl.zeta) {
                        fail3.push(format!("run {idx} step {j}: width gain"));
                    }
                }
            }
        }
    }
    let v2 = Verdict::new(
        ok2 == suite.len(),
        format!(
            "{ok2}/{} runs within bounds; max xᵀMᵀMx/(4ζ) = {worst_m:.3}, max ‖Nx‖ₚᵖ/(e3ᵖζ) = {worst_n:.3e}",
            suite.len()
        ),
    );
    let widths: usize = checks3_width;
    let v3 = Verdict::new(
        fail3.is_empty(),
        format!(
            "{checks3} iterations checked, {widths} width steps, {gains} with gain preconditions met{}, {} violations{}",
            if gains == 0 { " (gain clause not exercised)" } else { "" },
            fail3.len(),
            fail3.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
        ),
    );
    (v2, v3)
}

fn criterion_4() -> Verdict {
    let mut rng = SplitMix64::new(4);
    let mut bad_large = 0;
    let mut bad_small = 0;
    let tol = 1e-10;
    for _ in 0..100_000 {
        let p = rng.uniform_in(2.0, 16.0);
        let x = rng.uniform_in(-3.0, 3.0);
        let dl = rng.uniform_in(-3.0, 3.0);
        let mid = abs_pow(x + dl, p) - abs_pow(x, p) - p * abs_pow(x, p - 2.0) * x * dl;
        let lo = p / 8.0 * abs_pow(x, p - 2.0) * dl * dl + 2f64.powf(-(p + 1.0)) * abs_pow(dl, p);
        let hi = 2.0 * p * p * abs_pow(x, p - 2.0) * dl * dl + p.powf(p) * abs_pow(dl, p);
        let scale = tol * (abs_pow(x + dl, p) + abs_pow(x, p) + p * abs_pow(x, p - 1.0) * dl.abs()).max(f64::MIN_POSITIVE);
        if lo > mid + scale || mid > hi + scale {
            bad_large += 1;
        }
    }
    for _ in 0..100_000 {
        let p = rng.uniform_in(1.0, 2.0).max(1.0 + 1e-9);
        let x = rng.uniform_in(-3.0, 3.0);
        let dl = rng.uniform_in(-3.0, 3.0);
        let lin = abs_pow(x, p) + p * abs_pow(x, p - 2.0) * x * dl;
        let g = gamma_p(x.abs(), dl, p);
        let val = abs_pow(x + dl, p);
        let lo = lin + (p - 1.0) / (p * 2f64.powf(p)) * g;
        let hi = lin + 2f64.powf(p) * g;
        let scale = tol * (val + abs_pow(x, p) + p * abs_pow(x, p - 1.0) * dl.abs() + g).max(f64::MIN_POSITIVE);
        if lo > val + scale || val > hi + scale {
            bad_small += 1;
        }
    }
    Verdict::new(
        bad_large == 0 && bad_small == 0,
        format!("p ∈ [2,16]: {bad_large} violations in 1e5; p ∈ (1,2): {bad_small} violations in 1e5"),
    )
}

fn criterion_6() -> Verdict {
    let mut ok = 0;
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let inst = random_instance(100 + seed, 8.0, true);
        let x0 = match start_solution(inst.a(), inst.n_mat(), inst.b(), 8.0, Backend::Direct) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let opt = reference_for(&inst).f;
        let ratio = pnorm_pow(&(inst.n_mat() * &x0), 8.0) / (16.0 * inst.m() as f64 * opt);
        worst = worst.max(ratio);
        if ratio <= 1.0 && inst.constraint_residual(&x0) <= 1e-9 * (1.0 + inst.b().amax()) {
            ok += 1;
        }
    }
    Verdict::new(ok == 10, format!("{ok}/10 starts within 16·m·OPT (max ratio {worst:.3e})"))
}

fn criterion_7() -> Verdict {
    let mut ok = 0;
    let mut worst = f64::INFINITY;
    for seed in 0..10u64 {
        let mut shape = SplitMix64::new(700 + seed);
        let n = 10 + shape.below(20);
        let spec = lprefine::rng::SyntheticSpec::pure(64, n, 1 + shape.below(3), 12.0);
        let inst = lprefine::rng::synthetic_instance(&spec, 700 + seed).unwrap();
        let x = inst.min_norm_point().unwrap();
        let rp = build_residual(&inst, &x).unwrap();
        let (_, res_star) = reference_residual_max(&rp);
        let nu = default_nu0(&inst, &x).unwrap();
        let Ok(out) = logm_residual_solve(&inst, &x, &rp, nu, &MwuOptions::default()) else {
            continue;
        };
        // First candidate of each probe is the back-scaled q-solution.
        let got = out
            .probes
            .iter()
            .filter_map(|pr| pr.candidates.first())
            .map(|c| eval_residual(&rp, c).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let target = res_star * 64f64.powf(-1.0 / 11.0);
        worst = worst.min(got / target);
        if got >= target / 16384.0 {
            ok += 1;
        }
    }
    Verdict::new(ok == 10, format!("{ok}/10 instances; smallest res_p/(res_p(Δ*)·m^(-1/(p-1))) = {worst:.3e} (floor 2^-14 = {:.3e})", 1.0 / 16384.0))
}

fn criterion_8() -> Verdict {
    let mut ok = 0;
    let mut worst = 0.0f64;
    let mut ledger_bad = 0;
    let mut woodbury = 0;
    let mut refreshes = 0;
    let runs = 4u64;
    for seed in 0..runs {
        let pl = planted_mwu(800 + seed, 24, 3, 8, 256, 4.0);
        let pr = MwuProblem {
            a: &pl.a,
            m: &pl.m,
            n: &pl.n,
            c: &pl.c,
            zeta: pl.zeta,
            p: 4.0,
        };
        let run = |b| {
            mwu_solve(
                &pr,
                &MwuOptions {
                    backend: b,
                    instrument: true,
                    width_reduction: true,
                },
            )
        };
        let (Ok(direct), Ok(maint)) = (run(Backend::Direct), run(Backend::InverseMaintenance)) else {
            continue;
        };
        let val = |x: &Vector| pl.m.eval(x) + pnorm_pow(&(&pl.n * x), 4.0);
        let rel = (val(&maint.x) - val(&direct.x)).abs() / val(&direct.x);
        worst = worst.max(rel);
        let lnm = 256f64.ln();
        for rec in &maint.trace {
            if let Some((lo, hi)) = rec.approx_ratio {
                if lo < 1.0 - 1e-12 || hi > 5.0 * lnm * (1.0 + 1e-12) {
                    ledger_bad += 1;
                }
            }
        }
        if let Some(st) = &maint.inverse {
            woodbury = woodbury.max(st.woodbury_updates);
            refreshes += st.full_refreshes;
        }
        if rel <= 1e-6 {
            ok += 1;
        }
    }
    Verdict::new(
        ok == runs && ledger_bad == 0 && woodbury >= 1,
        format!("{ok}/{runs} runs agree (max relative difference {worst:.2e}); ledger violations {ledger_bad}; max Woodbury updates per run {woodbury}; full refreshes {refreshes}"),
    )
}

fn criterion_9() -> Verdict {
    let mut converged = 0;
    let mut nonmonotone = 0;
    let mut worst = 0.0f64;
    let seeds: Vec<u64> = (0..50).collect();
    let results: Vec<(bool, bool, f64)> = std::thread::scope(|s| {
        let hs: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let spec = lprefine::rng::SyntheticSpec::pure(100, 50, 5, 3.5);
                    let inst = lprefine::rng::synthetic_instance(&spec, 900 + seed).unwrap();
                    let r = reference_for(&inst);
                    let rel = match irls_solve(inst.a(), inst.n_mat(), inst.b(), 3.5, 1e-10) {
                        Ok((x, _)) => (objective(&inst, &x).unwrap() - r.f) / r.f,
                        Err(_) => f64::INFINITY,
                    };
                    let (_, trace) = classic_irls(inst.a(), inst.n_mat(), inst.b(), 3.5, 60).unwrap();
                    let up = trace.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-6));
                    (rel <= 1e-8, up, rel)
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (c, up, rel) in results {
        converged += c as usize;
        nonmonotone += up as usize;
        worst = worst.max(rel);
    }
    Verdict::new(
        converged == 50 && nonmonotone >= 1,
        format!("irls_solve converged on {converged}/50 (worst relative gap {worst:.2e}); classic IRLS nonmonotone on {nonmonotone}/50"),
    )
}

fn criterion_10() -> Verdict {
    let path = LabeledGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)], vec![(0, 0.0), (2, 1.0)]).unwrap();
    let mut path_ok = 0;
    for p in [2.0, 4.0, 8.0] {
        if let Some(x) = solve_graph(&path, p) {
            if (x[1] - 0.5).abs() <= 1e-8 {
                path_ok += 1;
            }
        }
    }
    let mut mp_ok = 0;
    for seed in 0..10u64 {
        let g = random_graph(1000 + seed, 25, 30, 4);
        let lo = g.labels.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
        let hi = g.labels.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        if let Some(x) = solve_graph(&g, 4.0) {
            if x.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9) {
                mp_ok += 1;
            }
        }
    }
    Verdict::new(path_ok == 3 && mp_ok == 10, format!("path midpoint {path_ok}/3 exponents; maximum principle {mp_ok}/10 graphs"))
}

fn solve_graph(g: &LabeledGraph, p: f64) -> Option<Vector> {
    let reg = laplacian_to_regression(g, p).ok()?;
    let inst = reg.to_instance().ok()?;
    let z0 = inst.min_norm_point().ok()?;
    let (z, _) = complete_solve(&inst, &z0, 1e-15, Backend::Direct).ok()?;
    let values = reg.assemble(&reg.extract(&z));
    let _ = p_laplacian(g, &values, p);
    Some(values)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut verdicts: Vec<(u8, &str, Verdict, f64)> = Vec::new();
    // Serial so the per-criterion timings mean something.
    let (runs, t1) = timed(suite_one);
    verdicts.push((1, "optimality oracle equivalence", criterion_1(&runs), t1));
    let ((v2, v3), t2) = timed(criterion_2_3);
    verdicts.push((2, "MWU output contract", v2, t2));
    verdicts.push((3, "potential ledger", v3, t2));
    let (v, t) = timed(criterion_4);
    verdicts.push((4, "sandwich-inequality fuzz", v, t));
    verdicts.push((5, "refinement geometry", criterion_5(&runs), t1));
    let (v, t) = timed(criterion_6);
    verdicts.push((6, "homotopy quality", v, t));
    let (v, t) = timed(criterion_7);
    verdicts.push((7, "p to q reduction", v, t));
    let (v, t) = timed(criterion_8);
    verdicts.push((8, "inverse maintenance equivalence", v, t));
    let (v, t) = timed(criterion_9);
    verdicts.push((9, "IRLS convergence vs classic", v, t));
    let (v, t) = timed(criterion_10);
    verdicts.push((10, "graph path", v, t));
    let ((pass, detail), t) = timed(cli_determinism::criterion_11);
    verdicts.push((11, "determinism", Verdict::new(pass, detail), t));
    let mut failed = 0;
    for (id, name, v, secs) in &verdicts {
        println!("criterion {id:>2} [{name}] {} ({secs:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += (!v.pass) as usize;
    }
    println!("{} of {} criteria passed in {:.1}s", verdicts.len() - failed, verdicts.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
