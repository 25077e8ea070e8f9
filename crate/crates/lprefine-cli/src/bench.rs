//! Seeded benchmark sweeps. Each row pairs measured counts with the MWU
//! budgets `T` and `K̄` for the same `m` and `p`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use lprefine::linalg::QuadraticForm;
use lprefine::mwu::{compute_params, mwu_solve, MwuOptions, MwuProblem};
use lprefine::residual::{complete_solve_with, CompleteOptions};
use lprefine::rng::{synthetic_instance, SplitMix64, SyntheticSpec};
use lprefine::refinement::pnorm_pow;
use lprefine::{objective, Backend};

use crate::{emit, BenchArgs, BenchMode, EXIT_OK, EXIT_SOLVER};

/// Status of a row whose exponent the mode cannot run (MWU needs `p > 2`).
pub const UNSUPPORTED: &str = "unsupported";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case {
    pub m: usize,
    pub p: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Row {
    pub status: String,
    pub iterations: Option<usize>,
    pub width_steps: Option<usize>,
    pub linear_solves: Option<usize>,
    pub objective: Option<f64>,
    pub t: Option<usize>,
    pub k_bar: Option<usize>,
    pub seconds: f64,
}

/// Cases in suite order: exponent, then row count, then seed.
pub fn cases(args: &BenchArgs) -> Vec<Case> {
    let mut out = Vec::new();
    for &p in &args.p {
        for &m in &args.m {
            for &seed in &args.seeds {
                out.push(Case { m, p, seed });
            }
        }
    }
    out
}

fn run_mwu(args: &BenchArgs, c: &Case, row: &mut Row) -> lprefine::Result<()> {
    let mut rng = SplitMix64::new(c.seed);
    let a = rng.normal_matrix(args.d, args.n);
    let n = rng.normal_matrix(c.m, args.n);
    let star = rng.normal_vector(args.n);
    let rhs = &a * &star;
    let zeta = pnorm_pow(&(&n * &star), c.p);
    let m = QuadraticForm::new(args.n);
    let pr = MwuProblem {
        a: &a,
        m: &m,
        n: &n,
        c: &rhs,
        zeta,
        p: c.p,
    };
    let opts = MwuOptions {
        backend: args.backend.into(),
        instrument: false,
        width_reduction: true,
    };
    let out = mwu_solve(&pr, &opts)?;
    row.iterations = Some(out.state.i);
    row.width_steps = Some(out.state.k);
    row.linear_solves = Some(out.stats.linear_solves);
    row.objective = Some(pnorm_pow(&(&n * &out.x), c.p) / zeta);
    Ok(())
}

fn run_complete(args: &BenchArgs, c: &Case, row: &mut Row) -> lprefine::Result<()> {
    let spec = SyntheticSpec::pure(c.m, args.n, args.d, c.p);
    let inst = synthetic_instance(&spec, c.seed)?;
    let backend: Backend = args.backend.into();
    let mut opts = CompleteOptions::new(args.eps, backend);
    opts.refinement.max_linear_solves = args.max_solves;
    let x0 = inst.min_norm_point()?;
    let (x, rep) = complete_solve_with(&inst, &x0, &opts)?;
    row.iterations = Some(rep.refinement_steps);
    row.width_steps = Some(rep.width_steps);
    row.linear_solves = Some(rep.linear_solves);
    row.objective = Some(objective(&inst, &x)?);
    Ok(())
}

pub fn run_case(args: &BenchArgs, c: &Case) -> Row {
    let start = Instant::now();
    let mut row = Row::default();
    if let Ok(params) = compute_params(c.m, c.p) {
        row.t = Some(params.t);
        row.k_bar = Some(params.k_bar);
    }
    let res = match args.mode {
        BenchMode::Mwu => run_mwu(args, c, &mut row),
        BenchMode::Complete => run_complete(args, c, &mut row),
    };
    row.status = match res {
        Ok(()) => "ok".into(),
        Err(lprefine::Error::UnsupportedExponent(_)) => UNSUPPORTED.into(),
        Err(e) => e.to_string(),
    };
    row.seconds = start.elapsed().as_secs_f64();
    row
}

/// Runs every case on `jobs` workers; rows come back in case order.
pub fn run_suite(args: &BenchArgs, cases: &[Case]) -> Vec<Row> {
    let slots: Mutex<Vec<Option<Row>>> = Mutex::new(vec![None; cases.len()]);
    let next = AtomicUsize::new(0);
    let workers = args.jobs.clamp(1, cases.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(c) = cases.get(i) else { break };
                let row = run_case(args, c);
                slots.lock().expect("no worker panicked")[i] = Some(row);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every case ran")).collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(args: &BenchArgs, cases: &[Case], rows: &[Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["mode", "m", "n", "p", "seed", "status", "iterations", "width_steps", "linear_solves", "objective", "T", "K_bar"];
    if args.timings {
        header.push("wall_seconds");
    }
    w.write_record(&header).expect("in-memory write");
    let mode = match args.mode {
        BenchMode::Mwu => "mwu",
        BenchMode::Complete => "complete",
    };
    for (c, r) in cases.iter().zip(rows) {
        let mut rec = vec![
            mode.to_string(),
            c.m.to_string(),
            args.n.to_string(),
            c.p.to_string(),
            c.seed.to_string(),
            r.status.clone(),
            opt(r.iterations),
            opt(r.width_steps),
            opt(r.linear_solves),
            r.objective.map(|v| format!("{v:.16e}")).unwrap_or_default(),
            opt(r.t),
            opt(r.k_bar),
        ];
        if args.timings {
            rec.push(format!("{:.6}", r.seconds));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
}

/// Exit 0 unless some row reports a solver error (exit 2).
pub fn cmd_bench(args: &BenchArgs) -> i32 {
    let cases = cases(args);
    let rows = run_suite(args, &cases);
    let code = emit(args.out.as_deref(), &to_csv(args, &cases, &rows));
    if code != EXIT_OK {
        return code;
    }
    let failed = rows.iter().filter(|r| r.status != "ok" && r.status != UNSUPPORTED).count();
    if failed > 0 {
        eprintln!("error: {failed} of {} cases failed", rows.len());
        EXIT_SOLVER
    } else {
        EXIT_OK
    }
}
