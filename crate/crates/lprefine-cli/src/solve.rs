use std::time::Instant;

use lprefine::graph::GraphRegression;
use lprefine::residual::{complete_solve_with, CompleteOptions, Path as ResidualPath};
use lprefine::rng::{synthetic_instance, SyntheticSpec};
use lprefine::{classic_irls, irls_solve, laplacian_to_regression, objective, start_solution, Backend, LabeledGraph, Matrix, ProblemInstance, SolverReport, Vector};
use log::info;

use crate::io::{read_matrix, read_vector, ReadError};
use crate::report::{ProblemShape, Real, SolveReport};
use crate::{emit, Algo, SolveArgs, WarmStart, EXIT_IO, EXIT_OK, EXIT_SOLVER};

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Solver(#[from] lprefine::Error),
    #[error("{0}")]
    Usage(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Read(_) => EXIT_IO,
            Failure::Solver(_) | Failure::Usage(_) => EXIT_SOLVER,
        }
    }
}

struct Loaded {
    inst: ProblemInstance,
    graph: Option<GraphRegression>,
}

fn load(args: &SolveArgs) -> Result<Loaded, Failure> {
    if let (Some(gp), Some(lp)) = (&args.graph, &args.labels) {
        let text = |p: &std::path::Path| {
            std::fs::read_to_string(p).map_err(|source| ReadError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let g = LabeledGraph::parse(&text(gp)?, &text(lp)?)?;
        let reg = laplacian_to_regression(&g, args.p)?;
        let inst = reg.to_instance()?;
        return Ok(Loaded { inst, graph: Some(reg) });
    }
    if let Some(dims) = &args.synthetic {
        let &[m1, m2, n, d] = dims.as_slice() else {
            return Err(Failure::Usage(format!("--synthetic takes m1,m2,n,d; got {} values", dims.len())));
        };
        let spec = SyntheticSpec {
            m1,
            m2,
            n,
            d,
            p: args.p,
            linear: args.linear,
        };
        return Ok(Loaded {
            inst: synthetic_instance(&spec, args.seed)?,
            graph: None,
        });
    }
    let Some(np) = &args.n else {
        return Err(Failure::Usage("need --N, --graph/--labels or --synthetic".into()));
    };
    let n = read_matrix(np)?;
    let cols = n.ncols();
    let a = match &args.a {
        Some(p) => read_matrix(p)?,
        None => Matrix::zeros(0, cols),
    };
    let m = match &args.m {
        Some(p) => read_matrix(p)?,
        None => Matrix::zeros(0, cols),
    };
    let d = match &args.d {
        Some(p) => read_vector(p)?,
        None => Vector::zeros(cols),
    };
    let b = match &args.b {
        Some(p) => read_vector(p)?,
        None => Vector::zeros(a.nrows()),
    };
    Ok(Loaded {
        inst: ProblemInstance::new(a, m, n, d, b, args.p)?,
        graph: None,
    })
}

fn warm_start(inst: &ProblemInstance, ws: WarmStart, backend: Backend) -> lprefine::Result<Vector> {
    match ws {
        WarmStart::Zero => inst.min_norm_point(),
        WarmStart::L2 => inst.quadratic_start(),
        WarmStart::Homotopy => start_solution(inst.a(), inst.n_mat(), inst.b(), inst.p(), backend),
    }
}

fn require_pure(inst: &ProblemInstance, algo: &str) -> Result<(), Failure> {
    if inst.is_pure() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--algo {algo} needs d = 0 and no M")))
    }
}

fn run(args: &SolveArgs, inst: &ProblemInstance) -> Result<(Vector, SolverReport), Failure> {
    let backend: Backend = args.backend.into();
    match args.algo {
        Algo::Auto | Algo::Mwu => {
            let x0 = warm_start(inst, args.warm_start, backend)?;
            let mut opts = CompleteOptions::new(args.eps, backend);
            opts.refinement.max_linear_solves = args.max_solves;
            if args.algo == Algo::Mwu {
                opts.path = ResidualPath::Binary;
            }
            Ok(complete_solve_with(inst, &x0, &opts)?)
        }
        Algo::Irls => {
            require_pure(inst, "irls")?;
            Ok(irls_solve(inst.a(), inst.n_mat(), inst.b(), inst.p(), args.eps)?)
        }
        Algo::ClassicIrls => {
            require_pure(inst, "classic-irls")?;
            let (x, trace) = classic_irls(inst.a(), inst.n_mat(), inst.b(), inst.p(), args.max_iters)?;
            let settled = match trace.as_slice() {
                [.., prev, last] => (prev - last).abs() <= args.eps * last.abs(),
                _ => true,
            };
            let report = SolverReport {
                linear_solves: trace.len(),
                refinement_steps: trace.len() - 1,
                objective_trace: trace,
                converged: settled,
                ..Default::default()
            };
            Ok((x, report))
        }
    }
}

fn algo_name(a: Algo) -> &'static str {
    match a {
        Algo::Auto => "auto",
        Algo::Mwu => "mwu",
        Algo::Irls => "irls",
        Algo::ClassicIrls => "classic-irls",
    }
}

fn solve(args: &SolveArgs) -> Result<(SolveReport, bool), Failure> {
    let start = Instant::now();
    let loaded = load(args)?;
    let inst = &loaded.inst;
    let (x, rep) = run(args, inst)?;
    let vertex_values = loaded.graph.as_ref().map(|g| g.assemble(&g.extract(&x)));
    let mut report = SolveReport {
        algo: algo_name(args.algo).into(),
        backend: match args.backend {
            crate::BackendArg::Direct => "direct",
            crate::BackendArg::InverseMaintenance => "inverse-maintenance",
        }
        .into(),
        warm_start: match args.warm_start {
            WarmStart::Zero => "zero",
            WarmStart::L2 => "l2",
            WarmStart::Homotopy => "homotopy",
        }
        .into(),
        eps: Real(args.eps),
        seed: args.synthetic.as_ref().map(|_| args.seed),
        problem: ProblemShape {
            n: inst.dim(),
            d: inst.a().nrows(),
            m1: inst.m1(),
            m2: inst.m2(),
            p: Real(inst.p()),
        },
        converged: false,
        objective: Real(objective(inst, &x)?),
        constraint_residual: Real(inst.constraint_residual(&x)),
        kappa_eff: Real(0.0),
        nu0: Real(0.0),
        linear_solves: 0,
        primal_steps: 0,
        width_steps: 0,
        refinement_steps: 0,
        nu_halvings: 0,
        woodbury_updates: 0,
        full_refreshes: 0,
        objective_trace: Vec::new(),
        nu_trace: Vec::new(),
        kappa_trace: Vec::new(),
        steps: Vec::new(),
        x: Vec::new(),
        vertex_values: vertex_values.map(|v| crate::report::reals(v.as_slice())),
        wall_seconds: None,
    };
    report.fill(&rep, &x);
    if args.timings {
        report.wall_seconds = Some(Real(start.elapsed().as_secs_f64()));
    }
    info!("solve finished: f = {:.12e}, {} linear solves", report.objective.0, report.linear_solves);
    Ok((report, rep.converged))
}

/// Runs one solve; exit 0 on convergence, 2 on solver error or
/// non-convergence, 1 on I/O error. The report is written whenever the solver
/// returned a point.
pub fn cmd_solve(args: &SolveArgs) -> i32 {
    match solve(args) {
        Ok((report, converged)) => {
            let code = emit(args.report.as_deref(), &report.to_json());
            if code != EXIT_OK {
                code
            } else if converged {
                EXIT_OK
            } else {
                eprintln!("error: solver did not converge");
                EXIT_SOLVER
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
