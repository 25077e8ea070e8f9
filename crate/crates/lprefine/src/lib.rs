//! High-accuracy `ℓp`-norm regression.
//!
//! Solves `min dᵀx + ‖Mx‖₂² + ‖Nx‖ₚᵖ  s.t.  Ax = b` for `p ≥ 2` by iterative
//! refinement: each outer step approximately maximizes a local residual
//! model, here with a width-reduced multiplicative-weights routine or with
//! padded IRLS. Graph label propagation under the `p`-Laplacian is handled
//! through a rewrite into the same form.
//!
//! ```
//! use lprefine::{complete_solve, Backend, Matrix, ProblemInstance, Vector};
//!
//! // min ‖x‖₄⁴ subject to x₁ + x₂ + x₃ = 3
//! let inst = ProblemInstance::new(
//!     Matrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
//!     Matrix::zeros(0, 3),
//!     Matrix::identity(3, 3),
//!     Vector::zeros(3),
//!     Vector::from_element(1, 3.0),
//!     4.0,
//! )?;
//! let x0 = inst.min_norm_point()?;
//! let (x, report) = complete_solve(&inst, &x0, 1e-10, Backend::Direct)?;
//! assert!((x[0] - 1.0).abs() < 1e-6);
//! assert!(report.converged);
//! # Ok::<(), lprefine::Error>(())
//! ```

pub mod error;
pub mod graph;
pub mod homotopy;
pub mod inverse;
pub mod irls;
pub mod linalg;
pub mod mwu;
pub mod refinement;
pub mod residual;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{build_incidence, laplacian_to_regression, GraphRegression, LabeledGraph};
pub use homotopy::start_solution;
pub use inverse::{inverse_init, maintained_oracle_solve, update_inverse, InverseState};
pub use irls::{classic_irls, irls_residual, irls_solve, line_search, IrlsStep};
pub use linalg::{constrained_least_squares, energy, min_quadratic_under_constraints, preconditioned_solve, Matrix, QuadraticForm, Vector};
pub use mwu::{compute_params, mwu_solve, oracle_step, phi, psi, Backend, MwuOptions, MwuParams, MwuProblem, MwuState};
pub use refinement::{
    build_residual, eval_residual, gamma_p, iterative_refinement, objective, ProblemInstance, RefinementOptions, ResidualProblem,
    ResidualSolver, SolverReport, Tolerance,
};
pub use residual::{complete_solve, complete_solve_with, logm_residual_solve, p_to_q_residual, residual_solve, scale_per_lemma_binary, CompleteOptions, Path};
