//! Values frozen from a 50-digit evaluation of a small hand-written instance.
//! Inputs are the binary doubles of the decimals below, so agreement is
//! expected to roughly 1e-15 relative.

use approx::assert_relative_eq;
use lprefine::mwu::phi;
use lprefine::{build_residual, eval_residual, objective, Matrix, ProblemInstance, Vector};

fn instance(p: f64) -> ProblemInstance {
    let a = Matrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
    let m = Matrix::from_row_slice(2, 3, &[0.3, -0.2, 0.1, 0.0, 0.4, -0.5]);
    let n = Matrix::from_row_slice(4, 3, &[1.0, -0.5, 0.25, 0.2, 0.3, -0.7, -1.1, 0.6, 0.9, 0.5, 0.5, 0.5]);
    let d = Vector::from_vec(vec![0.1, -0.3, 0.2]);
    let b = Vector::from_element(1, 0.5);
    ProblemInstance::new(a, m, n, d, b, p).unwrap()
}

fn x() -> Vector {
    Vector::from_vec(vec![0.7, -0.4, -0.6])
}

fn step() -> Vector {
    Vector::from_vec(vec![0.1, 0.05, 0.2])
}

struct Frozen {
    p: f64,
    f: f64,
    g: [f64; 3],
    r: [[f64; 3]; 3],
    res: f64,
}

const CASES: [Frozen; 2] = [
    Frozen {
        p: 3.0,
        f: 4.3768089999999999935,
        g: [3.3120533333333335312, -1.7692533333333332992, -2.1330616666666667148],
        r: [
            [5.381200000000000587, -2.6815333333333334033, -2.7355333333333336678],
            [-2.6815333333333334033, 1.6896444444444443579, 1.3278111111111111552],
            [-2.7355333333333336678, 1.3278111111111111552, 3.1687277777777778282],
        ],
        res: -0.26844456944444444669,
    },
    Frozen {
        p: 4.0,
        f: 6.2688997100000000886,
        g: [4.592986800000000365, -2.4913947999999999529, -3.2808350500000001349],
        r: [
            [6.9770380000000009399, -3.7068180000000001437, -4.5149080000000005754],
            [-3.7068180000000001437, 2.0821479999999998722, 2.3565130000000000422],
            [-4.5149080000000005754, 2.3565130000000000422, 4.1958405000000001827],
        ],
        res: -0.39511678187500000703,
    },
];

#[test]
fn objective_matches_high_precision() {
    for c in &CASES {
        assert_relative_eq!(objective(&instance(c.p), &x()).unwrap(), c.f, max_relative = 1e-14);
    }
}

#[test]
fn residual_problem_matches_high_precision() {
    for c in &CASES {
        let rp = build_residual(&instance(c.p), &x()).unwrap();
        for j in 0..3 {
            assert_relative_eq!(rp.g[j], c.g[j], max_relative = 1e-14);
        }
        let gram = rp.r.gram();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(gram[(i, j)], c.r[i][j], max_relative = 1e-13);
            }
        }
        assert_relative_eq!(eval_residual(&rp, &step()).unwrap(), c.res, max_relative = 1e-13);
    }
}

#[test]
fn phi_matches_high_precision() {
    let w = Vector::from_vec(vec![1.0, 1.5, 0.25, 2.0]);
    assert_relative_eq!(phi(&w, 4.0), 22.06640625, max_relative = 1e-15);
    assert_relative_eq!(phi(&w, 3.5), 16.455034939931373431, max_relative = 1e-14);
}
