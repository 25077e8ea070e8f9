//! JSON solve reports. Keys keep declaration order; floats are written with
//! 17 significant digits and non-finite values become `null`.

use lprefine::{SolverReport, Vector};
use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

/// A float that serializes as `{:.16e}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ProblemShape {
    pub n: usize,
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    pub p: Real,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StepEntry {
    pub nu: Real,
    pub kappa: Real,
    pub decrease: Real,
    pub accepted: bool,
    pub objective: Real,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveReport {
    pub algo: String,
    pub backend: String,
    pub warm_start: String,
    pub eps: Real,
    pub seed: Option<u64>,
    pub problem: ProblemShape,
    pub converged: bool,
    pub objective: Real,
    pub constraint_residual: Real,
    pub kappa_eff: Real,
    pub nu0: Real,
    pub linear_solves: usize,
    pub primal_steps: usize,
    pub width_steps: usize,
    pub refinement_steps: usize,
    pub nu_halvings: usize,
    pub woodbury_updates: usize,
    pub full_refreshes: usize,
    pub objective_trace: Vec<Real>,
    pub nu_trace: Vec<Real>,
    pub kappa_trace: Vec<Real>,
    pub steps: Vec<StepEntry>,
    pub x: Vec<Real>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex_values: Option<Vec<Real>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<Real>,
}

impl SolveReport {
    /// Copies the counters and traces of `r` into a report skeleton.
    pub fn fill(&mut self, r: &SolverReport, x: &Vector) {
        self.converged = r.converged;
        self.kappa_eff = Real(r.kappa_eff);
        self.nu0 = Real(r.nu0);
        self.linear_solves = r.linear_solves;
        self.primal_steps = r.primal_steps;
        self.width_steps = r.width_steps;
        self.refinement_steps = r.refinement_steps;
        self.nu_halvings = r.nu_halvings;
        self.woodbury_updates = r.woodbury_updates;
        self.full_refreshes = r.full_refreshes;
        self.objective_trace = reals(&r.objective_trace);
        self.nu_trace = reals(&r.nu_trace);
        self.kappa_trace = reals(&r.kappa_trace);
        self.steps = r
            .steps
            .iter()
            .map(|s| StepEntry {
                nu: Real(s.nu),
                kappa: Real(s.kappa),
                decrease: Real(s.decrease),
                accepted: s.accepted,
                objective: Real(s.objective),
            })
            .collect();
        self.x = reals(x.as_slice());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting() {
        let v = serde_json::to_string(&reals(&[0.1, -2.0, f64::NAN, f64::INFINITY])).unwrap();
        assert_eq!(v, "[1.0000000000000001e-1,-2.0000000000000000e0,null,null]");
        let back: Vec<Option<f64>> = serde_json::from_str(&v).unwrap();
        assert_eq!(back[0], Some(0.1));
    }
}
