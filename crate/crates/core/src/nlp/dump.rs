//! Serializable snapshot of an assembled problem for inspection.

use serde::Serialize;

use super::NlpProblem;

#[derive(Debug, Clone, Serialize)]
pub struct NlpDumpVariable {
    pub name: String,
    /// `None` encodes an infinite bound.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub start: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NlpDumpBlock {
    pub name: String,
    pub kind: &'static str,
    pub rows: usize,
    pub jacobian_nonzeros: usize,
    pub hessian_nonzeros: usize,
    pub row_labels: Vec<String>,
    pub residual_at_start: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NlpDump {
    pub n_variables: usize,
    pub n_constraints: usize,
    pub objective_at_start: f64,
    pub variables: Vec<NlpDumpVariable>,
    pub blocks: Vec<NlpDumpBlock>,
}

impl NlpDump {
    pub fn new(problem: &NlpProblem, start: &[f64]) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        let v = &problem.variables;
        let variables = (0..v.len())
            .map(|i| NlpDumpVariable { name: v.name(i).to_string(), lower: finite(v.lower()[i]), upper: finite(v.upper()[i]), start: start[i] })
            .collect();
        let blocks = problem
            .blocks
            .iter()
            .map(|b| {
                let mut r = vec![0.0; b.len()];
                b.evaluate(start, &mut r);
                NlpDumpBlock {
                    name: b.name().to_string(),
                    kind: b.kind().as_str(),
                    rows: b.len(),
                    jacobian_nonzeros: b.jacobian_structure().len(),
                    hessian_nonzeros: b.hessian_structure().len(),
                    row_labels: (0..b.len()).map(|i| b.row_label(i)).collect(),
                    residual_at_start: r,
                }
            })
            .collect();
        Self {
            n_variables: problem.n_variables(),
            n_constraints: problem.n_constraints(),
            objective_at_start: problem.objective.evaluate(start),
            variables,
            blocks,
        }
    }
}
