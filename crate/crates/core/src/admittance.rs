//! Bus admittance matrix, fault/outage modifications, load-to-admittance
//! conversion, augmentation with generator internal nodes and Kron reduction.
//!
//! Matrices are dense. The largest systems in scope have a dozen nodes, so
//! the O(n^3) LU of the bus block is negligible; past a few thousand buses a
//! sparse factorization would be needed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::case::Case;
use crate::contingency::ContingencySpec;
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex admittance matrix. The first `bus_ids.len()` rows and
/// columns correspond to network buses in case order; any further rows are
/// generator internal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub entries: CMatrix,
    pub bus_ids: Vec<usize>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// Row/column position of a bus id.
    pub fn position(&self, bus_id: usize) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus_id)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| (self.entries[(i, j)] - self.entries[(j, i)]).norm() <= tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DuringFault,
    PostFault,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::DuringFault => "during_fault",
            Stage::PostFault => "post_fault",
        }
    }
}

/// Reduced admittance among generator internal nodes for one network stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub stage: Stage,
    pub y_red: CMatrix,
    pub g_red: DMatrix<f64>,
    pub b_red: DMatrix<f64>,
}

impl ReducedNetwork {
    pub fn new(stage: Stage, y_red: CMatrix) -> Self {
        let g_red = y_red.map(|y| y.re);
        let b_red = y_red.map(|y| y.im);
        Self { stage, y_red, g_red, b_red }
    }

    pub fn n(&self) -> usize {
        self.y_red.nrows()
    }
}

impl Serialize for ReducedNetwork {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.n())
            .map(|i| (0..self.n()).map(|j| [self.y_red[(i, j)].re, self.y_red[(i, j)].im]).collect())
            .collect();
        let mut s = serializer.serialize_struct("ReducedNetwork", 3)?;
        s.serialize_field("stage", &self.stage)?;
        s.serialize_field("n", &self.n())?;
        s.serialize_field("y_red", &rows)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for ReducedNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            stage: Stage,
            n: usize,
            y_red: Vec<Vec<[f64; 2]>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        if raw.y_red.len() != raw.n || raw.y_red.iter().any(|r| r.len() != raw.n) {
            return Err(serde::de::Error::custom("y_red dimension does not match n"));
        }
        let y = CMatrix::from_fn(raw.n, raw.n, |i, j| Complex64::new(raw.y_red[i][j][0], raw.y_red[i][j][1]));
        Ok(ReducedNetwork::new(raw.stage, y))
    }
}

/// Voltage magnitudes used to convert constant-power loads to admittances.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadVoltageAssumption {
    /// Every load bus at 1.0 p.u.
    FlatOnePu,
    /// Per-bus magnitudes in case bus order, typically from an OPF solution.
    FromSolution(Vec<f64>),
}

impl LoadVoltageAssumption {
    pub fn label(&self) -> &'static str {
        match self {
            LoadVoltageAssumption::FlatOnePu => "flat_one_pu",
            LoadVoltageAssumption::FromSolution(_) => "from_solution",
        }
    }

    fn voltage(&self, bus: usize) -> f64 {
        match self {
            LoadVoltageAssumption::FlatOnePu => 1.0,
            LoadVoltageAssumption::FromSolution(v) => v[bus],
        }
    }

    pub fn validate(&self, case: &Case) -> Result<()> {
        if let LoadVoltageAssumption::FromSolution(v) = self {
            if v.len() != case.n_buses() {
                return Err(Error::validation(
                    "voltages",
                    format!("expected {} bus voltages, got {}", case.n_buses(), v.len()),
                ));
            }
            for (k, (p, q)) in case.bus_loads().into_iter().enumerate() {
                if (p != 0.0 || q != 0.0) && !(v[k].is_finite() && v[k] > 0.0) {
                    return Err(Error::validation(
                        format!("voltages[{k}]"),
                        format!("load bus {} needs a positive voltage", case.buses[k].id),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Bus admittance matrix from the branch pi-models, taps and bus shunts.
pub fn build_ybus(case: &Case) -> AdmittanceMatrix {
    let n = case.n_buses();
    let index = case.bus_index_map();
    let mut y = CMatrix::zeros(n, n);
    for br in &case.branches {
        let (k, m) = (index[&br.from], index[&br.to]);
        let ys = Complex64::new(br.r, br.x).inv();
        let half_charging = J * (br.b_charging / 2.0);
        let tau = br.tap;
        y[(k, k)] += (ys + half_charging) / (tau * tau);
        y[(m, m)] += ys + half_charging;
        y[(k, m)] -= ys / tau;
        y[(m, k)] -= ys / tau;
    }
    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.shunt_g, bus.shunt_b);
    }
    AdmittanceMatrix {
        entries: y,
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
    }
}

/// Adds a real shunt to the diagonal of the faulted bus.
pub fn apply_fault(y: &AdmittanceMatrix, bus_id: usize, shunt: f64) -> Result<AdmittanceMatrix> {
    let k = y
        .position(bus_id)
        .ok_or_else(|| Error::Index(format!("fault bus {bus_id} not in admittance matrix")))?;
    let mut out = y.clone();
    out.entries[(k, k)] += Complex64::new(shunt, 0.0);
    Ok(out)
}

/// Returns a copy of the case without the first branch joining `from` and `to`.
pub fn remove_branch(case: &Case, from: usize, to: usize) -> Result<Case> {
    let pos = case
        .branches
        .iter()
        .position(|br| br.connects(from, to))
        .ok_or_else(|| Error::validation("cleared_branch", format!("no branch {from}-{to}")))?;
    let mut out = case.clone();
    out.branches.remove(pos);
    Ok(out)
}

/// Constant admittance drawing `p + jq` at voltage magnitude `v`.
pub fn load_to_admittance(p: f64, q: f64, v: f64) -> Result<Complex64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!("load voltage must be positive, got {v}")));
    }
    Ok(Complex64::new(p, -q) / (v * v))
}

/// Extends the bus admittance matrix with load admittances and one internal
/// node per generator behind its transient reactance.
pub fn augment(y: &AdmittanceMatrix, case: &Case, assumption: &LoadVoltageAssumption) -> Result<AdmittanceMatrix> {
    assumption.validate(case)?;
    let nb = case.n_buses();
    let ng = case.n_generators();
    if y.n() != nb {
        return Err(Error::Mismatch(format!("admittance matrix has {} rows for {nb} buses", y.n())));
    }
    let index = case.bus_index_map();
    let mut aug = CMatrix::zeros(nb + ng, nb + ng);
    aug.view_mut((0, 0), (nb, nb)).copy_from(&y.entries);
    for (k, (p, q)) in case.bus_loads().into_iter().enumerate() {
        if p == 0.0 && q == 0.0 {
            continue;
        }
        aug[(k, k)] += load_to_admittance(p, q, assumption.voltage(k))?;
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let k = index[&gen.bus];
        let yg = (J * gen.x_d_prime).inv();
        aug[(k, k)] += yg;
        aug[(nb + g, nb + g)] = yg;
        aug[(k, nb + g)] = -yg;
        aug[(nb + g, k)] = -yg;
    }
    Ok(AdmittanceMatrix {
        entries: aug,
        bus_ids: y.bus_ids.clone(),
    })
}

/// Eliminates the first `n_buses` nodes: `Y_GG - Y_GN Y_NN^-1 Y_NG`.
pub fn kron_reduce(aug: &AdmittanceMatrix, n_buses: usize, n_gens: usize, stage: Stage) -> Result<ReducedNetwork> {
    if aug.n() != n_buses + n_gens {
        return Err(Error::Mismatch(format!(
            "augmented matrix has {} rows, expected {}",
            aug.n(),
            n_buses + n_gens
        )));
    }
    let e = &aug.entries;
    let y_nn = e.view((0, 0), (n_buses, n_buses)).clone_owned();
    let y_ng = e.view((0, n_buses), (n_buses, n_gens)).clone_owned();
    let y_gn = e.view((n_buses, 0), (n_gens, n_buses));
    let y_gg = e.view((n_buses, n_buses), (n_gens, n_gens));

    if n_buses == 0 {
        return Ok(ReducedNetwork::new(stage, y_gg.clone_owned()));
    }
    let lu = y_nn.lu();
    let pivots: Vec<f64> = lu.u().diagonal().iter().map(|p| p.norm()).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > 1e-14) {
        return Err(Error::Singular { condition_estimate: ratio });
    }
    let x = lu.solve(&y_ng).ok_or(Error::Singular { condition_estimate: ratio })?;
    let y_red = y_gg - y_gn * x;
    Ok(ReducedNetwork::new(stage, y_red))
}

fn reduce(case: &Case, y: &AdmittanceMatrix, assumption: &LoadVoltageAssumption, stage: Stage) -> Result<ReducedNetwork> {
    let aug = augment(y, case, assumption)?;
    kron_reduce(&aug, case.n_buses(), case.n_generators(), stage)
}

/// Reduced network of the intact, unfaulted system.
pub fn prefault_network(case: &Case, assumption: &LoadVoltageAssumption) -> Result<ReducedNetwork> {
    reduce(case, &build_ybus(case), assumption, Stage::PostFault)
}

/// During-fault and post-fault reduced networks for a contingency.
pub fn build_stage_networks(
    case: &Case,
    contingency: &ContingencySpec,
    assumption: &LoadVoltageAssumption,
) -> Result<(ReducedNetwork, ReducedNetwork)> {
    contingency.validate(case)?;
    let faulted = apply_fault(&build_ybus(case), contingency.fault_bus, contingency.fault_shunt)?;
    let during = reduce(case, &faulted, assumption, Stage::DuringFault)?;
    let post_case = match contingency.cleared_branch {
        Some((a, b)) => remove_branch(case, a, b)?,
        None => case.clone(),
    };
    let post = reduce(&post_case, &build_ybus(&post_case), assumption, Stage::PostFault)?;
    Ok((during, post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{scale_loads, wecc9, Branch, Bus, Generator, Load, OMEGA_SYN_60HZ};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bus(id: usize, slack: bool) -> Bus {
        Bus { id, v_min: 0.9, v_max: 1.1, theta_min: -PI, theta_max: PI, shunt_g: 0.0, shunt_b: 0.0, is_slack: slack }
    }

    fn line(from: usize, to: usize, r: f64, x: f64) -> Branch {
        Branch { from, to, r, x, b_charging: 0.0, tap: 1.0, s_max: 5.0, theta_diff_min: -PI, theta_diff_max: PI }
    }

    fn gen(bus: usize, xd: f64) -> Generator {
        Generator {
            bus, p_min: 0.0, p_max: 2.0, q_min: -1.0, q_max: 1.0, cost: 1.0, cost_quadratic: 0.0,
            cost_constant: 0.0, x_d_prime: xd, h: 5.0, d: 0.0, e_min: 0.5, e_max: 2.0,
        }
    }

    fn small_case(branches: Vec<Branch>, generators: Vec<Generator>, loads: Vec<Load>) -> Case {
        Case {
            base_mva: 100.0,
            omega_syn: OMEGA_SYN_60HZ,
            buses: vec![bus(1, true), bus(2, false)],
            branches,
            generators,
            loads,
        }
    }

    #[test]
    fn single_lossless_branch() {
        let case = small_case(vec![line(1, 2, 0.0, 0.1)], vec![gen(1, 0.1)], vec![]);
        let y = build_ybus(&case);
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y.get(i, j) - expect[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_branches_double() {
        let one = build_ybus(&small_case(vec![line(1, 2, 0.01, 0.1)], vec![gen(1, 0.1)], vec![]));
        let two = build_ybus(&small_case(vec![line(1, 2, 0.01, 0.1), line(1, 2, 0.01, 0.1)], vec![gen(1, 0.1)], vec![]));
        assert!((two.get(0, 1) - one.get(0, 1) * 2.0).norm() < 1e-12);
    }

    #[test]
    fn wecc9_branch_4_5_by_hand() {
        // branch 5-4: r = 0.01, x = 0.085, b = 0.176
        // y_s = 1/(0.01 + j0.085) = (0.01 - j0.085)/(0.01^2 + 0.085^2)
        let denom = 0.01 * 0.01 + 0.085 * 0.085;
        let ys = c(0.01 / denom, -0.085 / denom);
        let y = build_ybus(&wecc9());
        let (k4, k5) = (3, 4);
        assert!((y.get(k4, k5) + ys).norm() < 1e-12);
        assert!((y.get(k5, k4) + ys).norm() < 1e-12);
        // bus 5 also connects to 7 via r = 0.032, x = 0.161, b = 0.306
        let d57 = 0.032 * 0.032 + 0.161 * 0.161;
        let y57 = c(0.032 / d57, -0.161 / d57);
        let diag5 = ys + y57 + c(0.0, (0.176 + 0.306) / 2.0);
        assert!((y.get(k5, k5) - diag5).norm() < 1e-12);
    }

    #[test]
    fn tap_applies_to_from_side() {
        let mut br = line(1, 2, 0.0, 0.1);
        br.tap = 1.05;
        let y = build_ybus(&small_case(vec![br], vec![gen(1, 0.1)], vec![]));
        let ys = c(0.0, -10.0);
        assert!((y.get(0, 0) - ys / (1.05 * 1.05)).norm() < 1e-12);
        assert!((y.get(1, 1) - ys).norm() < 1e-12);
        assert!((y.get(0, 1) + ys / 1.05).norm() < 1e-12);
    }

    #[test]
    fn fault_touches_only_its_diagonal() {
        let case = wecc9();
        let y = build_ybus(&case);
        let f = apply_fault(&y, 4, 1e6).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                if i == 3 && j == 3 {
                    assert_eq!(f.get(i, j) - y.get(i, j), c(1e6, 0.0));
                } else {
                    assert_eq!(f.get(i, j), y.get(i, j));
                }
            }
        }
        assert_eq!(apply_fault(&y, 4, 0.0).unwrap(), y);
        assert!(matches!(apply_fault(&y, 42, 1e6), Err(Error::Index(_))));
    }

    #[test]
    fn remove_and_readd_branch() {
        let case = wecc9();
        let removed = remove_branch(&case, 4, 5).unwrap();
        assert_eq!(removed.branches.len(), 8);
        let y = build_ybus(&removed);
        assert_eq!(y.get(3, 4), c(0.0, 0.0));
        let mut readded = removed.clone();
        let original = case.branches.iter().find(|b| b.connects(4, 5)).unwrap().clone();
        readded.branches.push(original);
        let y0 = build_ybus(&case);
        let y1 = build_ybus(&readded);
        assert!((y0.entries.clone() - y1.entries).iter().all(|d| d.norm() <= 1e-15));
        assert!(remove_branch(&case, 1, 2).is_err());
    }

    #[test]
    fn load_admittance_formula() {
        assert_eq!(load_to_admittance(1.0, 0.5, 1.0).unwrap(), c(1.0, -0.5));
        let v: f64 = 1.0294;
        let y = load_to_admittance(1.0, 0.5, v).unwrap();
        assert!((y - c(1.0, -0.5) / (v * v)).norm() < 1e-15);
        assert_eq!(load_to_admittance(0.0, 0.0, 1.0).unwrap(), c(0.0, 0.0));
        assert!(matches!(load_to_admittance(1.0, 0.5, 0.0), Err(Error::Domain(_))));
        assert!(load_to_admittance(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn augment_single_generator_structure() {
        let case = Case {
            buses: vec![bus(1, true)],
            ..small_case(vec![], vec![gen(1, 0.25)], vec![])
        };
        let y = build_ybus(&case);
        let aug = augment(&y, &case, &LoadVoltageAssumption::FlatOnePu).unwrap();
        let yg = c(0.0, -4.0);
        assert_eq!(aug.n(), 2);
        assert!((aug.get(0, 0) - yg).norm() < 1e-15);
        assert!((aug.get(1, 1) - yg).norm() < 1e-15);
        assert!((aug.get(0, 1) + yg).norm() < 1e-15);
        assert!((aug.get(1, 0) + yg).norm() < 1e-15);
    }

    #[test]
    fn augment_adds_scaled_load_at_bus5() {
        let case = scale_loads(&wecc9(), 1.5).unwrap();
        let y = build_ybus(&case);
        let aug = augment(&y, &case, &LoadVoltageAssumption::FlatOnePu).unwrap();
        assert_eq!(aug.n(), 12);
        assert!((aug.get(4, 4) - y.get(4, 4) - c(1.875, -0.75)).norm() < 1e-12);
        assert!(aug.is_symmetric(0.0));
        // one nonzero coupling per generator column
        for g in 0..3 {
            let nnz = (0..9).filter(|&k| aug.get(k, 9 + g) != c(0.0, 0.0)).count();
            assert_eq!(nnz, 1);
        }
    }

    #[test]
    fn from_solution_requires_load_voltages() {
        let case = wecc9();
        let y = build_ybus(&case);
        let mut v = vec![1.0; 9];
        v[4] = 0.0;
        assert!(augment(&y, &case, &LoadVoltageAssumption::FromSolution(v.clone())).is_err());
        v[4] = 1.02;
        v[0] = 0.0; // generator bus without load: ignored
        assert!(augment(&y, &case, &LoadVoltageAssumption::FromSolution(v)).is_ok());
        assert!(augment(&y, &case, &LoadVoltageAssumption::FromSolution(vec![1.0; 3])).is_err());
    }

    #[test]
    fn star_network_schur_complement_by_hand() {
        // internal node (x' = 0.1) -- bus 1 -- line x = 0.1 -- bus 2 with load 1 - j0
        let case = small_case(vec![line(1, 2, 0.0, 0.1)], vec![gen(1, 0.1)], vec![Load { bus: 2, p: 1.0, q: 0.0 }]);
        let aug = augment(&build_ybus(&case), &case, &LoadVoltageAssumption::FlatOnePu).unwrap();
        let red = kron_reduce(&aug, 2, 1, Stage::PostFault).unwrap();
        // series: j0.1 + j0.1 then the 1.0 conductance: Z = j0.2 + 1, Y = 1/(1 + j0.2)
        let expect = c(1.0, 0.2).inv();
        assert!((red.y_red[(0, 0)] - expect).norm() < 1e-12, "{} vs {}", red.y_red[(0, 0)], expect);
        assert_eq!(red.g_red[(0, 0)], red.y_red[(0, 0)].re);
        assert_eq!(red.b_red[(0, 0)], red.y_red[(0, 0)].im);
    }

    #[test]
    fn decoupled_blocks_reduce_to_generator_block() {
        let mut e = CMatrix::zeros(3, 3);
        e[(0, 0)] = c(2.0, -1.0);
        e[(1, 1)] = c(0.0, -5.0);
        e[(2, 2)] = c(0.5, -3.0);
        e[(1, 2)] = c(0.1, 0.2);
        e[(2, 1)] = c(0.1, 0.2);
        let aug = AdmittanceMatrix { entries: e.clone(), bus_ids: vec![1] };
        let red = kron_reduce(&aug, 1, 2, Stage::PostFault).unwrap();
        assert_eq!(red.y_red, e.view((1, 1), (2, 2)).clone_owned());
    }

    #[test]
    fn singular_bus_block_reported() {
        // bus 2 is an island with nothing attached
        let case = small_case(vec![], vec![gen(1, 0.1)], vec![]);
        let aug = augment(&build_ybus(&case), &case, &LoadVoltageAssumption::FlatOnePu).unwrap();
        assert!(matches!(kron_reduce(&aug, 2, 1, Stage::PostFault), Err(Error::Singular { .. })));
    }

    #[test]
    fn stage_networks_for_contingency1() {
        let case = scale_loads(&wecc9(), 1.5).unwrap();
        let cont = ContingencySpec::wecc9_contingency1(0.01);
        let (during, post) = build_stage_networks(&case, &cont, &LoadVoltageAssumption::FlatOnePu).unwrap();
        assert_eq!(during.stage, Stage::DuringFault);
        assert_eq!(post.stage, Stage::PostFault);
        assert_ne!(during.y_red, post.y_red);
        // generator 1 sits behind bus 4: the fault short-circuits its terminal
        assert!(during.y_red[(0, 0)].norm() > post.y_red[(0, 0)].norm());
        assert!(during.y_red[(0, 1)].norm() < 1e-3 * post.y_red[(0, 1)].norm());
    }

    #[test]
    fn no_removal_post_equals_prefault() {
        let case = scale_loads(&wecc9(), 1.5).unwrap();
        let mut cont = ContingencySpec::wecc9_contingency1(0.01);
        cont.cleared_branch = None;
        let (_, post) = build_stage_networks(&case, &cont, &LoadVoltageAssumption::FlatOnePu).unwrap();
        let pre = prefault_network(&case, &LoadVoltageAssumption::FlatOnePu).unwrap();
        assert_eq!(post.y_red, pre.y_red);
    }

    #[test]
    fn reduced_network_json_layout() {
        let red = ReducedNetwork::new(Stage::DuringFault, CMatrix::from_row_slice(1, 1, &[c(1.5, -2.0)]));
        let text = serde_json::to_string(&red).unwrap();
        assert_eq!(text, r#"{"stage":"during_fault","n":1,"y_red":[[[1.5,-2.0]]]}"#);
        let back: ReducedNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(back, red);
    }
}
