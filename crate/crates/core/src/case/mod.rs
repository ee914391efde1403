//! Static network, generator-dynamics and cost data.
//!
//! Everything is stored in per unit on the system base `base_mva`; angles are
//! in radians. A [`Case`] is validated on construction through [`parse_case`],
//! [`import_matpower`] or [`Case::validate`], and is immutable afterwards.

mod json;
mod matpower;

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use json::{parse_case, parse_case_str, write_case};
pub use matpower::{import_matpower, import_matpower_str, ImportOptions, SidecarEntry};

/// Synchronous angular frequency of a 60 Hz system.
pub const OMEGA_SYN_60HZ: f64 = 2.0 * PI * 60.0;

pub(crate) fn default_omega_syn() -> f64 {
    OMEGA_SYN_60HZ
}
pub(crate) fn default_e_min() -> f64 {
    0.5
}
pub(crate) fn default_e_max() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
    #[serde(default)]
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_charging: f64,
    /// Off-nominal turns ratio on the `from` side.
    pub tap: f64,
    pub s_max: f64,
    pub theta_diff_min: f64,
    pub theta_diff_max: f64,
}

impl Branch {
    /// Whether this branch connects buses `a` and `b` in either direction.
    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

/// Generator with classical-model dynamic data.
///
/// Costs follow `cost_quadratic * P^2 + cost * P + cost_constant` with `P` in
/// MW; the objective divides by `base_mva` so that a purely linear cost
/// evaluates to `cost * P` with `P` in per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Linear cost coefficient (currency/MWh).
    pub cost: f64,
    /// Quadratic cost coefficient (currency/MW^2 h).
    #[serde(default)]
    pub cost_quadratic: f64,
    /// Fixed cost (currency/h).
    #[serde(default)]
    pub cost_constant: f64,
    pub x_d_prime: f64,
    pub h: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default = "default_e_min")]
    pub e_min: f64,
    #[serde(default = "default_e_max")]
    pub e_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub base_mva: f64,
    #[serde(default = "default_omega_syn")]
    pub omega_syn: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

fn check(ok: bool, field: impl FnOnce() -> String, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(field(), message))
    }
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl Case {
    /// Checks every data-model invariant, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        check(
            self.base_mva.is_finite() && self.base_mva > 0.0,
            || "base_mva".into(),
            "must be positive",
        )?;
        check(
            self.omega_syn.is_finite() && self.omega_syn > 0.0,
            || "omega_syn".into(),
            "must be positive",
        )?;
        check(!self.buses.is_empty(), || "buses".into(), "bus list is empty")?;

        let mut seen = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if let Some(prev) = seen.insert(b.id, i) {
                return Err(Error::validation(
                    format!("buses[{i}].id"),
                    format!("duplicate bus id {} (also buses[{prev}])", b.id),
                ));
            }
            check(
                finite(&[b.v_min, b.v_max, b.theta_min, b.theta_max, b.shunt_g, b.shunt_b]),
                || format!("buses[{i}]"),
                "non-finite value",
            )?;
            check(b.v_min <= b.v_max, || format!("buses[{i}].v_min"), "v_min exceeds v_max")?;
            check(
                b.theta_min <= b.theta_max,
                || format!("buses[{i}].theta_min"),
                "theta_min exceeds theta_max",
            )?;
        }
        let slack_count = self.buses.iter().filter(|b| b.is_slack).count();
        check(
            slack_count == 1,
            || "buses.is_slack".into(),
            &format!("exactly one slack bus required, found {slack_count}"),
        )?;

        for (i, br) in self.branches.iter().enumerate() {
            check(
                seen.contains_key(&br.from),
                || format!("branches[{i}].from"),
                &format!("unknown bus {}", br.from),
            )?;
            check(
                seen.contains_key(&br.to),
                || format!("branches[{i}].to"),
                &format!("unknown bus {}", br.to),
            )?;
            check(br.from != br.to, || format!("branches[{i}].to"), "self loop")?;
            check(
                finite(&[br.r, br.x, br.b_charging, br.tap, br.s_max, br.theta_diff_min, br.theta_diff_max]),
                || format!("branches[{i}]"),
                "non-finite value",
            )?;
            check(br.r != 0.0 || br.x != 0.0, || format!("branches[{i}].x"), "zero series impedance")?;
            check(br.s_max > 0.0, || format!("branches[{i}].s_max"), "must be positive")?;
            check(br.tap > 0.0, || format!("branches[{i}].tap"), "must be positive")?;
            check(
                br.theta_diff_min <= br.theta_diff_max,
                || format!("branches[{i}].theta_diff_min"),
                "theta_diff_min exceeds theta_diff_max",
            )?;
        }

        for (i, g) in self.generators.iter().enumerate() {
            check(
                seen.contains_key(&g.bus),
                || format!("generators[{i}].bus"),
                &format!("unknown bus {}", g.bus),
            )?;
            check(
                finite(&[
                    g.p_min, g.p_max, g.q_min, g.q_max, g.cost, g.cost_quadratic, g.cost_constant,
                    g.x_d_prime, g.h, g.d, g.e_min, g.e_max,
                ]),
                || format!("generators[{i}]"),
                "non-finite value",
            )?;
            check(g.p_min <= g.p_max, || format!("generators[{i}].p_min"), "p_min exceeds p_max")?;
            check(g.q_min <= g.q_max, || format!("generators[{i}].q_min"), "q_min exceeds q_max")?;
            check(g.x_d_prime > 0.0, || format!("generators[{i}].x_d_prime"), "must be positive")?;
            check(g.h > 0.0, || format!("generators[{i}].h"), "must be positive")?;
            check(g.d >= 0.0, || format!("generators[{i}].d"), "must be non-negative")?;
            check(g.e_min <= g.e_max, || format!("generators[{i}].e_min"), "e_min exceeds e_max")?;
        }

        for (i, l) in self.loads.iter().enumerate() {
            check(
                seen.contains_key(&l.bus),
                || format!("loads[{i}].bus"),
                &format!("unknown bus {}", l.bus),
            )?;
            check(finite(&[l.p, l.q]), || format!("loads[{i}]"), "non-finite value")?;
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Map from bus id to its position in `buses`.
    pub fn bus_index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Position of the slack bus in `buses`.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.is_slack)
            .expect("validated case has a slack bus")
    }

    /// Total active and reactive load (p.u.).
    pub fn total_load(&self) -> (f64, f64) {
        self.loads
            .iter()
            .fold((0.0, 0.0), |(p, q), l| (p + l.p, q + l.q))
    }

    /// Per-bus aggregated load, indexed like `buses`.
    pub fn bus_loads(&self) -> Vec<(f64, f64)> {
        let index = self.bus_index_map();
        let mut out = vec![(0.0, 0.0); self.buses.len()];
        for l in &self.loads {
            let k = index[&l.bus];
            out[k].0 += l.p;
            out[k].1 += l.q;
        }
        out
    }

    /// Generation cost in currency/h for a dispatch given in per unit.
    pub fn generation_cost(&self, p: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(p)
            .map(|(g, &pg)| {
                let mw = pg * self.base_mva;
                g.cost_quadratic * mw * mw + g.cost * mw + g.cost_constant
            })
            .sum()
    }
}

/// Multiplies every load's active and reactive demand by `factor`.
pub fn scale_loads(case: &Case, factor: f64) -> Result<Case> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::Domain(format!("load scale factor must be positive, got {factor}")));
    }
    let mut scaled = case.clone();
    for l in &mut scaled.loads {
        l.p *= factor;
        l.q *= factor;
    }
    Ok(scaled)
}

/// The WECC 9-bus, 3-machine system bundled with the crate (unscaled loads).
pub fn wecc9() -> Case {
    parse_case_str(include_str!("../../data/wecc9.json"), "wecc9.json")
        .expect("bundled wecc9.json is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> Case {
        Case {
            base_mva: 100.0,
            omega_syn: OMEGA_SYN_60HZ,
            buses: vec![
                Bus { id: 1, v_min: 0.9, v_max: 1.1, theta_min: -PI, theta_max: PI, shunt_g: 0.0, shunt_b: 0.0, is_slack: true },
                Bus { id: 2, v_min: 0.9, v_max: 1.1, theta_min: -PI, theta_max: PI, shunt_g: 0.0, shunt_b: 0.0, is_slack: false },
            ],
            branches: vec![Branch { from: 1, to: 2, r: 0.0, x: 0.1, b_charging: 0.0, tap: 1.0, s_max: 2.0, theta_diff_min: -1.0, theta_diff_max: 1.0 }],
            generators: vec![Generator {
                bus: 1, p_min: 0.0, p_max: 2.0, q_min: -1.0, q_max: 1.0, cost: 10.0,
                cost_quadratic: 0.0, cost_constant: 0.0, x_d_prime: 0.1, h: 5.0, d: 0.0, e_min: 0.5, e_max: 2.0,
            }],
            loads: vec![Load { bus: 2, p: 0.9, q: 0.3 }],
        }
    }

    #[test]
    fn bundled_case_shape() {
        let c = wecc9();
        assert_eq!(c.buses.len(), 9);
        assert_eq!(c.branches.len(), 9);
        assert_eq!(c.generators.len(), 3);
        assert_eq!(c.loads.len(), 3);
        assert_eq!(c.buses[c.slack_index()].id, 1);
    }

    #[test]
    fn two_slack_buses_rejected() {
        let mut c = two_bus();
        c.buses[1].is_slack = true;
        let err = c.validate().unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "buses.is_slack"));
    }

    #[test]
    fn empty_bus_list_rejected() {
        let mut c = two_bus();
        c.buses.clear();
        assert!(matches!(c.validate(), Err(Error::Validation { ref field, .. }) if field == "buses"));
    }

    #[test]
    fn dangling_references_rejected() {
        let mut c = two_bus();
        c.branches[0].to = 7;
        assert!(matches!(c.validate(), Err(Error::Validation { ref field, .. }) if field == "branches[0].to"));
        let mut c = two_bus();
        c.loads[0].bus = 9;
        assert!(matches!(c.validate(), Err(Error::Validation { ref field, .. }) if field == "loads[0].bus"));
    }

    #[test]
    fn generator_invariants() {
        let mut c = two_bus();
        c.generators[0].x_d_prime = 0.0;
        assert!(c.validate().is_err());
        let mut c = two_bus();
        c.generators[0].p_min = 3.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn scale_identity_and_arithmetic() {
        let c = two_bus();
        assert_eq!(scale_loads(&c, 1.0).unwrap(), c);
        let s = scale_loads(&c, 2.0).unwrap();
        assert_eq!((s.loads[0].p, s.loads[0].q), (1.8, 0.6));
        assert_eq!(s.branches, c.branches);
        assert!(matches!(scale_loads(&c, 0.0), Err(Error::Domain(_))));
        assert!(matches!(scale_loads(&c, -1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn scale_by_one_and_a_half() {
        let c = wecc9();
        let s = scale_loads(&c, 1.5).unwrap();
        for (a, b) in c.loads.iter().zip(&s.loads) {
            assert_eq!(b.p, 1.5 * a.p);
            assert_eq!(b.q, 1.5 * a.q);
        }
    }

    #[test]
    fn linear_cost_in_per_unit() {
        let c = two_bus();
        // cost 10/MWh on a 100 MVA base: 1.4308 p.u. costs 1430.8/h
        assert!((c.generation_cost(&[1.4308]) - 1430.8).abs() < 1e-9);
    }
}
