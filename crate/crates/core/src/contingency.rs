use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::error::{Error, Result};

pub const DEFAULT_FAULT_SHUNT: f64 = 1e6;

fn default_fault_shunt() -> f64 {
    DEFAULT_FAULT_SHUNT
}

/// A bolted three-phase fault at `fault_bus` starting at t = 0, cleared at
/// `clearing_time` by opening `cleared_branch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContingencySpec {
    #[serde(default)]
    pub id: String,
    pub fault_bus: usize,
    #[serde(default)]
    pub cleared_branch: Option<(usize, usize)>,
    pub clearing_time: f64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_fault_shunt")]
    pub fault_shunt: f64,
}

impl ContingencySpec {
    /// The first contingency of the WECC 9-bus study: fault at bus 4 cleared
    /// by opening line 4-5 after 150 ms.
    pub fn wecc9_contingency1(dt: f64) -> Self {
        Self {
            id: "contingency1".into(),
            fault_bus: 4,
            cleared_branch: Some((4, 5)),
            clearing_time: 0.15,
            dt,
            horizon: 5.0,
            fault_shunt: DEFAULT_FAULT_SHUNT,
        }
    }

    /// The second contingency: fault at bus 7 cleared by opening line 7-5
    /// after 300 ms.
    pub fn wecc9_contingency2(dt: f64) -> Self {
        Self {
            id: "contingency2".into(),
            fault_bus: 7,
            cleared_branch: Some((7, 5)),
            clearing_time: 0.3,
            dt,
            horizon: 5.0,
            fault_shunt: DEFAULT_FAULT_SHUNT,
        }
    }

    /// Same scenario on a different time step.
    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }

    /// Checks the timing invariants and that the fault bus and cleared branch exist.
    pub fn validate(&self, case: &Case) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::validation("dt", "time step must be positive"));
        }
        if !(self.clearing_time >= 0.0 && self.clearing_time < self.horizon) {
            return Err(Error::validation("clearing_time", "must lie in [0, horizon)"));
        }
        if !(self.fault_shunt.is_finite() && self.fault_shunt >= 0.0) {
            return Err(Error::validation("fault_shunt", "must be finite and non-negative"));
        }
        crate::swing::TimeGrid::new(self.dt, self.clearing_time, self.horizon)?;
        if case.bus_index(self.fault_bus).is_none() {
            return Err(Error::Index(format!("fault bus {} not in case", self.fault_bus)));
        }
        if let Some((a, b)) = self.cleared_branch {
            if !case.branches.iter().any(|br| br.connects(a, b)) {
                return Err(Error::validation("cleared_branch", format!("no branch {a}-{b}")));
            }
        }
        Ok(())
    }
}
