//! Benchmark time-domain simulator: trapezoidal integration of the
//! classical-model swing equations on the Kron-reduced network, one Newton
//! solve per step.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admittance::LoadVoltageAssumption;
use crate::case::Case;
use crate::contingency::ContingencySpec;
use crate::error::{Error, Result};
use crate::opf::DispatchSolution;
use crate::swing::{center_of_inertia, electrical_power, electrical_power_jacobian, StageNetworks, SwingCoefficients, TimeGrid};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Optimizer,
    Simulator,
}

/// Rotor angle and speed-deviation series on a shared time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    /// `delta[g][k]` in radians.
    pub delta: Vec<Vec<f64>>,
    /// `omega[g][k]`, speed deviation in p.u.
    pub omega: Vec<Vec<f64>>,
    /// Generator inertia constants, used for COI-relative angles.
    pub inertia: Vec<f64>,
    pub dt: f64,
    pub contingency_id: String,
    pub source: TrajectorySource,
    /// Load-voltage assumption label (`flat_one_pu` or `from_solution`).
    pub correction: String,
}

impl TrajectorySet {
    pub fn n_generators(&self) -> usize {
        self.delta.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `delta_g - delta_coi` at every time point.
    pub fn coi_relative(&self) -> Vec<Vec<f64>> {
        let n = self.n_generators();
        let mut out = vec![Vec::with_capacity(self.len()); n];
        let mut d = vec![0.0; n];
        for k in 0..self.len() {
            for g in 0..n {
                d[g] = self.delta[g][k];
            }
            let coi = center_of_inertia(&self.inertia, &d);
            for g in 0..n {
                out[g].push(d[g] - coi);
            }
        }
        out
    }

    /// Largest `|delta_g - delta_coi|` per generator.
    pub fn max_coi_deviation(&self) -> Vec<f64> {
        self.coi_relative().iter().map(|s| s.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect()
    }

    /// CSV with header `t,delta_g1,...,omega_g1,...`; values use the
    /// shortest representation that round-trips exactly.
    pub fn to_csv(&self) -> String {
        let n = self.n_generators();
        let mut s = String::from("t");
        for g in 1..=n {
            write!(s, ",delta_g{g}").unwrap();
        }
        for g in 1..=n {
            write!(s, ",omega_g{g}").unwrap();
        }
        s.push('\n');
        for k in 0..self.len() {
            write!(s, "{}", self.times[k]).unwrap();
            for g in 0..n {
                write!(s, ",{}", self.delta[g][k]).unwrap();
            }
            for g in 0..n {
                write!(s, ",{}", self.omega[g][k]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV layout of [`TrajectorySet::to_csv`]. Metadata not
    /// carried by the CSV is filled from the arguments; `dt` is taken from
    /// the first interval.
    pub fn from_csv(text: &str, inertia: Vec<f64>, source: TrajectorySource, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: origin.into(), line: Some(line), message };
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| err(1, "empty file".into()))?.split(',').collect();
        if header.first() != Some(&"t") || header.len() % 2 != 1 {
            return Err(err(1, "expected header t,delta_g1,...,omega_g1,...".into()));
        }
        let n = (header.len() - 1) / 2;
        for g in 0..n {
            if header[1 + g] != format!("delta_g{}", g + 1) || header[1 + n + g] != format!("omega_g{}", g + 1) {
                return Err(err(1, format!("unexpected column names {header:?}")));
            }
        }
        if inertia.len() != n {
            return Err(Error::Mismatch(format!("{n} generators in CSV, {} inertias given", inertia.len())));
        }
        let mut times = Vec::new();
        let mut delta = vec![Vec::new(); n];
        let mut omega = vec![Vec::new(); n];
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(i + 2, e.to_string()))?;
            if vals.len() != header.len() {
                return Err(err(i + 2, format!("expected {} fields, found {}", header.len(), vals.len())));
            }
            if times.last().is_some_and(|&t| vals[0] <= t) {
                return Err(err(i + 2, "times must be strictly increasing".into()));
            }
            times.push(vals[0]);
            for g in 0..n {
                delta[g].push(vals[1 + g]);
                omega[g].push(vals[1 + n + g]);
            }
        }
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Ok(Self { times, delta, omega, inertia, dt, contingency_id: String::new(), source, correction: String::new() })
    }
}

/// Integrates the contingency from the pre-fault operating point of
/// `dispatch`, switching networks at the clearing time.
pub fn simulate(case: &Case, dispatch: &DispatchSolution, contingency: &ContingencySpec, assumption: &LoadVoltageAssumption) -> Result<TrajectorySet> {
    let grid = TimeGrid::new(contingency.dt, contingency.clearing_time, contingency.horizon)?;
    let nets = StageNetworks::build(case, contingency, assumption)?;
    simulate_on(case, dispatch, &nets, &grid, &contingency.id, assumption.label())
}

/// As [`simulate`] with prebuilt networks and grid.
pub fn simulate_on(case: &Case, dispatch: &DispatchSolution, nets: &StageNetworks, grid: &TimeGrid, id: &str, correction: &str) -> Result<TrajectorySet> {
    dispatch.check_against(case)?;
    let n = case.n_generators();
    let e = dispatch.e.clone();
    let delta0 = dispatch.delta0.clone();
    let pm = dispatch.p.clone();
    let coef = SwingCoefficients::for_case(case, grid.dt);

    let np = grid.n_points();
    let mut delta = vec![Vec::with_capacity(np); n];
    let mut omega = vec![Vec::with_capacity(np); n];
    let mut d = delta0;
    let mut w = vec![0.0; n];
    let mut pe = electrical_power(nets.get(grid.stage_of(0)), &e, &d);
    for g in 0..n {
        delta[g].push(d[g]);
        omega[g].push(w[g]);
    }
    let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for k in 1..np {
        let net = nets.get(grid.stage_of(k));
        let (d_prev, w_prev, pe_prev) = (d.clone(), w.clone(), pe.clone());
        let mut iterations = 0;
        loop {
            pe = electrical_power(net, &e, &d);
            let mut r = DVector::<f64>::zeros(2 * n);
            for g in 0..n {
                let (ra, rs) = coef[g].residuals(d_prev[g], w_prev[g], pe_prev[g], d[g], w[g], pe[g], pm[g]);
                r[g] = ra;
                r[n + g] = rs;
            }
            let res = r.amax();
            if !res.is_finite() || iterations == NEWTON_MAX_ITER {
                if res <= NEWTON_TOL {
                    break;
                }
                return Err(Error::Integration { step: k, time: grid.time(k), residual: res, iterations });
            }
            if res <= NEWTON_TOL {
                break;
            }
            let dpe = electrical_power_jacobian(net, &e, &d);
            jac.fill(0.0);
            for g in 0..n {
                jac[(g, g)] = 1.0;
                jac[(g, n + g)] = -coef[g].half_omega_dt;
                jac[(n + g, n + g)] = coef[g].k_plus;
                for i in 0..n {
                    jac[(n + g, i)] = coef[g].k_power * dpe[g * n + i];
                }
            }
            let step = jac.clone().lu().solve(&r).ok_or(Error::Integration { step: k, time: grid.time(k), residual: res, iterations })?;
            for g in 0..n {
                d[g] -= step[g];
                w[g] -= step[n + g];
            }
            iterations += 1;
        }
        for g in 0..n {
            delta[g].push(d[g]);
            omega[g].push(w[g]);
        }
    }
    Ok(TrajectorySet {
        times: (0..np).map(|k| grid.time(k)).collect(),
        delta,
        omega,
        inertia: case.generators.iter().map(|g| g.h).collect(),
        dt: grid.dt,
        contingency_id: id.to_string(),
        source: TrajectorySource::Simulator,
        correction: correction.to_string(),
    })
}

/// Observed convergence order from successively halved time steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    /// `log2(e1 / e2)` with `e1 = |y(dt) - y(dt/2)|`, `e2 = |y(dt/2) - y(dt/4)|`;
    /// NaN when the differences vanish.
    pub order: f64,
    pub coarse_difference: f64,
    pub fine_difference: f64,
    pub window: (f64, f64),
    pub note: String,
}

/// Richardson order estimate from three trajectories at `dt`, `dt/2` and
/// `dt/4`, comparing rotor angles at the coarse time points inside `window`.
pub fn refine_check(trajectories: &[TrajectorySet], window: Option<(f64, f64)>) -> Result<RefinementReport> {
    let [c, m, f] = trajectories else {
        return Err(Error::Mismatch(format!("refine_check needs three trajectories, got {}", trajectories.len())));
    };
    if c.n_generators() != m.n_generators() || m.n_generators() != f.n_generators() {
        return Err(Error::Mismatch("trajectories cover different generator sets".into()));
    }
    if c.contingency_id != m.contingency_id || m.contingency_id != f.contingency_id {
        return Err(Error::Mismatch("trajectories come from different scenarios".into()));
    }
    for (a, b) in [(c, m), (m, f)] {
        if (a.dt - 2.0 * b.dt).abs() > 1e-12 * a.dt {
            return Err(Error::Mismatch(format!("time steps {} and {} are not successive halvings", a.dt, b.dt)));
        }
    }
    let end = c.times.last().copied().unwrap_or(0.0).min(f.times.last().copied().unwrap_or(0.0));
    let (t0, t1) = window.unwrap_or((0.0, end));
    let mut e1 = 0.0f64;
    let mut e2 = 0.0f64;
    for (k, &t) in c.times.iter().enumerate() {
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            continue;
        }
        let km = (t / m.dt).round() as usize;
        let kf = (t / f.dt).round() as usize;
        if kf >= f.len() || km >= m.len() {
            continue;
        }
        for g in 0..c.n_generators() {
            e1 = e1.max((c.delta[g][k] - m.delta[g][km]).abs());
            e2 = e2.max((m.delta[g][km] - f.delta[g][kf]).abs());
        }
    }
    let (order, note) = if e1 == 0.0 || e2 == 0.0 {
        (f64::NAN, "differences between resolutions vanish; order is undefined".to_string())
    } else {
        ((e1 / e2).log2(), String::new())
    };
    Ok(RefinementReport { order, coarse_difference: e1, fine_difference: e2, window: (t0, t1), note })
}
