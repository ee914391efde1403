//! Discretized rotor dynamics over the during- and post-fault time grid.
//!
//! The same coefficients and electrical-power routine back both the
//! optimizer's constraint rows and the benchmark simulator, so the two
//! discretize one algebraic system.

use crate::admittance::{build_stage_networks, LoadVoltageAssumption, ReducedNetwork, Stage};
use crate::case::Case;
use crate::contingency::ContingencySpec;
use crate::error::{Error, Result};
use crate::nlp::{ConstraintKind, Expr, ExprBlock, Term, VariableSet};

/// Rotor-angle limit used by the studies: 100 degrees from the COI.
pub const DEFAULT_COI_LIMIT: f64 = 100.0 * std::f64::consts::PI / 180.0;

const ALIGN_TOL: f64 = 1e-9;

/// Uniform grid `t_k = k dt`, `k = 0..=n_steps`.
///
/// Step `k` belongs to the during-fault stage iff `k dt <= clearing_time`
/// and the clearing time is positive; with a zero clearing time every step
/// (including `k = 0`) is post-fault.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    clearing_step: Option<usize>,
}

fn aligned(value: f64, dt: f64) -> Option<usize> {
    let k = value / dt;
    let r = k.round();
    ((k - r).abs() <= ALIGN_TOL * r.max(1.0) && r >= 0.0).then_some(r as usize)
}

impl TimeGrid {
    pub fn new(dt: f64, clearing_time: f64, horizon: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::validation("dt", "time step must be positive"));
        }
        let n_steps = aligned(horizon, dt)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::validation("horizon", format!("horizon {horizon} s is not a positive multiple of dt {dt} s")))?;
        let k = aligned(clearing_time, dt)
            .ok_or_else(|| Error::validation("clearing_time", format!("clearing time {clearing_time} s is not a multiple of dt {dt} s")))?;
        if k > n_steps {
            return Err(Error::validation("clearing_time", "clearing time exceeds the horizon"));
        }
        Ok(Self { dt, n_steps, clearing_step: (k > 0).then_some(k) })
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn clearing_step(&self) -> Option<usize> {
        self.clearing_step
    }

    pub fn stage_of(&self, k: usize) -> Stage {
        match self.clearing_step {
            Some(c) if k <= c => Stage::DuringFault,
            _ => Stage::PostFault,
        }
    }
}

/// The during- and post-fault reduced networks of one contingency.
#[derive(Debug, Clone, PartialEq)]
pub struct StageNetworks {
    pub during: ReducedNetwork,
    pub post: ReducedNetwork,
}

impl StageNetworks {
    pub fn build(case: &Case, contingency: &ContingencySpec, assumption: &LoadVoltageAssumption) -> Result<Self> {
        let (during, post) = build_stage_networks(case, contingency, assumption)?;
        Ok(Self { during, post })
    }

    pub fn get(&self, stage: Stage) -> &ReducedNetwork {
        match stage {
            Stage::DuringFault => &self.during,
            Stage::PostFault => &self.post,
        }
    }
}

/// Per-generator trapezoidal coefficients.
///
/// angle:  `delta_t - delta_{t-1} - half_omega_dt (dw_t + dw_{t-1}) = 0`
/// speed:  `k_plus dw_t - k_minus dw_{t-1} - k_power (2 Pm - Pe_t - Pe_{t-1}) = 0`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingCoefficients {
    pub half_omega_dt: f64,
    pub k_plus: f64,
    pub k_minus: f64,
    pub k_power: f64,
}

impl SwingCoefficients {
    pub fn new(omega_syn: f64, dt: f64, h: f64, d: f64) -> Self {
        let r = d * dt / (4.0 * h);
        Self { half_omega_dt: 0.5 * omega_syn * dt, k_plus: 1.0 + r, k_minus: 1.0 - r, k_power: dt / (4.0 * h) }
    }

    pub fn for_case(case: &Case, dt: f64) -> Vec<Self> {
        case.generators.iter().map(|g| Self::new(case.omega_syn, dt, g.h, g.d)).collect()
    }

    /// Angle and speed residuals of one step.
    #[allow(clippy::too_many_arguments)]
    pub fn residuals(&self, delta_prev: f64, dw_prev: f64, pe_prev: f64, delta: f64, dw: f64, pe: f64, pm: f64) -> (f64, f64) {
        (
            delta - delta_prev - self.half_omega_dt * (dw + dw_prev),
            self.k_plus * dw - self.k_minus * dw_prev - self.k_power * (2.0 * pm - pe - pe_prev),
        )
    }
}

/// `Pe_g = E_g sum_i E_i (G_gi cos(d_g - d_i) + B_gi sin(d_g - d_i))`.
pub fn electrical_power(net: &ReducedNetwork, e: &[f64], delta: &[f64]) -> Vec<f64> {
    let n = net.n();
    (0..n)
        .map(|g| {
            let mut acc = 0.0;
            for i in 0..n {
                let (s, c) = (delta[g] - delta[i]).sin_cos();
                acc += e[i] * (net.g_red[(g, i)] * c + net.b_red[(g, i)] * s);
            }
            e[g] * acc
        })
        .collect()
}

/// Jacobian `dPe_g / d delta_i`, row-major `n x n`.
pub fn electrical_power_jacobian(net: &ReducedNetwork, e: &[f64], delta: &[f64]) -> Vec<f64> {
    let n = net.n();
    let mut jac = vec![0.0; n * n];
    for g in 0..n {
        for i in 0..n {
            if i == g {
                continue;
            }
            let (s, c) = (delta[g] - delta[i]).sin_cos();
            let d = e[g] * e[i] * (-net.g_red[(g, i)] * s + net.b_red[(g, i)] * c);
            jac[g * n + g] += d;
            jac[g * n + i] -= d;
        }
    }
    jac
}

/// Inertia-weighted mean angle.
pub fn center_of_inertia(h: &[f64], delta: &[f64]) -> f64 {
    let total: f64 = h.iter().sum();
    h.iter().zip(delta).map(|(h, d)| h * d).sum::<f64>() / total
}

/// Variable indices of the dynamic part of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicVars {
    /// `delta[k][g]`, `domega[k][g]`, `pe[k][g]` for grid points `k`.
    pub delta: Vec<Vec<usize>>,
    pub domega: Vec<Vec<usize>>,
    pub pe: Vec<Vec<usize>>,
    pub pmec: Vec<usize>,
    pub coi: Vec<usize>,
}

impl DynamicVars {
    /// Appends `n_gen (3 n_points + 1) + n_points` free variables.
    pub fn add(vars: &mut VariableSet, n_gen: usize, grid: &TimeGrid) -> Self {
        let np = grid.n_points();
        let mut delta = Vec::with_capacity(np);
        let mut domega = Vec::with_capacity(np);
        let mut pe = Vec::with_capacity(np);
        let mut coi = Vec::with_capacity(np);
        for k in 0..np {
            delta.push((0..n_gen).map(|g| vars.add_free(format!("delta[g{}][{k}]", g + 1))).collect());
            domega.push((0..n_gen).map(|g| vars.add_free(format!("domega[g{}][{k}]", g + 1))).collect());
            pe.push((0..n_gen).map(|g| vars.add_free(format!("pe[g{}][{k}]", g + 1))).collect());
            coi.push(vars.add_free(format!("delta_coi[{k}]")));
        }
        let pmec = (0..n_gen).map(|g| vars.add_free(format!("pmec[g{}]", g + 1))).collect();
        Self { delta, domega, pe, pmec, coi }
    }

    pub fn n_gen(&self) -> usize {
        self.pmec.len()
    }
}

fn lin(var: usize, coef: f64) -> Term {
    Term::Linear { var, coef }
}

/// Trapezoidal angle and speed rows for every generator and step `k >= 1`.
pub fn build_trapezoidal_swing(case: &Case, grid: &TimeGrid, dv: &DynamicVars) -> Vec<ExprBlock> {
    let coef = SwingCoefficients::for_case(case, grid.dt);
    let (mut angle, mut speed) = (Vec::new(), Vec::new());
    let (mut angle_labels, mut speed_labels) = (Vec::new(), Vec::new());
    for k in 1..grid.n_points() {
        for (g, c) in coef.iter().enumerate() {
            angle.push(Expr {
                terms: vec![
                    lin(dv.delta[k][g], 1.0),
                    lin(dv.delta[k - 1][g], -1.0),
                    lin(dv.domega[k][g], -c.half_omega_dt),
                    lin(dv.domega[k - 1][g], -c.half_omega_dt),
                ],
            });
            speed.push(Expr {
                terms: vec![
                    lin(dv.domega[k][g], c.k_plus),
                    lin(dv.domega[k - 1][g], -c.k_minus),
                    lin(dv.pmec[g], -2.0 * c.k_power),
                    lin(dv.pe[k][g], c.k_power),
                    lin(dv.pe[k - 1][g], c.k_power),
                ],
            });
            angle_labels.push(format!("swing_angle[g{}][{k}]", g + 1));
            speed_labels.push(format!("swing_speed[g{}][{k}]", g + 1));
        }
    }
    vec![
        ExprBlock::new("swing_angle", ConstraintKind::Equality, angle).with_labels(angle_labels),
        ExprBlock::new("swing_speed", ConstraintKind::Equality, speed).with_labels(speed_labels),
    ]
}

/// Rows `Pe_g^k - E_g sum_i E_i (G cos + B sin)` with the network of each
/// step's stage, for `k = 0..=n_steps`.
pub fn build_electrical_power(nets: &StageNetworks, grid: &TimeGrid, dv: &DynamicVars, e: &[usize]) -> ExprBlock {
    let n = dv.n_gen();
    let mut rows = Vec::with_capacity(grid.n_points() * n);
    let mut labels = Vec::with_capacity(rows.capacity());
    for k in 0..grid.n_points() {
        let net = nets.get(grid.stage_of(k));
        for g in 0..n {
            let mut expr = Expr::new().with(lin(dv.pe[k][g], 1.0)).with(Term::Square { var: e[g], coef: -net.g_red[(g, g)] });
            for i in (0..n).filter(|&i| i != g) {
                expr.push(Term::TrigProduct {
                    ma: e[g],
                    mb: e[i],
                    ta: dv.delta[k][g],
                    tb: dv.delta[k][i],
                    cos_coef: -net.g_red[(g, i)],
                    sin_coef: -net.b_red[(g, i)],
                });
            }
            rows.push(expr);
            labels.push(format!("electrical_power[g{}][{k}]", g + 1));
        }
    }
    ExprBlock::new("electrical_power", ConstraintKind::Equality, rows).with_labels(labels)
}

/// COI definition rows and the `|delta_g - delta_coi| <= limit` box.
pub fn build_coi_constraints(case: &Case, grid: &TimeGrid, dv: &DynamicVars, limit: f64) -> Result<(ExprBlock, ExprBlock)> {
    if !(limit.is_finite() && limit > 0.0) {
        return Err(Error::Domain(format!("COI angle limit must be positive, got {limit}")));
    }
    let h: Vec<f64> = case.generators.iter().map(|g| g.h).collect();
    let total: f64 = h.iter().sum();
    let mut def = Vec::new();
    let mut def_labels = Vec::new();
    let mut lim = Vec::new();
    let mut lim_labels = Vec::new();
    for k in 0..grid.n_points() {
        let mut e = Expr::new().with(lin(dv.coi[k], -1.0));
        for (g, hg) in h.iter().enumerate() {
            e.push(lin(dv.delta[k][g], hg / total));
        }
        def.push(e);
        def_labels.push(format!("coi_definition[{k}]"));
        for g in 0..h.len() {
            for (sign, side) in [(1.0, "upper"), (-1.0, "lower")] {
                lim.push(Expr {
                    terms: vec![lin(dv.delta[k][g], sign), lin(dv.coi[k], -sign), Term::Constant(-limit)],
                });
                lim_labels.push(format!("coi_limit_{side}[g{}][{k}]", g + 1));
            }
        }
    }
    Ok((
        ExprBlock::new("coi_definition", ConstraintKind::Equality, def).with_labels(def_labels),
        ExprBlock::new("coi_limit", ConstraintKind::Inequality, lim).with_labels(lim_labels),
    ))
}

/// Ties grid point 0 to the steady-state rotor angle and speed deviation.
pub fn link_initial_conditions(dv: &DynamicVars, delta0: &[usize], domega0: &[usize]) -> ExprBlock {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for g in 0..dv.n_gen() {
        rows.push(Expr { terms: vec![lin(dv.delta[0][g], 1.0), lin(delta0[g], -1.0)] });
        labels.push(format!("initial_angle[g{}]", g + 1));
        rows.push(Expr { terms: vec![lin(dv.domega[0][g], 1.0), lin(domega0[g], -1.0)] });
        labels.push(format!("initial_speed[g{}]", g + 1));
    }
    ExprBlock::new("initial_conditions", ConstraintKind::Equality, rows).with_labels(labels)
}

/// `Pm_g = P_g`: with a lossless transient reactance, pre-fault mechanical
/// and electrical power coincide.
pub fn link_mechanical_power(dv: &DynamicVars, p: &[usize]) -> ExprBlock {
    let rows = (0..dv.n_gen()).map(|g| Expr { terms: vec![lin(dv.pmec[g], 1.0), lin(p[g], -1.0)] }).collect();
    let labels = (0..dv.n_gen()).map(|g| format!("mechanical_power[g{}]", g + 1)).collect();
    ExprBlock::new("mechanical_power", ConstraintKind::Equality, rows).with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittance::CMatrix;
    use crate::nlp::ConstraintBlock;
    use num_complex::Complex64;

    fn net(stage: Stage, entries: &[[f64; 2]], n: usize) -> ReducedNetwork {
        let y = CMatrix::from_fn(n, n, |i, j| Complex64::new(entries[i * n + j][0], entries[i * n + j][1]));
        ReducedNetwork::new(stage, y)
    }

    #[test]
    fn grid_alignment_and_stages() {
        let g = TimeGrid::new(0.01, 0.15, 5.0).unwrap();
        assert_eq!(g.n_steps, 500);
        assert_eq!(g.clearing_step(), Some(15));
        assert_eq!(g.stage_of(0), Stage::DuringFault);
        assert_eq!(g.stage_of(15), Stage::DuringFault);
        assert_eq!(g.stage_of(16), Stage::PostFault);
        assert!(TimeGrid::new(0.007, 0.15, 5.0).is_err());
        assert!(TimeGrid::new(0.001, 0.3, 5.0).is_ok());
        let none = TimeGrid::new(0.01, 0.0, 1.0).unwrap();
        assert_eq!(none.stage_of(0), Stage::PostFault);
        assert!(TimeGrid::new(0.01, 2.0, 1.0).is_err());
        assert!(TimeGrid::new(-0.01, 0.0, 1.0).is_err());
    }

    #[test]
    fn one_step_speed_change() {
        let c = SwingCoefficients::new(2.0 * std::f64::consts::PI * 60.0, 0.01, 5.0, 0.0);
        // k_plus dw = k_power (2 Pm - 2 Pe) with Pm - Pe = 0.1
        let dw = c.k_power * 0.2 / c.k_plus;
        assert!((dw - 1e-4).abs() < 1e-18);
        let (ra, rs) = c.residuals(0.3, 0.0, 0.9, 0.3 + c.half_omega_dt * dw, dw, 0.9, 1.0);
        assert!(ra.abs() < 1e-15 && rs.abs() < 1e-15);
    }

    #[test]
    fn equilibrium_has_zero_residuals() {
        let c = SwingCoefficients::new(377.0, 0.001, 3.0, 2.0);
        let (ra, rs) = c.residuals(0.4, 0.0, 1.2, 0.4, 0.0, 1.2, 1.2);
        assert_eq!((ra, rs), (0.0, 0.0));
    }

    #[test]
    fn single_machine_power_is_self_term() {
        let n = net(Stage::PostFault, &[[0.3, -2.0]], 1);
        let pe = electrical_power(&n, &[1.1], &[0.7]);
        assert!((pe[0] - 1.21 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn equal_angles_sum_conductances() {
        let n = net(Stage::PostFault, &[[0.2, -3.0], [0.1, 1.5], [0.1, 1.5], [0.2, -3.0]], 2);
        let pe = electrical_power(&n, &[1.05, 1.05], &[0.4, 0.4]);
        assert!((pe[0] - 1.05f64.powi(2) * 0.3).abs() < 1e-15);
        assert!((pe[0] - pe[1]).abs() < 1e-15);
    }

    #[test]
    fn power_jacobian_matches_differences() {
        let n = net(Stage::PostFault, &[[0.2, -3.0], [0.1, 1.5], [0.05, 0.7], [0.1, 1.5], [0.3, -4.0], [0.02, 2.0], [0.05, 0.7], [0.02, 2.0], [0.1, -2.5]], 3);
        let e = [1.1, 1.05, 0.98];
        let d = [0.3, -0.2, 0.5];
        let jac = electrical_power_jacobian(&n, &e, &d);
        for i in 0..3 {
            let h = 1e-6;
            let (mut dp, mut dm) = (d, d);
            dp[i] += h;
            dm[i] -= h;
            let (pp, pm) = (electrical_power(&n, &e, &dp), electrical_power(&n, &e, &dm));
            for g in 0..3 {
                assert!((jac[g * 3 + i] - (pp[g] - pm[g]) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn coi_of_equal_inertias_is_mean() {
        assert!((center_of_inertia(&[2.0, 2.0, 2.0], &[0.1, 0.2, 0.6]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn coi_limit_in_radians() {
        assert!((DEFAULT_COI_LIMIT - 1.74533).abs() < 1e-5);
    }

    #[test]
    fn swing_rows_vanish_on_simulated_step() {
        let case = crate::case::wecc9();
        let grid = TimeGrid::new(0.01, 0.0, 0.02).unwrap();
        let mut vars = VariableSet::new();
        let dv = DynamicVars::add(&mut vars, 3, &grid);
        assert_eq!(vars.len(), 3 * 3 * 3 + 3 + 3);
        let blocks = build_trapezoidal_swing(&case, &grid, &dv);
        assert_eq!(blocks[0].len(), 6);
        let coef = SwingCoefficients::for_case(&case, grid.dt);
        let mut x = vec![0.0; vars.len()];
        for g in 0..3 {
            x[dv.pmec[g]] = 1.0;
            x[dv.delta[0][g]] = 0.1 * g as f64;
            for k in 0..3 {
                x[dv.pe[k][g]] = 0.95;
            }
            for k in 1..3 {
                let c = &coef[g];
                x[dv.domega[k][g]] = (c.k_minus * x[dv.domega[k - 1][g]] + c.k_power * 0.1) / c.k_plus;
                x[dv.delta[k][g]] = x[dv.delta[k - 1][g]] + c.half_omega_dt * (x[dv.domega[k][g]] + x[dv.domega[k - 1][g]]);
            }
        }
        for b in &blocks {
            let mut r = vec![0.0; b.len()];
            b.evaluate(&x, &mut r);
            assert!(r.iter().all(|v| v.abs() < 1e-15), "{r:?}");
        }
    }
}
