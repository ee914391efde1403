mod common;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tscopf::admittance::LoadVoltageAssumption;
use tscopf::case::{Branch, Bus, Case, Generator, OMEGA_SYN_60HZ};
use tscopf::contingency::ContingencySpec;
use tscopf::nlp::SolveOptions;
use tscopf::opf::{polish_power_flow, solve_acopf, solve_tscopf, tscopf_problem, DispatchSolution, TrajectoryStart};
use tscopf::swing::{center_of_inertia, StageNetworks, TimeGrid, DEFAULT_COI_LIMIT};
use tscopf::tdsim::{refine_check, simulate, simulate_on};

fn step1() -> DispatchSolution {
    solve_acopf(&common::study_case(), &SolveOptions::default()).unwrap().dispatch
}

#[test]
fn speed_rows_telescope_to_coi_motion() {
    let case = common::study_case();
    let c = ContingencySpec::wecc9_contingency1(0.01);
    let grid = TimeGrid::new(c.dt, c.clearing_time, c.horizon).unwrap();
    let nets = StageNetworks::build(&case, &c, &LoadVoltageAssumption::FlatOnePu).unwrap();
    let f = tscopf_problem(&case, &nets, &grid, DEFAULT_COI_LIMIT).unwrap();
    let (dv, _) = f.dynamic.as_ref().unwrap();
    let offset: usize = f.problem.blocks.iter().take_while(|b| b.name() != "swing_speed").map(|b| b.len()).sum();
    let h: Vec<f64> = case.generators.iter().map(|g| g.h).collect();
    assert!(case.generators.iter().all(|g| g.d == 0.0));
    let h_tot: f64 = h.iter().sum();
    let dt = grid.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x: Vec<f64> = (0..f.problem.n_variables()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = f.problem.evaluate_constraints(&x);
        for k in [1, 15, 16, 250, 500] {
            let lhs: f64 = (0..3).map(|g| 4.0 * h[g] / dt * c[offset + 3 * (k - 1) + g]).sum();
            let w = |k: usize| center_of_inertia(&h, &(0..3).map(|g| x[dv.domega[k][g]]).collect::<Vec<_>>());
            let power: f64 = (0..3).map(|g| 2.0 * x[dv.pmec[g]] - x[dv.pe[k][g]] - x[dv.pe[k - 1][g]]).sum();
            let rhs = 4.0 * h_tot / dt * (w(k) - w(k - 1)) - power;
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()), "k = {k}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn optimizer_and_simulator_trajectories_agree() {
    let case = common::study_case();
    let c = ContingencySpec::wecc9_contingency1(0.01);
    let flat = LoadVoltageAssumption::FlatOnePu;
    let o = solve_tscopf(&case, &c, &flat, &step1(), DEFAULT_COI_LIMIT, TrajectoryStart::Simulated, &SolveOptions::warm_started()).unwrap();
    let grid = TimeGrid::new(c.dt, c.clearing_time, c.horizon).unwrap();
    let nets = StageNetworks::build(&case, &c, &flat).unwrap();
    let s = simulate_on(&case, &o.dispatch, &nets, &grid, &c.id, flat.label()).unwrap();
    assert_eq!(s.times, o.trajectory.times);
    for g in 0..3 {
        for k in 0..s.len() {
            assert!((s.delta[g][k] - o.trajectory.delta[g][k]).abs() < 1e-6);
            assert!((s.omega[g][k] - o.trajectory.omega[g][k]).abs() < 1e-8);
        }
    }
}

#[test]
fn undisturbed_system_stays_at_equilibrium() {
    let case = common::study_case();
    // Equilibrium needs load admittances at the solved voltages; with 1.0 p.u.
    // the initial point is off equilibrium and the machines swing.
    let d = polish_power_flow(&case, &step1()).unwrap();
    let quiet = ContingencySpec { cleared_branch: None, fault_shunt: 0.0, clearing_time: 0.0, ..ContingencySpec::wecc9_contingency1(0.01) };
    let t = simulate(&case, &d, &quiet, &d.load_voltages()).unwrap();
    assert_eq!(t.len(), 501);
    for g in 0..3 {
        let drift = t.delta[g].iter().map(|v| (v - t.delta[g][0]).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-10, "G{} drifts {drift}", g + 1);
    }
}

#[test]
fn coi_relative_angles_have_zero_weighted_sum() {
    let case = common::study_case();
    let t = simulate(&case, &step1(), &ContingencySpec::wecc9_contingency2(0.01), &LoadVoltageAssumption::FlatOnePu).unwrap();
    let rel = t.coi_relative();
    for (k, _) in t.times.iter().enumerate() {
        let s: f64 = (0..3).map(|g| t.inertia[g] * rel[g][k]).sum();
        assert!(s.abs() < 1e-10);
    }
}

#[test]
fn simulator_is_second_order() {
    let case = common::study_case();
    let d = step1();
    let smooth = ContingencySpec { clearing_time: 0.0, horizon: 1.0, ..ContingencySpec::wecc9_contingency1(0.004) };
    let runs: Vec<_> = [0.004, 0.002, 0.001].iter().map(|&dt| simulate(&case, &d, &smooth.with_dt(dt), &LoadVoltageAssumption::FlatOnePu).unwrap()).collect();
    let r = refine_check(&runs, None).unwrap();
    assert!((r.order - 2.0).abs() < 0.2, "order {}", r.order);
}

/// One machine against a near-infinite bus through a lossless line.
fn machine_infinite_bus(x_line: f64, theta: f64) -> (Case, DispatchSolution) {
    let bus = |id, slack| Bus { id, v_min: 0.9, v_max: 1.1, theta_min: -PI, theta_max: PI, shunt_g: 0.0, shunt_b: 0.0, is_slack: slack };
    let gen = |bus, h, xd| Generator {
        bus,
        p_min: -5.0,
        p_max: 5.0,
        q_min: -5.0,
        q_max: 5.0,
        cost: 1.0,
        cost_quadratic: 0.0,
        cost_constant: 0.0,
        x_d_prime: xd,
        h,
        d: 0.0,
        e_min: 0.0,
        e_max: 5.0,
    };
    let case = Case {
        base_mva: 100.0,
        omega_syn: OMEGA_SYN_60HZ,
        buses: vec![bus(1, false), bus(2, true)],
        branches: vec![Branch { from: 1, to: 2, r: 0.0, x: x_line, b_charging: 0.0, tap: 1.0, s_max: 10.0, theta_diff_min: -PI, theta_diff_max: PI }],
        generators: vec![gen(1, 5.0, 0.2), gen(2, 1e6, 1e-4)],
        loads: vec![],
    };
    case.validate().unwrap();
    let p = theta.sin() / x_line;
    let q = (1.0 - theta.cos()) / x_line;
    let d = DispatchSolution::from_operating_point(&case, vec![1.0, 1.0], vec![theta, 0.0], vec![p, -p], vec![q, q]).unwrap();
    (case, d)
}

#[test]
fn small_signal_frequency_matches_linearization() {
    let (case, d) = machine_infinite_bus(0.3, 0.3);
    let x_total = 0.2 + 0.3 + 1e-4;
    let delta0 = d.delta0[0] - d.delta0[1];
    let p_max = d.e[0] * d.e[1] / x_total;
    let h = case.generators[0].h;
    let expected = (OMEGA_SYN_60HZ * p_max * delta0.cos() / (2.0 * h)).sqrt();

    let kick = ContingencySpec { id: "kick".into(), fault_bus: 1, cleared_branch: None, clearing_time: 0.02, dt: 0.001, horizon: 5.0, fault_shunt: 0.3 };
    let t = simulate(&case, &d, &kick, &LoadVoltageAssumption::FlatOnePu).unwrap();
    let swing: Vec<f64> = (0..t.len()).map(|k| t.delta[0][k] - t.delta[1][k] - delta0).collect();
    // upward zero crossings after the disturbance, linearly interpolated
    let start = (0.02 / t.dt) as usize + 1;
    let crossings: Vec<f64> = (start..t.len() - 1)
        .filter(|&k| swing[k] < 0.0 && swing[k + 1] >= 0.0)
        .map(|k| t.times[k] + t.dt * swing[k] / (swing[k] - swing[k + 1]))
        .collect();
    assert!(crossings.len() >= 3, "{crossings:?}");
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let measured = 2.0 * PI / period;
    assert!((measured - expected).abs() / expected < 0.02, "{measured} vs {expected}");
}
