mod common;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use tscopf::admittance::LoadVoltageAssumption;
use tscopf::contingency::ContingencySpec;
use tscopf::nlp::{solve, SolveOptions};
use tscopf::opf::{acopf_problem, solve_acopf, solve_tscopf, tscopf_problem, TrajectoryStart};
use tscopf::swing::{StageNetworks, TimeGrid, DEFAULT_COI_LIMIT};

#[derive(Deserialize)]
struct Reference {
    objective: f64,
    pg: Vec<f64>,
    qg: Vec<f64>,
    vm: Vec<f64>,
}

#[test]
fn acopf_matches_reference_tool() {
    let r: Reference = serde_json::from_str(include_str!("fixtures/acopf_reference.json")).unwrap();
    let o = solve_acopf(&common::study_case(), &SolveOptions::default()).unwrap();
    assert!((o.dispatch.objective - r.objective).abs() / r.objective < 1e-4, "{} vs {}", o.dispatch.objective, r.objective);
    for (a, b) in o.dispatch.p.iter().zip(&r.pg).chain(o.dispatch.q.iter().zip(&r.qg)).chain(o.dispatch.v.iter().zip(&r.vm)) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

/// Branch losses and shunt consumption from complex branch currents.
fn network_losses(case: &tscopf::case::Case, v: &[f64], theta: &[f64]) -> f64 {
    let pos = |id: usize| case.buses.iter().position(|b| b.id == id).unwrap();
    let phasor = |k: usize| Complex64::from_polar(v[k], theta[k]);
    let mut loss = 0.0;
    for br in &case.branches {
        let (f, t) = (pos(br.from), pos(br.to));
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half = Complex64::new(0.0, br.b_charging / 2.0);
        let (vf, vt) = (phasor(f), phasor(t));
        let i_f = (ys + half) / (br.tap * br.tap) * vf - ys / br.tap * vt;
        let i_t = (ys + half) * vt - ys / br.tap * vf;
        loss += (vf * i_f.conj() + vt * i_t.conj()).re;
    }
    for (k, b) in case.buses.iter().enumerate() {
        loss += b.shunt_g * v[k] * v[k];
    }
    loss
}

#[test]
fn active_balance_rows_sum_to_generation_minus_load_minus_losses() {
    let case = common::study_case();
    let f = acopf_problem(&case).unwrap();
    let offset: usize = f.problem.blocks.iter().take_while(|b| b.name() != "p_balance").map(|b| b.len()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut x = f.flat_start(&case);
        let v: Vec<f64> = (0..case.n_buses()).map(|_| rng.random_range(0.9..1.1)).collect();
        let mut theta: Vec<f64> = (0..case.n_buses()).map(|_| rng.random_range(-0.5..0.5)).collect();
        theta[case.slack_index()] = 0.0;
        for k in 0..case.n_buses() {
            x[f.steady.v[k]] = v[k];
            x[f.steady.theta[k]] = theta[k];
        }
        let p: Vec<f64> = (0..case.n_generators()).map(|_| rng.random_range(0.5..2.5)).collect();
        for (g, &pg) in p.iter().enumerate() {
            x[f.steady.p[g]] = pg;
        }
        let c = f.problem.evaluate_constraints(&x);
        let sum: f64 = c[offset..offset + case.n_buses()].iter().sum();
        let expected = p.iter().sum::<f64>() - case.total_load().0 - network_losses(&case, &v, &theta);
        assert!((sum - expected).abs() < 1e-8, "{sum} vs {expected}");
    }
}

#[test]
fn solved_dispatch_balances_load_and_losses() {
    let case = common::study_case();
    let d = solve_acopf(&case, &SolveOptions::default()).unwrap().dispatch;
    let gen: f64 = d.p.iter().sum();
    let losses = network_losses(&case, &d.v, &d.theta);
    assert!((gen - case.total_load().0 - losses).abs() < 1e-8);
    assert!(losses > 0.0);
}

#[test]
fn internal_voltages_follow_closed_form() {
    let case = common::study_case();
    let d = solve_acopf(&case, &SolveOptions::default()).unwrap().dispatch;
    for (g, gen) in case.generators.iter().enumerate() {
        let k = case.bus_index(gen.bus).unwrap();
        let (v, th) = (d.v[k], d.theta[k]);
        // E e^{j(delta - theta)} = V + x'Q/V + j x'P/V
        let e = Complex64::new(v + gen.x_d_prime * d.q[g] / v, gen.x_d_prime * d.p[g] / v);
        assert!((d.e[g] - e.norm()).abs() < 1e-8);
        assert!((d.delta0[g] - (th + e.arg())).abs() < 1e-8);
    }
}

#[test]
fn exact_variable_and_constraint_counts() {
    let case = common::study_case();
    let c = ContingencySpec::wecc9_contingency1(0.01);
    let grid = TimeGrid::new(c.dt, c.clearing_time, c.horizon).unwrap();
    let nets = StageNetworks::build(&case, &c, &LoadVoltageAssumption::FlatOnePu).unwrap();
    let f = tscopf_problem(&case, &nets, &grid, DEFAULT_COI_LIMIT).unwrap();
    let (nb, ng, nt) = (9, 3, 501);
    // V, theta per bus; P, Q, E, delta0, domega0 per generator; then
    // delta, domega, Pe per generator and point, COI per point, Pmec.
    assert_eq!(f.problem.n_variables(), 2 * nb + 5 * ng + ng * 3 * nt + nt + ng);
    let rows = |name: &str| f.problem.block(name).map_or(0, |b| b.len());
    assert_eq!(rows("p_balance") + rows("q_balance"), 2 * nb);
    assert_eq!(rows("flow_limit"), 2 * 9);
    assert_eq!(rows("generator_init"), 2 * ng);
    assert_eq!(rows("swing_angle") + rows("swing_speed"), 2 * ng * (nt - 1));
    assert_eq!(rows("electrical_power"), ng * nt);
    assert_eq!(rows("coi_definition"), nt);
    assert_eq!(rows("coi_limit"), 2 * ng * nt);
    assert_eq!(f.problem.n_constraints(), 8061);
}

#[test]
fn solver_is_deterministic() {
    let case = common::study_case();
    let f = acopf_problem(&case).unwrap();
    let x0 = f.flat_start(&case);
    let a = solve(&f.problem, &x0, &SolveOptions::default()).unwrap();
    let b = solve(&f.problem, &x0, &SolveOptions::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.multipliers, b.multipliers);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn contingency1_does_not_change_the_dispatch() {
    let case = common::study_case();
    let step1 = solve_acopf(&case, &SolveOptions::default()).unwrap();
    let c = ContingencySpec::wecc9_contingency1(0.01);
    let o = solve_tscopf(&case, &c, &LoadVoltageAssumption::FlatOnePu, &step1.dispatch, DEFAULT_COI_LIMIT, TrajectoryStart::Simulated, &SolveOptions::warm_started()).unwrap();
    assert!((o.dispatch.objective - step1.dispatch.objective).abs() / step1.dispatch.objective < 1e-6);
    assert_eq!(o.trajectory.len(), 501);
    assert!(o.trajectory.max_coi_deviation().iter().all(|d| d.to_degrees() < 100.0));
}

#[test]
fn overloaded_case_is_infeasible() {
    let case = tscopf::case::scale_loads(&common::study_case(), 4.0).unwrap();
    let err = solve_acopf(&case, &SolveOptions::default()).unwrap_err();
    assert!(matches!(err.root(), tscopf::error::Error::Solver { status: tscopf::nlp::SolveStatus::Infeasible, .. }), "{err}");
}
