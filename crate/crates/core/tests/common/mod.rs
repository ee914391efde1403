#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tscopf::case::{scale_loads, wecc9, Branch, Bus, Case, Generator, Load, OMEGA_SYN_60HZ};

pub fn study_case() -> Case {
    scale_loads(&wecc9(), 1.5).unwrap()
}

fn bus(id: usize, slack: bool, g: f64, b: f64) -> Bus {
    Bus { id, v_min: 0.9, v_max: 1.1, theta_min: -PI, theta_max: PI, shunt_g: g, shunt_b: b, is_slack: slack }
}

/// A connected network with `2..=8` buses, `1..=3` generators on distinct
/// buses, random taps, charging, shunts and loads.
pub fn random_network(rng: &mut ChaCha8Rng) -> Case {
    let nb = rng.random_range(2..=8usize);
    let ng = rng.random_range(1..=3usize.min(nb));
    let buses: Vec<Bus> = (1..=nb)
        .map(|id| {
            let shunt = rng.random_bool(0.3);
            let (g, b) = if shunt { (rng.random_range(0.0..0.05), rng.random_range(-0.2..0.2)) } else { (0.0, 0.0) };
            bus(id, id == 1, g, b)
        })
        .collect();
    let line = |rng: &mut ChaCha8Rng, from: usize, to: usize| Branch {
        from,
        to,
        r: rng.random_range(0.0..0.05),
        x: rng.random_range(0.02..0.3),
        b_charging: rng.random_range(0.0..0.3),
        tap: if rng.random_bool(0.3) { rng.random_range(0.95..1.05) } else { 1.0 },
        s_max: 5.0,
        theta_diff_min: -PI,
        theta_diff_max: PI,
    };
    let mut branches = Vec::new();
    for to in 2..=nb {
        let from = rng.random_range(1..to);
        branches.push(line(rng, from, to));
    }
    for _ in 0..rng.random_range(0..=nb) {
        let a = rng.random_range(1..=nb);
        let b = rng.random_range(1..=nb);
        if a != b {
            branches.push(line(rng, a, b));
        }
    }
    let mut gen_buses: Vec<usize> = (1..=nb).collect();
    for i in (1..gen_buses.len()).rev() {
        gen_buses.swap(i, rng.random_range(0..=i));
    }
    let generators = gen_buses[..ng]
        .iter()
        .map(|&b| Generator {
            bus: b,
            p_min: 0.0,
            p_max: 3.0,
            q_min: -2.0,
            q_max: 2.0,
            cost: 1.0,
            cost_quadratic: 0.0,
            cost_constant: 0.0,
            x_d_prime: rng.random_range(0.05..0.3),
            h: rng.random_range(2.0..20.0),
            d: 0.0,
            e_min: 0.5,
            e_max: 2.0,
        })
        .collect();
    let mut loads = Vec::new();
    for b in 1..=nb {
        if rng.random_bool(0.6) {
            loads.push(Load { bus: b, p: rng.random_range(0.1..2.0), q: rng.random_range(-0.3..0.8) });
        }
    }
    let case = Case { base_mva: 100.0, omega_syn: OMEGA_SYN_60HZ, buses, branches, generators, loads };
    case.validate().unwrap();
    case
}

/// Generator currents for internal voltages `e`, from a direct solve of the
/// full network with generator internal nodes and loads at admittance
/// `(P - jQ) / V^2`. Assembled from the branch data without the library.
pub fn full_network_currents(case: &Case, load_v: &[f64], e: &[Complex64]) -> Vec<Complex64> {
    let nb = case.buses.len();
    let ng = case.generators.len();
    let pos = |id: usize| case.buses.iter().position(|b| b.id == id).unwrap();
    let n = nb + ng;
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for br in &case.branches {
        let (f, t) = (pos(br.from), pos(br.to));
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half = Complex64::new(0.0, br.b_charging / 2.0);
        y[(f, f)] += (ys + half) / (br.tap * br.tap);
        y[(t, t)] += ys + half;
        y[(f, t)] -= ys / br.tap;
        y[(t, f)] -= ys / br.tap;
    }
    for (k, b) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(b.shunt_g, b.shunt_b);
    }
    for l in &case.loads {
        let k = pos(l.bus);
        y[(k, k)] += Complex64::new(l.p, -l.q) / (load_v[k] * load_v[k]);
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let k = pos(gen.bus);
        let yg = Complex64::new(1.0, 0.0) / Complex64::new(0.0, gen.x_d_prime);
        y[(k, k)] += yg;
        y[(nb + g, nb + g)] += yg;
        y[(k, nb + g)] -= yg;
        y[(nb + g, k)] -= yg;
    }
    // Bus voltages from zero net injection at every bus node.
    let ybb = y.view((0, 0), (nb, nb)).into_owned();
    let ybg = y.view((0, nb), (nb, ng)).into_owned();
    let ev = DVector::from_column_slice(e);
    let rhs = -(&ybg * &ev);
    let vb = ybb.lu().solve(&rhs).expect("bus block is nonsingular");
    let mut all = DVector::<Complex64>::zeros(n);
    all.rows_mut(0, nb).copy_from(&vb);
    all.rows_mut(nb, ng).copy_from(&ev);
    let i = &y * all;
    (0..ng).map(|g| i[nb + g]).collect()
}
