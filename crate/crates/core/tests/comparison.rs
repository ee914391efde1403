mod common;

use tscopf::contingency::ContingencySpec;
use tscopf::metrics::{run_comparison, ComparisonOptions};

fn short(c: ContingencySpec) -> ContingencySpec {
    ContingencySpec { horizon: 1.0, ..c }
}

#[test]
fn comparison_is_deterministic_and_complete() {
    let case = common::study_case();
    let c = short(ContingencySpec::wecc9_contingency1(0.01));
    let opts = ComparisonOptions { dts: vec![0.01, 0.005], ..Default::default() };
    let a = run_comparison(&case, &c, &opts).unwrap();
    let b = run_comparison(&case, &c, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.trajectories, b.trajectories);

    let labels: Vec<&str> = a.variants.iter().map(|v| v.label.as_str()).collect();
    assert_eq!(labels, ["w/o 10 ms", "w/o 5 ms", "w 10 ms", "w 5 ms", "benchmark 10 ms"]);
    for v in &a.variants {
        assert_eq!(v.delta_deg.len(), 3);
        assert!(v.delta_deg.iter().chain(&v.omega).all(|e| e.is_finite() && *e >= 0.0));
    }
    let steps: Vec<_> = a.steps.iter().map(|s| (s.step.as_str(), s.dt)).collect();
    assert_eq!(steps, [("step1", None), ("step2", Some(0.01)), ("step3", Some(0.01)), ("step2", Some(0.005)), ("step3", Some(0.005))]);
    assert_eq!(a.trajectories.len(), a.variants.len() + 1);
}

#[test]
fn correction_reduces_the_error() {
    let case = common::study_case();
    for c in [ContingencySpec::wecc9_contingency1(0.001), ContingencySpec::wecc9_contingency2(0.001)] {
        let c = short(c);
        let r = run_comparison(&case, &c, &ComparisonOptions { dts: vec![0.001], ..Default::default() }).unwrap();
        let (wo, w) = (r.variant("flat_one_pu", 0.001).unwrap(), r.variant("from_solution", 0.001).unwrap());
        for g in 0..3 {
            assert!(w.delta_deg[g] < wo.delta_deg[g], "{} G{}", c.id, g + 1);
            assert!(w.omega[g] < wo.omega[g], "{} G{}", c.id, g + 1);
        }
    }
}
