//! Two-step nested estimates against a quadrature dynamic program on an
//! instance where the control matters: score `alpha (u - 0.5)`, constant
//! cost, controls `{0, 1}`.

mod common;

use autobct::qvalue::{Continuation, QEvaluator, SamplingPlan};
use autobct::regress::RegressionSpec;
use autobct::rng::StreamKey;
use autobct::{BasisSet, BeliefState, NoiseModel};
use common::{DpProblem, Scalar};
use nalgebra::{DMatrix, DVector};

fn problem() -> DpProblem {
    DpProblem {
        phi: |u| u - 0.5,
        psi: |_| 1.0,
        sigma_h: 0.1,
        sigma_t: 0.1,
        gamma: 0.16,
        controls: vec![0.0, 1.0],
        nodes: 161,
    }
}

fn dp_value(dp: &DpProblem, x: Scalar) -> f64 {
    // Both controls give the same posterior variances.
    let sa1 = common::update(x.ma, x.sa, 0.5, 0.0, dp.sigma_h).1;
    let sb1 = common::update(x.mb, x.sb, 1.0, 0.0, dp.sigma_t).1;
    let spread_a = 9.0 * (x.sa - sa1).max(1e-12).sqrt();
    let spread_b = 9.0 * (x.sb - sb1).max(1e-12).sqrt();
    let lattice = dp.lattice([
        (x.ma - spread_a, x.ma + spread_a, 241),
        (sa1, sa1, 1),
        (x.mb - spread_b, x.mb + spread_b, 241),
        (sb1, sb1, 1),
    ]);
    dp.v2(x, &lattice)
}

fn state(x: Scalar) -> BeliefState {
    BeliefState::new(
        DVector::from_element(1, x.ma),
        DMatrix::from_element(1, 1, x.sa),
        DVector::from_element(1, x.mb),
        DMatrix::from_element(1, 1, x.sb),
    )
    .unwrap()
}

#[test]
fn first_stage_matches_the_closed_form() {
    // V_1 = 0.5 |ma| - gamma Upsilon(mb, sb + sigma_t^2).
    let dp = problem();
    let x = Scalar {
        ma: -0.3,
        sa: 0.2,
        mb: 0.2,
        sb: 0.05,
    };
    let closed = 0.15 - dp.gamma * autobct::qvalue::upsilon(0.2, 0.05 + 0.01).unwrap();
    // Trapezoid error at the kink of the positive part.
    assert!((dp.v1(x) - closed).abs() < 1e-5, "{} vs {closed}", dp.v1(x));
}

#[test]
fn two_step_estimate_matches_dynamic_program() {
    let dp = problem();
    let basis = BasisSet::new(1, vec![vec![1]], vec![vec![0]]).unwrap();
    let noise = NoiseModel::new(dp.sigma_h, dp.sigma_t).unwrap();
    let plan = SamplingPlan::lattice(1, 2, 400, 5).unwrap();
    // A line through two points: its maximum is the larger grid value.
    let fit = RegressionSpec::PolynomialRidge { degree: 1, lambda: 0.0 };
    let ev = QEvaluator::new(&basis, &noise, dp.gamma, &plan, &fit).unwrap();

    let states = [
        (0.0, 0.3, 0.3, 0.1),
        (0.1, 0.5, 0.5, 0.2),
        (-0.2, 0.2, 0.4, 0.05),
        (0.4, 0.1, 0.2, 0.1),
        (-0.05, 1.0, 0.6, 0.3),
        (0.25, 0.8, 0.1, 0.02),
    ];
    let mut report = Vec::new();
    for (i, &(ma, sa, mb, sb)) in states.iter().enumerate() {
        let x = Scalar { ma, sa, mb, sb };
        let curve = ev.otf(&state(x), 2, Continuation::None, StreamKey::new(60).child(i as u64)).unwrap();
        let (_, v) = ev.argmax(&curve);
        let reference = dp_value(&dp, x);
        let z = (v - reference) / curve.pooled_se();
        report.push(format!("{reference:.4} vs {v:.4} ({z:+.2} SE)"));
        // Learning first is worth something here, unlike with a constant basis.
        assert!(reference > dp.v1(x) - 1e-9);
        assert!(z.abs() <= 3.0, "{}", report.join("; "));
    }
}
