//! Structural properties of the Q-value estimator.

use autobct::qvalue::{Continuation, QEvaluator, SamplingPlan};
use autobct::rng::StreamKey;
use autobct::{presets, BeliefState, NoiseModel};

fn rescaled(x: &BeliefState, c: f64) -> BeliefState {
    BeliefState::new(
        x.mu_alpha() * c,
        x.sigma_alpha() * (c * c),
        x.mu_beta().clone(),
        x.sigma_beta().clone(),
    )
    .unwrap()
}

#[test]
fn argmax_is_invariant_to_score_units() {
    // Scaling scores by c scales mu_alpha, sigma_h, gamma and V by c and
    // Sigma_alpha by c^2; every Q-value then scales by c.
    let pre = presets::synthetic();
    let p = &pre.problem;
    let plan = SamplingPlan::default_for(1, 60, 4).unwrap();
    let x = p.prior.clone();
    let v = |y: &BeliefState| 0.8 * y.mu_alpha()[0] - 0.1 * y.sigma_alpha().trace();
    let base = QEvaluator::new(&p.basis, &p.noise, p.gamma, &plan, &pre.qfit).unwrap();
    let key = StreamKey::new(12);
    let q = base.lambda(&x, Continuation::value(&v), key).unwrap();
    let (u0, best0) = base.argmax(&q);

    for c in [0.5, 3.0, 20.0] {
        let noise = NoiseModel::new(p.noise.sigma_h * c, p.noise.sigma_t).unwrap();
        let ev = QEvaluator::new(&p.basis, &noise, p.gamma * c, &plan, &pre.qfit).unwrap();
        let vc = move |y: &BeliefState| 0.8 * y.mu_alpha()[0] - 0.1 * y.sigma_alpha().trace() / c;
        let qc = ev.lambda(&rescaled(&x, c), Continuation::value(&vc), key).unwrap();
        for (a, b) in q.raw_values().iter().zip(qc.raw_values()) {
            assert!((b - c * a).abs() <= 1e-9 * (1.0 + (c * a).abs()), "c={c}: {b} vs {}", c * a);
        }
        let (uc, bestc) = ev.argmax(&qc);
        assert_eq!(uc, u0, "c={c}");
        assert!((bestc - c * best0).abs() <= 1e-6 * (1.0 + bestc.abs()));
    }
}

#[test]
fn damping_never_raises_a_q_value() {
    let pre = presets::synthetic();
    let p = &pre.problem;
    let plan = SamplingPlan::default_for(1, 50, 8).unwrap();
    let ev = QEvaluator::new(&p.basis, &p.noise, p.gamma, &plan, &pre.qfit).unwrap();
    let v = |y: &BeliefState| (0.5 + y.mu_alpha()[0]).max(0.0);
    let key = StreamKey::new(3);
    let mut previous: Option<Vec<f64>> = None;
    for eps in [0.0, 0.02, 0.1, 0.5, 0.99] {
        let q = ev.lambda(&p.prior, Continuation::damped(&v, eps), key).unwrap();
        if let Some(prev) = &previous {
            for (a, b) in prev.iter().zip(q.raw_values()) {
                assert!(b <= a, "eps={eps}: {b} > {a}");
            }
        }
        previous = Some(q.raw_values().to_vec());
    }
    let none = ev.lambda(&p.prior, Continuation::None, key).unwrap();
    for (a, b) in previous.unwrap().iter().zip(none.raw_values()) {
        assert!(b <= a);
    }
}

#[test]
fn higher_gamma_lowers_every_value_by_the_cost_term() {
    let pre = presets::synthetic();
    let p = &pre.problem;
    let plan = SamplingPlan::default_for(1, 40, 2).unwrap();
    let key = StreamKey::new(1);
    let lo = QEvaluator::new(&p.basis, &p.noise, 0.1, &plan, &pre.qfit).unwrap();
    let hi = QEvaluator::new(&p.basis, &p.noise, 0.3, &plan, &pre.qfit).unwrap();
    let a = lo.lambda(&p.prior, Continuation::None, key).unwrap();
    let b = hi.lambda(&p.prior, Continuation::None, key).unwrap();
    let free = QEvaluator::new(&p.basis, &p.noise, 0.0, &plan, &pre.qfit).unwrap();
    let f = free.lambda(&p.prior, Continuation::None, key).unwrap();
    for ((a, b), f) in a.raw_values().iter().zip(b.raw_values()).zip(f.raw_values()) {
        // Linear in gamma with identical samples.
        assert!(((f - a) * 3.0 - (f - b)).abs() < 1e-12);
        assert!(b < a);
    }
}
