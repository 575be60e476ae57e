use adasecant::problems::{make_quadratic, QuadraticSpec};
use adasecant::*;

fn quadratic() -> problems::Quadratic {
    make_quadratic(QuadraticSpec::random(20, 0.5, 10.0, 3, 0.0)).unwrap()
}

#[test]
fn plain_taylor_stepper_learns_inverse_curvature() {
    let q = quadratic();
    let cfg = AdaSecantConfig {
        step_formula: StepFormula::Taylor,
        ..AdaSecantConfig::plain()
    };
    let batch = q.full_batch();
    let mut theta = q.initial_point(0);
    let mut st = AdaSecantState::new(20);
    for _ in 0..200 {
        let u = st
            .step(&q.grad(&theta, &batch), q.layout(), &cfg)
            .unwrap()
            .0;
        theta.iter_mut().zip(&u).for_each(|(t, du)| *t += du);
    }
    for (rate, h) in st.rate.iter().zip(q.curvatures()) {
        assert!((rate * h - 1.0).abs() <= 0.1, "rate·h = {}", rate * h);
    }
    assert!(theta.iter().all(|t| t.abs() < 1e-8));
}

#[test]
fn simple_rate_vanishes_on_exact_quadratics() {
    let q = quadratic();
    let cfg = AdaSecantConfig::plain();
    let batch = q.full_batch();
    let mut theta = q.initial_point(0);
    let mut st = AdaSecantState::new(20);
    for _ in 0..(cfg.warmup_steps + 5) {
        let u = st
            .step(&q.grad(&theta, &batch), q.layout(), &cfg)
            .unwrap()
            .0;
        theta.iter_mut().zip(&u).for_each(|(t, du)| *t += du);
    }
    for (rate, h) in st.rate.iter().zip(q.curvatures()) {
        assert!(rate * h < 1e-5, "rate·h = {}", rate * h);
    }
}

#[test]
fn gradient_spike_resets_memory_only_with_detection() {
    let q = make_quadratic(QuadraticSpec::random(20, 0.5, 10.0, 0, 0.1)).unwrap();
    let run = |use_od: bool| {
        let cfg = AdaSecantConfig {
            use_od,
            ..Default::default()
        };
        let mut stream = BatchStream::for_problem(&q, 1, 1).unwrap();
        let mut theta = q.initial_point(1);
        let mut st = AdaSecantState::new(20);
        let mut outliers = 0;
        for k in 0..=120u64 {
            let mut g = q.grad(&theta, &stream.batch(k));
            if k == 120 {
                g[7] += 50.0;
            }
            let (u, d) = st.step(&g, q.layout(), &cfg).unwrap();
            outliers = d.outlier_count;
            theta.iter_mut().zip(&u).for_each(|(t, du)| *t += du);
        }
        (st.tau(7), outliers)
    };
    let (tau, outliers) = run(true);
    assert_eq!(tau, TAU_RESET);
    assert!(outliers >= 1);
    assert_eq!(run(false).1, 0);
}

#[test]
fn diagnostics_report_applied_rate() {
    let q = quadratic();
    let batch = q.full_batch();
    let mut theta = q.initial_point(0);
    let mut st = AdaSecantState::new(20);
    let cfg = AdaSecantConfig {
        step_formula: StepFormula::Taylor,
        ..Default::default()
    };
    for k in 0..30 {
        let (u, d) = st.step(&q.grad(&theta, &batch), q.layout(), &cfg).unwrap();
        let applied: f64 = (0..20)
            .map(|i| st.rate[i] / st.adagrad_accum[i].sqrt().max(1.0))
            .sum::<f64>()
            / 20.0;
        if k >= cfg.warmup_steps {
            assert!((d.mean_rate - applied).abs() <= 1e-12 * applied);
        }
        theta.iter_mut().zip(&u).for_each(|(t, du)| *t += du);
    }
}
