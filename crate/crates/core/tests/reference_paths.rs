mod support;

use ecot_core::reference::stacked_state_space_joint;
use ecot_core::{
    build_reference, check_causality, extract_model, joint_distance, kalman_coefficients,
    reference_from_state_space, CoefficientSpec, ModelStep, Role, StateSpaceSpec,
};
use rand::rngs::StdRng;
use rand::Rng;
use support::*;

fn random_state_space(r: &mut StdRng, horizon: usize) -> StateSpaceSpec {
    StateSpaceSpec {
        transition: r.gen_range(-1.2..1.2),
        input_gain: r.gen_range(-1.5..1.5),
        process_var: r.gen_range(0.1..2.0),
        output_gain: r.gen_range(-1.5..1.5),
        noise_var: r.gen_range(0.1..2.0),
        initial_mean: r.gen_range(-1.0..1.0),
        initial_var: r.gen_range(0.0..1.0),
        horizon,
    }
}

fn random_coefficients(r: &mut StdRng, horizon: usize) -> CoefficientSpec {
    let steps = (1..=horizon)
        .map(|t| ModelStep {
            h: (0..t).map(|_| r.gen_range(-1.0..1.0)).collect(),
            f: (1..t).map(|_| r.gen_range(-0.8..0.8)).collect(),
            b: r.gen_range(-1.0..1.0),
            eps: r.gen_range(0.3..1.5),
        })
        .collect();
    CoefficientSpec::new(steps).unwrap()
}

#[test]
fn kalman_and_stacked_paths_agree() {
    let mut r = rng(41);
    for horizon in 1..=6 {
        for _ in 0..5 {
            let ss = random_state_space(&mut r, horizon);
            let mu = random_marginal(&mut r, Role::Input, horizon);
            let a = reference_from_state_space(&ss, &mu).unwrap();
            let b = stacked_state_space_joint(&ss, &mu).unwrap();
            assert!(joint_distance(&a, &b).unwrap() < 1e-8, "T={horizon}");
        }
    }
}

#[test]
fn innovation_variance_bounded_below_by_noise() {
    let mut r = rng(43);
    for _ in 0..20 {
        let ss = random_state_space(&mut r, 8);
        let c = kalman_coefficients(&ss).unwrap();
        for s in c.steps() {
            assert!(s.eps * s.eps >= ss.noise_var - 1e-15);
        }
    }
}

#[test]
fn reference_is_causal_and_identifiable() {
    let mut r = rng(47);
    for horizon in 1..=6 {
        let c = random_coefficients(&mut r, horizon);
        let mu = random_marginal(&mut r, Role::Input, horizon);
        let reference = build_reference(&c, &mu).unwrap();
        assert!(check_causality(&reference, 1e-9).unwrap().passed);
        let back = extract_model(&reference).unwrap();
        for (a, b) in c.steps().iter().zip(back.steps()) {
            let err =
                a.h.iter()
                    .zip(&b.h)
                    .chain(a.f.iter().zip(&b.f))
                    .map(|(x, y)| (x - y).abs())
                    .chain([(a.b - b.b).abs(), (a.eps - b.eps).abs()])
                    .fold(0.0, f64::max);
            assert!(err < 1e-8, "T={horizon}: {err:e}");
        }
    }
}

#[test]
fn unit_model_hand_values() {
    let ss = StateSpaceSpec::new(1.0, 1.0, 1.0, 1.0, 1.0, 2);
    let c = kalman_coefficients(&ss).unwrap();
    let s = c.step(2);
    assert!((s.h[0] - 0.5).abs() < 1e-14 && (s.h[1] - 1.0).abs() < 1e-14);
    assert!((s.f[0] - 0.5).abs() < 1e-14);
    assert!((s.eps * s.eps - 2.5).abs() < 1e-14);
}
