use std::sync::Arc;

use cyclic_recovery::conditions::{check_potential_conditions, verify_damping_conditions, SampleBox};
use cyclic_recovery::generic::{diagonal_expression_damping, expression_damping};
use cyclic_recovery::models::{pendulum_damping_k1, pendulum_damping_k2, three_link_damping};
use cyclic_recovery::numeric::{integrate_vec, jacobian_fd};
use cyclic_recovery::potential::{build_shifted_potential, DampingPotential};
use cyclic_recovery::system::DampingField;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn v(a: &[f64]) -> DVector<f64> {
    DVector::from_vec(a.to_vec())
}

fn k2_without_closed_form() -> DampingField {
    let k2 = pendulum_damping_k2();
    DampingField::new(2, k2.eval_fn())
}

/// Line integral of `k(·)·dx` along the axis-aligned staircase from the
/// origin to `x`, one coordinate at a time.
fn staircase_h(k: &DampingField, x: &DVector<f64>) -> DVector<f64> {
    let mut total = DVector::zeros(x.len());
    let mut corner = DVector::zeros(x.len());
    for axis in 0..x.len() {
        let start = corner.clone();
        let seg = integrate_vec(
            |s| {
                let mut p = start.clone();
                p[axis] = s;
                k.eval(&p).column(axis).into_owned()
            },
            0.0,
            x[axis],
            1e-12,
        );
        total += seg;
        corner[axis] = x[axis];
    }
    total
}

#[test]
fn path_integral_agrees_with_staircase() {
    let k = k2_without_closed_form();
    let pot = DampingPotential::build(&k, &SampleBox::symmetric(2, 2.0)).unwrap();
    for x in [v(&[0.3, -1.2]), v(&[1.7, 1.1]), v(&[-0.9, 0.4])] {
        let diff = (pot.h(&x) - staircase_h(&k, &x)).amax();
        assert!(diff <= 1e-8, "at {x}: {diff}");
    }
}

#[test]
fn equilibrium_agrees_with_grid_scan() {
    let pot = DampingPotential::build(&pendulum_damping_k2(), &SampleBox::symmetric(2, 3.0)).unwrap();
    let mu = v(&[2.0, -1.0]);
    let sp = build_shifted_potential(&pot, &mu, &v(&[0.0, 0.0])).unwrap();
    let xe = sp.equilibrium().unwrap().clone();
    // coarse-to-fine scan of U − μ·x
    let f = |x: &DVector<f64>| pot.u(x) - mu.dot(x);
    let mut center = v(&[0.0, 0.0]);
    let mut half = 3.0;
    for _ in 0..30 {
        let mut best = (f64::INFINITY, center.clone());
        for i in 0..=20 {
            for j in 0..=20 {
                let p = &center + v(&[half * (i as f64 / 10.0 - 1.0), half * (j as f64 / 10.0 - 1.0)]);
                let val = f(&p);
                if val < best.0 {
                    best = (val, p);
                }
            }
        }
        center = best.1;
        half *= 0.25;
    }
    assert!((&center - &xe).amax() < 1e-6, "{center} vs {xe}");
    assert!(sp.value(&xe).abs() < 1e-12);
    assert!(check_potential_conditions(&sp, &SampleBox::symmetric(2, 3.0), 21).all_pass());
}

#[test]
fn hessian_of_potential_matches_damping_for_expression_field() {
    let k = expression_damping(
        &[
            vec!["2 + cos(x1)".into(), "0.5".into()],
            vec!["0.5".into(), "3 + x2^2".into()],
        ],
        2,
    )
    .unwrap();
    let region = SampleBox::symmetric(2, 1.5);
    assert!(verify_damping_conditions(&k, &region, 9).damping_ok());
    let pot = DampingPotential::build(&k, &region).unwrap();
    for x in [v(&[0.2, -0.7]), v(&[1.1, 0.9])] {
        let jac = jacobian_fd(|p| pot.h(p), &x, 1e-5);
        assert!((jac - k.eval(&x)).amax() < 1e-6);
        let grad_u = jacobian_fd(|p| DVector::from_element(1, pot.u(p)), &x, 1e-6);
        assert!((grad_u.transpose() - pot.h(&x)).amax() < 1e-6);
    }
}

#[test]
fn diagonal_expressions_match_fast_path() {
    let from_cfg = diagonal_expression_damping(&["1 + s^2".into(), "2".into()]).unwrap();
    let pot = DampingPotential::build(&from_cfg, &SampleBox::symmetric(2, 2.0)).unwrap();
    let fast = DampingPotential::diagonal(vec![Arc::new(|s: f64| 1.0 + s * s), Arc::new(|_| 2.0)]).unwrap();
    let x = v(&[1.3, -0.4]);
    assert!((pot.h(&x) - fast.h(&x)).amax() < 1e-12);
    assert!((pot.u(&x) - fast.u(&x)).abs() < 1e-12);
}

#[test]
fn presets_pass_their_checks() {
    let region = SampleBox::symmetric(2, 2.0);
    for k in [pendulum_damping_k1(), pendulum_damping_k2(), three_link_damping()] {
        let report = verify_damping_conditions(&k, &region, 11);
        assert!(report.damping_ok(), "{}", report.render());
    }
}

#[test]
fn asymmetric_field_reported_with_witness() {
    let k = DampingField::constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
    let report = verify_damping_conditions(&k, &SampleBox::symmetric(2, 1.0), 5);
    let sym = report.symmetry.unwrap();
    assert!(!sym.pass && sym.witness.is_some());
    assert!(DampingPotential::build(&k, &SampleBox::symmetric(2, 1.0)).unwrap_err().is_validation());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h_of_constant_field_is_linear(a in 0.5f64..5.0, b in -1.0f64..1.0, c in 0.5f64..5.0,
                                     x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
        let stripped = DampingField::new(2, DampingField::constant(m.clone()).eval_fn());
        let pot = DampingPotential::build(&stripped, &SampleBox::symmetric(2, 2.0)).unwrap();
        let x = v(&[x0, x1]);
        prop_assert!((pot.h(&x) - &m * &x).amax() < 1e-10);
        prop_assert!((pot.u(&x) - 0.5 * x.dot(&(&m * &x))).abs() < 1e-10);
    }

    #[test]
    fn shifted_gradient_vanishes_at_equilibrium(mu0 in -2.0f64..2.0, mu1 in -2.0f64..2.0) {
        let pot = DampingPotential::build(&pendulum_damping_k2(), &SampleBox::symmetric(2, 2.0)).unwrap();
        let sp = build_shifted_potential(&pot, &v(&[mu0, mu1]), &v(&[0.0, 0.0])).unwrap();
        let xe = sp.equilibrium().unwrap();
        prop_assert!(sp.gradient(xe).norm() <= 1e-10);
        prop_assert!(sp.value(xe).abs() <= 1e-10);
        prop_assert!(sp.value(&(xe + v(&[0.1, -0.1]))) > 0.0);
    }
}
