use std::f64::consts::{FRAC_PI_2, PI};

use cyclic_recovery::dynamics::christoffel;
use cyclic_recovery::generic::{generic_system, GenericModel};
use cyclic_recovery::models::{
    planar_pendulum, three_link, PendulumParams, ThreeLinkParams, PENDULUM_THETA2_MARGIN,
};
use cyclic_recovery::numeric::{matrix_partials_fd, max_asymmetry, min_eigenvalue};
use cyclic_recovery::MechanicalSystem;
use nalgebra::DVector;
use rand::{rngs::StdRng, Rng, SeedableRng};

fn random_shape(sys: &MechanicalSystem, rng: &mut StdRng) -> DVector<f64> {
    DVector::from_iterator(
        sys.dims.shape(),
        sys.domain.bounds.iter().map(|&(lo, hi)| {
            let (lo, hi) = (lo.max(-2.0 * PI), hi.min(2.0 * PI));
            rng.gen_range(lo..hi)
        }),
    )
}

fn builtins() -> Vec<MechanicalSystem> {
    vec![
        planar_pendulum(PendulumParams::default()).unwrap(),
        three_link(ThreeLinkParams::default()).unwrap(),
    ]
}

#[test]
fn mass_matrices_symmetric_positive_definite_on_domain() {
    let mut rng = StdRng::seed_from_u64(7);
    for sys in builtins() {
        for _ in 0..1000 {
            let y = random_shape(&sys, &mut rng);
            let m = sys.mass.eval(&y);
            assert!(max_asymmetry(&m) <= 1e-12, "{} at {y}", sys.name);
            assert!(min_eigenvalue(&m) > 0.0, "{} not PD at {y}", sys.name);
        }
    }
}

#[test]
fn analytic_partials_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(11);
    for sys in builtins() {
        for _ in 0..200 {
            let y = random_shape(&sys, &mut rng);
            let analytic = sys.mass.partials(&y);
            let numeric = matrix_partials_fd(|q| sys.mass.eval(q), &y, 1e-6);
            for (a, n) in analytic.iter().zip(&numeric) {
                let scale = a.amax().max(1.0);
                assert!((a - n).amax() / scale < 1e-7, "{} at {y}", sys.name);
            }
        }
    }
}

#[test]
fn pendulum_near_domain_edge_still_definite() {
    let sys = planar_pendulum(PendulumParams::default()).unwrap();
    let edge = FRAC_PI_2 - PENDULUM_THETA2_MARGIN;
    let m = sys.mass.eval(&DVector::from_vec(vec![0.3, edge * 0.999]));
    assert!(min_eigenvalue(&m) > 0.0);
    assert!(sys.check_domain(&DVector::from_vec(vec![0.0, edge + 1e-3])).is_err());
}

#[test]
fn christoffel_symmetric_in_first_pair() {
    let sys = planar_pendulum(PendulumParams::default()).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..100 {
        let y = random_shape(&sys, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let a = christoffel(&sys, &y, i, j, k).unwrap();
                    let b = christoffel(&sys, &y, j, i, k).unwrap();
                    assert!((a - b).abs() <= 1e-14);
                }
            }
        }
    }
}

#[test]
fn generic_description_reproduces_three_link() {
    let p = ThreeLinkParams::default();
    let (alpha, beta, delta) = p.lumped();
    let i3 = p.i3.to_string();
    let gm = GenericModel {
        name: Some("three_link_from_config".into()),
        n: 3,
        r: 2,
        mass: vec![
            vec![format!("{alpha} + {} * cos(y1)", 2.0 * beta), i3.clone(), format!("{delta} + {beta} * cos(y1)")],
            vec![i3.clone(), i3.clone(), i3.clone()],
            vec![format!("{delta} + {beta} * cos(y1)"), i3.clone(), format!("{delta}")],
        ],
        potential: None,
        shape_bounds: None,
    };
    let generic = generic_system(&gm).unwrap();
    let builtin = three_link(p).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..100 {
        let y = DVector::from_vec(vec![rng.gen_range(-2.0 * PI..2.0 * PI)]);
        assert!((generic.mass.eval(&y) - builtin.mass.eval(&y)).amax() < 1e-12);
        let (pg, pb) = (generic.mass.partials(&y), builtin.mass.partials(&y));
        assert!((&pg[0] - &pb[0]).amax() < 1e-7);
    }
}

#[test]
fn generic_rejects_cyclic_dependence_and_asymmetry() {
    let base = |m01: &str, m10: &str| GenericModel {
        name: None,
        n: 2,
        r: 1,
        mass: vec![vec!["2".into(), m01.into()], vec![m10.into(), "1".into()]],
        potential: None,
        shape_bounds: None,
    };
    assert!(generic_system(&base("0.1 * x1", "0.1 * x1")).unwrap_err().is_validation());
    assert!(generic_system(&base("0.5", "0.2")).unwrap_err().is_validation());
    assert!(generic_system(&base("0.5 * cos(y1)", "0.5 * cos(y1)")).is_ok());
}

#[test]
fn three_link_cyclic_block_lower_bound_by_scan() {
    let sys = three_link(ThreeLinkParams::default()).unwrap();
    let (alpha, beta, _) = ThreeLinkParams::default().lumped();
    let i3 = ThreeLinkParams::default().i3;
    let mut scan_min = f64::INFINITY;
    for k in 0..=2000 {
        let th = 2.0 * PI * k as f64 / 2000.0;
        // smallest root of λ² − (a + I3)λ + (a − I3) I3 with a = α + 2β cos θ
        let a = alpha + 2.0 * beta * th.cos();
        let tr = a + i3;
        let det = (a - i3) * i3;
        let lam = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        scan_min = scan_min.min(lam);
        let (mcc, _, _) = sys.mass_blocks(&DVector::from_vec(vec![th]));
        assert!((min_eigenvalue(&mcc) - lam).abs() < 1e-10);
    }
    assert!(scan_min > 1.3 && scan_min < 1.4, "{scan_min}");
}
