//! Built-in models: the planar pendulum on a damped gantry and the planar
//! three-link arm with two unactuated joints, plus the damping matrices used
//! with them.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{
    CoordinateLabels, DampingField, DimensionSplit, MassMatrixField, MechanicalSystem,
    PotentialField, ShapeDomain,
};

pub const GRAVITY: f64 = 9.81;

/// Margin kept from `|θ₂| = π/2`, where `m₃₃ = m r² cos²θ₂` vanishes.
pub const PENDULUM_THETA2_MARGIN: f64 = 0.05;

pub const BUILTIN_MODELS: &[(&str, &str)] = &[
    (
        "planar_pendulum",
        "gantry pendulum, cyclic (x, y), actuated (theta1, theta2); n = 4, r = 2",
    ),
    (
        "three_link",
        "horizontal three-link arm, cyclic (theta1, theta3), actuated theta2; n = 3, r = 2",
    ),
];

fn check_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::validation(format!(
                "parameter {name} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    /// Slider mass (kg).
    #[serde(rename = "M_a")]
    pub slider_mass: f64,
    /// Gantry bar mass (kg).
    #[serde(rename = "M_b")]
    pub gantry_mass: f64,
    /// Pendulum ball mass (kg).
    #[serde(rename = "m")]
    pub ball_mass: f64,
    /// Rod length (m).
    #[serde(rename = "r")]
    pub rod_length: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { slider_mass: 2.0, gantry_mass: 3.0, ball_mass: 3.0, rod_length: 0.5 }
    }
}

/// Pendulum on a gantry moving freely in the plane, with gimbal torques on
/// the rod angles. Coordinates `(x, y; θ₁, θ₂)`.
///
/// The mass matrix is positive definite only for `|θ₂| < π/2`; the model's
/// shape domain keeps a margin of [`PENDULUM_THETA2_MARGIN`] from that edge.
/// The potential is `V = -m g r cos θ₁ cos θ₂` (rod hanging below the base at
/// zero angles). Damping defaults to zero; attach one with
/// [`MechanicalSystem::with_damping`].
pub fn planar_pendulum(params: PendulumParams) -> Result<MechanicalSystem> {
    let PendulumParams { slider_mass, gantry_mass, ball_mass: m, rod_length: r } = params;
    check_positive(&[
        ("M_a", slider_mass),
        ("M_b", gantry_mass),
        ("m", m),
        ("r", r),
    ])?;
    let total_x = slider_mass + gantry_mass + m;
    let total_y = slider_mass + m;
    let mr = m * r;
    let mr2 = m * r * r;

    let eval = Arc::new(move |y: &DVector<f64>| {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        let mut mm = DMatrix::zeros(4, 4);
        mm[(0, 0)] = total_x;
        mm[(1, 1)] = total_y;
        mm[(0, 2)] = -mr * c1 * c2;
        mm[(0, 3)] = mr * s1 * s2;
        mm[(1, 3)] = mr * c2;
        mm[(2, 2)] = mr2 * c2 * c2;
        mm[(3, 3)] = mr2;
        mm.fill_lower_triangle_with_upper_triangle();
        mm
    });
    let partials = Arc::new(move |y: &DVector<f64>| {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        let mut d1 = DMatrix::zeros(4, 4);
        d1[(0, 2)] = mr * s1 * c2;
        d1[(0, 3)] = mr * c1 * s2;
        d1.fill_lower_triangle_with_upper_triangle();
        let mut d2 = DMatrix::zeros(4, 4);
        d2[(0, 2)] = mr * c1 * s2;
        d2[(0, 3)] = mr * s1 * c2;
        d2[(1, 3)] = -mr * s2;
        d2[(2, 2)] = -2.0 * mr2 * c2 * s2;
        d2.fill_lower_triangle_with_upper_triangle();
        vec![d1, d2]
    });
    let mgr = m * GRAVITY * r;
    let potential = PotentialField::new(
        Arc::new(move |y| -mgr * y[0].cos() * y[1].cos()),
        Arc::new(move |y| {
            let (s1, c1) = y[0].sin_cos();
            let (s2, c2) = y[1].sin_cos();
            DVector::from_vec(vec![mgr * s1 * c2, mgr * c1 * s2])
        }),
    );
    let dims = DimensionSplit::new(4, 2)?;
    let limit = FRAC_PI_2 - PENDULUM_THETA2_MARGIN;
    Ok(MechanicalSystem::new(
        "planar_pendulum",
        dims,
        MassMatrixField::analytic(4, eval, partials),
        potential,
        DampingField::zero(2),
    )?
    .with_domain(ShapeDomain {
        bounds: vec![(f64::NEG_INFINITY, f64::INFINITY), (-limit, limit)],
    })
    .with_labels(CoordinateLabels {
        cyclic: vec!["x".into(), "y".into()],
        shape: vec!["theta1".into(), "theta2".into()],
        cyclic_stem: "xy".into(),
        shape_stem: "theta".into(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeLinkParams {
    pub l1: f64,
    pub l2: f64,
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Default for ThreeLinkParams {
    fn default() -> Self {
        Self {
            l1: 0.5,
            l2: 0.5,
            r1: 0.1,
            r2: 0.1,
            i1: 2.0,
            i2: 2.0,
            i3: 2.0,
            m1: 10.0,
            m2: 10.0,
            m3: 10.0,
        }
    }
}

impl ThreeLinkParams {
    /// Lumped inertia constants `(α, β, δ)` of the reduced mass matrix.
    pub fn lumped(&self) -> (f64, f64, f64) {
        let p = self;
        let alpha = p.i1
            + p.i2
            + p.i3
            + p.m1 * p.r1 * p.r1
            + p.m2 * (p.l1 * p.l1 + p.r2 * p.r2)
            + p.m3 * (p.l1 * p.l1 + p.l2 * p.l2);
        let beta = p.l1 * (p.m2 * p.r2 + p.m3 * p.l2);
        let delta = p.i2 + p.i3 + p.m2 * p.r2 * p.r2 + p.m3 * p.l2 * p.l2;
        (alpha, beta, delta)
    }
}

/// Three-link arm on a horizontal plane. The third link's centre of mass sits
/// on its joint axis, so θ₁ and θ₃ are both cyclic. Coordinates are ordered
/// `(θ₁, θ₃; θ₂)`. No gravity acts in the plane of motion.
pub fn three_link(params: ThreeLinkParams) -> Result<MechanicalSystem> {
    let p = params;
    check_positive(&[
        ("l1", p.l1),
        ("l2", p.l2),
        ("r1", p.r1),
        ("r2", p.r2),
        ("I1", p.i1),
        ("I2", p.i2),
        ("I3", p.i3),
        ("m1", p.m1),
        ("m2", p.m2),
        ("m3", p.m3),
    ])?;
    let (alpha, beta, delta) = p.lumped();
    let i3 = p.i3;
    let eval = Arc::new(move |y: &DVector<f64>| {
        let c2 = y[0].cos();
        DMatrix::from_row_slice(
            3,
            3,
            &[
                alpha + 2.0 * beta * c2,
                i3,
                delta + beta * c2,
                i3,
                i3,
                i3,
                delta + beta * c2,
                i3,
                delta,
            ],
        )
    });
    let partials = Arc::new(move |y: &DVector<f64>| {
        let s2 = y[0].sin();
        let mut d = DMatrix::zeros(3, 3);
        d[(0, 0)] = -2.0 * beta * s2;
        d[(0, 2)] = -beta * s2;
        d[(2, 0)] = -beta * s2;
        vec![d]
    });
    let dims = DimensionSplit::new(3, 2)?;
    Ok(MechanicalSystem::new(
        "three_link",
        dims,
        MassMatrixField::analytic(3, eval, partials),
        PotentialField::zero(1),
        DampingField::zero(2),
    )?
    .with_labels(CoordinateLabels {
        cyclic: vec!["theta1".into(), "theta3".into()],
        shape: vec!["theta2".into()],
        cyclic_stem: "theta13".into(),
        shape_stem: "theta2".into(),
    }))
}

/// `K₁ = diag(3, 3)`.
pub fn pendulum_damping_k1() -> DampingField {
    DampingField::constant(DMatrix::from_diagonal_element(2, 2, 3.0)).with_label("K1")
}

/// `K₂(x, y) = [[5 + 2cos x, 4], [4, 4 + 2cos y]]`, the Hessian of
/// `½x² + 2(x + y)² − 2cos x − 2cos y`.
pub fn pendulum_damping_k2() -> DampingField {
    DampingField::new(
        2,
        Arc::new(|x: &DVector<f64>| {
            DMatrix::from_row_slice(
                2,
                2,
                &[5.0 + 2.0 * x[0].cos(), 4.0, 4.0, 4.0 + 2.0 * x[1].cos()],
            )
        }),
    )
    .with_closed_form(
        Arc::new(|x: &DVector<f64>| {
            DVector::from_vec(vec![
                5.0 * x[0] + 4.0 * x[1] + 2.0 * x[0].sin(),
                4.0 * x[0] + 4.0 * x[1] + 2.0 * x[1].sin(),
            ])
        }),
        Arc::new(|x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            0.5 * a * a + 2.0 * (a + b) * (a + b) - 2.0 * a.cos() - 2.0 * b.cos()
        }),
    )
    .with_label("K2")
}

/// `K = diag(6, 3)` used with the three-link arm.
pub fn three_link_damping() -> DampingField {
    DampingField::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![6.0, 3.0])))
        .with_label("diag(6,3)")
}
