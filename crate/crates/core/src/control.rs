//! Partial feedback linearisation of the shape dynamics, PD tracking, and
//! reference trajectory generators.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::dynamics::{coriolis_vector, reduced_cyclic_velocity};
use crate::error::{Error, Result};
use crate::integrate::{rk4_step, IntegratorSpec};
use crate::potential::ShiftedPotential;
use crate::system::{GeneralizedState, MechanicalSystem};

pub const DEFAULT_RATE_GAIN: f64 = 6.0;
pub const DEFAULT_POSITION_GAIN: f64 = 9.0;

pub type TimeVectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Desired shape motion with its first two time derivatives.
#[derive(Clone)]
pub struct ReferenceTrajectory {
    pub position: TimeVectorFn,
    pub velocity: TimeVectorFn,
    pub acceleration: TimeVectorFn,
    pub label: String,
    dim: usize,
}

impl fmt::Debug for ReferenceTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceTrajectory").field("label", &self.label).field("dim", &self.dim).finish()
    }
}

impl ReferenceTrajectory {
    pub fn new(
        dim: usize,
        position: TimeVectorFn,
        velocity: TimeVectorFn,
        acceleration: TimeVectorFn,
        label: impl Into<String>,
    ) -> Self {
        Self { position, velocity, acceleration, label: label.into(), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        ((self.position)(t), (self.velocity)(t), (self.acceleration)(t))
    }

    /// Largest central-difference mismatch of the velocity and acceleration
    /// against the position and velocity, sampled on `[t0, t1]`.
    pub fn derivative_mismatch(&self, t0: f64, t1: f64, samples: usize) -> f64 {
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for k in 0..=samples {
            let t = t0 + (t1 - t0) * k as f64 / samples.max(1) as f64;
            let dy = ((self.position)(t + h) - (self.position)(t - h)) / (2.0 * h);
            let ddy = ((self.velocity)(t + h) - (self.velocity)(t - h)) / (2.0 * h);
            worst = worst.max((dy - (self.velocity)(t)).amax());
            worst = worst.max((ddy - (self.acceleration)(t)).amax());
        }
        worst
    }
}

/// Holds `value` for all time.
pub fn constant_reference(value: DVector<f64>) -> ReferenceTrajectory {
    let dim = value.len();
    ReferenceTrajectory::new(
        dim,
        Arc::new(move |_| value.clone()),
        Arc::new(move |_| DVector::zeros(dim)),
        Arc::new(move |_| DVector::zeros(dim)),
        "constant",
    )
}

/// Scalar profile on `[0, 1]` as (position, velocity, acceleration), with the
/// given unit-distance shape.
type Profile = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

fn scaled_reference(start: DVector<f64>, goal: DVector<f64>, profile: Profile, label: String) -> ReferenceTrajectory {
    let dim = start.len();
    let delta = &goal - &start;
    let (p1, p2, p3) = (profile.clone(), profile.clone(), profile);
    let (d1, d2, d3) = (delta.clone(), delta.clone(), delta);
    ReferenceTrajectory::new(
        dim,
        Arc::new(move |t| &start + &d1 * p1(t).0),
        Arc::new(move |t| &d2 * p2(t).1),
        Arc::new(move |t| &d3 * p3(t).2),
        label,
    )
}

fn check_endpoints(start: &DVector<f64>, goal: &DVector<f64>, t_move: f64) -> Result<()> {
    if start.len() != goal.len() {
        return Err(Error::validation(format!(
            "reference start has length {} but goal has length {}",
            start.len(),
            goal.len()
        )));
    }
    if !(t_move.is_finite() && t_move > 0.0) {
        return Err(Error::validation(format!("move duration must be positive, got {t_move}")));
    }
    Ok(())
}

/// Quintic rest-to-rest move from `start` to `goal` over `t_move` seconds,
/// with zero velocity and acceleration at both ends; constant afterwards.
pub fn rest_to_rest_reference(start: DVector<f64>, goal: DVector<f64>, t_move: f64) -> Result<ReferenceTrajectory> {
    check_endpoints(&start, &goal, t_move)?;
    let profile: Profile = Arc::new(move |t| {
        if t <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if t >= t_move {
            return (1.0, 0.0, 0.0);
        }
        let s = t / t_move;
        let (s2, s3) = (s * s, s * s * s);
        let p = s3 * (10.0 - 15.0 * s + 6.0 * s2);
        let v = 30.0 * s2 * (1.0 - s) * (1.0 - s) / t_move;
        let a = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (t_move * t_move);
        (p, v, a)
    });
    Ok(scaled_reference(start, goal, profile, format!("quintic over {t_move} s")))
}

/// Constant-velocity move from `start` to `goal` over `t_move` seconds. The
/// velocity ramps up over the first `t_blend` seconds and down over the last
/// `t_blend` seconds along a quintic smoothstep, so acceleration is continuous.
pub fn cruise_reference(
    start: DVector<f64>,
    goal: DVector<f64>,
    t_move: f64,
    t_blend: f64,
) -> Result<ReferenceTrajectory> {
    check_endpoints(&start, &goal, t_move)?;
    if !(t_blend.is_finite() && t_blend > 0.0 && 2.0 * t_blend <= t_move) {
        return Err(Error::validation(format!(
            "blend time must be positive and at most half the move duration, got {t_blend} for a {t_move} s move"
        )));
    }
    let cruise = 1.0 / (t_move - t_blend);
    let ramp = move |t: f64| {
        let s = t / t_blend;
        let (s2, s3) = (s * s, s * s * s);
        let smooth = s3 * (10.0 - 15.0 * s + 6.0 * s2);
        let dsmooth = 30.0 * s2 * (1.0 - s) * (1.0 - s);
        let area = s2 * s2 * (2.5 - 3.0 * s + s2);
        (cruise * t_blend * area, cruise * smooth, cruise * dsmooth / t_blend)
    };
    let profile: Profile = Arc::new(move |t| {
        if t <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if t < t_blend {
            ramp(t)
        } else if t <= t_move - t_blend {
            (cruise * (0.5 * t_blend + (t - t_blend)), cruise, 0.0)
        } else if t < t_move {
            let (p, v, a) = ramp(t_move - t);
            (1.0 - p, v, -a)
        } else {
            (1.0, 0.0, 0.0)
        }
    });
    Ok(scaled_reference(start, goal, profile, format!("cruise over {t_move} s, {t_blend} s blends")))
}

/// `center + A sin(2πft)` on `axis`; other axes are held at `center`.
pub fn sinusoid_reference(
    amplitude: f64,
    frequency: f64,
    axis: usize,
    center: DVector<f64>,
) -> Result<ReferenceTrajectory> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(Error::validation(format!("frequency must be positive, got {frequency}")));
    }
    if axis >= center.len() {
        return Err(Error::validation(format!(
            "sinusoid axis {} out of range for {} shape variables",
            axis + 1,
            center.len()
        )));
    }
    let dim = center.len();
    let w = 2.0 * PI * frequency;
    let unit = move |v: f64| {
        let mut e = DVector::zeros(dim);
        e[axis] = v;
        e
    };
    Ok(ReferenceTrajectory::new(
        dim,
        Arc::new(move |t| &center + unit(amplitude * (w * t).sin())),
        Arc::new(move |t| unit(amplitude * w * (w * t).cos())),
        Arc::new(move |t| unit(-amplitude * w * w * (w * t).sin())),
        format!("sinusoid A = {amplitude}, f = {frequency} Hz on axis {}", axis + 1),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdGains {
    pub rate: DVector<f64>,
    pub position: DVector<f64>,
}

impl PdGains {
    pub fn new(rate: DVector<f64>, position: DVector<f64>) -> Result<Self> {
        if rate.len() != position.len() {
            return Err(Error::validation("rate and position gain vectors differ in length"));
        }
        if rate.iter().chain(position.iter()).any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::validation("PD gains must all be positive"));
        }
        Ok(Self { rate, position })
    }

    pub fn uniform(dim: usize, rate: f64, position: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, rate), DVector::from_element(dim, position))
    }

    /// Critically damped gains (6, 9) on every axis.
    pub fn default_for(dim: usize) -> Self {
        Self::uniform(dim, DEFAULT_RATE_GAIN, DEFAULT_POSITION_GAIN).expect("default gains are positive")
    }

    pub fn dim(&self) -> usize {
        self.rate.len()
    }
}

/// `τ = ÿ_d − c1 (ẏ − ẏ_d) − c0 (y − y_d)`.
pub fn pd_tau(reference: &ReferenceTrajectory, gains: &PdGains, state: &GeneralizedState) -> DVector<f64> {
    let (yd, vd, ad) = reference.at(state.t);
    ad - gains.rate.component_mul(&(&state.ydot - vd)) - gains.position.component_mul(&(&state.y - yd))
}

/// Shape force `u = f + g τ` that makes the shape accelerations equal `τ`.
pub fn pfl_control(system: &MechanicalSystem, state: &GeneralizedState, tau: &DVector<f64>) -> Result<DVector<f64>> {
    let (r, s) = (system.dims.r(), system.dims.shape());
    if tau.len() != s {
        return Err(Error::validation(format!("τ has length {} but there are {s} shape variables", tau.len())));
    }
    let (mcc, mcy, myy) = system.mass_blocks(&state.y);
    let chol = mcc.cholesky().ok_or_else(|| {
        Error::domain(format!("cyclic mass block is singular at y = {:?}", state.y.as_slice()))
    })?;
    let c = coriolis_vector(system, &state.y, &state.qdot());
    let (cc, cy) = (c.rows(0, r).into_owned(), c.rows(r, s).into_owned());
    let kxdot = system.damping.eval(&state.x) * &state.xdot;
    let myc = mcy.transpose();
    let f = cy - &myc * chol.solve(&(cc + kxdot)) + system.potential.gradient(&state.y);
    let g = myy - &myc * chol.solve(&mcy);
    Ok(f + g * tau)
}

/// A state-feedback law `u(t, q, q̇)`. The time is carried in the state.
pub trait Controller: Send + Sync {
    fn control(&self, system: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>>;
}

impl<F> Controller for F
where
    F: Fn(&MechanicalSystem, &GeneralizedState) -> Result<DVector<f64>> + Send + Sync,
{
    fn control(&self, system: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        self(system, state)
    }
}

/// No actuation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroControl;

impl Controller for ZeroControl {
    fn control(&self, system: &MechanicalSystem, _state: &GeneralizedState) -> Result<DVector<f64>> {
        Ok(DVector::zeros(system.dims.shape()))
    }
}

/// Feedback linearisation with PD tracking of a reference.
#[derive(Debug, Clone)]
pub struct PflTracking {
    pub reference: ReferenceTrajectory,
    pub gains: PdGains,
}

impl Controller for PflTracking {
    fn control(&self, system: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        pfl_control(system, state, &pd_tau(&self.reference, &self.gains, state))
    }
}

/// The PD expression applied directly as the shape force, without the
/// linearising transformation.
#[derive(Debug, Clone)]
pub struct PlainPd {
    pub reference: ReferenceTrajectory,
    pub gains: PdGains,
}

impl Controller for PlainPd {
    fn control(&self, _system: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        Ok(pd_tau(&self.reference, &self.gains, state))
    }
}

/// Samples of the decoupled system: `ẋ` from momentum conservation, `ÿ = τ`.
#[derive(Debug, Clone, Default)]
pub struct DecoupledTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub ydot: Vec<DVector<f64>>,
}

/// Integrates the transformed system with RK4. The state is `(x, y, ẏ)`;
/// `initial.xdot` is ignored since the reduced velocity determines it.
pub fn simulate_decoupled(
    system: &MechanicalSystem,
    shifted: &ShiftedPotential,
    initial: &GeneralizedState,
    reference: &ReferenceTrajectory,
    gains: &PdGains,
    spec: &IntegratorSpec,
) -> Result<DecoupledTrajectory> {
    spec.validate()?;
    initial.check_dims(system.dims)?;
    let (r, s) = (system.dims.r(), system.dims.shape());
    let split = |z: &DVector<f64>| {
        (z.rows(0, r).into_owned(), z.rows(r, s).into_owned(), z.rows(r + s, s).into_owned())
    };
    let mut rhs = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, y, ydot) = split(z);
        let xdot = reduced_cyclic_velocity(system, shifted, &x, &y, &ydot)?;
        let st = GeneralizedState::new(t, x, y, xdot.clone(), ydot.clone());
        let tau = pd_tau(reference, gains, &st);
        let mut dz = DVector::zeros(r + 2 * s);
        dz.rows_mut(0, r).copy_from(&xdot);
        dz.rows_mut(r, s).copy_from(&ydot);
        dz.rows_mut(r + s, s).copy_from(&tau);
        Ok(dz)
    };
    let mut z = DVector::zeros(r + 2 * s);
    z.rows_mut(0, r).copy_from(&initial.x);
    z.rows_mut(r, s).copy_from(&initial.y);
    z.rows_mut(r + s, s).copy_from(&initial.ydot);

    let mut out = DecoupledTrajectory::default();
    let push = |out: &mut DecoupledTrajectory, t: f64, z: &DVector<f64>| {
        let (x, y, ydot) = split(z);
        out.times.push(t);
        out.x.push(x);
        out.y.push(y);
        out.ydot.push(ydot);
    };
    push(&mut out, initial.t, &z);
    let steps = spec.steps();
    let t_end = initial.t + spec.t_final;
    for k in 0..steps {
        let t = initial.t + k as f64 * spec.dt;
        let h = spec.dt.min(t_end - t);
        z = rk4_step(&mut rhs, t, &z, h).map_err(|e| Error::Integration { t, reason: e.to_string() })?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { t: t + h, reason: "state became non-finite".into() });
        }
        if (k + 1) % spec.record_every == 0 || k + 1 == steps {
            let t_next = if k + 1 == steps { t_end } else { initial.t + (k + 1) as f64 * spec.dt };
            push(&mut out, t_next, &z);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::forced_accelerations;
    use crate::models::{planar_pendulum, three_link, three_link_damping, PendulumParams, ThreeLinkParams};
    use std::f64::consts::FRAC_PI_3;

    fn v(a: &[f64]) -> DVector<f64> {
        DVector::from_vec(a.to_vec())
    }

    #[test]
    fn quintic_boundary_values() {
        let r = rest_to_rest_reference(v(&[0.0]), v(&[FRAC_PI_3]), 3.0).unwrap();
        let (p, vel, a) = r.at(3.0);
        assert!((p[0] - FRAC_PI_3).abs() < 1e-15 && vel[0] == 0.0 && a[0] == 0.0);
        assert!(((r.position)(1.5)[0] - FRAC_PI_3 / 2.0).abs() < 1e-15);
        assert_eq!((r.velocity)(7.0)[0], 0.0);
        assert!(r.derivative_mismatch(-1.0, 4.0, 500) < 1e-4);
    }

    #[test]
    fn quintic_peak_rate() {
        let r = rest_to_rest_reference(v(&[0.0]), v(&[32.0 * PI]), 8.0).unwrap();
        assert!(((r.velocity)(4.0)[0] - 7.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn cruise_profile() {
        let start = v(&[FRAC_PI_3]);
        let goal = v(&[FRAC_PI_3 + 32.0 * PI]);
        let r = cruise_reference(start.clone(), goal.clone(), 8.0, 1.0).unwrap();
        assert!(((r.position)(8.0)[0] - goal[0]).abs() < 1e-12);
        assert_eq!((r.position)(0.0)[0], start[0]);
        assert!(((r.velocity)(4.0)[0] - 32.0 * PI / 7.0).abs() < 1e-12);
        assert!(((r.position)(4.0)[0] - (start[0] + 16.0 * PI)).abs() < 1e-12);
        assert!(r.derivative_mismatch(-0.5, 8.5, 900) < 1e-4);
        assert!(cruise_reference(start, goal, 8.0, 5.0).is_err());
    }

    #[test]
    fn sinusoid_quarter_period() {
        let r = sinusoid_reference(1.0, 0.5, 0, v(&[0.0])).unwrap();
        let (p, vel, _) = r.at(0.5);
        assert!((p[0] - 1.0).abs() < 1e-15 && vel[0].abs() < 1e-15);
        assert!(r.derivative_mismatch(0.0, 4.0, 400) < 1e-4);
        assert!(sinusoid_reference(1.0, 0.0, 0, v(&[0.0])).is_err());
        assert!(sinusoid_reference(1.0, 1.0, 1, v(&[0.0])).is_err());
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(PdGains::uniform(2, 1.0, 0.0).is_err());
        assert!(PdGains::new(v(&[1.0]), v(&[1.0, 2.0])).is_err());
        assert_eq!(PdGains::default_for(1).rate[0], 6.0);
    }

    #[test]
    fn on_reference_tau_is_feedforward() {
        let r = sinusoid_reference(2.0, 0.3, 0, v(&[0.5])).unwrap();
        let t = 0.7;
        let (p, vel, a) = r.at(t);
        let st = GeneralizedState::new(t, v(&[0.0, 0.0]), p, v(&[0.0, 0.0]), vel);
        assert_eq!(pd_tau(&r, &PdGains::default_for(1), &st), a);
    }

    #[test]
    fn rest_flat_potential_needs_no_force() {
        let sys = three_link(ThreeLinkParams::default()).unwrap().with_damping(three_link_damping()).unwrap();
        let st = GeneralizedState::at_rest(v(&[0.3, 0.2]), v(&[1.1]));
        assert_eq!(pfl_control(&sys, &st, &v(&[0.0])).unwrap().amax(), 0.0);
    }

    #[test]
    fn shape_acceleration_equals_tau() {
        let sys = three_link(ThreeLinkParams::default()).unwrap().with_damping(three_link_damping()).unwrap();
        let st = GeneralizedState::new(1.0, v(&[0.3, -2.0]), v(&[2.2]), v(&[1.5, -0.4]), v(&[3.0]));
        let tau = v(&[-4.0]);
        let u = pfl_control(&sys, &st, &tau).unwrap();
        let acc = forced_accelerations(&sys, &st, &u).unwrap();
        assert!((acc[2] - tau[0]).abs() < 1e-10);
    }

    #[test]
    fn pendulum_input_gain_at_rest() {
        let sys = planar_pendulum(PendulumParams::default()).unwrap();
        let st = GeneralizedState::at_rest(v(&[0.0, 0.0]), v(&[0.0, 0.0]));
        let u0 = pfl_control(&sys, &st, &v(&[0.0, 0.0])).unwrap();
        let g1 = pfl_control(&sys, &st, &v(&[1.0, 0.0])).unwrap() - &u0;
        let g2 = pfl_control(&sys, &st, &v(&[0.0, 1.0])).unwrap() - &u0;
        assert!((g1 - v(&[0.46875, 0.0])).amax() < 1e-14);
        assert!((g2 - v(&[0.0, 0.3])).amax() < 1e-14);
    }

    #[test]
    fn closure_controller() {
        let sys = three_link(ThreeLinkParams::default()).unwrap();
        let c = |_: &MechanicalSystem, s: &GeneralizedState| Ok(v(&[s.t]));
        let st = GeneralizedState::new(2.5, v(&[0.0, 0.0]), v(&[0.0]), v(&[0.0, 0.0]), v(&[0.0]));
        assert_eq!(c.control(&sys, &st).unwrap()[0], 2.5);
    }
}
