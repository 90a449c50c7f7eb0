//! Forced Euler-Lagrange equations and the momenta of the cyclic variables.
//!
//! Cyclic rows:   `m_{αβ} ẍ^β + m_{αb} ÿ^b + [ij,α] q̇^i q̇^j = −k_{αβ}(x) ẋ^β`
//! Shape rows:    `m_{aβ} ẍ^β + m_{ab} ÿ^b + [ij,a] q̇^i q̇^j + ∂V/∂y^a = u_a`

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::potential::{DampingPotential, ShiftedPotential};
use crate::system::{GeneralizedState, MechanicalSystem};

/// Christoffel symbol of the first kind `[ij,k]` at shape configuration `y`.
/// Indices are 0-based over the full coordinate vector `q = (x, y)`;
/// derivatives with respect to cyclic coordinates vanish.
pub fn christoffel(
    system: &MechanicalSystem,
    y: &DVector<f64>,
    i: usize,
    j: usize,
    k: usize,
) -> Result<f64> {
    let n = system.dims.n();
    if i >= n || j >= n || k >= n {
        return Err(Error::validation(format!(
            "Christoffel index ({i}, {j}, {k}) out of range for n = {n}"
        )));
    }
    let partials = system.mass.partials(y);
    Ok(christoffel_from_partials(&partials, system.dims.r(), i, j, k))
}

fn christoffel_from_partials(partials: &[DMatrix<f64>], r: usize, i: usize, j: usize, k: usize) -> f64 {
    let d = |m: usize, a: usize, b: usize| if m < r { 0.0 } else { partials[m - r][(a, b)] };
    0.5 * (d(j, i, k) + d(i, j, k) - d(k, i, j))
}

/// `c_k = [ij,k] q̇^i q̇^j` for every `k`, computed as `ṁ q̇ − ½ q̇ᵀ ∂m/∂q q̇`.
pub fn coriolis_vector(system: &MechanicalSystem, y: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
    let r = system.dims.r();
    let n = system.dims.n();
    let partials = system.mass.partials(y);
    let mut mdot = DMatrix::zeros(n, n);
    for (a, dm) in partials.iter().enumerate() {
        mdot += dm * qdot[r + a];
    }
    let mut c = mdot * qdot;
    for (a, dm) in partials.iter().enumerate() {
        c[r + a] -= 0.5 * qdot.dot(&(dm * qdot));
    }
    c
}

/// Pivots smaller than this fraction of the largest one count as singular.
const PIVOT_RATIO: f64 = 1e-12;

fn factor(system: &MechanicalSystem, m: DMatrix<f64>, y: &DVector<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let fail = || {
        Error::domain(format!(
            "mass matrix of {} is not positive definite at y = {:?}",
            system.name,
            y.as_slice()
        ))
    };
    let chol = m.cholesky().ok_or_else(fail)?;
    let pivots = chol.l().diagonal().map(|d| d * d);
    if pivots.min() <= PIVOT_RATIO * pivots.max() {
        return Err(fail());
    }
    Ok(chol)
}

/// `q̈ = m(y)⁻¹ (F − c)` with `F = (−k ẋ, u − ∂V/∂y)`, solved by Cholesky.
pub fn forced_accelerations(
    system: &MechanicalSystem,
    state: &GeneralizedState,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let r = system.dims.r();
    if u.len() != system.dims.shape() {
        return Err(Error::validation(format!(
            "control has length {} but there are {} shape variables",
            u.len(),
            system.dims.shape()
        )));
    }
    let qdot = state.qdot();
    let mut rhs = -coriolis_vector(system, &state.y, &qdot);
    let damping_force = -(system.damping.eval(&state.x) * &state.xdot);
    let grad_v = system.potential.gradient(&state.y);
    for a in 0..r {
        rhs[a] += damping_force[a];
    }
    for a in 0..system.dims.shape() {
        rhs[r + a] += u[a] - grad_v[a];
    }
    let chol = factor(system, system.mass.eval(&state.y), &state.y)?;
    Ok(chol.solve(&rhs))
}

/// `∂L/∂ẋ^α = m_{αβ} ẋ^β + m_{αa} ẏ^a`.
pub fn ordinary_momentum(system: &MechanicalSystem, state: &GeneralizedState) -> DVector<f64> {
    let (mcc, mcy, _) = system.mass_blocks(&state.y);
    mcc * &state.xdot + mcy * &state.ydot
}

/// `∂L/∂ẋ^α + h_α(x)`, conserved along every trajectory.
pub fn damping_added_momentum(
    system: &MechanicalSystem,
    potential: &DampingPotential,
    state: &GeneralizedState,
) -> DVector<f64> {
    ordinary_momentum(system, state) + potential.h(&state.x)
}

/// Cyclic velocity implied by conservation of the damping-added momentum:
/// `ẋ = −m_{xx}⁻¹ (dU_μ(x) + m_{xy} ẏ)`.
pub fn reduced_cyclic_velocity(
    system: &MechanicalSystem,
    shifted: &ShiftedPotential,
    x: &DVector<f64>,
    y: &DVector<f64>,
    ydot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (mcc, mcy, _) = system.mass_blocks(y);
    let chol = mcc.cholesky().ok_or_else(|| {
        Error::domain(format!("cyclic mass block singular at y = {:?}", y.as_slice()))
    })?;
    let rhs = shifted.gradient(x) + mcy * ydot;
    Ok(-chol.solve(&rhs))
}

pub fn kinetic_energy(system: &MechanicalSystem, state: &GeneralizedState) -> f64 {
    let qdot = state.qdot();
    0.5 * qdot.dot(&(system.mass.eval(&state.y) * &qdot))
}

pub fn total_energy(system: &MechanicalSystem, state: &GeneralizedState) -> f64 {
    kinetic_energy(system, state) + system.potential.eval(&state.y)
}

/// Power input `u·ẏ − ẋᵀ k(x) ẋ`; the time derivative of the total energy.
pub fn power(system: &MechanicalSystem, state: &GeneralizedState, u: &DVector<f64>) -> f64 {
    u.dot(&state.ydot) - state.xdot.dot(&(system.damping.eval(&state.x) * &state.xdot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::SampleBox;
    use crate::models::{
        pendulum_damping_k1, planar_pendulum, three_link, three_link_damping, PendulumParams,
        ThreeLinkParams,
    };
    use crate::potential::build_shifted_potential;
    use std::f64::consts::FRAC_PI_2;

    fn v(a: &[f64]) -> DVector<f64> {
        DVector::from_vec(a.to_vec())
    }

    #[test]
    fn christoffel_three_link_value() {
        let sys = three_link(ThreeLinkParams::default()).unwrap();
        // q = (θ1, θ3, θ2); [11,3] in 1-based notation is (0, 0, 2) here
        let c = christoffel(&sys, &v(&[FRAC_PI_2]), 0, 0, 2).unwrap();
        assert!((c - 3.0).abs() < 1e-12);
        assert!(christoffel(&sys, &v(&[0.0]), 0, 3, 0).is_err());
    }

    #[test]
    fn coriolis_vector_matches_symbol_sum() {
        let sys = planar_pendulum(PendulumParams::default()).unwrap();
        let y = v(&[0.3, -0.7]);
        let qdot = v(&[0.2, -1.0, 0.5, 1.3]);
        let c = coriolis_vector(&sys, &y, &qdot);
        for k in 0..4 {
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += christoffel(&sys, &y, i, j, k).unwrap() * qdot[i] * qdot[j];
                }
            }
            assert!((c[k] - s).abs() < 1e-12, "row {k}: {} vs {s}", c[k]);
        }
    }

    #[test]
    fn rest_without_forces_stays_at_rest() {
        let sys = three_link(ThreeLinkParams::default()).unwrap().with_damping(three_link_damping()).unwrap();
        let st = GeneralizedState::at_rest(v(&[1.0, -2.0]), v(&[0.4]));
        let acc = forced_accelerations(&sys, &st, &v(&[0.0])).unwrap();
        assert_eq!(acc.amax(), 0.0);
    }

    #[test]
    fn domain_error_when_mass_degenerates() {
        let sys = planar_pendulum(PendulumParams::default()).unwrap();
        let st = GeneralizedState::at_rest(v(&[0.0, 0.0]), v(&[0.0, FRAC_PI_2]));
        let err = forced_accelerations(&sys, &st, &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn momenta_at_rest() {
        let sys = planar_pendulum(PendulumParams::default()).unwrap().with_damping(pendulum_damping_k1()).unwrap();
        let pot = DampingPotential::build(&sys.damping, &SampleBox::symmetric(2, 2.0)).unwrap();
        let st = GeneralizedState::at_rest(v(&[0.5, -0.2]), v(&[0.1, 0.2]));
        assert_eq!(ordinary_momentum(&sys, &st).amax(), 0.0);
        let p = damping_added_momentum(&sys, &pot, &st);
        assert!((p - v(&[1.5, -0.6])).amax() < 1e-15);
        let st0 = GeneralizedState::at_rest(v(&[0.0, 0.0]), v(&[0.1, 0.2]));
        assert_eq!(damping_added_momentum(&sys, &pot, &st0).amax(), 0.0);
    }

    #[test]
    fn reduced_velocity_vanishes_at_equilibrium_at_rest() {
        let sys = planar_pendulum(PendulumParams::default()).unwrap().with_damping(pendulum_damping_k1()).unwrap();
        let pot = DampingPotential::build(&sys.damping, &SampleBox::symmetric(2, 2.0)).unwrap();
        let mu = v(&[3.0, -1.5]);
        let sp = build_shifted_potential(&pot, &mu, &v(&[0.0, 0.0])).unwrap();
        let xd = reduced_cyclic_velocity(&sys, &sp, sp.equilibrium().unwrap(), &v(&[0.2, 0.1]), &v(&[0.0, 0.0])).unwrap();
        assert!(xd.amax() < 1e-14);
    }

    #[test]
    fn reduced_velocity_without_damping_is_momentum_conservation() {
        let sys = three_link(ThreeLinkParams::default()).unwrap();
        let pot = DampingPotential::build(&sys.damping, &SampleBox::symmetric(2, 1.0)).unwrap();
        let st = GeneralizedState::new(0.0, v(&[0.3, 0.1]), v(&[1.0]), v(&[0.2, -0.4]), v(&[0.7]));
        let mu = damping_added_momentum(&sys, &pot, &st);
        // k = 0: U_μ is linear with no critical point
        assert!(build_shifted_potential(&pot, &mu, &st.x).is_err());
        let sp = ShiftedPotential::unanchored(&pot, &mu);
        let xd = reduced_cyclic_velocity(&sys, &sp, &st.x, &st.y, &st.ydot).unwrap();
        assert!((xd - &st.xdot).amax() < 1e-12);
    }
}
