//! The potential hierarchy induced by an integrable damping field.
//!
//! Given symmetric `k(x)` whose rows are curl-free, there is a vector field
//! `h` with `∂h_α/∂x^β = k_{αβ}` and a scalar `U` with `∂U/∂x^α = h_α`, so `k`
//! is the Hessian of `U`. Both are defined up to constants; here `h(0) = 0`
//! and `U(0) = 0`. For momentum values `μ` the shifted potential
//! `U_μ = U − μ·x` (normalised so `U_μ(x_e) = 0`) has gradient `h − μ` and a
//! critical point `x_e`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditions::{check_diagonal_conditions, verify_damping_conditions, AxisConditions, SampleBox};
use crate::error::{Error, Result};
use crate::numeric::{self, integrate, integrate_vec, rel_err};
use crate::system::{DampingField, ScalarFn, VectorFn};

pub const QUADRATURE_TOL: f64 = 1e-10;
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 200;
pub const NEWTON_MAX_HALVINGS: usize = 50;
const JACOBIAN_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSource {
    ClosedForm,
    PathIntegral,
    Diagonal,
}

/// `h` together with how it was obtained.
#[derive(Clone)]
pub struct GradientField {
    r: usize,
    h: VectorFn,
    source: PotentialSource,
}

impl GradientField {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.h)(x)
    }

    pub fn source(&self) -> PotentialSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.r
    }
}

impl fmt::Debug for GradientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientField").field("r", &self.r).field("source", &self.source).finish()
    }
}

/// Worst disagreement between the finite-difference Jacobian of `h` and `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    pub max_rel_residual: f64,
    pub witness: Vec<f64>,
    pub samples: usize,
}

fn default_grid(r: usize) -> usize {
    match r {
        1 => 41,
        2 => 11,
        3 => 7,
        _ => 5,
    }
}

fn refuse_unless_integrable(damping: &DampingField, region: &SampleBox) -> Result<()> {
    let report = verify_damping_conditions(damping, region, default_grid(damping.dim()));
    match report.first_failure() {
        None => Ok(()),
        Some((name, o)) => Err(Error::validation(format!(
            "damping field fails the {name} check (residual {:.3e} at {:?}); no potential exists",
            o.worst_residual,
            o.witness.clone().unwrap_or_default()
        ))),
    }
}

/// Builds `h` with `∂h_α/∂x^β = k_{αβ}` and `h(0) = 0`.
///
/// A closed form carried by the damping field is used when present (shifted
/// to vanish at the origin). Otherwise `h(x) = ∫₀¹ k(s x) x ds` along the
/// straight segment from the origin. The field must pass the symmetry and
/// integrability checks on `region` first.
pub fn construct_h(damping: &DampingField, region: &SampleBox) -> Result<GradientField> {
    refuse_unless_integrable(damping, region)?;
    let r = damping.dim();
    if let Some(h) = damping.closed_form_h() {
        let h = h.clone();
        let h0 = h(&DVector::zeros(r));
        return Ok(GradientField {
            r,
            h: Arc::new(move |x| h(x) - &h0),
            source: PotentialSource::ClosedForm,
        });
    }
    if let Some(funcs) = damping.diagonal_funcs() {
        let funcs = funcs.to_vec();
        return Ok(GradientField {
            r,
            h: Arc::new(move |x| diagonal_h_eval(&funcs, x)),
            source: PotentialSource::Diagonal,
        });
    }
    let k = damping.eval_fn();
    Ok(GradientField {
        r,
        h: Arc::new(move |x: &DVector<f64>| {
            integrate_vec(|s| k(&(x * s)) * x, 0.0, 1.0, QUADRATURE_TOL)
        }),
        source: PotentialSource::PathIntegral,
    })
}

/// Builds `U` with `∂U/∂x^α = h_α` and `U(0) = 0`, as `∫₀¹ h(s x)·x ds`.
///
/// Refuses unless the finite-difference Jacobian of `h` is symmetric on the
/// region grid (to `1e-5` relative).
pub fn construct_u(h: &GradientField, region: &SampleBox) -> Result<ScalarFn> {
    let grid = default_grid(h.dim());
    for p in region.grid(grid) {
        let jac = numeric::jacobian_fd(|v| h.eval(v), &p, JACOBIAN_STEP);
        for a in 0..h.dim() {
            for b in (a + 1)..h.dim() {
                if rel_err(jac[(a, b)], jac[(b, a)]) > 1e-5 {
                    return Err(Error::validation(format!(
                        "Jacobian of h is not symmetric at {:?}: dh{}/dx{} = {} vs dh{}/dx{} = {}",
                        p.as_slice(),
                        a + 1,
                        b + 1,
                        jac[(a, b)],
                        b + 1,
                        a + 1,
                        jac[(b, a)]
                    )));
                }
            }
        }
    }
    Ok(path_integral_u(h.h.clone()))
}

fn path_integral_u(h: VectorFn) -> ScalarFn {
    Arc::new(move |x: &DVector<f64>| {
        integrate(|s| h(&(x * s)).dot(x), 0.0, 1.0, QUADRATURE_TOL)
    })
}

fn diagonal_h_eval(funcs: &[Arc<dyn Fn(f64) -> f64 + Send + Sync>], x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        funcs.iter().zip(x.iter()).map(|(k, &xa)| integrate(|s| k(s), 0.0, xa, QUADRATURE_TOL)),
    )
}

/// `h`, `U` and the damping they were built from.
#[derive(Clone)]
pub struct DampingPotential {
    damping: DampingField,
    h: GradientField,
    u: ScalarFn,
    jacobian_check: Option<JacobianCheck>,
}

impl fmt::Debug for DampingPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DampingPotential")
            .field("damping", &self.damping)
            .field("source", &self.h.source)
            .field("jacobian_check", &self.jacobian_check)
            .finish()
    }
}

impl DampingPotential {
    /// Full construction: condition checks on `region`, `h`, `U`, and a
    /// Jacobian cross-check of `h` against `k` on the region grid.
    pub fn build(damping: &DampingField, region: &SampleBox) -> Result<Self> {
        let h = construct_h(damping, region)?;
        let r = damping.dim();
        let u: ScalarFn = match (h.source, damping.closed_form_u(), damping.diagonal_funcs()) {
            (PotentialSource::ClosedForm, Some(u), _) => {
                let u = u.clone();
                let u0 = u(&DVector::zeros(r));
                Arc::new(move |x| u(x) - u0)
            }
            (PotentialSource::Diagonal, _, Some(funcs)) => diagonal_u(funcs.to_vec()),
            _ => construct_u(&h, region)?,
        };
        let mut pot = Self { damping: damping.clone(), h, u, jacobian_check: None };
        pot.jacobian_check = Some(pot.check_jacobian(&region.grid(default_grid(r))));
        Ok(pot)
    }

    /// Diagonal fast path: `h_α(x) = ∫₀^{x^α} k_α(s) ds` and
    /// `U(x) = Σ_α ∫₀^{x^α} h_α(s) ds`. No condition checks are needed since
    /// a diagonal field is symmetric and integrable by construction.
    pub fn diagonal(k_funcs: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>) -> Result<Self> {
        if k_funcs.is_empty() {
            return Err(Error::validation("need at least one damping function"));
        }
        let damping = DampingField::diagonal(k_funcs.clone());
        let fh = k_funcs.clone();
        let h = GradientField {
            r: k_funcs.len(),
            h: Arc::new(move |x| diagonal_h_eval(&fh, x)),
            source: PotentialSource::Diagonal,
        };
        Ok(Self { damping, h, u: diagonal_u(k_funcs), jacobian_check: None })
    }

    pub fn dim(&self) -> usize {
        self.h.r
    }

    pub fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        self.h.eval(x)
    }

    pub fn u(&self, x: &DVector<f64>) -> f64 {
        (self.u)(x)
    }

    pub fn k(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.damping.eval(x)
    }

    pub fn damping(&self) -> &DampingField {
        &self.damping
    }

    pub fn source(&self) -> PotentialSource {
        self.h.source
    }

    pub fn gradient_field(&self) -> &GradientField {
        &self.h
    }

    pub fn jacobian_check(&self) -> Option<&JacobianCheck> {
        self.jacobian_check.as_ref()
    }

    /// Finite-difference Jacobian of `h` against `k` at `points`.
    pub fn check_jacobian(&self, points: &[DVector<f64>]) -> JacobianCheck {
        let mut worst = JacobianCheck { max_rel_residual: 0.0, witness: vec![], samples: points.len() };
        for p in points {
            let jac = numeric::jacobian_fd(|v| self.h(v), p, JACOBIAN_STEP);
            let k = self.k(p);
            for (a, b) in jac.iter().zip(k.iter()) {
                let e = rel_err(*a, *b);
                if e > worst.max_rel_residual || worst.witness.is_empty() {
                    worst.max_rel_residual = e.max(worst.max_rel_residual);
                    worst.witness = p.iter().copied().collect();
                }
            }
        }
        worst
    }

    /// Axis-wise conditions for a diagonal field at momentum `μ`; `None` if
    /// the damping has off-diagonal coupling.
    pub fn diagonal_conditions(
        &self,
        mu: &DVector<f64>,
        region: &SampleBox,
        points: usize,
    ) -> Option<Vec<AxisConditions>> {
        let funcs = self.damping.diagonal_funcs()?;
        let h_axis = |a: usize, s: f64| integrate(|t| funcs[a](t), 0.0, s, QUADRATURE_TOL);
        Some(check_diagonal_conditions(funcs, h_axis, mu, region, points))
    }
}

fn diagonal_u(funcs: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>) -> ScalarFn {
    Arc::new(move |x: &DVector<f64>| {
        funcs
            .iter()
            .zip(x.iter())
            .map(|(k, &xa)| {
                integrate(
                    |s| integrate(|t| k(t), 0.0, s, QUADRATURE_TOL),
                    0.0,
                    xa,
                    QUADRATURE_TOL,
                )
            })
            .sum()
    })
}

/// Newton iteration on `h(x) = μ` with Jacobian `k(x)`.
///
/// Steps are halved (up to 50 times) whenever the full step fails to reduce
/// the residual. Converges when `‖h(x) − μ‖ ≤ 1e-10`.
pub fn find_equilibrium(
    base: &DampingPotential,
    mu: &DVector<f64>,
    guess: &DVector<f64>,
) -> Result<DVector<f64>> {
    if mu.len() != base.dim() || guess.len() != base.dim() {
        return Err(Error::validation("momentum and guess must have dimension r"));
    }
    let mut x = guess.clone();
    let mut trace = Vec::new();
    for iter in 0..NEWTON_MAX_ITER {
        let res = base.h(&x) - mu;
        let norm = res.norm();
        trace.push(norm);
        if norm <= NEWTON_TOL {
            return Ok(x);
        }
        let step = base.k(&x).lu().solve(&res).ok_or_else(|| Error::Solver {
            iterations: iter,
            residual: norm,
            trace: trace.clone(),
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let cand = &x - &step * lambda;
            let cand_norm = (base.h(&cand) - mu).norm();
            if cand_norm.is_finite() && cand_norm < norm {
                x = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Solver { iterations: iter + 1, residual: norm, trace });
        }
    }
    let residual = *trace.last().unwrap_or(&f64::NAN);
    Err(Error::Solver { iterations: NEWTON_MAX_ITER, residual, trace })
}

/// `U_μ(x) = U(x) − μ·x − (U(x_e) − μ·x_e)`.
///
/// Without an equilibrium (for example zero damping and non-zero `μ`, where
/// `U_μ` is linear) the potential is anchored at the origin instead.
#[derive(Clone, Debug)]
pub struct ShiftedPotential {
    base: DampingPotential,
    mu: DVector<f64>,
    x_e: Option<DVector<f64>>,
    offset: f64,
}

impl ShiftedPotential {
    pub fn base(&self) -> &DampingPotential {
        &self.base
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn equilibrium(&self) -> Option<&DVector<f64>> {
        self.x_e.as_ref()
    }

    /// `U_μ = U − μ·x` with no critical point search.
    pub fn unanchored(base: &DampingPotential, mu: &DVector<f64>) -> Self {
        Self { base: base.clone(), mu: mu.clone(), x_e: None, offset: 0.0 }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.base.u(x) - self.mu.dot(x) - self.offset
    }

    /// `dU_μ = h − μ`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.base.h(x) - &self.mu
    }
}

/// Locates `x_e` by Newton from `guess` and normalises `U_μ(x_e) = 0`.
pub fn build_shifted_potential(
    base: &DampingPotential,
    mu: &DVector<f64>,
    guess: &DVector<f64>,
) -> Result<ShiftedPotential> {
    let x_e = find_equilibrium(base, mu, guess)?;
    let offset = base.u(&x_e) - mu.dot(&x_e);
    Ok(ShiftedPotential { base: base.clone(), mu: mu.clone(), x_e: Some(x_e), offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{pendulum_damping_k1, pendulum_damping_k2, three_link_damping};

    fn v(a: &[f64]) -> DVector<f64> {
        DVector::from_vec(a.to_vec())
    }

    fn strip_closed_form(k: &DampingField) -> DampingField {
        DampingField::new(k.dim(), k.eval_fn())
    }

    #[test]
    fn h_for_k1_is_linear() {
        let h = construct_h(&pendulum_damping_k1(), &SampleBox::symmetric(2, 3.0)).unwrap();
        let x = v(&[0.7, -1.1]);
        assert!((h.eval(&x) - &x * 3.0).amax() < 1e-14);
    }

    #[test]
    fn path_integral_h_matches_closed_form_for_k2() {
        let region = SampleBox::symmetric(2, 3.0);
        let h = construct_h(&strip_closed_form(&pendulum_damping_k2()), &region).unwrap();
        assert_eq!(h.source(), PotentialSource::PathIntegral);
        for x in [v(&[0.3, -0.4]), v(&[2.0, 1.5]), v(&[-2.5, 0.1])] {
            let exact = v(&[
                5.0 * x[0] + 4.0 * x[1] + 2.0 * x[0].sin(),
                4.0 * x[0] + 4.0 * x[1] + 2.0 * x[1].sin(),
            ]);
            assert!((h.eval(&x) - exact).amax() < 1e-10);
        }
    }

    #[test]
    fn zero_damping_gives_zero_potential() {
        let pot = DampingPotential::build(&DampingField::zero(2), &SampleBox::symmetric(2, 1.0)).unwrap();
        let x = v(&[0.4, 2.0]);
        assert_eq!(pot.h(&x).amax(), 0.0);
        assert_eq!(pot.u(&x), 0.0);
    }

    #[test]
    fn u_for_k1_and_k2() {
        let region = SampleBox::symmetric(2, 3.0);
        let x = v(&[0.8, -0.3]);
        let k1 = DampingPotential::build(&strip_closed_form(&pendulum_damping_k1()), &region).unwrap();
        assert!((k1.u(&x) - 1.5 * (0.64 + 0.09)).abs() < 1e-10);

        let k2 = DampingPotential::build(&strip_closed_form(&pendulum_damping_k2()), &region).unwrap();
        let (a, b) = (x[0], x[1]);
        let paper_u2 = 0.5 * a * a + 2.0 * (a + b) * (a + b) - 2.0 * a.cos() - 2.0 * b.cos();
        assert!((k2.u(&x) - (paper_u2 + 4.0)).abs() < 1e-10);
        assert!(k2.jacobian_check().unwrap().max_rel_residual < 1e-5);
    }

    #[test]
    fn construction_refused_for_non_integrable_field() {
        let k = DampingField::new(
            2,
            Arc::new(|x: &DVector<f64>| {
                let c = x[0] * x[0];
                DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0])
            }),
        );
        let err = construct_h(&k, &SampleBox::symmetric(2, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("integrability")));
    }

    #[test]
    fn construct_u_refuses_non_symmetric_jacobian() {
        let h = GradientField {
            r: 2,
            h: Arc::new(|x: &DVector<f64>| v(&[x[1], 0.0])),
            source: PotentialSource::ClosedForm,
        };
        assert!(construct_u(&h, &SampleBox::symmetric(2, 1.0)).is_err());
    }

    #[test]
    fn shifted_k1_equilibria() {
        let region = SampleBox::symmetric(2, 3.0);
        let pot = DampingPotential::build(&pendulum_damping_k1(), &region).unwrap();
        let s0 = build_shifted_potential(&pot, &v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(s0.equilibrium().unwrap().amax(), 0.0);
        let x = v(&[0.5, -1.0]);
        assert!((s0.value(&x) - 1.5 * 1.25).abs() < 1e-14);

        let s = build_shifted_potential(&pot, &v(&[3.0, 3.0]), &v(&[0.0, 0.0])).unwrap();
        assert!((s.equilibrium().unwrap() - v(&[1.0, 1.0])).amax() < 1e-12);
        let expected = 1.5 * ((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2));
        assert!((s.value(&x) - expected).abs() < 1e-12);
        assert!(s.value(s.equilibrium().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn newton_single_step_for_linear_h() {
        let pot = DampingPotential::build(&pendulum_damping_k1(), &SampleBox::symmetric(2, 3.0)).unwrap();
        // one step lands exactly; the second residual evaluation confirms it
        let xe = find_equilibrium(&pot, &v(&[3.0, 3.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(xe, v(&[1.0, 1.0]));
    }

    #[test]
    fn newton_returns_guess_when_already_converged() {
        let pot = DampingPotential::build(&pendulum_damping_k2(), &SampleBox::symmetric(2, 3.0)).unwrap();
        let x0 = v(&[0.3, -0.2]);
        let mu = pot.h(&x0);
        assert_eq!(find_equilibrium(&pot, &mu, &x0).unwrap(), x0);
    }

    #[test]
    fn newton_reports_failure_with_trace() {
        // h(x) = sin-like with a zero derivative: no root for large μ
        let pot = DampingPotential::diagonal(vec![Arc::new(|s: f64| s.cos())]).unwrap();
        let err = find_equilibrium(&pot, &v(&[5.0]), &v(&[0.0])).unwrap_err();
        match err {
            Error::Solver { trace, .. } => assert!(!trace.is_empty()),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn diagonal_fast_path() {
        let pot = DampingPotential::diagonal(vec![Arc::new(|_| 6.0), Arc::new(|_| 3.0)]).unwrap();
        let x = v(&[0.4, -0.9]);
        assert!((pot.h(&x) - v(&[2.4, -2.7])).amax() < 1e-13);
        assert!((pot.u(&x) - (3.0 * 0.16 + 1.5 * 0.81)).abs() < 1e-12);
        let dk = three_link_damping();
        assert_eq!(dk.eval(&x), pot.k(&x));
    }

    #[test]
    fn diagonal_cubic_h_and_corollary_checks() {
        let pot = DampingPotential::diagonal(vec![Arc::new(|s: f64| 1.0 + s * s)]).unwrap();
        let x = v(&[1.7]);
        assert!((pot.h(&x)[0] - (1.7 + 1.7_f64.powi(3) / 3.0)).abs() < 1e-12);
        let region = SampleBox::symmetric(1, 10.0);
        let conds = pot.diagonal_conditions(&v(&[2.0]), &region, 401).unwrap();
        let c = &conds[0];
        assert!(c.unique_root && c.positive_slope && c.separated && c.divergent);
        // root of s + s³/3 = 2
        let root = c.root.unwrap();
        assert!((root + root.powi(3) / 3.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_conditions_detect_multiple_roots() {
        // h(s) = sin(s): many roots of h − 0 on a wide box
        let pot = DampingPotential::diagonal(vec![Arc::new(|s: f64| s.cos())]).unwrap();
        let conds = pot.diagonal_conditions(&v(&[0.0]), &SampleBox::symmetric(1, 10.0), 201).unwrap();
        assert!(!conds[0].unique_root);
        assert!(!conds[0].divergent);
    }
}
