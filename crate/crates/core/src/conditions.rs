//! Grid-based checks of the structural conditions on the damping field and on
//! the shifted potential.
//!
//! The global conditions (unique minimum, separation at infinity, growth of
//! the potential) are not decidable by sampling. Everything here is a
//! certificate over a user-supplied compact box only, and reports say so.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, grid_points, min_eigenvalue};
use crate::potential::ShiftedPotential;
use crate::system::DampingField;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const INTEGRABILITY_STEP: f64 = 1e-5;
pub const INTEGRABILITY_TOL: f64 = 1e-4;
pub const MIN_GRID: usize = 5;

pub const SURROGATE_NOTE: &str =
    "checked on a sampled compact box only; this is a surrogate, not a global proof";

/// Axis-aligned box in the cyclic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[-half, half]^dim`.
    pub fn symmetric(dim: usize, half: f64) -> Self {
        Self { lower: vec![-half; dim], upper: vec![half; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::validation("box bounds must be non-empty and of equal length"));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::validation("box needs finite bounds with lower < upper"));
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn grid(&self, points: usize) -> Vec<DVector<f64>> {
        grid_points(&self.lower, &self.upper, points)
    }

    pub fn max_spacing(&self, points: usize) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) / (points.max(2) - 1) as f64)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub pass: bool,
    pub worst_residual: f64,
    /// Worst point for failures; always present when `pass` is false.
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

impl CheckOutcome {
    fn new(pass: bool, worst_residual: f64, witness: &DVector<f64>, detail: String) -> Self {
        Self {
            pass,
            worst_residual,
            witness: if pass { None } else { Some(witness.iter().copied().collect()) },
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub domain: SampleBox,
    pub grid: usize,
    pub symmetry: Option<CheckOutcome>,
    pub integrability: Option<CheckOutcome>,
    pub unique_minimum: Option<CheckOutcome>,
    pub separation: Option<CheckOutcome>,
    pub gradient_bound: Option<CheckOutcome>,
    pub note: String,
}

impl ConditionReport {
    fn empty(domain: &SampleBox, grid: usize) -> Self {
        Self {
            domain: domain.clone(),
            grid,
            symmetry: None,
            integrability: None,
            unique_minimum: None,
            separation: None,
            gradient_bound: None,
            note: SURROGATE_NOTE.into(),
        }
    }

    fn outcomes(&self) -> impl Iterator<Item = (&'static str, &CheckOutcome)> {
        [
            ("symmetry", &self.symmetry),
            ("integrability", &self.integrability),
            ("unique minimum", &self.unique_minimum),
            ("separation", &self.separation),
            ("gradient bound", &self.gradient_bound),
        ]
        .into_iter()
        .filter_map(|(name, o)| o.as_ref().map(|o| (name, o)))
    }

    /// Symmetry and integrability both checked and passing.
    pub fn damping_ok(&self) -> bool {
        matches!((&self.symmetry, &self.integrability), (Some(s), Some(i)) if s.pass && i.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.outcomes().all(|(_, o)| o.pass)
    }

    pub fn first_failure(&self) -> Option<(&'static str, &CheckOutcome)> {
        self.outcomes().find(|(_, o)| !o.pass)
    }

    /// Human-readable multi-line summary.
    pub fn render(&self) -> String {
        let mut out = format!(
            "box lower {:?} upper {:?}, {} points per axis ({})\n",
            self.domain.lower, self.domain.upper, self.grid, self.note
        );
        for (name, o) in self.outcomes() {
            out.push_str(&format!(
                "  {:<15} {}  worst residual {:.3e}",
                name,
                if o.pass { "PASS" } else { "FAIL" },
                o.worst_residual
            ));
            if let Some(w) = &o.witness {
                out.push_str(&format!("  witness {:?}", w));
            }
            if !o.detail.is_empty() {
                out.push_str(&format!("  ({})", o.detail));
            }
            out.push('\n');
        }
        out
    }
}

/// Symmetry and integrability (curl-free rows) of `k(x)` sampled on a grid.
/// Grids coarser than [`MIN_GRID`] points per axis are refined to it.
pub fn verify_damping_conditions(
    damping: &DampingField,
    domain: &SampleBox,
    grid: usize,
) -> ConditionReport {
    let grid = grid.max(MIN_GRID);
    let r = damping.dim();
    let mut report = ConditionReport::empty(domain, grid);
    if domain.dim() != r {
        let origin = DVector::zeros(r);
        let fail = CheckOutcome::new(
            false,
            f64::INFINITY,
            &origin,
            format!("box has dimension {} but damping has {r}", domain.dim()),
        );
        report.symmetry = Some(fail.clone());
        report.integrability = Some(fail);
        return report;
    }

    let points = domain.grid(grid);
    let mut sym_worst = (0.0_f64, points[0].clone());
    let mut int_worst = (0.0_f64, points[0].clone(), String::new());
    for p in &points {
        let k = damping.eval(p);
        let asym = numeric::max_asymmetry(&k);
        if asym > sym_worst.0 || !asym.is_finite() {
            sym_worst = (asym, p.clone());
        }
        let dk = numeric::matrix_partials_fd(|x| damping.eval(x), p, INTEGRABILITY_STEP);
        for a in 0..r {
            for b in 0..r {
                for c in (b + 1)..r {
                    let res = (dk[c][(a, b)] - dk[b][(a, c)]).abs();
                    if res > int_worst.0 || !res.is_finite() {
                        int_worst = (
                            res,
                            p.clone(),
                            format!(
                                "d k{}{}/d x{} vs d k{}{}/d x{}",
                                a + 1,
                                b + 1,
                                c + 1,
                                a + 1,
                                c + 1,
                                b + 1
                            ),
                        );
                    }
                }
            }
        }
    }
    report.symmetry = Some(CheckOutcome::new(
        sym_worst.0 <= SYMMETRY_TOL,
        sym_worst.0,
        &sym_worst.1,
        String::new(),
    ));
    report.integrability = Some(CheckOutcome::new(
        int_worst.0 <= INTEGRABILITY_TOL,
        int_worst.0,
        &int_worst.1,
        if int_worst.0 > INTEGRABILITY_TOL { int_worst.2 } else { String::new() },
    ));
    report
}

/// Grid certificate for the unique-minimum, separation and gradient-bound
/// conditions on `U_μ`.
///
/// * unique minimum: `x_e` lies in the box, `k(x_e)` is positive definite and
///   no grid point has `U_μ < U_μ(x_e)`; the grid argmin lies within the
///   exclusion radius of `x_e`.
/// * separation: `min U_μ > U_μ(x_e) = 0` over grid points at distance at least
///   the exclusion radius from `x_e`.
/// * gradient bound: `min ‖dU_μ‖ > 0` over the same points.
///
/// The exclusion radius is two grid spacings.
pub fn check_potential_conditions(
    shifted: &ShiftedPotential,
    domain: &SampleBox,
    grid: usize,
) -> ConditionReport {
    let grid = grid.max(MIN_GRID);
    let mut report = ConditionReport::empty(domain, grid);
    let Some(xe) = shifted.equilibrium().cloned() else {
        let origin = DVector::zeros(domain.dim());
        let fail = CheckOutcome::new(false, f64::INFINITY, &origin, "no critical point".into());
        report.unique_minimum = Some(fail.clone());
        report.separation = Some(fail.clone());
        report.gradient_bound = Some(fail);
        return report;
    };
    let radius = 2.0 * domain.max_spacing(grid);
    let points = domain.grid(grid);

    let mut argmin = (f64::INFINITY, xe.clone());
    let mut far_min_u = (f64::INFINITY, xe.clone());
    let mut far_min_grad = (f64::INFINITY, xe.clone());
    for p in &points {
        let u = shifted.value(p);
        if u < argmin.0 {
            argmin = (u, p.clone());
        }
        if (p - &xe).norm() >= radius {
            if u < far_min_u.0 {
                far_min_u = (u, p.clone());
            }
            let g = shifted.gradient(p).norm();
            if g < far_min_grad.0 {
                far_min_grad = (g, p.clone());
            }
        }
    }

    let hess_min = min_eigenvalue(&shifted.base().damping().eval(&xe));
    let inside = domain.contains(&xe);
    let lowest_near = (&argmin.1 - &xe).norm() < radius;
    let value_at_xe = shifted.value(&xe);
    let undershoot = (value_at_xe - argmin.0).max(0.0);
    let min_ok = inside && hess_min > 0.0 && lowest_near && undershoot <= 1e-12;
    let detail = if !inside {
        "equilibrium outside the box".to_string()
    } else if hess_min <= 0.0 {
        format!("k(x_e) not positive definite (min eigenvalue {hess_min:.3e})")
    } else if !min_ok {
        "grid minimum away from x_e".to_string()
    } else {
        String::new()
    };
    let witness = if !inside || hess_min <= 0.0 { xe.clone() } else { argmin.1.clone() };
    report.unique_minimum = Some(CheckOutcome::new(min_ok, undershoot, &witness, detail));

    // grids entirely inside the exclusion ball leave nothing to check
    let far_u = if far_min_u.0.is_finite() { far_min_u.0 } else { f64::INFINITY };
    report.separation = Some(CheckOutcome::new(
        far_u > value_at_xe,
        far_u - value_at_xe,
        &far_min_u.1,
        format!("exclusion radius {radius:.3e}"),
    ));
    report.gradient_bound = Some(CheckOutcome::new(
        far_min_grad.0 > 0.0,
        far_min_grad.0,
        &far_min_grad.1,
        format!("exclusion radius {radius:.3e}"),
    ));
    report
}

/// Per-axis conditions for diagonal damping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisConditions {
    pub root: Option<f64>,
    /// `h_α − μ_α` changes sign exactly once on the scan.
    pub unique_root: bool,
    /// `k_α` positive at the root.
    pub positive_slope: bool,
    /// `|h_α − μ_α|` bounded away from zero outside a neighbourhood of the root.
    pub separated: bool,
    /// `h_α` attains its scan maximum at the upper end and its minimum at the
    /// lower end, with opposite signs around `μ_α` (divergence surrogate).
    pub divergent: bool,
}

impl AxisConditions {
    pub fn recovery_ok(&self) -> bool {
        self.unique_root && self.positive_slope && self.separated
    }

    pub fn bounded_ok(&self) -> bool {
        self.recovery_ok() && self.divergent
    }
}

/// Scan each axis of a diagonal damping field on `[lower_α, upper_α]`.
pub fn check_diagonal_conditions(
    k_funcs: &[std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>],
    h_axis: impl Fn(usize, f64) -> f64,
    mu: &DVector<f64>,
    domain: &SampleBox,
    points: usize,
) -> Vec<AxisConditions> {
    let points = points.max(MIN_GRID);
    (0..k_funcs.len())
        .map(|a| {
            let (lo, hi) = (domain.lower[a], domain.upper[a]);
            let spacing = (hi - lo) / (points - 1) as f64;
            let s: Vec<f64> = (0..points).map(|i| lo + spacing * i as f64).collect();
            let g: Vec<f64> = s.iter().map(|&v| h_axis(a, v) - mu[a]).collect();

            let mut brackets = Vec::new();
            for i in 0..points - 1 {
                if g[i] == 0.0 {
                    brackets.push((s[i], s[i]));
                } else if g[i] * g[i + 1] < 0.0 {
                    brackets.push((s[i], s[i + 1]));
                }
            }
            if g[points - 1] == 0.0 {
                brackets.push((s[points - 1], s[points - 1]));
            }
            let unique_root = brackets.len() == 1;
            let root = brackets.first().map(|&(mut a0, mut b0)| {
                let f = |v: f64| h_axis(a, v) - mu[a];
                let mut fa = f(a0);
                for _ in 0..200 {
                    if b0 - a0 <= 1e-14 * (1.0 + a0.abs()) {
                        break;
                    }
                    let m = 0.5 * (a0 + b0);
                    let fm = f(m);
                    if fm == 0.0 {
                        a0 = m;
                        b0 = m;
                        break;
                    }
                    if fa * fm < 0.0 {
                        b0 = m;
                    } else {
                        a0 = m;
                        fa = fm;
                    }
                }
                0.5 * (a0 + b0)
            });
            let positive_slope = root.is_some_and(|x| k_funcs[a](x) > 0.0);
            let separated = root.is_some_and(|x| {
                s.iter()
                    .zip(&g)
                    .filter(|(v, _)| (*v - x).abs() >= 2.0 * spacing)
                    .all(|(_, gv)| gv.abs() > 0.0)
            });
            let (gmin, gmax) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(*v), b.max(*v))
            });
            let divergent =
                g[points - 1] >= gmax && g[0] <= gmin && g[points - 1] > 0.0 && g[0] < 0.0;
            AxisConditions { root, unique_root, positive_slope, separated, divergent }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::pendulum_damping_k2;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn k2_passes_symmetry_and_integrability() {
        let rep = verify_damping_conditions(&pendulum_damping_k2(), &SampleBox::symmetric(2, 5.0), 21);
        assert!(rep.damping_ok(), "{}", rep.render());
    }

    #[test]
    fn asymmetric_constant_fails_with_witness() {
        let k = DampingField::new(
            2,
            Arc::new(|_| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])),
        );
        let rep = verify_damping_conditions(&k, &SampleBox::symmetric(2, 1.0), 5);
        let sym = rep.symmetry.as_ref().unwrap();
        assert!(!sym.pass);
        assert_eq!(sym.worst_residual, 1.0);
        assert!(sym.witness.is_some());
        assert!(!rep.damping_ok());
    }

    #[test]
    fn non_integrable_field_fails() {
        let k = DampingField::new(
            2,
            Arc::new(|x: &DVector<f64>| {
                let c = x[0] * x[0];
                DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0])
            }),
        );
        let rep = verify_damping_conditions(&k, &SampleBox::symmetric(2, 1.0), 5);
        assert!(rep.symmetry.as_ref().unwrap().pass);
        let int = rep.integrability.as_ref().unwrap();
        assert!(!int.pass);
        // |∂k12/∂x1 − ∂k11/∂x2| = 2|x1| is largest on the box edge x1 = ±1
        assert!((int.worst_residual - 2.0).abs() < 1e-6);
        assert_eq!(int.witness.as_ref().unwrap()[0].abs(), 1.0);
    }

    #[test]
    fn grid_below_minimum_is_refined() {
        let rep = verify_damping_conditions(&pendulum_damping_k2(), &SampleBox::symmetric(2, 1.0), 2);
        assert_eq!(rep.grid, MIN_GRID);
    }

    #[test]
    fn mismatched_box_is_reported() {
        let rep = verify_damping_conditions(&pendulum_damping_k2(), &SampleBox::symmetric(3, 1.0), 5);
        assert!(!rep.damping_ok());
        assert!(rep.symmetry.unwrap().witness.is_some());
    }

    #[test]
    fn box_validation() {
        assert!(SampleBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(SampleBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(SampleBox::new(vec![-1.0], vec![f64::INFINITY]).is_err());
        assert!(SampleBox::new(vec![-1.0], vec![1.0]).is_ok());
    }
}
