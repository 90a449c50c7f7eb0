//! Models and damping fields declared in configuration files with the
//! expression language of [`crate::expr`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, Var};
use crate::numeric::min_eigenvalue;
use crate::system::{
    DampingField, DimensionSplit, MassMatrixField, MechanicalSystem, PotentialField, ShapeDomain,
};

/// Config description of a model. Mass entries are expressions of `y1..`;
/// the potential, if present, likewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericModel {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub r: usize,
    pub mass: Vec<Vec<String>>,
    #[serde(default)]
    pub potential: Option<String>,
    /// Open interval per shape variable; omitted means unbounded.
    #[serde(default)]
    pub shape_bounds: Option<Vec<[f64; 2]>>,
}

fn parse_matrix(
    rows: &[Vec<String>],
    dim: usize,
    what: &str,
    allowed: impl Fn(Var) -> bool + Copy,
) -> Result<Vec<Vec<Expr>>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::validation(format!("{what} must be a {dim}x{dim} matrix")));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, src)| {
                    let e = Expr::parse(src)?;
                    e.require_vars(&format!("{what} entry ({}, {})", i + 1, j + 1), allowed)?;
                    Ok(e)
                })
                .collect()
        })
        .collect()
}

fn eval_matrix(entries: &[Vec<Expr>], b: &Bindings<'_>) -> DMatrix<f64> {
    let n = entries.len();
    DMatrix::from_fn(n, n, |i, j| entries[i][j].eval(b))
}

/// Deterministic probe points used for the declared-symmetry check.
fn probe_points(dim: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]];
    for k in 1..=6 {
        pts.push(
            (0..dim)
                .map(|i| 0.37 * k as f64 * if (i + k) % 2 == 0 { 1.0 } else { -1.0 } + 0.11 * i as f64)
                .collect(),
        );
    }
    pts
}

fn check_declared_symmetry(
    entries: &[Vec<Expr>],
    what: &str,
    probe: impl for<'a> Fn(&'a [f64]) -> Bindings<'a>,
) -> Result<()> {
    let n = entries.len();
    for p in probe_points(n.max(1)) {
        let b = probe(&p);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, c) = (entries[i][j].eval(&b), entries[j][i].eval(&b));
                if (a - c).abs() > 1e-12 {
                    return Err(Error::validation(format!(
                        "{what} is not symmetric: entry ({}, {}) = {a} but ({}, {}) = {c} at {:?}",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1,
                        p
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Builds a system from a config description. Mass partials and the
/// potential gradient are taken by central differences.
pub fn generic_system(model: &GenericModel) -> Result<MechanicalSystem> {
    let dims = DimensionSplit::new(model.n, model.r)?;
    let shape = dims.shape();
    let mass = parse_matrix(&model.mass, dims.n(), "mass matrix", |v| {
        matches!(v, Var::Shape(i) if i < shape)
    })
    .map_err(|e| match e {
        Error::Validation(msg) if msg.contains("'x") => Error::validation(format!(
            "{msg}; mass entries may depend on shape variables only (cyclic variables must not appear)"
        )),
        other => other,
    })?;
    check_declared_symmetry(&mass, "mass matrix", |p| {
        // probe points are generated with dimension n; only the first n - r are used
        Bindings { x: &[], y: &p[..shape.min(p.len())], s: 0.0 }
    })?;

    let domain = match &model.shape_bounds {
        None => ShapeDomain::unbounded(shape),
        Some(b) => {
            if b.len() != shape || b.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(Error::validation(format!(
                    "shape_bounds must list {shape} increasing intervals"
                )));
            }
            ShapeDomain { bounds: b.iter().map(|[lo, hi]| (*lo, *hi)).collect() }
        }
    };

    let mass = Arc::new(mass);
    let m = mass.clone();
    let eval = Arc::new(move |y: &DVector<f64>| {
        eval_matrix(&m, &Bindings { x: &[], y: y.as_slice(), s: 0.0 })
    });

    let reference_y: DVector<f64> = DVector::from_iterator(
        shape,
        domain.bounds.iter().map(|(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            _ => 0.0_f64.clamp(*lo, *hi),
        }),
    );
    let m0 = eval(&reference_y);
    if min_eigenvalue(&m0) <= 0.0 {
        return Err(Error::validation(format!(
            "mass matrix is not positive definite at y = {:?}",
            reference_y.as_slice()
        )));
    }

    let potential = match &model.potential {
        None => PotentialField::zero(shape),
        Some(src) => {
            let e = Expr::parse(src)?;
            e.require_vars("potential", |v| matches!(v, Var::Shape(i) if i < shape))?;
            PotentialField::numeric(Arc::new(move |y: &DVector<f64>| {
                e.eval(&Bindings { x: &[], y: y.as_slice(), s: 0.0 })
            }))
        }
    };

    let name = model.name.clone().unwrap_or_else(|| "generic".into());
    Ok(MechanicalSystem::new(
        name,
        dims,
        MassMatrixField::numeric(dims.n(), eval),
        potential,
        DampingField::zero(dims.r()),
    )?
    .with_domain(domain))
}

/// Damping matrix whose entries are expressions of `x1..xr`.
pub fn expression_damping(entries: &[Vec<String>], r: usize) -> Result<DampingField> {
    let parsed = parse_matrix(entries, r, "damping matrix", |v| {
        matches!(v, Var::Cyclic(i) if i < r)
    })?;
    let parsed = Arc::new(parsed);
    Ok(DampingField::new(
        r,
        Arc::new(move |x: &DVector<f64>| {
            eval_matrix(&parsed, &Bindings { x: x.as_slice(), y: &[], s: 0.0 })
        }),
    )
    .with_label("expression"))
}

/// Diagonal damping from one scalar expression in `s` per cyclic axis.
pub fn diagonal_expression_damping(funcs: &[String]) -> Result<DampingField> {
    let fs = funcs
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let e = Expr::parse(src)?;
            e.require_vars(&format!("diagonal damping k{}", i + 1), |v| v == Var::Scalar)?;
            let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
                Arc::new(move |s| e.eval(&Bindings { s, ..Default::default() }));
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    if fs.is_empty() {
        return Err(Error::validation("diagonal damping needs at least one function"));
    }
    Ok(DampingField::diagonal(fs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn free_particle() {
        let model = GenericModel {
            name: None,
            n: 2,
            r: 1,
            mass: strs(&[&["1", "0"], &["0", "1"]]),
            potential: None,
            shape_bounds: None,
        };
        let sys = generic_system(&model).unwrap();
        let y = DVector::from_element(1, 0.4);
        assert_eq!(sys.mass.eval(&y), DMatrix::identity(2, 2));
        assert_eq!(sys.mass.partials(&y)[0].amax(), 0.0);
        assert_eq!(sys.potential.gradient(&y)[0], 0.0);
    }

    #[test]
    fn rejects_cyclic_dependence_in_mass() {
        let model = GenericModel {
            name: None,
            n: 2,
            r: 1,
            mass: strs(&[&["1 + x1*x1", "0"], &["0", "1"]]),
            potential: None,
            shape_bounds: None,
        };
        let err = generic_system(&model).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("x1")), "{err}");
    }

    #[test]
    fn rejects_asymmetric_mass() {
        let model = GenericModel {
            name: None,
            n: 2,
            r: 1,
            mass: strs(&[&["2", "cos(y1)"], &["sin(y1)", "2"]]),
            potential: None,
            shape_bounds: None,
        };
        assert!(matches!(generic_system(&model), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_wrong_shape_and_bad_split() {
        let model = GenericModel {
            name: None,
            n: 2,
            r: 2,
            mass: strs(&[&["1", "0"], &["0", "1"]]),
            potential: None,
            shape_bounds: None,
        };
        assert!(generic_system(&model).is_err());
        let model = GenericModel { r: 1, mass: strs(&[&["1", "0"]]), ..model };
        assert!(generic_system(&model).is_err());
    }

    #[test]
    fn damping_expressions_must_use_cyclic_variables() {
        assert!(expression_damping(&strs(&[&["1", "y1"], &["y1", "1"]]), 2).is_err());
        let k = expression_damping(&strs(&[&["5 + 2*cos(x1)", "4"], &["4", "4 + 2*cos(x2)"]]), 2)
            .unwrap();
        let v = k.eval(&DVector::zeros(2));
        assert_eq!(v, DMatrix::from_row_slice(2, 2, &[7.0, 4.0, 4.0, 6.0]));
        assert!(diagonal_expression_damping(&["x1".to_string()]).is_err());
        let d = diagonal_expression_damping(&["1 + s^2".into(), "3".into()]).unwrap();
        let v = d.eval(&DVector::from_vec(vec![2.0, 9.0]));
        assert_eq!(v, DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 3.0]));
    }
}
