//! Mechanical systems whose first `r` coordinates are cyclic.
//!
//! Coordinates are ordered `q = (x, y)`: `x` holds the `r` cyclic variables,
//! `y` the `n - r` shape (actuated) variables. The mass matrix and potential
//! are functions of `y` only, which is how the cyclic assumption is enforced
//! structurally. The damping field acts on `x` only.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{self, FD_STEP};

pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type PartialsFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionSplit {
    n: usize,
    r: usize,
}

impl DimensionSplit {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        if r == 0 || r >= n {
            return Err(Error::validation(format!(
                "need 1 <= r < n, got n = {n}, r = {r}"
            )));
        }
        Ok(Self { n, r })
    }

    /// Total configuration dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of cyclic variables.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Number of shape (actuated) variables.
    pub fn shape(&self) -> usize {
        self.n - self.r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub xdot: DVector<f64>,
    pub ydot: DVector<f64>,
}

impl GeneralizedState {
    pub fn new(
        t: f64,
        x: DVector<f64>,
        y: DVector<f64>,
        xdot: DVector<f64>,
        ydot: DVector<f64>,
    ) -> Self {
        Self { t, x, y, xdot, ydot }
    }

    /// State at rest at the given positions.
    pub fn at_rest(x: DVector<f64>, y: DVector<f64>) -> Self {
        let (r, s) = (x.len(), y.len());
        Self::new(0.0, x, y, DVector::zeros(r), DVector::zeros(s))
    }

    /// `q̇ = (ẋ, ẏ)` stacked.
    pub fn qdot(&self) -> DVector<f64> {
        let r = self.xdot.len();
        let mut v = DVector::zeros(r + self.ydot.len());
        v.rows_mut(0, r).copy_from(&self.xdot);
        v.rows_mut(r, self.ydot.len()).copy_from(&self.ydot);
        v
    }

    /// Flat layout `[x, y, ẋ, ẏ]` used by the integrators.
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.x.len() + self.y.len();
        let mut z = DVector::zeros(2 * n);
        let r = self.x.len();
        z.rows_mut(0, r).copy_from(&self.x);
        z.rows_mut(r, n - r).copy_from(&self.y);
        z.rows_mut(n, r).copy_from(&self.xdot);
        z.rows_mut(n + r, n - r).copy_from(&self.ydot);
        z
    }

    pub fn from_flat(t: f64, z: &DVector<f64>, dims: DimensionSplit) -> Self {
        let (n, r) = (dims.n(), dims.r());
        Self {
            t,
            x: z.rows(0, r).into_owned(),
            y: z.rows(r, n - r).into_owned(),
            xdot: z.rows(n, r).into_owned(),
            ydot: z.rows(n + r, n - r).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && [&self.x, &self.y, &self.xdot, &self.ydot]
                .iter()
                .all(|v| v.iter().all(|e| e.is_finite()))
    }

    pub fn check_dims(&self, dims: DimensionSplit) -> Result<()> {
        let ok = self.x.len() == dims.r()
            && self.xdot.len() == dims.r()
            && self.y.len() == dims.shape()
            && self.ydot.len() == dims.shape();
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "state dimensions (x {}, y {}, xdot {}, ydot {}) do not match r = {}, n - r = {}",
                self.x.len(),
                self.y.len(),
                self.xdot.len(),
                self.ydot.len(),
                dims.r(),
                dims.shape()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialsSource {
    Analytic,
    FiniteDifference,
}

/// `y ↦ m(y)`, the full `n × n` mass matrix.
#[derive(Clone)]
pub struct MassMatrixField {
    n: usize,
    eval: MatrixFn,
    partials: Option<PartialsFn>,
}

impl MassMatrixField {
    pub fn analytic(n: usize, eval: MatrixFn, partials: PartialsFn) -> Self {
        Self { n, eval, partials: Some(partials) }
    }

    pub fn numeric(n: usize, eval: MatrixFn) -> Self {
        Self { n, eval, partials: None }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(y)
    }

    /// `∂m/∂y^a` for each shape coordinate.
    pub fn partials(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        match &self.partials {
            Some(p) => p(y),
            None => numeric::matrix_partials_fd(|v| (self.eval)(v), y, FD_STEP),
        }
    }

    pub fn partials_source(&self) -> PartialsSource {
        if self.partials.is_some() {
            PartialsSource::Analytic
        } else {
            PartialsSource::FiniteDifference
        }
    }
}

impl fmt::Debug for MassMatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MassMatrixField")
            .field("n", &self.n)
            .field("partials", &self.partials_source())
            .finish()
    }
}

#[derive(Clone)]
pub struct PotentialField {
    eval: ScalarFn,
    gradient: Option<VectorFn>,
}

impl PotentialField {
    pub fn new(eval: ScalarFn, gradient: VectorFn) -> Self {
        Self { eval, gradient: Some(gradient) }
    }

    /// Gradient taken by central differences.
    pub fn numeric(eval: ScalarFn) -> Self {
        Self { eval, gradient: None }
    }

    pub fn zero(shape_dim: usize) -> Self {
        Self::new(
            Arc::new(|_| 0.0),
            Arc::new(move |_| DVector::zeros(shape_dim)),
        )
    }

    pub fn eval(&self, y: &DVector<f64>) -> f64 {
        (self.eval)(y)
    }

    pub fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.gradient {
            Some(g) => g(y),
            None => numeric::gradient_fd(|v| (self.eval)(v), y, FD_STEP),
        }
    }
}

impl fmt::Debug for PotentialField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialField")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Damping coefficients `k_{αβ}(x)`; the force on the cyclic rows is
/// `-k(x) ẋ`.
#[derive(Clone)]
pub struct DampingField {
    r: usize,
    eval: MatrixFn,
    closed_form_h: Option<VectorFn>,
    closed_form_u: Option<ScalarFn>,
    diagonal: Option<Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>>,
    label: String,
}

impl DampingField {
    pub fn new(r: usize, eval: MatrixFn) -> Self {
        Self {
            r,
            eval,
            closed_form_h: None,
            closed_form_u: None,
            diagonal: None,
            label: "custom".into(),
        }
    }

    pub fn zero(r: usize) -> Self {
        Self::constant(DMatrix::zeros(r, r)).with_label("zero")
    }

    /// Constant matrix `K`, with `h = K x` and `U = ½ xᵀ K x`.
    pub fn constant(k: DMatrix<f64>) -> Self {
        let r = k.nrows();
        let kh = k.clone();
        let ku = k.clone();
        Self::new(r, Arc::new(move |_| k.clone()))
            .with_closed_form(
                Arc::new(move |x| &kh * x),
                Arc::new(move |x| 0.5 * x.dot(&(&ku * x))),
            )
            .with_label("constant")
    }

    /// Diagonal damping `k_{αα}(x) = k_α(x^α)`, no coupling.
    pub fn diagonal(funcs: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>) -> Self {
        let r = funcs.len();
        let fs = funcs.clone();
        let mut field = Self::new(
            r,
            Arc::new(move |x: &DVector<f64>| {
                DMatrix::from_fn(r, r, |i, j| if i == j { fs[i](x[i]) } else { 0.0 })
            }),
        );
        field.diagonal = Some(funcs);
        field.label = "diagonal".into();
        field
    }

    pub fn with_closed_form(mut self, h: VectorFn, u: ScalarFn) -> Self {
        self.closed_form_h = Some(h);
        self.closed_form_u = Some(u);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(x)
    }

    pub fn closed_form_h(&self) -> Option<&VectorFn> {
        self.closed_form_h.as_ref()
    }

    pub fn closed_form_u(&self) -> Option<&ScalarFn> {
        self.closed_form_u.as_ref()
    }

    pub fn diagonal_funcs(&self) -> Option<&[Arc<dyn Fn(f64) -> f64 + Send + Sync>]> {
        self.diagonal.as_deref()
    }

    pub fn eval_fn(&self) -> MatrixFn {
        self.eval.clone()
    }
}

impl fmt::Debug for DampingField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DampingField")
            .field("r", &self.r)
            .field("label", &self.label)
            .field("closed_form", &self.closed_form_h.is_some())
            .finish()
    }
}

/// Per-axis bounds on the shape variables outside which the model is not
/// valid. Infinite bounds mean unrestricted.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDomain {
    pub bounds: Vec<(f64, f64)>,
}

impl ShapeDomain {
    pub fn unbounded(dim: usize) -> Self {
        Self { bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim] }
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        y.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
    }

    /// First violating axis, for diagnostics.
    pub fn violation(&self, y: &DVector<f64>) -> Option<(usize, f64, (f64, f64))> {
        y.iter()
            .zip(&self.bounds)
            .enumerate()
            .find(|(_, (v, (lo, hi)))| !(**v > *lo && **v < *hi))
            .map(|(i, (v, b))| (i, *v, *b))
    }
}

/// Display names used in CSV metadata and plots.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateLabels {
    pub cyclic: Vec<String>,
    pub shape: Vec<String>,
    /// File stem for cyclic-variable plots (`xy` gives `xy_time.svg`).
    pub cyclic_stem: String,
    pub shape_stem: String,
}

impl CoordinateLabels {
    pub fn generic(dims: DimensionSplit) -> Self {
        Self {
            cyclic: (1..=dims.r()).map(|i| format!("x{i}")).collect(),
            shape: (1..=dims.shape()).map(|i| format!("y{i}")).collect(),
            cyclic_stem: "x".into(),
            shape_stem: "y".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MechanicalSystem {
    pub name: String,
    pub dims: DimensionSplit,
    pub mass: MassMatrixField,
    pub potential: PotentialField,
    pub damping: DampingField,
    pub domain: ShapeDomain,
    pub labels: CoordinateLabels,
}

impl MechanicalSystem {
    pub fn new(
        name: impl Into<String>,
        dims: DimensionSplit,
        mass: MassMatrixField,
        potential: PotentialField,
        damping: DampingField,
    ) -> Result<Self> {
        if mass.dim() != dims.n() {
            return Err(Error::validation(format!(
                "mass matrix is {}x{} but n = {}",
                mass.dim(),
                mass.dim(),
                dims.n()
            )));
        }
        if damping.dim() != dims.r() {
            return Err(Error::validation(format!(
                "damping field has dimension {} but r = {}",
                damping.dim(),
                dims.r()
            )));
        }
        Ok(Self {
            name: name.into(),
            domain: ShapeDomain::unbounded(dims.shape()),
            labels: CoordinateLabels::generic(dims),
            dims,
            mass,
            potential,
            damping,
        })
    }

    /// Same system with another damping field.
    pub fn with_damping(&self, damping: DampingField) -> Result<Self> {
        if damping.dim() != self.dims.r() {
            return Err(Error::validation(format!(
                "damping field has dimension {} but r = {}",
                damping.dim(),
                self.dims.r()
            )));
        }
        let mut s = self.clone();
        s.damping = damping;
        Ok(s)
    }

    pub fn with_domain(mut self, domain: ShapeDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_labels(mut self, labels: CoordinateLabels) -> Self {
        self.labels = labels;
        self
    }

    /// Splits `m(y)` into `(m_{αβ}, m_{αa}, m_{ab})`.
    pub fn mass_blocks(&self, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let m = self.mass.eval(y);
        let (r, s) = (self.dims.r(), self.dims.shape());
        (
            m.view((0, 0), (r, r)).into_owned(),
            m.view((0, r), (r, s)).into_owned(),
            m.view((r, r), (s, s)).into_owned(),
        )
    }

    pub fn check_domain(&self, y: &DVector<f64>) -> Result<()> {
        match self.domain.violation(y) {
            None => Ok(()),
            Some((i, v, (lo, hi))) => Err(Error::domain(format!(
                "shape variable {} = {v} outside valid interval ({lo}, {hi})",
                self.labels.shape.get(i).cloned().unwrap_or_else(|| format!("y{}", i + 1))
            ))),
        }
    }
}
