//! Small numerical helpers shared across the crate: central differences,
//! adaptive Gauss-Kronrod quadrature and a few symmetric-matrix utilities.

use nalgebra::{DMatrix, DVector};

/// Step used for numeric mass-matrix and potential partials.
pub const FD_STEP: f64 = 1e-6;

/// `|a - b| <= tol * max(|b|, 1)`: relative for large magnitudes, absolute
/// near zero.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Mixed relative error used by the `rel_close` family.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn central_diff<F>(f: F, x: &DVector<f64>, i: usize, step: f64) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[i] += step;
    xm[i] -= step;
    (f(&xp) - f(&xm)) / (2.0 * step)
}

pub fn gradient_fd<F>(f: F, x: &DVector<f64>, step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    DVector::from_iterator(x.len(), (0..x.len()).map(|i| central_diff(&f, x, i, step)))
}

/// Jacobian `J[(i, j)] = d f_i / d x_j` by central differences.
pub fn jacobian_fd<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (f(&xp) - f(&xm)) / (2.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

/// Matrix partials `d M / d x_j` for every coordinate `j`.
pub fn matrix_partials_fd<F>(f: F, x: &DVector<f64>, step: f64) -> Vec<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    (0..x.len())
        .map(|j| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            (f(&xp) - f(&xm)) / (2.0 * step)
        })
        .collect()
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().max()
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Upper bound on the number of subintervals in adaptive quadrature.
pub const MAX_SUBINTERVALS: usize = 2000;

fn gk15_vec<F>(f: &F, a: f64, b: f64) -> (DVector<f64>, f64)
where
    F: Fn(f64) -> DVector<f64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = &fc * WGK[7];
    let mut gauss = &fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kronrod += &s * WGK[k];
        if k % 2 == 1 {
            gauss += &s * WG[k / 2];
        }
    }
    let kronrod = kronrod * h;
    let gauss = gauss * h;
    let err = (&kronrod - gauss).amax();
    (kronrod, err)
}

struct Piece {
    a: f64,
    b: f64,
    val: DVector<f64>,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive 15-point Gauss-Kronrod quadrature of a vector-valued
/// integrand over `[a, b]` to absolute tolerance `tol` (max-norm). The
/// subinterval with the largest error estimate is bisected until the summed
/// estimate meets `tol` or [`MAX_SUBINTERVALS`] is reached.
pub fn integrate_vec<F>(f: F, a: f64, b: f64, tol: f64) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let piece = |a: f64, b: f64| {
        let (val, err) = gk15_vec(&f, a, b);
        Piece { a, b, val, err }
    };
    let mut heap = std::collections::BinaryHeap::new();
    let first = piece(a, b);
    let mut total_err = first.err;
    heap.push(first);
    while total_err > tol && heap.len() < MAX_SUBINTERVALS {
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a).abs() < 1e-14 * worst.a.abs().max(1.0) {
            heap.push(worst);
            break;
        }
        let (left, right) = (piece(worst.a, m), piece(m, worst.b));
        total_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut sum = DVector::zeros(pieces[0].val.len());
    for p in &pieces {
        sum += &p.val;
    }
    sum
}

/// Scalar version of [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|s| DVector::from_element(1, f(s)), a, b, tol)[0]
}

/// Cartesian grid over an axis-aligned box, `points` samples per axis.
pub fn grid_points(lower: &[f64], upper: &[f64], points: usize) -> Vec<DVector<f64>> {
    let dim = lower.len();
    let axis = |d: usize, k: usize| {
        if points <= 1 {
            0.5 * (lower[d] + upper[d])
        } else {
            lower[d] + (upper[d] - lower[d]) * k as f64 / (points - 1) as f64
        }
    };
    let total = points.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = DVector::zeros(dim);
        for d in 0..dim {
            p[d] = axis(d, rem % points);
            rem /= points;
        }
        out.push(p);
    }
    out
}
