//! Fixed-step classical Runge-Kutta integration of the forced equations of
//! motion, with per-step monitoring of the damping-added momenta.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::Controller;
use crate::dynamics::{damping_added_momentum, forced_accelerations};
use crate::error::{Error, Result};
use crate::numeric::{max_eigenvalue, min_eigenvalue, spectral_norm};
use crate::potential::DampingPotential;
use crate::system::{DimensionSplit, GeneralizedState, MechanicalSystem};

pub const DEFAULT_DT: f64 = 1e-3;
/// Fraction of the horizon used to judge whether `ẏ` has settled.
pub const TAIL_FRACTION: f64 = 0.1;
pub const TAIL_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `record_every`-th step in the trajectory (the last step is
    /// always kept). Residual maxima are taken over every step regardless.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl IntegratorSpec {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let s = Self { dt, t_final, record_every: 1 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(Error::validation(format!(
                "t_final must be at least dt, got t_final = {} with dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::validation("record_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; a final partial step covers any remainder.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// One classical RK4 step for `ż = f(t, z)`.
pub fn rk4_step<F>(f: &mut F, t: f64, z: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, z)?;
    let k2 = f(t + 0.5 * h, &(z + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(z + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(z + &k3 * h))?;
    Ok(z + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dims: DimensionSplit,
    pub times: Vec<f64>,
    pub states: Vec<GeneralizedState>,
    pub controls: Vec<DVector<f64>>,
    /// Damping-added momenta at each recorded sample.
    pub momenta: Vec<DVector<f64>>,
    /// `|p_α + h_α − μ_α|` at each recorded sample.
    pub residuals: Vec<DVector<f64>>,
    /// Momentum values fixed from the initial state.
    pub mu: DVector<f64>,
    /// Largest residual component over every integration step.
    pub max_residual: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &GeneralizedState {
        &self.states[0]
    }

    pub fn last(&self) -> &GeneralizedState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Values of cyclic coordinate `axis` over the run.
    pub fn cyclic_series(&self, axis: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.x[axis]).collect()
    }

    pub fn shape_series(&self, axis: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.y[axis]).collect()
    }

    pub fn csv_header(&self) -> String {
        let (r, s) = (self.dims.r(), self.dims.shape());
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=r).map(|i| format!("x{i}")));
        cols.extend((1..=s).map(|i| format!("y{i}")));
        cols.extend((1..=r).map(|i| format!("xdot{i}")));
        cols.extend((1..=s).map(|i| format!("ydot{i}")));
        cols.extend((1..=s).map(|i| format!("u{i}")));
        cols.extend((1..=r).map(|i| format!("p{i}")));
        cols.extend((1..=r).map(|i| format!("res{i}")));
        cols.join(",")
    }

    /// CSV text; every number carries 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for k in 0..self.len() {
            let st = &self.states[k];
            let mut first = true;
            let mut push = |out: &mut String, v: f64| {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{v:.16e}");
            };
            push(&mut out, self.times[k]);
            for v in st
                .x
                .iter()
                .chain(st.y.iter())
                .chain(st.xdot.iter())
                .chain(st.ydot.iter())
                .chain(self.controls[k].iter())
                .chain(self.momenta[k].iter())
                .chain(self.residuals[k].iter())
            {
                push(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv().as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// Integrates the closed loop with fixed-step RK4 from `initial` over
/// `spec.t_final` seconds. `μ` is fixed from the initial state.
///
/// Fails with [`Error::Integration`] if the state becomes non-finite, leaves
/// the model's shape domain, or the mass matrix loses definiteness.
pub fn integrate(
    system: &MechanicalSystem,
    potential: &DampingPotential,
    initial: &GeneralizedState,
    controller: &dyn Controller,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    spec.validate()?;
    initial.check_dims(system.dims)?;
    if potential.dim() != system.dims.r() {
        return Err(Error::validation("potential dimension does not match r"));
    }
    if !initial.is_finite() {
        return Err(Error::validation("initial state has non-finite entries"));
    }
    system
        .check_domain(&initial.y)
        .map_err(|e| Error::validation(format!("initial state: {e}")))?;

    let dims = system.dims;
    let t0 = initial.t;
    let mu = damping_added_momentum(system, potential, initial);
    let steps = spec.steps();
    let capacity = steps / spec.record_every + 2;
    let mut traj = Trajectory {
        dims,
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        controls: Vec::with_capacity(capacity),
        momenta: Vec::with_capacity(capacity),
        residuals: Vec::with_capacity(capacity),
        mu: mu.clone(),
        max_residual: 0.0,
    };

    let wrap = |t: f64, e: Error| match e {
        Error::Integration { .. } => e,
        other => Error::Integration { t, reason: other.to_string() },
    };

    let mut rhs = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let st = GeneralizedState::from_flat(t, z, dims);
        let u = controller.control(system, &st)?;
        let acc = forced_accelerations(system, &st, &u)?;
        let n = dims.n();
        let mut dz = DVector::zeros(2 * n);
        dz.rows_mut(0, n).copy_from(&z.rows(n, n));
        dz.rows_mut(n, n).copy_from(&acc);
        Ok(dz)
    };

    let record = |traj: &mut Trajectory, st: GeneralizedState, keep: bool| -> Result<()> {
        let p = damping_added_momentum(system, potential, &st);
        let res = (&p - &mu).abs();
        traj.max_residual = traj.max_residual.max(res.amax());
        if keep {
            let u = controller.control(system, &st).map_err(|e| wrap(st.t, e))?;
            traj.times.push(st.t);
            traj.controls.push(u);
            traj.momenta.push(p);
            traj.residuals.push(res);
            traj.states.push(st);
        }
        Ok(())
    };

    let mut z = initial.to_flat();
    record(&mut traj, initial.clone(), true)?;
    let t_end = t0 + spec.t_final;
    for k in 0..steps {
        let t = t0 + k as f64 * spec.dt;
        let h = spec.dt.min(t_end - t);
        z = rk4_step(&mut rhs, t, &z, h).map_err(|e| wrap(t, e))?;
        let t_next = if k + 1 == steps { t_end } else { t0 + (k + 1) as f64 * spec.dt };
        let st = GeneralizedState::from_flat(t_next, &z, dims);
        if !st.is_finite() {
            return Err(Error::Integration { t: t_next, reason: "state became non-finite".into() });
        }
        if let Err(e) = system.check_domain(&st.y) {
            return Err(Error::Integration { t: t_next, reason: format!("left the valid domain: {e}") });
        }
        let keep = (k + 1) % spec.record_every == 0 || k + 1 == steps;
        record(&mut traj, st, keep)?;
    }
    Ok(traj)
}

/// Empirical check of the bounds assumed for self-recovery: the cyclic mass
/// block stays within `[c1, c2]` (eigenvalues), the coupling block is bounded
/// by `c3`, and `‖ẏ‖` has settled over the tail of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Mean of `‖ẏ‖` over the last 10% of the horizon.
    pub ydot_tail_mean: f64,
    pub ydot_settled: bool,
    pub pass: bool,
}

pub fn hypothesis_check(system: &MechanicalSystem, traj: &Trajectory) -> HypothesisReport {
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    let mut c3 = 0.0_f64;
    for st in &traj.states {
        let (mcc, mcy, _) = system.mass_blocks(&st.y);
        c1 = c1.min(min_eigenvalue(&mcc));
        c2 = c2.max(max_eigenvalue(&mcc));
        c3 = c3.max(spectral_norm(&mcy));
    }
    let (t0, t1) = (traj.times[0], *traj.times.last().unwrap_or(&traj.times[0]));
    let cutoff = t1 - TAIL_FRACTION * (t1 - t0);
    let tail: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= cutoff)
        .map(|(_, s)| s.ydot.norm())
        .collect();
    let ydot_tail_mean = if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    let finite = c1.is_finite() && c2.is_finite() && c3.is_finite();
    HypothesisReport {
        c1,
        c2,
        c3,
        ydot_tail_mean,
        ydot_settled: ydot_tail_mean < TAIL_THRESHOLD,
        pass: finite && c1 > 0.0,
    }
}
