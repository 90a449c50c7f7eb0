//! Configuration-driven scenario runs: model and damping assembly, condition
//! checks, closed-loop integration, recovery and boundedness metrics, and
//! file output.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditions::{check_potential_conditions, verify_damping_conditions, ConditionReport, SampleBox};
use crate::control::{
    constant_reference, cruise_reference, rest_to_rest_reference, sinusoid_reference, Controller, PdGains,
    PflTracking, PlainPd, ReferenceTrajectory, ZeroControl,
};
use crate::dynamics::ordinary_momentum;
use crate::error::{Error, Result};
use crate::generic::{diagonal_expression_damping, expression_damping, generic_system, GenericModel};
use crate::integrate::{hypothesis_check, integrate, HypothesisReport, IntegratorSpec, Trajectory};
use crate::models::{
    pendulum_damping_k1, pendulum_damping_k2, planar_pendulum, three_link, three_link_damping, PendulumParams,
    ThreeLinkParams,
};
use crate::plot::emit_plots;
use crate::potential::{build_shifted_potential, DampingPotential, ShiftedPotential};
use crate::system::{DampingField, GeneralizedState, MechanicalSystem};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_DIR_ENV: &str = "CYCLIC_RECOVERY_OUT";
pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_RECOVERY_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_REGION_HALF_WIDTH: f64 = 2.0;
pub const DEFAULT_CONDITION_GRID: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    PlanarPendulum {
        #[serde(default)]
        params: PendulumParams,
    },
    ThreeLink {
        #[serde(default)]
        params: ThreeLinkParams,
    },
    Generic {
        model: GenericModel,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<MechanicalSystem> {
        match self {
            ModelSpec::PlanarPendulum { params } => planar_pendulum(*params),
            ModelSpec::ThreeLink { params } => three_link(*params),
            ModelSpec::Generic { model } => generic_system(model),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingSpec {
    Zero,
    /// `k1`, `k2` (pendulum) or `three_link`.
    Preset {
        name: String,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// One expression in `s` per cyclic axis.
    Diagonal {
        functions: Vec<String>,
    },
    /// Full matrix of expressions in `x1..xr`.
    Expressions {
        entries: Vec<Vec<String>>,
    },
}

impl DampingSpec {
    pub fn build(&self, r: usize) -> Result<DampingField> {
        let field = match self {
            DampingSpec::Zero => DampingField::zero(r),
            DampingSpec::Preset { name } => match name.as_str() {
                "k1" => pendulum_damping_k1(),
                "k2" => pendulum_damping_k2(),
                "three_link" => three_link_damping(),
                other => {
                    return Err(Error::validation(format!(
                        "unknown damping preset {other:?} (expected k1, k2 or three_link)"
                    )))
                }
            },
            DampingSpec::Constant { matrix } => {
                if matrix.len() != r || matrix.iter().any(|row| row.len() != r) {
                    return Err(Error::validation(format!("constant damping must be {r}x{r}")));
                }
                DampingField::constant(DMatrix::from_fn(r, r, |i, j| matrix[i][j])).with_label("constant")
            }
            DampingSpec::Diagonal { functions } => diagonal_expression_damping(functions)?,
            DampingSpec::Expressions { entries } => expression_damping(entries, r)?,
        };
        if field.dim() != r {
            return Err(Error::validation(format!(
                "damping has dimension {} but the model has {r} cyclic variables",
                field.dim()
            )));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default)]
    pub xdot: Option<Vec<f64>>,
    #[serde(default)]
    pub ydot: Option<Vec<f64>>,
}

impl InitialStateSpec {
    pub fn build(&self, system: &MechanicalSystem) -> Result<GeneralizedState> {
        let (r, s) = (system.dims.r(), system.dims.shape());
        let vec = |v: &Option<Vec<f64>>, len: usize| {
            v.as_ref().map_or_else(|| DVector::zeros(len), |v| DVector::from_vec(v.clone()))
        };
        let st = GeneralizedState::new(
            0.0,
            DVector::from_vec(self.x.clone()),
            DVector::from_vec(self.y.clone()),
            vec(&self.xdot, r),
            vec(&self.ydot, s),
        );
        st.check_dims(system.dims)?;
        Ok(st)
    }
}

/// A gain given once for every axis or per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainValue {
    Uniform(f64),
    PerAxis(Vec<f64>),
}

impl GainValue {
    fn expand(&self, dim: usize) -> Result<DVector<f64>> {
        match self {
            GainValue::Uniform(g) => Ok(DVector::from_element(dim, *g)),
            GainValue::PerAxis(v) if v.len() == dim => Ok(DVector::from_vec(v.clone())),
            GainValue::PerAxis(v) => Err(Error::validation(format!(
                "gain vector has length {} but there are {dim} shape variables",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub rate: GainValue,
    pub position: GainValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Quintic rest-to-rest move. `start` defaults to the initial shape.
    Quintic {
        #[serde(default)]
        start: Option<Vec<f64>>,
        goal: Vec<f64>,
        t_move: f64,
    },
    /// Constant-velocity move with smooth velocity blends.
    Cruise {
        #[serde(default)]
        start: Option<Vec<f64>>,
        goal: Vec<f64>,
        t_move: f64,
        t_blend: f64,
    },
    /// `center + A sin(2πft)` on one axis (1-based). `center` defaults to
    /// the initial shape.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default = "first_axis")]
        axis: usize,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Hold `value`, or the initial shape when omitted.
    Hold {
        #[serde(default)]
        value: Option<Vec<f64>>,
    },
}

fn first_axis() -> usize {
    1
}

impl ReferenceSpec {
    pub fn build(&self, initial_y: &DVector<f64>) -> Result<ReferenceTrajectory> {
        let or_initial = |v: &Option<Vec<f64>>| -> Result<DVector<f64>> {
            let out = v.as_ref().map_or_else(|| initial_y.clone(), |v| DVector::from_vec(v.clone()));
            if out.len() != initial_y.len() {
                return Err(Error::validation(format!(
                    "reference vector has length {} but there are {} shape variables",
                    out.len(),
                    initial_y.len()
                )));
            }
            Ok(out)
        };
        match self {
            ReferenceSpec::Quintic { start, goal, t_move } => {
                rest_to_rest_reference(or_initial(start)?, or_initial(&Some(goal.clone()))?, *t_move)
            }
            ReferenceSpec::Cruise { start, goal, t_move, t_blend } => {
                cruise_reference(or_initial(start)?, or_initial(&Some(goal.clone()))?, *t_move, *t_blend)
            }
            ReferenceSpec::Sinusoid { amplitude, frequency, axis, center } => {
                if *axis == 0 {
                    return Err(Error::validation("sinusoid axis is 1-based"));
                }
                sinusoid_reference(*amplitude, *frequency, axis - 1, or_initial(center)?)
            }
            ReferenceSpec::Hold { value } => Ok(constant_reference(or_initial(value)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    /// Feedback linearisation with PD tracking.
    PflPd {
        #[serde(default)]
        gains: Option<GainsSpec>,
        reference: ReferenceSpec,
    },
    /// PD tracking applied directly as the shape force.
    PlainPd {
        #[serde(default)]
        gains: Option<GainsSpec>,
        reference: ReferenceSpec,
    },
    None,
}

impl ControllerSpec {
    /// Reference and gains of a tracking controller; `None` for no control.
    pub fn tracking(&self, initial_y: &DVector<f64>) -> Result<Option<(ReferenceTrajectory, PdGains)>> {
        let dim = initial_y.len();
        let (gains, reference) = match self {
            ControllerSpec::PflPd { gains, reference } | ControllerSpec::PlainPd { gains, reference } => {
                (gains, reference)
            }
            ControllerSpec::None => return Ok(None),
        };
        let gains = match gains {
            None => PdGains::default_for(dim),
            Some(g) => PdGains::new(g.rate.expand(dim)?, g.position.expand(dim)?)?,
        };
        Ok(Some((reference.build(initial_y)?, gains)))
    }

    pub fn build(&self, initial_y: &DVector<f64>) -> Result<Box<dyn Controller>> {
        Ok(match (self, self.tracking(initial_y)?) {
            (ControllerSpec::PflPd { .. }, Some((reference, gains))) => Box::new(PflTracking { reference, gains }),
            (ControllerSpec::PlainPd { .. }, Some((reference, gains))) => Box::new(PlainPd { reference, gains }),
            _ => Box::new(ZeroControl),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "default_recovery_tolerance")]
    pub recovery_tolerance: f64,
    /// Distance from `x_e` used for the settle time; defaults to the
    /// recovery tolerance.
    #[serde(default)]
    pub settle_tolerance: Option<f64>,
    /// Box for the damping condition checks; defaults to `±2` around the
    /// origin.
    #[serde(default)]
    pub region: Option<SampleBox>,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_recovery_tolerance() -> f64 {
    DEFAULT_RECOVERY_TOLERANCE
}

fn default_grid() -> usize {
    DEFAULT_CONDITION_GRID
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self { recovery_tolerance: DEFAULT_RECOVERY_TOLERANCE, settle_tolerance: None, region: None, grid: DEFAULT_CONDITION_GRID }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Subdirectory name for this run; defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub csv: bool,
    #[serde(default)]
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub description: Option<String>,
    pub model: ModelSpec,
    pub damping: DampingSpec,
    pub initial_state: InitialStateSpec,
    pub controller: ControllerSpec,
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Command-line overrides; `None` leaves the config value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub csv: bool,
    pub plots: bool,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    /// Reads a config file. The run name defaults to the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))
        })?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.output.name.is_none() {
            cfg.output.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.integrator.dt = dt;
        }
        if let Some(t) = o.t_final {
            self.integrator.t_final = t;
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = Some(d.clone());
        }
        self.output.csv |= o.csv;
        self.output.plots |= o.plots;
    }

    pub fn region(&self, r: usize) -> SampleBox {
        self.metrics.region.clone().unwrap_or_else(|| SampleBox::symmetric(r, DEFAULT_REGION_HALF_WIDTH))
    }

    /// Output directory: config (or command line) first, then the
    /// environment, then `out`; always suffixed with the run name.
    pub fn output_dir(&self) -> PathBuf {
        let base = self
            .output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        base.join(self.output.name.as_deref().unwrap_or("run"))
    }
}

/// Model with its damping attached, and the damping condition report.
pub struct Assembled {
    pub system: MechanicalSystem,
    pub conditions: ConditionReport,
}

/// Builds the model and damping and runs the damping condition checks.
pub fn assemble(config: &ScenarioConfig) -> Result<Assembled> {
    let base = config.model.build().map_err(|e| e.at_stage("model"))?;
    let damping = config.damping.build(base.dims.r()).map_err(|e| e.at_stage("damping"))?;
    let system = base.with_damping(damping).map_err(|e| e.at_stage("damping"))?;
    let region = config.region(system.dims.r());
    region.validate().map_err(|e| e.at_stage("damping conditions"))?;
    let conditions = verify_damping_conditions(&system.damping, &region, config.metrics.grid);
    Ok(Assembled { system, conditions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `‖x(t_final) − x(0)‖`.
    pub recovery_error: f64,
    pub recovery_per_axis: Vec<f64>,
    pub recovery_tolerance: f64,
    pub recovered: bool,
    /// `‖ẋ(t_final)‖`.
    pub final_cyclic_speed: f64,
    pub equilibrium: Option<Vec<f64>>,
    /// First sample time after which `‖x − x_e‖` stays below the settle
    /// tolerance for the rest of the run.
    pub settle_time: Option<f64>,
    pub settle_tolerance: f64,
    /// Largest damping-added momentum residual over every step.
    pub max_residual: f64,
    /// Largest change of the ordinary cyclic momenta over the samples.
    pub max_ordinary_momentum_drift: f64,
    pub excursion: Vec<Excursion>,
    /// Per-axis width of the range of `x` over the first and second halves of
    /// the horizon.
    pub first_half_band: Vec<f64>,
    pub second_half_band: Vec<f64>,
    /// Finite throughout, and the second-half band is no wider than the first.
    pub bounded: bool,
    pub hypothesis: HypothesisReport,
}

fn band(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

pub fn compute_metrics(
    system: &MechanicalSystem,
    shifted: &ShiftedPotential,
    traj: &Trajectory,
    metrics: &MetricsSpec,
) -> MetricsReport {
    let r = system.dims.r();
    let (first, last) = (traj.first(), traj.last());
    let offset = &last.x - &first.x;
    let settle_tolerance = metrics.settle_tolerance.unwrap_or(metrics.recovery_tolerance);
    let settle_time = shifted.equilibrium().and_then(|xe| {
        let mut settle = None;
        for (t, st) in traj.times.iter().zip(&traj.states).rev() {
            if (&st.x - xe).norm() < settle_tolerance {
                settle = Some(*t);
            } else {
                break;
            }
        }
        settle
    });
    let p0 = ordinary_momentum(system, first);
    let drift = traj
        .states
        .iter()
        .map(|s| (ordinary_momentum(system, s) - &p0).amax())
        .fold(0.0, f64::max);
    let t_mid = 0.5 * (traj.times[0] + *traj.times.last().unwrap_or(&0.0));
    let split = traj.times.partition_point(|t| *t < t_mid);
    let mut excursion = Vec::with_capacity(r);
    let (mut first_band, mut second_band) = (Vec::with_capacity(r), Vec::with_capacity(r));
    for a in 0..r {
        let series = traj.cyclic_series(a);
        excursion.push(Excursion {
            min: series.iter().copied().fold(f64::INFINITY, f64::min),
            max: series.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
        first_band.push(band(&series[..split]));
        second_band.push(band(&series[split..]));
    }
    let finite = traj.states.iter().all(GeneralizedState::is_finite);
    let bounded = finite && first_band.iter().zip(&second_band).all(|(f, s)| s <= f);
    let recovery_error = offset.norm();
    MetricsReport {
        recovery_error,
        recovery_per_axis: offset.iter().map(|v| v.abs()).collect(),
        recovery_tolerance: metrics.recovery_tolerance,
        recovered: recovery_error <= metrics.recovery_tolerance,
        final_cyclic_speed: last.xdot.norm(),
        equilibrium: shifted.equilibrium().map(|x| x.iter().copied().collect()),
        settle_time,
        settle_tolerance,
        max_residual: traj.max_residual,
        max_ordinary_momentum_drift: drift,
        excursion,
        first_half_band: first_band,
        second_half_band: second_band,
        bounded,
        hypothesis: hypothesis_check(system, traj),
    }
}

impl MetricsReport {
    pub fn render(&self, labels: &[String]) -> String {
        let mut out = format!(
            "recovery error {:.3e} (tolerance {:.1e}, {})\n",
            self.recovery_error,
            self.recovery_tolerance,
            if self.recovered { "recovered" } else { "not recovered" }
        );
        for (a, label) in labels.iter().enumerate() {
            out.push_str(&format!(
                "  {label:<8} |offset| {:.3e}  range [{:.4}, {:.4}]  bands {:.4} -> {:.4}\n",
                self.recovery_per_axis[a],
                self.excursion[a].min,
                self.excursion[a].max,
                self.first_half_band[a],
                self.second_half_band[a]
            ));
        }
        out.push_str(&format!("final cyclic speed {:.3e}\n", self.final_cyclic_speed));
        match self.settle_time {
            Some(t) => out.push_str(&format!("settled within {:.1e} of x_e at t = {t:.3}\n", self.settle_tolerance)),
            None => out.push_str("did not settle within the horizon\n"),
        }
        out.push_str(&format!(
            "max momentum residual {:.3e}, ordinary momentum drift {:.3e}\n",
            self.max_residual, self.max_ordinary_momentum_drift
        ));
        out.push_str(&format!(
            "bounded {}; mass bounds c1 = {:.4}, c2 = {:.4}, c3 = {:.4}; tail mean |ydot| {:.3e}\n",
            self.bounded, self.hypothesis.c1, self.hypothesis.c2, self.hypothesis.c3, self.hypothesis.ydot_tail_mean
        ));
        out
    }
}

pub struct ScenarioOutcome {
    pub system: MechanicalSystem,
    pub trajectory: Trajectory,
    pub metrics: MetricsReport,
    pub damping_conditions: ConditionReport,
    pub potential_conditions: ConditionReport,
    pub written: Vec<PathBuf>,
}

/// `U_μ` anchored at its critical point when Newton finds one, otherwise
/// left unanchored (zero damping has none).
pub fn shifted_potential(base: &DampingPotential, mu: &DVector<f64>, guess: &DVector<f64>) -> ShiftedPotential {
    build_shifted_potential(base, mu, guess).unwrap_or_else(|_| ShiftedPotential::unanchored(base, mu))
}

/// Full pipeline. Errors carry the name of the stage that failed.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.integrator.validate().map_err(|e| e.at_stage("config"))?;
    let Assembled { system, conditions } = assemble(config)?;
    if !conditions.damping_ok() {
        let (name, o) = conditions.first_failure().expect("a check failed");
        return Err(Error::validation(format!(
            "{name} check failed, worst residual {:.3e} at {:?}",
            o.worst_residual,
            o.witness.as_deref().unwrap_or(&[])
        ))
        .at_stage("damping conditions"));
    }
    let initial = config.initial_state.build(&system).map_err(|e| e.at_stage("initial state"))?;
    let region = config.region(system.dims.r());
    let potential = DampingPotential::build(&system.damping, &region).map_err(|e| e.at_stage("potential"))?;
    let controller = config.controller.build(&initial.y).map_err(|e| e.at_stage("controller"))?;
    let trajectory = integrate(&system, &potential, &initial, controller.as_ref(), &config.integrator)
        .map_err(|e| e.at_stage("integration"))?;
    let shifted = shifted_potential(&potential, &trajectory.mu, &initial.x);
    let potential_conditions = check_potential_conditions(&shifted, &region, config.metrics.grid);
    let metrics = compute_metrics(&system, &shifted, &trajectory, &config.metrics);
    let written = write_outputs(config, &system, &trajectory, &metrics).map_err(|e| e.at_stage("output"))?;
    Ok(ScenarioOutcome { system, trajectory, metrics, damping_conditions: conditions, potential_conditions, written })
}

fn write_outputs(
    config: &ScenarioConfig,
    system: &MechanicalSystem,
    traj: &Trajectory,
    metrics: &MetricsReport,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if !(config.output.csv || config.output.plots) {
        return Ok(written);
    }
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir)?;
    let metrics_path = dir.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(metrics)?)?;
    written.push(metrics_path);
    if config.output.csv {
        let path = dir.join("trajectory.csv");
        traj.write_csv(&path)?;
        written.push(path);
    }
    if config.output.plots {
        written.extend(emit_plots(traj, &system.labels, &dir)?);
    }
    Ok(written)
}

pub struct Comparison {
    pub damped: ScenarioOutcome,
    pub undamped: ScenarioOutcome,
}

/// Runs the scenario as configured and again with zero damping, in parallel.
/// Outputs go to `damped` and `undamped` subdirectories of the run directory.
pub fn compare_zero_damping(config: &ScenarioConfig) -> Result<Comparison> {
    let name = config.output.name.clone().unwrap_or_else(|| "run".into());
    let mut damped_cfg = config.clone();
    damped_cfg.output.name = Some(format!("{name}/damped"));
    let mut undamped_cfg = config.clone();
    undamped_cfg.output.name = Some(format!("{name}/undamped"));
    undamped_cfg.damping = DampingSpec::Zero;
    let (damped, undamped) = std::thread::scope(|s| {
        let a = s.spawn(|| run_scenario(&damped_cfg));
        let b = s.spawn(|| run_scenario(&undamped_cfg));
        (a.join(), b.join())
    });
    let join = |r: std::thread::Result<Result<ScenarioOutcome>>, which: &'static str| {
        r.unwrap_or_else(|_| Err(Error::Integration { t: f64::NAN, reason: format!("{which} run panicked") }))
    };
    Ok(Comparison { damped: join(damped, "damped")?, undamped: join(undamped, "undamped")? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum_config() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
                "schema": 1,
                "model": {"type": "planar_pendulum"},
                "damping": {"type": "preset", "name": "k1"},
                "initial_state": {"x": [0, 0], "y": [0, 0]},
                "controller": {"type": "pfl_pd", "reference": {"profile": "quintic", "goal": [0.2, 0.1], "t_move": 1}},
                "integrator": {"dt": 0.01, "t_final": 2}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_runs_short_scenario() {
        let out = run_scenario(&pendulum_config()).unwrap();
        assert_eq!(out.trajectory.len(), 201);
        assert!(out.metrics.max_residual < 1e-8);
        assert!(out.written.is_empty());
        assert_eq!(out.metrics.hypothesis.c1, 5.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_json(r#"{"schema": 1, "bogus": 3}"#).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn wrong_schema_version() {
        let text = serde_json::to_string(&pendulum_config()).unwrap().replace("\"schema\":1", "\"schema\":2");
        assert!(ScenarioConfig::from_json(&text).is_err());
    }

    #[test]
    fn asymmetric_damping_names_the_stage() {
        let mut cfg = pendulum_config();
        cfg.damping = DampingSpec::Constant { matrix: vec![vec![1.0, 1.0], vec![0.0, 1.0]] };
        let err = run_scenario(&cfg).err().unwrap();
        assert!(err.is_validation());
        assert!(err.to_string().starts_with("damping conditions failed"), "{err}");
    }

    #[test]
    fn wrong_initial_dimension() {
        let mut cfg = pendulum_config();
        cfg.initial_state.x = vec![0.0];
        let err = run_scenario(&cfg).err().unwrap();
        assert!(err.to_string().starts_with("initial state failed"), "{err}");
    }

    #[test]
    fn domain_exit_is_a_runtime_error() {
        let mut cfg = pendulum_config();
        cfg.controller = ControllerSpec::PflPd {
            gains: None,
            reference: ReferenceSpec::Quintic { start: None, goal: vec![0.0, 2.0], t_move: 1.0 },
        };
        let err = run_scenario(&cfg).err().unwrap();
        assert!(!err.is_validation());
        assert!(matches!(err.root(), Error::Integration { .. }));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = pendulum_config();
        cfg.output.dir = Some("from_config".into());
        cfg.apply(&Overrides { dt: Some(0.02), out_dir: Some("from_flag".into()), plots: true, ..Default::default() });
        assert_eq!(cfg.integrator.dt, 0.02);
        assert_eq!(cfg.output_dir(), PathBuf::from("from_flag/run"));
        assert!(cfg.output.plots && !cfg.output.csv);
    }

    #[test]
    fn still_reference_leaves_everything_in_place() {
        let mut cfg = pendulum_config();
        cfg.controller = ControllerSpec::PflPd { gains: None, reference: ReferenceSpec::Hold { value: None } };
        let cmp = compare_zero_damping(&cfg).unwrap();
        assert_eq!(cmp.damped.metrics.recovery_error, 0.0);
        assert_eq!(cmp.undamped.metrics.recovery_error, 0.0);
    }
}
