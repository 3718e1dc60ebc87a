//! Monte Carlo driver: coupled realizations at reference and ladder resolutions, strong
//! error functionals, fitted orders, ensemble energy/mass series and reports.
//!
//! Realizations run in a worker pool but every reduction walks realizations in index order,
//! so reports do not depend on the number of workers.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::DEFAULT_QUAD_ORDER;
use crate::error::{Error, Result};
use crate::field::RotationalCutoffField;
use crate::mesh::{build_uniform_mesh, Mesh, Point, DOMAIN_MAX, DOMAIN_MIN};
use crate::noise::{generate_realization_path, step_count, step_ratio, GENERATOR_ID};
use crate::postproc::{extract_zero_level_set, mean_field, LevelSet, TanhProfile};
use crate::stepper::{run_path_with, Discretization, NodalField, SchemeParams};

pub const ERROR_REPORT_SCHEMA: &str = "error-report/v1";
pub const ENSEMBLE_REPORT_SCHEMA: &str = "ensemble-report/v1";

/// Quadrature degree for projecting initial data.
pub const INITIAL_QUAD_ORDER: usize = 8;

/// Largest tolerated fraction of skipped realizations.
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Test1Temporal,
    Test1Spatial,
    Test2,
    Test3,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Test1Temporal => "test1_temporal",
            Preset::Test1Spatial => "test1_spatial",
            Preset::Test2 => "test2",
            Preset::Test3 => "test3",
            Preset::Custom => "custom",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "test1_temporal" => Ok(Preset::Test1Temporal),
            "test1_spatial" => Ok(Preset::Test1Spatial),
            "test2" => Ok(Preset::Test2),
            "test3" => Ok(Preset::Test3),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::invalid("preset", format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// Reference at `tau_ref` on the same mesh; the ladder varies `tau`.
    FineTauSameH,
    /// Reference on a finer nested mesh at the same `tau`; the ladder varies `h`.
    FineHSameTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    Abort,
    SkipAndCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialCondition {
    /// `x1² (1 - x1)² x2² (1 - x2²)`
    Test1Polynomial,
    /// `tanh(d0 / (√2 ε))` for the ellipse `x1²/0.36 + x2²/0.04 = 1`.
    SingleEllipse,
    /// `tanh(d0 / (√2 ε))` with `d0` the minimum over two ellipses at `(±0.2, 0)`.
    TwoEllipses,
    Constant { value: f64 },
}

pub fn test1_initial(p: Point) -> f64 {
    let (x, y) = (p[0], p[1]);
    x * x * (1.0 - x) * (1.0 - x) * y * y * (1.0 - y * y)
}

impl InitialCondition {
    pub fn evaluator(self, epsilon: f64) -> Box<dyn Fn(Point) -> f64 + Send + Sync> {
        match self {
            InitialCondition::Test1Polynomial => Box::new(test1_initial),
            InitialCondition::SingleEllipse => {
                let p = TanhProfile::single_ellipse(epsilon);
                Box::new(move |x| p.eval(x))
            }
            InitialCondition::TwoEllipses => {
                let p = TanhProfile::two_ellipses(epsilon);
                Box::new(move |x| p.eval(x))
            }
            InitialCondition::Constant { value } => Box::new(move |_| value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub epsilon: f64,
    pub delta: f64,
    pub t_final: f64,
    /// Axis mesh spacings `2/n`.
    pub h_list: Vec<f64>,
    pub tau_list: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
    pub tau_ref: f64,
    pub reference_policy: ReferencePolicy,
    /// Reference spacing for `fine_h_same_tau`; defaults to half the finest ladder spacing.
    pub reference_h: Option<f64>,
    pub initial: InitialCondition,
    pub snapshots: Vec<f64>,
    pub failure_policy: FailurePolicy,
    pub quad_order: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub constraint_threshold: f64,
}

impl ExperimentConfig {
    fn base(preset: Preset) -> Self {
        ExperimentConfig {
            preset,
            epsilon: 0.1,
            delta: 5.0,
            t_final: 0.016,
            h_list: vec![2.0 / 32.0],
            tau_list: vec![8e-4, 4e-4, 2e-4, 1e-4],
            realizations: 100,
            master_seed: 20240917,
            tau_ref: 5e-5,
            reference_policy: ReferencePolicy::FineTauSameH,
            reference_h: None,
            initial: InitialCondition::Test1Polynomial,
            snapshots: Vec::new(),
            failure_policy: FailurePolicy::Abort,
            quad_order: DEFAULT_QUAD_ORDER,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            constraint_threshold: 1.0,
        }
    }

    /// Temporal ladder at fixed `h = 2/32`, reference at `tau_ref`.
    pub fn test1_temporal() -> Self {
        Self::base(Preset::Test1Temporal)
    }

    /// Spatial ladder `h = 2/4, 2/8, 2/16` at `tau = 2e-4`, reference on `h = 2/32`.
    pub fn test1_spatial() -> Self {
        ExperimentConfig {
            delta: 25.0,
            h_list: vec![0.5, 0.25, 0.125],
            tau_list: vec![2e-4],
            realizations: 200,
            reference_policy: ReferencePolicy::FineHSameTau,
            reference_h: Some(2.0 / 32.0),
            ..Self::base(Preset::Test1Spatial)
        }
    }

    fn interface(preset: Preset, initial: InitialCondition) -> Self {
        ExperimentConfig {
            epsilon: 0.02,
            delta: 5.0,
            t_final: 0.01,
            h_list: vec![2.0 / 64.0],
            tau_list: vec![1e-4],
            realizations: 50,
            initial,
            snapshots: vec![0.0, 0.0025, 0.005, 0.0075, 0.01],
            ..Self::base(preset)
        }
    }

    /// Single ellipse; ensemble energy and zero-level-set study.
    pub fn test2() -> Self {
        Self::interface(Preset::Test2, InitialCondition::SingleEllipse)
    }

    /// Two ellipses; ensemble energy and zero-level-set study.
    pub fn test3() -> Self {
        Self::interface(Preset::Test3, InitialCondition::TwoEllipses)
    }

    pub fn custom() -> Self {
        Self::base(Preset::Custom)
    }

    pub fn from_preset(preset: Preset) -> Self {
        match preset {
            Preset::Test1Temporal => Self::test1_temporal(),
            Preset::Test1Spatial => Self::test1_spatial(),
            Preset::Test2 => Self::test2(),
            Preset::Test3 => Self::test3(),
            Preset::Custom => Self::custom(),
        }
    }

    /// True for presets whose product is an error ladder rather than an ensemble series.
    pub fn is_error_study(&self) -> bool {
        !matches!(self.preset, Preset::Test2 | Preset::Test3)
    }

    pub fn scheme_params(&self, tau: f64) -> SchemeParams {
        SchemeParams {
            epsilon: self.epsilon,
            delta: self.delta,
            tau,
            t_final: self.t_final,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            constraint_threshold: self.constraint_threshold,
        }
    }

    /// Resolved reference spacing for the spatial study.
    pub fn resolved_reference_h(&self) -> Option<f64> {
        match self.reference_policy {
            ReferencePolicy::FineTauSameH => None,
            ReferencePolicy::FineHSameTau => Some(self.reference_h.unwrap_or_else(|| {
                0.5 * self.h_list.iter().copied().fold(f64::INFINITY, f64::min)
            })),
        }
    }

    /// Checks parameters and ladder coupling; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.scheme_params(self.tau_ref).validate().map_err(|e| match e {
            Error::InvalidArgument { field, reason } if field == "tau" => {
                Error::invalid("tau_ref", reason)
            }
            other => other,
        })?;
        if self.realizations == 0 {
            return Err(Error::invalid("M", "at least one realization is required"));
        }
        if self.h_list.is_empty() {
            return Err(Error::invalid("h_list", "ladder is empty"));
        }
        if self.tau_list.is_empty() {
            return Err(Error::invalid("tau_list", "ladder is empty"));
        }
        if self.quad_order < 4 {
            return Err(Error::invalid("quad_order", "must be at least 4"));
        }
        for &h in &self.h_list {
            subdivisions(h, "h_list")?;
        }
        for &tau in &self.tau_list {
            step_count(self.t_final, tau)?;
            step_ratio(tau, self.tau_ref, "tau_list")?;
        }
        check_halving(&self.h_list, "h_list")?;
        check_halving(&self.tau_list, "tau_list")?;
        match self.reference_policy {
            ReferencePolicy::FineTauSameH => {
                if self.h_list.len() != 1 {
                    return Err(Error::invalid("h_list", "a temporal study uses exactly one mesh"));
                }
            }
            ReferencePolicy::FineHSameTau => {
                if self.tau_list.len() != 1 {
                    return Err(Error::invalid("tau_list", "a spatial study uses exactly one time step"));
                }
                let nref = subdivisions(self.resolved_reference_h().unwrap_or(0.0), "reference_h")?;
                for &h in &self.h_list {
                    let n = subdivisions(h, "h_list")?;
                    if nref % n != 0 || nref == n {
                        return Err(Error::invalid(
                            "reference_h",
                            format!("reference mesh 2/{nref} is not a strict refinement of 2/{n}"),
                        ));
                    }
                }
            }
        }
        for &t in &self.snapshots {
            for &tau in &self.tau_list {
                crate::stepper::snapshot_steps(&[t], tau, step_count(self.t_final, tau)?)?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(format!("{:x}", Sha256::digest(&bytes)))
    }

    /// `τ (ε^-3 + ε^-1 δ^4)` for every time step in the ladder.
    pub fn constraint_warnings(&self) -> Vec<String> {
        let mut taus = self.tau_list.clone();
        if self.is_error_study() && self.reference_policy == ReferencePolicy::FineTauSameH {
            taus.push(self.tau_ref);
        }
        taus.iter()
            .filter_map(|&t| self.scheme_params(t).constraint_warning().map(|w| format!("tau = {t:e}: {w}")))
            .collect()
    }
}

/// `n` with `h = 2/n`.
pub fn subdivisions(h: f64, field: &str) -> Result<usize> {
    let len = DOMAIN_MAX - DOMAIN_MIN;
    if !(h > 0.0 && h <= len) {
        return Err(Error::invalid(field, format!("mesh spacing {h} outside (0, 2]")));
    }
    let n = (len / h).round();
    if (n * h - len).abs() > 1e-9 * len {
        return Err(Error::invalid(field, format!("mesh spacing {h} is not 2/n for an integer n")));
    }
    Ok(n as usize)
}

fn check_halving(ladder: &[f64], field: &str) -> Result<()> {
    for w in ladder.windows(2) {
        if (w[0] - 2.0 * w[1]).abs() > 1e-9 * w[0] {
            return Err(Error::invalid(field, "ladder must decrease by a factor of 2 per rung"));
        }
    }
    Ok(())
}

/// `log2(e_k / e_{k+1})` for a halving ladder.
pub fn fit_orders(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::invalid("errors", "at least two rungs are required"));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::invalid("errors", format!("errors must be positive and finite, got {e}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Runs `f` over realization indices, in parallel when `jobs != 1`, returning results in
/// index order. `jobs = 0` uses all available cores.
pub fn map_realizations<T, F>(jobs: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if jobs == 1 {
        return Ok((0..count).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}

/// Applies the failure policy to per-realization outcomes, keeping successes in order.
fn apply_failure_policy<T>(outcomes: Vec<Result<T>>, policy: FailurePolicy) -> Result<(Vec<T>, usize)> {
    let total = outcomes.len();
    let mut kept = Vec::with_capacity(total);
    let mut skipped = 0;
    for (m, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => kept.push(v),
            Err(e) => match policy {
                FailurePolicy::Abort => {
                    return Err(Error::Realization {
                        realization: m as u64,
                        source: Box::new(e),
                    })
                }
                FailurePolicy::SkipAndCount if e.is_solver_failure() => skipped += 1,
                FailurePolicy::SkipAndCount => {
                    return Err(Error::Realization {
                        realization: m as u64,
                        source: Box::new(e),
                    })
                }
            },
        }
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 || kept.is_empty() {
        return Err(Error::TooManyFailures { skipped, total });
    }
    Ok((kept, skipped))
}

/// Mean and delta-method standard error of `sqrt(mean(x))`.
fn sqrt_mean_with_stderr(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let root = mean.max(0.0).sqrt();
    if samples.len() < 2 || root == 0.0 {
        return (root, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (root, (var / m).sqrt() / (2.0 * root))
}

/// Nodal prolongation from a coarse nested mesh: fine vertex values as barycentric
/// combinations of coarse vertex values.
struct Prolongation {
    weights: Vec<[(usize, f64); 3]>,
}

impl Prolongation {
    fn new(coarse: &Mesh, fine: &Mesh) -> Result<Self> {
        let weights = fine
            .vertices()
            .iter()
            .map(|&p| {
                let (t, l) = coarse
                    .locate(p)
                    .ok_or_else(|| Error::InvalidMesh(format!("vertex {p:?} outside coarse mesh")))?;
                let tri = coarse.triangle(t);
                Ok([(tri[0], l[0]), (tri[1], l[1]), (tri[2], l[2])])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Prolongation { weights })
    }

    fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().map(|&(i, l)| l * coarse[i]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    /// `tau` for a temporal study, `h` for a spatial one.
    pub resolution: f64,
    pub linf_l2: f64,
    pub linf_l2_stderr: f64,
    pub l2_h1: f64,
    pub l2_h1_stderr: f64,
    pub hm1: f64,
    pub hm1_stderr: f64,
    pub order_linf_l2: Option<f64>,
    pub order_l2_h1: Option<f64>,
    pub order_hm1: Option<f64>,
    /// Total Newton iterations over all kept realizations; a deterministic work measure.
    pub newton_iterations: u64,
    pub wall_time_s: f64,
    /// `t_n` and `E ||E^n||²_{-1,h}`.
    pub hm1_series: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema: String,
    pub study: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub generator: String,
    pub field: String,
    pub reference: String,
    pub realizations_requested: usize,
    pub realizations_used: usize,
    pub skipped: usize,
    pub max_mass_deviation: f64,
    pub max_newton_iterations: usize,
    pub warnings: Vec<String>,
    pub rungs: Vec<RungReport>,
    pub wall_time_s: f64,
}

impl ErrorReport {
    pub fn l2_h1_errors(&self) -> Vec<f64> {
        self.rungs.iter().map(|r| r.l2_h1).collect()
    }

    pub fn linf_l2_errors(&self) -> Vec<f64> {
        self.rungs.iter().map(|r| r.linf_l2).collect()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per rung. Contains no timing, so identical runs give identical bytes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "resolution",
            "linf_l2",
            "linf_l2_order",
            "linf_l2_stderr",
            "l2_h1",
            "l2_h1_order",
            "l2_h1_stderr",
            "hm1",
            "hm1_order",
            "hm1_stderr",
            "newton_iterations",
        ])?;
        for r in &self.rungs {
            wr.serialize((
                r.resolution,
                r.linf_l2,
                r.order_linf_l2,
                r.linf_l2_stderr,
                r.l2_h1,
                r.order_l2_h1,
                r.l2_h1_stderr,
                r.hm1,
                r.order_hm1,
                r.hm1_stderr,
                r.newton_iterations,
            ))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Squared-error records of one realization on one rung.
#[derive(Debug, Clone, Default)]
struct RungSamples {
    l2_sq: Vec<f64>,
    hm1_sq: Vec<f64>,
    h1_sum: f64,
    newton: u64,
    seconds: f64,
}

struct RealizationSamples {
    rungs: Vec<RungSamples>,
    max_mass_deviation: f64,
    max_newton: usize,
}

/// Stored reference states on the reference grid.
fn reference_states(
    disc: &Discretization,
    params: SchemeParams,
    u0: &NodalField,
    w0: &NodalField,
    increments: &[f64],
) -> Result<(Vec<Vec<f64>>, f64, usize)> {
    let mut states = Vec::with_capacity(increments.len() + 1);
    let traj = run_path_with(disc, params, u0, w0, increments, &[], |v| {
        states.push(v.u.values().to_vec());
        Ok(())
    })?;
    let its = traj.diagnostics.iter().map(|d| d.newton_iterations).max().unwrap_or(0);
    Ok((states, traj.max_mass_deviation, its))
}

struct Ladder {
    config: ExperimentConfig,
    /// Reference discretization, then one per rung (temporal: all the same mesh).
    reference: Discretization,
    rung_discs: Vec<Discretization>,
    prolongations: Vec<Option<Prolongation>>,
}

impl Ladder {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let field = RotationalCutoffField::default();
        let build = |h: f64, name: &str| -> Result<Discretization> {
            Discretization::new(build_uniform_mesh(subdivisions(h, name)?)?, &field, config.quad_order)
        };
        match config.reference_policy {
            ReferencePolicy::FineTauSameH => Ok(Ladder {
                config: config.clone(),
                reference: build(config.h_list[0], "h_list")?,
                rung_discs: Vec::new(),
                prolongations: Vec::new(),
            }),
            ReferencePolicy::FineHSameTau => {
                let reference = build(config.resolved_reference_h().unwrap_or(0.0), "reference_h")?;
                let mut rung_discs = Vec::new();
                let mut prolongations = Vec::new();
                for &h in &config.h_list {
                    let d = build(h, "h_list")?;
                    prolongations.push(Some(Prolongation::new(d.mesh(), reference.mesh())?));
                    rung_discs.push(d);
                }
                Ok(Ladder {
                    config: config.clone(),
                    reference,
                    rung_discs,
                    prolongations,
                })
            }
        }
    }

    fn initial(&self, disc: &Discretization) -> Result<(NodalField, NodalField)> {
        let f = self.config.initial.evaluator(self.config.epsilon);
        let u0 = disc.project_initial(&*f, INITIAL_QUAD_ORDER)?;
        let w0 = disc.initial_chemical_potential(&u0, self.config.epsilon)?;
        Ok((u0, w0))
    }

    fn realization(&self, m: usize) -> Result<RealizationSamples> {
        let c = &self.config;
        let path = generate_realization_path(c.master_seed, m as u64, c.t_final, c.tau_ref)?;
        let temporal = c.reference_policy == ReferencePolicy::FineTauSameH;
        let ref_tau = if temporal { c.tau_ref } else { c.tau_list[0] };
        let (u0, w0) = self.initial(&self.reference)?;
        let (ref_states, mut max_dev, mut max_newton) =
            reference_states(&self.reference, c.scheme_params(ref_tau), &u0, &w0, &path.coarsen(ref_tau)?)?;

        let inv = self.reference.inverse_laplacian();
        let mass = &self.reference.operators().mass;
        let stiff = &self.reference.operators().stiffness;
        let rung_count = if temporal { c.tau_list.len() } else { c.h_list.len() };
        let mut rungs = Vec::with_capacity(rung_count);
        for k in 0..rung_count {
            let start = Instant::now();
            let (disc, tau) = if temporal {
                (&self.reference, c.tau_list[k])
            } else {
                (&self.rung_discs[k], c.tau_list[0])
            };
            let ratio = if temporal { step_ratio(tau, c.tau_ref, "tau_list")? } else { 1 };
            let (ru0, rw0) = if temporal { (u0.clone(), w0.clone()) } else { self.initial(disc)? };
            let mut s = RungSamples::default();
            let prolong = self.prolongations.get(k).and_then(|p| p.as_ref());
            let traj = run_path_with(disc, c.scheme_params(tau), &ru0, &rw0, &path.coarsen(tau)?, &[], |v| {
                let reference = &ref_states[v.step * ratio];
                let fine = match prolong {
                    Some(p) => p.apply(v.u),
                    None => v.u.values().to_vec(),
                };
                let e: Vec<f64> = fine.iter().zip(reference).map(|(a, b)| a - b).collect();
                s.l2_sq.push(mass.quadratic_form(&e));
                s.hm1_sq.push(inv.h_minus1_norm(&e)?.powi(2));
                if v.step > 0 {
                    s.h1_sum += tau * stiff.quadratic_form(&e);
                }
                Ok(())
            })?;
            s.newton = traj.diagnostics.iter().map(|d| d.newton_iterations as u64).sum();
            max_newton = max_newton.max(traj.diagnostics.iter().map(|d| d.newton_iterations).max().unwrap_or(0));
            max_dev = max_dev.max(traj.max_mass_deviation);
            s.seconds = start.elapsed().as_secs_f64();
            rungs.push(s);
        }
        Ok(RealizationSamples {
            rungs,
            max_mass_deviation: max_dev,
            max_newton,
        })
    }
}

/// Monte Carlo estimate of the strong error functionals over the configured ladder.
pub fn estimate_errors(config: &ExperimentConfig, jobs: usize) -> Result<ErrorReport> {
    config.validate()?;
    let start = Instant::now();
    let ladder = Ladder::new(config)?;
    let outcomes = map_realizations(jobs, config.realizations, |m| ladder.realization(m))?;
    let (samples, skipped) = apply_failure_policy(outcomes, config.failure_policy)?;
    let temporal = config.reference_policy == ReferencePolicy::FineTauSameH;

    let rung_count = samples[0].rungs.len();
    let mut rungs = Vec::with_capacity(rung_count);
    for k in 0..rung_count {
        let tau = if temporal { config.tau_list[k] } else { config.tau_list[0] };
        let nsteps = samples[0].rungs[k].l2_sq.len();
        let mean_series = |get: &dyn Fn(&RungSamples) -> &Vec<f64>| -> Vec<f64> {
            let mut acc = vec![0.0; nsteps];
            for s in &samples {
                for (a, v) in acc.iter_mut().zip(get(&s.rungs[k])) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / samples.len() as f64).collect()
        };
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
                .0
        };
        let l2_mean = mean_series(&|s| &s.l2_sq);
        let hm1_mean = mean_series(&|s| &s.hm1_sq);
        let nl = argmax(&l2_mean);
        let nh = argmax(&hm1_mean);
        let (linf_l2, linf_l2_stderr) =
            sqrt_mean_with_stderr(&samples.iter().map(|s| s.rungs[k].l2_sq[nl]).collect::<Vec<_>>());
        let (hm1, hm1_stderr) =
            sqrt_mean_with_stderr(&samples.iter().map(|s| s.rungs[k].hm1_sq[nh]).collect::<Vec<_>>());
        let (l2_h1, l2_h1_stderr) =
            sqrt_mean_with_stderr(&samples.iter().map(|s| s.rungs[k].h1_sum).collect::<Vec<_>>());
        rungs.push(RungReport {
            resolution: if temporal { tau } else { config.h_list[k] },
            linf_l2,
            linf_l2_stderr,
            l2_h1,
            l2_h1_stderr,
            hm1,
            hm1_stderr,
            order_linf_l2: None,
            order_l2_h1: None,
            order_hm1: None,
            newton_iterations: samples.iter().map(|s| s.rungs[k].newton).sum(),
            wall_time_s: samples.iter().map(|s| s.rungs[k].seconds).sum(),
            hm1_series: hm1_mean.iter().enumerate().map(|(n, v)| (n as f64 * tau, *v)).collect(),
        });
    }
    let attach = |rungs: &mut Vec<RungReport>, get: fn(&RungReport) -> f64, set: fn(&mut RungReport, f64)| {
        let errs: Vec<f64> = rungs.iter().map(get).collect();
        if let Ok(orders) = fit_orders(&errs) {
            for (r, o) in rungs.iter_mut().skip(1).zip(orders) {
                set(r, o);
            }
        }
    };
    attach(&mut rungs, |r| r.linf_l2, |r, o| r.order_linf_l2 = Some(o));
    attach(&mut rungs, |r| r.l2_h1, |r, o| r.order_l2_h1 = Some(o));
    attach(&mut rungs, |r| r.hm1, |r, o| r.order_hm1 = Some(o));

    let reference = if temporal {
        format!("same Brownian path at tau_ref = {:e} on h = {}", config.tau_ref, config.h_list[0])
    } else {
        format!(
            "same Brownian path at tau = {:e} on h = {}, coarse solutions prolongated by P1 interpolation",
            config.tau_list[0],
            config.resolved_reference_h().unwrap_or(0.0)
        )
    };
    Ok(ErrorReport {
        schema: ERROR_REPORT_SCHEMA.into(),
        study: if temporal { "temporal" } else { "spatial" }.into(),
        config: config.clone(),
        config_hash: config.hash()?,
        generator: GENERATOR_ID.into(),
        field: ladder.reference.field_name().into(),
        reference,
        realizations_requested: config.realizations,
        realizations_used: samples.len(),
        skipped,
        max_mass_deviation: samples.iter().map(|s| s.max_mass_deviation).fold(0.0, f64::max),
        max_newton_iterations: samples.iter().map(|s| s.max_newton).max().unwrap_or(0),
        warnings: config.constraint_warnings(),
        rungs,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub generator: String,
    pub field: String,
    pub realizations_used: usize,
    pub skipped: usize,
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub energy_stderr: Vec<f64>,
    pub mean_mass: Vec<f64>,
    pub max_mass_deviation: f64,
    pub level_sets: Vec<LevelSet>,
    #[serde(skip)]
    pub mean_fields: Vec<NodalField>,
    pub mesh_h: f64,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl EnsembleReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn energy_rows(&self) -> Vec<(f64, f64, f64)> {
        self.times
            .iter()
            .zip(&self.mean_energy)
            .zip(&self.energy_stderr)
            .map(|((t, e), s)| (*t, *e, *s))
            .collect()
    }

    pub fn mass_rows(&self) -> Vec<(f64, f64)> {
        self.times.iter().zip(&self.mean_mass).map(|(t, m)| (*t, *m)).collect()
    }
}

struct EnsembleSamples {
    energy: Vec<f64>,
    mass: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
    max_mass_deviation: f64,
}

/// Ensemble mean of `J(u^n)` with standard errors, mean mass, and zero-level sets of the
/// ensemble mean at the snapshot times. Uses the first `h` and `tau` of the ladders.
pub fn energy_decay_study(config: &ExperimentConfig, jobs: usize) -> Result<EnsembleReport> {
    config.validate()?;
    let start = Instant::now();
    let field = RotationalCutoffField::default();
    let disc = Discretization::new(
        build_uniform_mesh(subdivisions(config.h_list[0], "h_list")?)?,
        &field,
        config.quad_order,
    )?;
    let tau = config.tau_list[0];
    let params = config.scheme_params(tau);
    let f = config.initial.evaluator(config.epsilon);
    let u0 = disc.project_initial(&*f, INITIAL_QUAD_ORDER)?;
    let w0 = disc.initial_chemical_potential(&u0, config.epsilon)?;

    let outcomes = map_realizations(jobs, config.realizations, |m| -> Result<EnsembleSamples> {
        let path = generate_realization_path(config.master_seed, m as u64, config.t_final, config.tau_ref)?;
        let mut energy = Vec::new();
        let mut mass = Vec::new();
        let traj = run_path_with(&disc, params, &u0, &w0, &path.coarsen(tau)?, &config.snapshots, |v| {
            energy.push(disc.energy(v.u, config.epsilon));
            mass.push(disc.mass(v.u));
            Ok(())
        })?;
        Ok(EnsembleSamples {
            energy,
            mass,
            snapshots: traj.snapshots.into_iter().map(|s| s.u.into_values()).collect(),
            max_mass_deviation: traj.max_mass_deviation,
        })
    })?;
    let (samples, skipped) = apply_failure_policy(outcomes, config.failure_policy)?;
    let m = samples.len() as f64;
    let nsteps = samples[0].energy.len();
    let mut mean_energy = vec![0.0; nsteps];
    let mut mean_mass = vec![0.0; nsteps];
    for s in &samples {
        for n in 0..nsteps {
            mean_energy[n] += s.energy[n];
            mean_mass[n] += s.mass[n];
        }
    }
    mean_energy.iter_mut().for_each(|v| *v /= m);
    mean_mass.iter_mut().for_each(|v| *v /= m);
    let energy_stderr = (0..nsteps)
        .map(|n| {
            if samples.len() < 2 {
                return 0.0;
            }
            let var = samples.iter().map(|s| (s.energy[n] - mean_energy[n]).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();
    let mut mean_fields = Vec::new();
    let mut level_sets = Vec::new();
    let snap_steps = crate::stepper::snapshot_steps(&config.snapshots, tau, nsteps - 1)?;
    for (j, step) in snap_steps.iter().enumerate() {
        let fields: Vec<&[f64]> = samples.iter().map(|s| s.snapshots[j].as_slice()).collect();
        let mean = mean_field(&fields)?;
        level_sets.push(extract_zero_level_set(disc.mesh(), &mean, *step as f64 * tau)?);
        mean_fields.push(mean);
    }
    Ok(EnsembleReport {
        schema: ENSEMBLE_REPORT_SCHEMA.into(),
        config: config.clone(),
        config_hash: config.hash()?,
        generator: GENERATOR_ID.into(),
        field: disc.field_name().into(),
        realizations_used: samples.len(),
        skipped,
        times: (0..nsteps).map(|n| n as f64 * tau).collect(),
        mean_energy,
        energy_stderr,
        mean_mass,
        max_mass_deviation: samples.iter().map(|s| s.max_mass_deviation).fold(0.0, f64::max),
        level_sets,
        mean_fields,
        mesh_h: disc.mesh().h_axis(),
        warnings: config.constraint_warnings(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
