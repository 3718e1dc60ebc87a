//! One realization of the implicit mixed scheme. Each step solves
//!
//! ```text
//! R1(u, w) = [M + τ δ²/2 A_X] u + τ A w - M u_n - δ ΔW C_X u_n = 0
//! R2(u, w) = M w - ε A u - N(u) / ε                            = 0
//! ```
//!
//! by Newton's method on the coupled system, with the unknowns interleaved per vertex as
//! 2x2 blocks so that one symbolic factorization serves every Newton iteration.

use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{NonlinearAssembler, Operators, P1Space, DEFAULT_QUAD_ORDER};
use crate::discrete_operators::{discrete_energy, integral, InverseLaplacian};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::{Mesh, Point};
use crate::sparse::{norm2, scalar_blocks, Block, SparseLu};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Warning level for `τ (ε^-3 + ε^-1 δ^4)`.
    pub constraint_threshold: f64,
}

impl SchemeParams {
    pub fn new(epsilon: f64, delta: f64, tau: f64, t_final: f64) -> Self {
        SchemeParams {
            epsilon,
            delta,
            tau,
            t_final,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            constraint_threshold: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", "must be positive and finite"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta", "must be nonnegative and finite"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", "must be positive and finite"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::invalid("newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter", "must be at least 1"));
        }
        crate::noise::step_count(self.t_final, self.tau)?;
        Ok(())
    }

    pub fn num_steps(&self) -> Result<usize> {
        crate::noise::step_count(self.t_final, self.tau)
    }

    /// `τ (ε^-3 + ε^-1 δ^4)`
    pub fn constraint_indicator(&self) -> f64 {
        self.tau * (self.epsilon.powi(-3) + self.delta.powi(4) / self.epsilon)
    }

    pub fn constraint_warning(&self) -> Option<String> {
        let c = self.constraint_indicator();
        (c > self.constraint_threshold).then(|| {
            format!(
                "time-step indicator tau*(eps^-3 + delta^4/eps) = {c:.4} exceeds {}; unique solvability is not guaranteed",
                self.constraint_threshold
            )
        })
    }
}

/// P1 coefficient vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("entry {i} is not finite")));
        }
        Ok(NodalField(values))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        NodalField(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Immutable per-mesh data shared by every realization.
#[derive(Debug)]
pub struct Discretization {
    space: P1Space,
    ops: Operators,
    basis_integrals: Vec<f64>,
    inverse: InverseLaplacian,
    mass_lu: SparseLu<1>,
    nonlinear: NonlinearAssembler,
    field_name: String,
}

impl Discretization {
    pub fn new(mesh: Mesh, field: &dyn VectorField, quad_order: usize) -> Result<Self> {
        let space = P1Space::new(mesh)?;
        let ops = Operators::assemble(&space, field, quad_order)?;
        let basis_integrals = space.basis_integrals();
        let inverse = InverseLaplacian::new(&space, ops.mass.clone(), ops.stiffness.clone())?;
        let mass_lu = SparseLu::factor(space.symbolic().clone(), &scalar_blocks(ops.mass.values()))?;
        let nonlinear = NonlinearAssembler::new(quad_order.max(4))?;
        Ok(Discretization {
            space,
            ops,
            basis_integrals,
            inverse,
            mass_lu,
            nonlinear,
            field_name: field.name(),
        })
    }

    pub fn with_defaults(n: usize, field: &dyn VectorField) -> Result<Self> {
        Self::new(crate::mesh::build_uniform_mesh(n)?, field, DEFAULT_QUAD_ORDER)
    }

    pub fn space(&self) -> &P1Space {
        &self.space
    }

    pub fn mesh(&self) -> &Mesh {
        self.space.mesh()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn basis_integrals(&self) -> &[f64] {
        &self.basis_integrals
    }

    pub fn inverse_laplacian(&self) -> &InverseLaplacian {
        &self.inverse
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    /// `(u, 1)`
    pub fn mass(&self, u: &[f64]) -> f64 {
        integral(&self.basis_integrals, u)
    }

    pub fn energy(&self, u: &[f64], epsilon: f64) -> f64 {
        discrete_energy(&self.space, &self.ops.stiffness, u, epsilon)
    }

    /// `N(u)`
    pub fn nonlinear_load(&self, u: &[f64]) -> Vec<f64> {
        let mut load = vec![0.0; self.dim()];
        self.nonlinear.evaluate(&self.space, u, &mut load, None);
        load
    }

    /// `L^2` projection: `M u = (u0, ψ_i)` with a degree-`quad_order` load.
    pub fn project_initial<F: Fn(Point) -> f64 + Sync>(&self, u0: F, quad_order: usize) -> Result<NodalField> {
        if quad_order < 4 {
            return Err(Error::invalid("quad_order", "initial projection needs degree >= 4"));
        }
        let b = self.space.load_vector(u0, quad_order);
        NodalField::new(self.mass_lu.solve_scalar(&b)?)
    }

    /// `M w = ε A u + N(u) / ε`
    pub fn initial_chemical_potential(&self, u: &[f64], epsilon: f64) -> Result<NodalField> {
        let mut rhs = self.nonlinear_load(u);
        rhs.iter_mut().for_each(|v| *v /= epsilon);
        self.ops.stiffness.mul_vec_add(epsilon, u, &mut rhs);
        NodalField::new(self.mass_lu.solve_scalar(&rhs)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub newton_iterations: usize,
    pub residual: f64,
    /// Largest number of step halvings used by any Newton iteration.
    pub damping_halvings: usize,
    /// `|(u^{n+1}, 1) - (u^n, 1)|`
    pub mass_drift: f64,
    /// Newton residual history, for convergence-order checks.
    #[serde(skip)]
    pub residual_history: [f64; 4],
}

const MAX_HALVINGS: usize = 5;

/// Newton solver for one parameter set on one discretization. Holds scratch storage, so
/// one instance per realization.
pub struct Stepper<'a> {
    disc: &'a Discretization,
    params: SchemeParams,
    /// Values of `M + τ δ²/2 A_X`, `τ A`, `ε A`, `M` in pattern order.
    k_vals: Vec<f64>,
    ta_vals: Vec<f64>,
    ea_vals: Vec<f64>,
    blocks: Vec<Block<2>>,
    jac: Vec<f64>,
    load: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(disc: &'a Discretization, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let ops = disc.operators();
        let c = params.tau * params.delta * params.delta / 2.0;
        let k_vals = ops
            .mass
            .values()
            .iter()
            .zip(ops.weighted_stiffness.values())
            .map(|(m, ax)| m + c * ax)
            .collect();
        let ta_vals = ops.stiffness.values().iter().map(|a| params.tau * a).collect();
        let ea_vals = ops.stiffness.values().iter().map(|a| params.epsilon * a).collect();
        let nnz = ops.mass.values().len();
        Ok(Stepper {
            disc,
            params,
            k_vals,
            ta_vals,
            ea_vals,
            blocks: vec![[[0.0; 2]; 2]; nnz],
            jac: vec![0.0; nnz],
            load: vec![0.0; disc.dim()],
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    /// Residual `[R1; R2]` at `(u, w)`, with `N(u)` (and optionally `J(u)`) refreshed.
    fn residual(&mut self, u: &[f64], w: &[f64], rhs1: &[f64], with_jacobian: bool) -> (Vec<f64>, Vec<f64>) {
        let disc = self.disc;
        let pattern = disc.space().pattern();
        let jac = if with_jacobian { Some(self.jac.as_mut_slice()) } else { None };
        disc.nonlinear.evaluate(disc.space(), u, &mut self.load, jac);
        let n = disc.dim();
        let mass = disc.operators().mass.values();
        let inv_eps = 1.0 / self.params.epsilon;
        let mut r1 = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        for i in 0..n {
            let (mut a1, mut a2) = (0.0, 0.0);
            for p in pattern.row_range(i) {
                let j = pattern.col(p);
                a1 += self.k_vals[p] * u[j] + self.ta_vals[p] * w[j];
                a2 += mass[p] * w[j] - self.ea_vals[p] * u[j];
            }
            r1[i] = a1 - rhs1[i];
            r2[i] = a2 - inv_eps * self.load[i];
        }
        (r1, r2)
    }

    fn residual_norm(r1: &[f64], r2: &[f64]) -> f64 {
        (norm2(r1).powi(2) + norm2(r2).powi(2)).sqrt()
    }

    fn factor_jacobian(&mut self) -> Result<SparseLu<2>> {
        let mass = self.disc.operators().mass.values();
        let inv_eps = 1.0 / self.params.epsilon;
        for (p, b) in self.blocks.iter_mut().enumerate() {
            *b = [
                [self.k_vals[p], self.ta_vals[p]],
                [-self.ea_vals[p] - inv_eps * self.jac[p], mass[p]],
            ];
        }
        SparseLu::factor(self.disc.space().symbolic().clone(), &self.blocks)
    }

    /// Advances `(u_n, w_n)` by one step with Wiener increment `dw`.
    pub fn step(&mut self, u_n: &NodalField, w_n: &NodalField, dw: f64) -> Result<(NodalField, NodalField, StepDiagnostics)> {
        let n = self.disc.dim();
        if u_n.len() != n || w_n.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u_n.len().min(w_n.len()),
            });
        }
        if !dw.is_finite() {
            return Err(Error::invalid("dW", "increment is not finite"));
        }
        let ops = self.disc.operators();
        let mut rhs1 = ops.mass.mul_vec(u_n);
        if self.params.delta != 0.0 && dw != 0.0 {
            ops.noise_convection.mul_vec_add(self.params.delta * dw, u_n, &mut rhs1);
        }
        let tol = self.params.newton_tol * norm2(&ops.mass.mul_vec(u_n)).max(f64::MIN_POSITIVE);

        let mut u = u_n.0.clone();
        let mut w = w_n.0.clone();
        let (mut r1, mut r2) = self.residual(&u, &w, &rhs1, true);
        let mut res = Self::residual_norm(&r1, &r2);
        let mut history = [f64::NAN; 4];
        history[0] = res;
        let mut iterations = 0;
        let mut max_halvings = 0;
        while res > tol {
            if iterations == self.params.newton_max_iter {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: res,
                    tolerance: tol,
                });
            }
            iterations += 1;
            let lu = self.factor_jacobian()?;
            let rhs: Vec<[f64; 2]> = r1.iter().zip(&r2).map(|(a, b)| [-a, -b]).collect();
            let d = lu.solve(&rhs)?;
            let mut alpha = 1.0;
            let mut halvings = 0;
            loop {
                let ut: Vec<f64> = u.iter().zip(&d).map(|(x, dx)| x + alpha * dx[0]).collect();
                let wt: Vec<f64> = w.iter().zip(&d).map(|(x, dx)| x + alpha * dx[1]).collect();
                let (t1, t2) = self.residual(&ut, &wt, &rhs1, true);
                let rt = Self::residual_norm(&t1, &t2);
                if rt.is_finite() && (rt < res || rt <= tol) {
                    u = ut;
                    w = wt;
                    r1 = t1;
                    r2 = t2;
                    res = rt;
                    break;
                }
                if halvings == MAX_HALVINGS {
                    return Err(Error::NewtonDiverged {
                        iterations,
                        residual: res,
                        tolerance: tol,
                    });
                }
                halvings += 1;
                alpha *= 0.5;
            }
            max_halvings = max_halvings.max(halvings);
            if iterations < history.len() {
                history[iterations] = res;
            }
        }
        let mass_drift = (self.disc.mass(&u) - self.disc.mass(u_n)).abs();
        let diag = StepDiagnostics {
            newton_iterations: iterations,
            residual: res,
            damping_halvings: max_halvings,
            mass_drift,
            residual_history: history,
        };
        Ok((NodalField(u), NodalField(w), diag))
    }
}

/// State handed to run observers after every step (and once for the initial state).
pub struct StepView<'s> {
    pub step: usize,
    pub time: f64,
    pub u: &'s NodalField,
    pub w: &'s NodalField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub u: NodalField,
}

/// Running quantities bounded by the stability estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityMonitor {
    /// `Σ τ ||∇u^n||²`, n ≥ 1
    pub dissipation: f64,
    /// `sup_n ||u^n - mean||²_{-1,h}`
    pub sup_hm1_sq: f64,
    /// `sup_n J(u^n)`
    pub sup_energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub u: NodalField,
    pub w: NodalField,
    pub steps: usize,
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<Snapshot>,
    pub stability: StabilityMonitor,
    pub max_mass_deviation: f64,
}

/// Step indices matching `times` on the grid `n τ`.
pub fn snapshot_steps(times: &[f64], tau: f64, num_steps: usize) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let k = (t / tau).round();
            if !(k >= 0.0) || (k * tau - t).abs() > 1e-6 * tau || k as usize > num_steps {
                Err(Error::invalid("snapshots", format!("time {t} is not on the time grid")))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// Runs the scheme over the given increments. `observer` sees every state, including the
/// initial one; snapshots are kept at `snapshot_times`. Step errors carry the step index.
pub fn run_path_with<F>(
    disc: &Discretization,
    params: SchemeParams,
    u0: &NodalField,
    w0: &NodalField,
    increments: &[f64],
    snapshot_times: &[f64],
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&StepView) -> Result<()>,
{
    let num_steps = params.num_steps()?;
    if increments.len() != num_steps {
        return Err(Error::DimensionMismatch {
            expected: num_steps,
            got: increments.len(),
        });
    }
    let snap_steps = snapshot_steps(snapshot_times, params.tau, num_steps)?;
    let mut stepper = Stepper::new(disc, params)?;
    let mass0 = disc.mass(u0);
    let mut u = u0.clone();
    let mut w = w0.clone();
    let mut snapshots = Vec::new();
    let mut stability = StabilityMonitor::default();
    let mut max_dev: f64 = 0.0;
    let mut diagnostics = Vec::with_capacity(num_steps);

    let mut visit = |step: usize, u: &NodalField, w: &NodalField, stab: &mut StabilityMonitor| -> Result<()> {
        let time = step as f64 * params.tau;
        if snap_steps.contains(&step) {
            snapshots.push(Snapshot { step, time, u: u.clone() });
        }
        stab.sup_hm1_sq = stab.sup_hm1_sq.max(disc.inverse_laplacian().h_minus1_norm(u)?.powi(2));
        stab.sup_energy = stab.sup_energy.max(disc.energy(u, params.epsilon));
        observer(&StepView { step, time, u, w })
    };
    visit(0, &u, &w, &mut stability)?;
    for (k, &dw) in increments.iter().enumerate() {
        let (un, wn, diag) = stepper
            .step(&u, &w, dw)
            .map_err(|e| Error::AtStep { step: k + 1, source: Box::new(e) })?;
        u = un;
        w = wn;
        stability.dissipation += params.tau * disc.operators().stiffness.quadratic_form(&u);
        max_dev = max_dev.max((disc.mass(&u) - mass0).abs());
        diagnostics.push(diag);
        visit(k + 1, &u, &w, &mut stability).map_err(|e| Error::AtStep { step: k + 1, source: Box::new(e) })?;
    }
    Ok(Trajectory {
        u,
        w,
        steps: num_steps,
        diagnostics,
        snapshots,
        stability,
        max_mass_deviation: max_dev,
    })
}

pub fn run_path(
    disc: &Discretization,
    params: SchemeParams,
    u0: &NodalField,
    w0: &NodalField,
    increments: &[f64],
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    run_path_with(disc, params, u0, w0, increments, snapshot_times, |_| Ok(()))
}

/// Shared handle used by the Monte Carlo driver.
pub type SharedDiscretization = Arc<Discretization>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RotationalCutoffField;

    fn disc(n: usize) -> Discretization {
        Discretization::with_defaults(n, &RotationalCutoffField::default()).unwrap()
    }

    fn test1_u0(p: Point) -> f64 {
        let (x, y) = (p[0], p[1]);
        x * x * (1.0 - x) * (1.0 - x) * y * y * (1.0 - y * y)
    }

    #[test]
    fn constraint_indicator_values() {
        let p = SchemeParams::new(0.1, 5.0, 8e-4, 0.016);
        assert!((p.constraint_indicator() - 8e-4 * (1000.0 + 6250.0)).abs() < 1e-9);
        assert!(p.constraint_warning().is_some());
        let q = SchemeParams::new(0.1, 0.0, 1e-4, 0.016);
        assert!((q.constraint_indicator() - 1e-4 * 1000.0).abs() < 1e-12);
        assert!(q.constraint_warning().is_none());
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(0.0, 1.0, 1e-3, 1e-2).validate().is_err());
        assert!(SchemeParams::new(0.1, -1.0, 1e-3, 1e-2).validate().is_err());
        assert!(SchemeParams::new(0.1, 1.0, 3e-3, 1e-2).validate().is_err());
        assert!(SchemeParams::new(0.1, 1.0, 1e-3, 1e-2).validate().is_ok());
    }

    #[test]
    fn projection_reproduces_affine_data() {
        let d = disc(4);
        let c = d.project_initial(|_| 0.7, 4).unwrap();
        assert!(c.iter().all(|v| (v - 0.7).abs() < 1e-13));
        let a = d.project_initial(|p| 2.0 * p[0] - p[1] + 0.5, 4).unwrap();
        let exact = d.mesh().interpolate(|p| 2.0 * p[0] - p[1] + 0.5);
        for (x, y) in a.iter().zip(&exact) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_preserves_the_integral() {
        let d = disc(8);
        let u = d.project_initial(test1_u0, 8).unwrap();
        // ∫ x²(1-x)² dx over [-1,1] = 2/3 + 2/5 = 16/15, ∫ y²(1-y²) dy = 2/3 - 2/5 = 4/15
        let exact = 16.0 / 15.0 * 4.0 / 15.0;
        assert!((d.mass(&u) - exact).abs() < 1e-13, "{} vs {exact}", d.mass(&u));
    }

    #[test]
    fn stationary_constants_are_fixed_points() {
        let d = disc(4);
        for c in [-1.0, 0.0, 1.0] {
            let u = NodalField::constant(d.dim(), c);
            let w = d.initial_chemical_potential(&u, 0.1).unwrap();
            assert!(w.iter().all(|v| v.abs() < 1e-13));
            let mut s = Stepper::new(&d, SchemeParams::new(0.1, 0.0, 1e-3, 1e-2)).unwrap();
            let (u1, w1, diag) = s.step(&u, &w, 0.3).unwrap();
            assert_eq!(diag.newton_iterations, 0);
            assert!(u1.iter().all(|v| (v - c).abs() < 1e-13));
            assert!(w1.iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn noisy_step_conserves_mass_and_converges_quadratically() {
        let d = disc(8);
        let u = d.project_initial(test1_u0, 6).unwrap();
        let w = d.initial_chemical_potential(&u, 0.1).unwrap();
        let mut s = Stepper::new(&d, SchemeParams::new(0.1, 5.0, 8e-4, 0.016)).unwrap();
        let (u1, _, diag) = s.step(&u, &w, 0.02).unwrap();
        assert!(diag.mass_drift < 1e-12, "drift {}", diag.mass_drift);
        assert!((d.mass(&u1) - d.mass(&u)).abs() < 1e-12);
        assert!(diag.newton_iterations >= 2);
        let h = diag.residual_history;
        // r_{k+1} / r_k^2 bounded while r_k is well above roundoff
        if h[2].is_finite() && h[1] > 1e-9 {
            assert!(h[2] / (h[1] * h[1]) < 1e4, "{h:?}");
        }
    }

    #[test]
    fn zero_steps_and_snapshot_grid() {
        assert_eq!(snapshot_steps(&[0.0, 0.004, 0.016], 8e-4, 20).unwrap(), vec![0, 5, 20]);
        assert!(snapshot_steps(&[0.0011], 8e-4, 20).is_err());
        assert!(snapshot_steps(&[0.1], 8e-4, 20).is_err());
    }

    #[test]
    fn deterministic_run_dissipates_energy_and_keeps_mass() {
        let d = disc(8);
        let params = SchemeParams::new(0.1, 0.0, 1e-3, 1e-2);
        let u0 = d.project_initial(|p| 0.4 * (std::f64::consts::PI * p[0]).cos() * (std::f64::consts::PI * p[1] / 2.0).sin(), 6).unwrap();
        let w0 = d.initial_chemical_potential(&u0, 0.1).unwrap();
        let mut energies = Vec::new();
        let traj = run_path_with(&d, params, &u0, &w0, &[0.0; 10], &[0.0, 0.005], |v| {
            energies.push(d.energy(v.u, 0.1));
            Ok(())
        })
        .unwrap();
        assert_eq!(energies.len(), 11);
        for k in 1..energies.len() {
            assert!(energies[k] <= energies[k - 1] + 1e-12, "{:?}", energies);
        }
        assert!(traj.max_mass_deviation < 1e-12);
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[1].step, 5);
        assert!(traj.stability.dissipation > 0.0);
    }

    #[test]
    fn run_rejects_wrong_increment_count() {
        let d = disc(2);
        let u = NodalField::constant(d.dim(), 0.0);
        let err = run_path(&d, SchemeParams::new(0.1, 0.0, 1e-3, 1e-2), &u, &u, &[0.0; 3], &[]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn divergence_reports_the_step() {
        let d = disc(4);
        let mut params = SchemeParams::new(0.01, 0.0, 1e-1, 1e-1);
        params.newton_max_iter = 1;
        let u0 = NodalField::new(d.mesh().interpolate(|p| 0.9 * (3.0 * p[0]).sin())).unwrap();
        let w0 = d.initial_chemical_potential(&u0, 0.01).unwrap();
        let err = run_path(&d, params, &u0, &w0, &[0.0], &[]).unwrap_err();
        assert!(matches!(err, Error::AtStep { step: 1, .. }));
        assert!(err.is_solver_failure());
    }
}
