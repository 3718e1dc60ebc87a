//! Element-wise assembly of the P1 operators.
//!
//! * `M_ij = (ψ_j, ψ_i)` and `A_ij = (∇ψ_j, ∇ψ_i)` in closed form,
//! * `(A_X)_ij = (∇ψ_j·X, ∇ψ_i·X)` and `(C_X)_ij = (∇ψ_j·X, ψ_i)` by quadrature of the
//!   analytic field at quadrature points,
//! * the load `N(u)_i = (u^3 - u, ψ_i)` and its Jacobian `(3u^2 - 1) ψ_j ψ_i`, integrated
//!   exactly by a degree-4 rule.
//!
//! The cutoff in `X` rises from 0 to ~1 within a band of width ~1e-2 inside `|x| = 0.8`,
//! which no fixed triangle rule resolves on desk-scale meshes. The field-weighted operators
//! are integrated in polar coordinates on each element clipped to the support disc, with
//! radial grading toward the support radius and adaptive angular subdivision.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::{Mesh, Point};
use crate::polar::PolarQuadrature;
use crate::quadrature::{map_point, TriangleRule};
use crate::sparse::{SparseOperator, SparsityPattern, Symmetry, SymbolicLu};

/// Default quadrature degree for every operator.
pub const DEFAULT_QUAD_ORDER: usize = 4;

/// P1 space on a mesh: shared sparsity pattern, element-to-storage map and the
/// nested-dissection symbolic factorization reused by every solver on this mesh.
#[derive(Debug)]
pub struct P1Space {
    mesh: Mesh,
    pattern: Arc<SparsityPattern>,
    element_positions: Vec<[usize; 9]>,
    symbolic: Arc<SymbolicLu>,
}

impl P1Space {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let pattern = Arc::new(SparsityPattern::from_rows(mesh.vertex_adjacency())?);
        let mut element_positions = Vec::with_capacity(mesh.num_triangles());
        for tri in mesh.triangles() {
            let mut pos = [0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    pos[3 * a + b] = pattern
                        .find(tri[a], tri[b])
                        .ok_or_else(|| Error::InvalidMesh("element entry missing from pattern".into()))?;
                }
            }
            element_positions.push(pos);
        }
        let symbolic = Arc::new(SymbolicLu::analyse(pattern.clone(), &mesh.nested_dissection_order())?);
        Ok(P1Space {
            mesh,
            pattern,
            element_positions,
            symbolic,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn symbolic(&self) -> &Arc<SymbolicLu> {
        &self.symbolic
    }

    pub(crate) fn element_positions(&self, t: usize) -> &[usize; 9] {
        &self.element_positions[t]
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Scatters per-element 3x3 matrices (row-major) into a new operator, in element order.
    fn scatter(&self, local: &[[f64; 9]], symmetry: Symmetry) -> SparseOperator {
        let mut op = SparseOperator::zeros(self.pattern.clone(), symmetry);
        let vals = op.values_mut();
        for (pos, ke) in self.element_positions.iter().zip(local) {
            for k in 0..9 {
                vals[pos[k]] += ke[k];
            }
        }
        op
    }

    /// `∫ ψ_i dx` for every vertex.
    pub fn basis_integrals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let share = self.mesh.area(t) / 3.0;
            for &v in tri {
                out[v] += share;
            }
        }
        out
    }

    /// `b_i = ∫ g ψ_i dx` with a rule of the given degree.
    pub fn load_vector<F: Fn(Point) -> f64 + Sync>(&self, g: F, quad_order: usize) -> Vec<f64> {
        let rule = TriangleRule::with_degree(quad_order);
        let local: Vec<[f64; 3]> = (0..self.mesh.num_triangles())
            .into_par_iter()
            .map(|t| {
                let pts = self.mesh.triangle_points(t);
                let area = self.mesh.area(t);
                let mut out = [0.0; 3];
                for (l, w) in rule.iter() {
                    let gv = g(map_point(&pts, l)) * w * area;
                    for k in 0..3 {
                        out[k] += gv * l[k];
                    }
                }
                out
            })
            .collect();
        let mut b = vec![0.0; self.dim()];
        for (tri, le) in self.mesh.triangles().iter().zip(&local) {
            for k in 0..3 {
                b[tri[k]] += le[k];
            }
        }
        b
    }
}

pub fn assemble_mass(space: &P1Space) -> SparseOperator {
    let mesh = space.mesh();
    let local: Vec<[f64; 9]> = (0..mesh.num_triangles())
        .map(|t| {
            let c = mesh.area(t) / 12.0;
            let mut ke = [c; 9];
            for a in 0..3 {
                ke[4 * a] = 2.0 * c;
            }
            ke
        })
        .collect();
    space.scatter(&local, Symmetry::Symmetric)
}

pub fn assemble_stiffness(space: &P1Space) -> SparseOperator {
    let mesh = space.mesh();
    let local: Vec<[f64; 9]> = (0..mesh.num_triangles())
        .map(|t| {
            let g = mesh.basis_gradients(t);
            let area = mesh.area(t);
            let mut ke = [0.0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    ke[3 * a + b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
            ke
        })
        .collect();
    space.scatter(&local, Symmetry::Symmetric)
}

fn outside_support(pts: &[Point; 3], field: &dyn VectorField) -> bool {
    match field.support_radius() {
        None => false,
        Some(r) => {
            // the nearest point of a triangle to the origin is at a vertex or on an edge
            let mut dmin = f64::INFINITY;
            for (a, b) in [(pts[0], pts[1]), (pts[1], pts[2]), (pts[2], pts[0])] {
                let e = [b[0] - a[0], b[1] - a[1]];
                let len2 = e[0] * e[0] + e[1] * e[1];
                let s = (-(a[0] * e[0] + a[1] * e[1]) / len2).clamp(0.0, 1.0);
                let q = [a[0] + s * e[0], a[1] + s * e[1]];
                dmin = dmin.min((q[0] * q[0] + q[1] * q[1]).sqrt());
            }
            let inside = point_in_triangle([0.0, 0.0], pts);
            !inside && dmin >= r
        }
    }
}

fn point_in_triangle(p: Point, t: &[Point; 3]) -> bool {
    let cross = |a: Point, b: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let d0 = cross(t[0], t[1]);
    let d1 = cross(t[1], t[2]);
    let d2 = cross(t[2], t[0]);
    (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
}

/// Builds the element integrator for `field`: polar with `quad_order + 2` Gauss points per
/// piece when the field has bounded support, else the fixed symmetric rule.
enum FieldRule {
    Polar(PolarQuadrature),
    Fixed(TriangleRule),
}

impl FieldRule {
    fn new(field: &dyn VectorField, quad_order: usize) -> Self {
        match field.support_radius() {
            Some(r) if r > 0.0 => FieldRule::Polar(PolarQuadrature::new(quad_order + 2, r)),
            _ => FieldRule::Fixed(TriangleRule::with_degree(quad_order)),
        }
    }

    fn integrate<const K: usize, F: Fn(Point) -> [f64; K]>(&self, pts: &[Point; 3], f: &F) -> [f64; K] {
        match self {
            FieldRule::Polar(q) => q.integrate(pts, f),
            FieldRule::Fixed(rule) => {
                let area = crate::quadrature::triangle_area(pts);
                let mut acc = [0.0; K];
                for (l, w) in rule.iter() {
                    let v = f(map_point(pts, l));
                    for k in 0..K {
                        acc[k] += w * area * v[k];
                    }
                }
                acc
            }
        }
    }
}

pub fn assemble_weighted_stiffness(
    space: &P1Space,
    field: &dyn VectorField,
    quad_order: usize,
) -> Result<SparseOperator> {
    if quad_order < 2 {
        return Err(Error::invalid("quad_order", "weighted stiffness needs degree >= 2"));
    }
    let mesh = space.mesh();
    let rule = FieldRule::new(field, quad_order);
    let local: Vec<[f64; 9]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let pts = mesh.triangle_points(t);
            if outside_support(&pts, field) {
                return [0.0; 9];
            }
            // B_T = ∫_T X X^T
            let f = |x: Point| {
                let v = field.eval(x);
                [v[0] * v[0], v[0] * v[1], v[1] * v[1]]
            };
            let [bxx, bxy, byy] = rule.integrate(&pts, &f);
            let g = mesh.basis_gradients(t);
            let mut ke = [0.0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    ke[3 * a + b] = g[a][0] * (bxx * g[b][0] + bxy * g[b][1])
                        + g[a][1] * (bxy * g[b][0] + byy * g[b][1]);
                }
            }
            ke
        })
        .collect();
    Ok(space.scatter(&local, Symmetry::Symmetric))
}

pub fn assemble_noise_convection(
    space: &P1Space,
    field: &dyn VectorField,
    quad_order: usize,
) -> Result<SparseOperator> {
    if quad_order < 3 {
        return Err(Error::invalid("quad_order", "noise convection needs degree >= 3"));
    }
    let mesh = space.mesh();
    let rule = FieldRule::new(field, quad_order);
    let local: Vec<[f64; 9]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let pts = mesh.triangle_points(t);
            if outside_support(&pts, field) {
                return [0.0; 9];
            }
            // v_a = ∫_T X λ_a
            let f = |x: Point| {
                let v = field.eval(x);
                let l = mesh.barycentric(t, x);
                [v[0] * l[0], v[1] * l[0], v[0] * l[1], v[1] * l[1], v[0] * l[2], v[1] * l[2]]
            };
            let vi = rule.integrate(&pts, &f);
            let g = mesh.basis_gradients(t);
            let mut ke = [0.0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    ke[3 * a + b] = g[b][0] * vi[2 * a] + g[b][1] * vi[2 * a + 1];
                }
            }
            ke
        })
        .collect();
    Ok(space.scatter(&local, Symmetry::General))
}

/// `f(s) = s^3 - s`
#[inline]
pub fn potential_derivative(s: f64) -> f64 {
    s * s * s - s
}

/// `F(s) = (s^2 - 1)^2 / 4`
#[inline]
pub fn potential(s: f64) -> f64 {
    let a = s * s - 1.0;
    0.25 * a * a
}

/// Exact (degree-4) evaluation of `N(u)` and its Jacobian, reusing the same rule and
/// writing into preallocated storage. Used inside the Newton loop.
#[derive(Debug, Clone)]
pub struct NonlinearAssembler {
    rule: TriangleRule,
}

impl NonlinearAssembler {
    pub fn new(quad_order: usize) -> Result<Self> {
        if quad_order < 4 {
            return Err(Error::invalid("quad_order", "the cubic nonlinearity needs degree >= 4"));
        }
        Ok(NonlinearAssembler {
            rule: TriangleRule::with_degree(quad_order),
        })
    }

    /// Writes `N(u)` into `load` and, if given, the Jacobian values (pattern order) into `jac`.
    pub fn evaluate(&self, space: &P1Space, u: &[f64], load: &mut [f64], mut jac: Option<&mut [f64]>) {
        let mesh = space.mesh();
        load.iter_mut().for_each(|v| *v = 0.0);
        if let Some(j) = jac.as_deref_mut() {
            j.iter_mut().for_each(|v| *v = 0.0);
        }
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let area = mesh.area(t);
            let uc = [u[tri[0]], u[tri[1]], u[tri[2]]];
            let mut le = [0.0; 3];
            let mut ke = [0.0; 9];
            for (l, w) in self.rule.iter() {
                let s = l[0] * uc[0] + l[1] * uc[1] + l[2] * uc[2];
                let wf = w * potential_derivative(s);
                for a in 0..3 {
                    le[a] += wf * l[a];
                }
                if jac.is_some() {
                    let wd = w * (3.0 * s * s - 1.0);
                    for a in 0..3 {
                        for b in 0..3 {
                            ke[3 * a + b] += wd * l[a] * l[b];
                        }
                    }
                }
            }
            for a in 0..3 {
                load[tri[a]] += area * le[a];
            }
            if let Some(j) = jac.as_deref_mut() {
                let pos = space.element_positions(t);
                for k in 0..9 {
                    j[pos[k]] += area * ke[k];
                }
            }
        }
    }
}

pub fn assemble_nonlinear_load(space: &P1Space, u: &[f64], quad_order: usize) -> Result<Vec<f64>> {
    space.check_len(u)?;
    let na = NonlinearAssembler::new(quad_order)?;
    let mut load = vec![0.0; space.dim()];
    na.evaluate(space, u, &mut load, None);
    Ok(load)
}

pub fn assemble_nonlinear_jacobian(space: &P1Space, u: &[f64], quad_order: usize) -> Result<SparseOperator> {
    space.check_len(u)?;
    let na = NonlinearAssembler::new(quad_order)?;
    let mut load = vec![0.0; space.dim()];
    let mut jac = SparseOperator::zeros(space.pattern().clone(), Symmetry::Symmetric);
    na.evaluate(space, u, &mut load, Some(jac.values_mut()));
    Ok(jac)
}

/// The four linear operators of the scheme on one mesh.
#[derive(Debug, Clone)]
pub struct Operators {
    pub mass: SparseOperator,
    pub stiffness: SparseOperator,
    pub weighted_stiffness: SparseOperator,
    pub noise_convection: SparseOperator,
}

impl Operators {
    pub fn assemble(space: &P1Space, field: &dyn VectorField, quad_order: usize) -> Result<Self> {
        Ok(Operators {
            mass: assemble_mass(space),
            stiffness: assemble_stiffness(space),
            weighted_stiffness: assemble_weighted_stiffness(space, field, quad_order)?,
            noise_convection: assemble_noise_convection(space, field, quad_order)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{RotationalCutoffField, ZeroField};
    use crate::mesh::build_uniform_mesh;

    fn space(n: usize) -> P1Space {
        P1Space::new(build_uniform_mesh(n).unwrap()).unwrap()
    }

    #[test]
    fn element_mass_by_hand() {
        // element mass is (|T|/12)[[2,1,1],[1,2,1],[1,1,2]]; a 1x1 mesh of [-1,1]^2 has two right triangles with legs 2 (area 2)
        let s = space(1);
        let m = assemble_mass(&s);
        // vertex 1 = (1,-1) belongs only to the lower triangle: 2 * area/12
        assert!((m.get(1, 1) - 2.0 * 2.0 / 12.0).abs() < 1e-15);
        // vertex 0 belongs to both triangles
        assert!((m.get(0, 0) - 2.0 * 2.0 * 2.0 / 12.0).abs() < 1e-15);
        assert!((m.get(0, 1) - 2.0 / 12.0).abs() < 1e-15);
        assert_eq!(m.get(1, 2), 0.0);
    }

    #[test]
    fn two_triangle_stiffness_by_hand() {
        // vertices 0:(-1,-1) 1:(1,-1) 2:(-1,1) 3:(1,1); diagonal 0-3
        let s = space(1);
        let a = assemble_stiffness(&s).to_dense();
        let expect = [
            [1.0, -0.5, -0.5, 0.0],
            [-0.5, 1.0, 0.0, -0.5],
            [-0.5, 0.0, 1.0, -0.5],
            [0.0, -0.5, -0.5, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[i][j] - expect[i][j]).abs() < 1e-15, "({i},{j}) {} vs {}", a[i][j], expect[i][j]);
            }
        }
    }

    #[test]
    fn mass_total_and_constants() {
        let s = space(6);
        let m = assemble_mass(&s);
        let ones = vec![1.0; s.dim()];
        assert!((m.quadratic_form(&ones) - 4.0).abs() < 1e-13);
        let bi = s.basis_integrals();
        for (a, b) in m.mul_vec(&ones).iter().zip(&bi) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_kernel_and_energy() {
        let s = space(5);
        let a = assemble_stiffness(&s);
        assert!(a.row_sums().iter().all(|r| r.abs() < 1e-13));
        let x1 = s.mesh().interpolate(|p| p[0]);
        assert!((a.quadratic_form(&x1) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_gives_zero_operators() {
        let s = space(4);
        let ax = assemble_weighted_stiffness(&s, &ZeroField, 4).unwrap();
        let cx = assemble_noise_convection(&s, &ZeroField, 4).unwrap();
        assert_eq!(ax.max_abs(), 0.0);
        assert_eq!(cx.max_abs(), 0.0);
    }

    #[test]
    fn field_operators_vanish_outside_cutoff() {
        let s = space(8);
        let x = RotationalCutoffField::default();
        let ax = assemble_weighted_stiffness(&s, &x, 4).unwrap();
        let cx = assemble_noise_convection(&s, &x, 4).unwrap();
        let mesh = s.mesh();
        for v in 0..s.dim() {
            // support of ψ_v lies within one h of the vertex
            let p = mesh.vertex(v);
            if (p[0] * p[0] + p[1] * p[1]).sqrt() - mesh.h() >= 0.8 {
                for &c in s.pattern().row(v) {
                    assert_eq!(ax.get(v, c), 0.0);
                    assert_eq!(cx.get(v, c), 0.0);
                    assert_eq!(cx.get(c, v), 0.0);
                }
            }
        }
    }

    #[test]
    fn quadrature_order_checks() {
        let s = space(2);
        let x = RotationalCutoffField::default();
        assert!(assemble_weighted_stiffness(&s, &x, 1).is_err());
        assert!(assemble_noise_convection(&s, &x, 2).is_err());
        let u = vec![0.0; s.dim()];
        assert!(assemble_nonlinear_load(&s, &u, 3).is_err());
        assert!(assemble_nonlinear_jacobian(&s, &u, 3).is_err());
        assert!(assemble_nonlinear_load(&s, &u[1..], 4).is_err());
    }

    #[test]
    fn nonlinear_load_constants() {
        let s = space(4);
        let n = s.dim();
        assert!(assemble_nonlinear_load(&s, &vec![0.0; n], 4).unwrap().iter().all(|v| *v == 0.0));
        assert!(assemble_nonlinear_load(&s, &vec![1.0; n], 4).unwrap().iter().all(|v| v.abs() < 1e-15));
        let load = assemble_nonlinear_load(&s, &vec![2.0; n], 4).unwrap();
        let m1 = assemble_mass(&s).mul_vec(&vec![1.0; n]);
        for (a, b) in load.iter().zip(&m1) {
            assert!((a - 6.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn nonlinear_jacobian_constants() {
        let s = space(4);
        let n = s.dim();
        let m = assemble_mass(&s);
        let j0 = assemble_nonlinear_jacobian(&s, &vec![0.0; n], 4).unwrap();
        let j1 = assemble_nonlinear_jacobian(&s, &vec![1.0; n], 4).unwrap();
        for (p, mv) in m.values().iter().enumerate() {
            assert!((j0.values()[p] + mv).abs() < 1e-15);
            assert!((j1.values()[p] - 2.0 * mv).abs() < 1e-15);
        }
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn weighted_stiffness_is_symmetric_psd() {
        let s = space(16);
        let ax = assemble_weighted_stiffness(&s, &RotationalCutoffField::default(), 4).unwrap();
        assert!(ax.max_asymmetry() < 1e-14);
        assert!(ax.max_abs() > 0.0);
        for k in 0..100 {
            let u = random_vec(s.dim(), k);
            assert!(ax.quadratic_form(&u) >= -1e-12);
        }
    }

    #[test]
    fn convection_column_sums_and_skewness() {
        let s = space(16);
        let cx = assemble_noise_convection(&s, &RotationalCutoffField::default(), 4).unwrap();
        let cs = cx.col_sums();
        let worst = cs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-12, "column sum {worst}");
        for k in 0..20 {
            let u = random_vec(s.dim(), 100 + k);
            assert!(cx.quadratic_form(&u).abs() < 1e-11);
            assert!(crate::sparse::dot(&cs, &u).abs() < 1e-11);
        }
    }

    #[test]
    fn field_operators_stable_under_rule_refinement() {
        let s = space(16);
        let x = RotationalCutoffField::default();
        let a4 = assemble_weighted_stiffness(&s, &x, DEFAULT_QUAD_ORDER).unwrap();
        let a6 = assemble_weighted_stiffness(&s, &x, DEFAULT_QUAD_ORDER + 2).unwrap();
        let c4 = assemble_noise_convection(&s, &x, DEFAULT_QUAD_ORDER).unwrap();
        let c6 = assemble_noise_convection(&s, &x, DEFAULT_QUAD_ORDER + 2).unwrap();
        let da = a4.linear_combination(1.0, &a6, -1.0).unwrap().max_abs();
        let dc = c4.linear_combination(1.0, &c6, -1.0).unwrap().max_abs();
        assert!(da < 1e-10, "A_X change {da}");
        assert!(dc < 1e-10, "C_X change {dc}");
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let s = space(8);
        let u = random_vec(s.dim(), 7).iter().map(|v| 1.5 * v).collect::<Vec<_>>();
        let v = random_vec(s.dim(), 8);
        let jv = assemble_nonlinear_jacobian(&s, &u, 4).unwrap().mul_vec(&v);
        let load = |e: f64| {
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + e * b).collect();
            assemble_nonlinear_load(&s, &w, 4).unwrap()
        };
        let mut prev = None;
        for e in [1e-3, 1e-4, 1e-5] {
            let (p, m) = (load(e), load(-e));
            let err = p
                .iter()
                .zip(&m)
                .zip(&jv)
                .map(|((a, b), j)| ((a - b) / (2.0 * e) - j).powi(2))
                .sum::<f64>()
                .sqrt();
            if let Some(pe) = prev {
                // the cubic makes the central-difference error exactly quadratic in e
                let ratio: f64 = pe / err;
                assert!((ratio - 100.0).abs() < 5.0 || err < 1e-12, "ratio {ratio}");
            }
            prev = Some(err);
        }
    }
}
