//! Zero-mean fields, the discrete inverse Laplacian, the mesh-dependent `H^{-1}` norm,
//! the `L^2` / `H^1` norms and the Ginzburg-Landau energy.

use std::sync::Arc;

use crate::assembly::{potential, P1Space};
use crate::error::{Error, Result};
use crate::quadrature::TriangleRule;
use crate::sparse::{dot, scalar_blocks, SparseLu, SparseOperator, SparsityPattern, SymbolicLu};

/// Relative tolerance on `(v, 1)` for a field to count as zero-mean.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

/// `(v, 1)` from the basis integrals.
pub fn integral(basis_integrals: &[f64], v: &[f64]) -> f64 {
    dot(basis_integrals, v)
}

/// Scale against which `(v, 1)` is compared: `(|v|, 1)`.
fn mean_scale(basis_integrals: &[f64], v: &[f64]) -> f64 {
    basis_integrals.iter().zip(v).map(|(b, x)| b * x.abs()).sum()
}

/// Coefficient vector with `(v, 1) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMeanField(Vec<f64>);

impl ZeroMeanField {
    pub fn new(values: Vec<f64>, basis_integrals: &[f64]) -> Result<Self> {
        if values.len() != basis_integrals.len() {
            return Err(Error::DimensionMismatch {
                expected: basis_integrals.len(),
                got: values.len(),
            });
        }
        let mass = integral(basis_integrals, &values);
        if mass.abs() > ZERO_MEAN_TOL * mean_scale(basis_integrals, &values).max(f64::MIN_POSITIVE) {
            return Err(Error::NonZeroMeanInput { mass });
        }
        Ok(ZeroMeanField(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// `v - (v, 1)/|D|`.
pub fn zero_mean_project(v: &[f64], basis_integrals: &[f64]) -> ZeroMeanField {
    let area: f64 = basis_integrals.iter().sum();
    let mean = integral(basis_integrals, v) / area;
    ZeroMeanField(v.iter().map(|x| x - mean).collect())
}

/// `sqrt(v^T M v)`
pub fn l2_norm(mass: &SparseOperator, v: &[f64]) -> f64 {
    mass.quadratic_form(v).max(0.0).sqrt()
}

/// `sqrt(v^T A v)`
pub fn h1_seminorm(stiffness: &SparseOperator, v: &[f64]) -> f64 {
    stiffness.quadratic_form(v).max(0.0).sqrt()
}

/// `J(u) = (ε/2) |∇u|^2 + (1/ε) ∫ F(u)` with the P1 field inside `F`, integrated exactly.
pub fn discrete_energy(space: &P1Space, stiffness: &SparseOperator, u: &[f64], epsilon: f64) -> f64 {
    0.5 * epsilon * stiffness.quadratic_form(u) + potential_integral(space, u) / epsilon
}

/// `∫ F(u) dx` with a degree-4 rule, exact for P1 `u`.
pub fn potential_integral(space: &P1Space, u: &[f64]) -> f64 {
    let rule = TriangleRule::with_degree(4);
    let mesh = space.mesh();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let mut acc = 0.0;
        for (l, w) in rule.iter() {
            acc += w * potential(l[0] * u[tri[0]] + l[1] * u[tri[1]] + l[2] * u[tri[2]]);
        }
        total += mesh.area(t) * acc;
    }
    total
}

/// Solver for `A ξ = M ζ`, `(ξ, 1) = 0`, via the bordered system
/// `[[A, b], [b^T, 0]] [ξ; λ] = [M ζ; 0]` with `b_i = (ψ_i, 1)`.
///
/// The multiplier is eliminated second to last, so every leading minor reached by static
/// pivoting is a Dirichlet-type restriction of `A` or its bordered Schur complement.
#[derive(Debug, Clone)]
pub struct InverseLaplacian {
    mass: SparseOperator,
    stiffness: SparseOperator,
    basis_integrals: Vec<f64>,
    lu: Arc<SparseLu<1>>,
}

impl InverseLaplacian {
    pub fn new(space: &P1Space, mass: SparseOperator, stiffness: SparseOperator) -> Result<Self> {
        let n = space.dim();
        let basis_integrals = space.basis_integrals();
        let mut rows: Vec<Vec<usize>> = space.mesh().vertex_adjacency();
        for r in rows.iter_mut() {
            r.push(n);
        }
        rows.push((0..=n).collect());
        let pattern = Arc::new(SparsityPattern::from_rows(rows)?);
        let mut values = vec![0.0; pattern.nnz()];
        for i in 0..n {
            for p in pattern.row_range(i) {
                let j = pattern.col(p);
                values[p] = if j == n { basis_integrals[i] } else { stiffness.get(i, j) };
            }
        }
        for p in pattern.row_range(n) {
            let j = pattern.col(p);
            if j < n {
                values[p] = basis_integrals[j];
            }
        }
        let mut order = space.mesh().nested_dissection_order();
        let last = order.pop().ok_or_else(|| Error::InvalidMesh("empty mesh".into()))?;
        order.push(n);
        order.push(last);
        let symbolic = Arc::new(SymbolicLu::analyse(pattern, &order)?);
        let lu = Arc::new(SparseLu::factor(symbolic, &scalar_blocks(&values))?);
        Ok(InverseLaplacian {
            mass,
            stiffness,
            basis_integrals,
            lu,
        })
    }

    pub fn basis_integrals(&self) -> &[f64] {
        &self.basis_integrals
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    /// `ξ = -Δ_h^{-1} ζ`, i.e. `(∇ξ, ∇v) = (ζ, v)` for all `v` and `(ξ, 1) = 0`.
    pub fn solve(&self, zeta: &ZeroMeanField) -> Result<ZeroMeanField> {
        let n = self.basis_integrals.len();
        if zeta.0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: zeta.0.len(),
            });
        }
        let mut rhs = self.mass.mul_vec(&zeta.0);
        rhs.push(0.0);
        let mut xi = self.lu.solve_scalar(&rhs)?;
        xi.pop();
        Ok(ZeroMeanField(xi))
    }

    /// As [`solve`](Self::solve), validating that `zeta` is zero-mean.
    pub fn inverse_laplacian(&self, zeta: &[f64]) -> Result<ZeroMeanField> {
        let z = ZeroMeanField::new(zeta.to_vec(), &self.basis_integrals)?;
        self.solve(&z)
    }

    /// `(ζ, η)_{-1,h} = (ζ, -Δ_h^{-1} η)`, both arguments projected to zero mean first.
    pub fn h_minus1_inner(&self, zeta: &[f64], eta: &[f64]) -> Result<f64> {
        let z = zero_mean_project(zeta, &self.basis_integrals);
        let e = zero_mean_project(eta, &self.basis_integrals);
        let xi = self.solve(&e)?;
        Ok(self.mass.bilinear(&z.0, &xi.0))
    }

    /// `||ζ||_{-1,h}` of the zero-mean projection of `zeta`.
    pub fn h_minus1_norm(&self, zeta: &[f64]) -> Result<f64> {
        let z = zero_mean_project(zeta, &self.basis_integrals);
        let xi = self.solve(&z)?;
        Ok(self.mass.bilinear(&z.0, &xi.0).max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, assemble_stiffness};
    use crate::mesh::build_uniform_mesh;
    use rand::{Rng, SeedableRng};

    fn setup(n: usize) -> (P1Space, InverseLaplacian) {
        let space = P1Space::new(build_uniform_mesh(n).unwrap()).unwrap();
        let inv = InverseLaplacian::new(&space, assemble_mass(&space), assemble_stiffness(&space)).unwrap();
        (space, inv)
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn projection_cases() {
        let (s, inv) = setup(6);
        let b = inv.basis_integrals();
        let c = vec![3.5; s.dim()];
        assert!(zero_mean_project(&c, b).values().iter().all(|v| v.abs() < 1e-14));
        let x1 = s.mesh().interpolate(|p| p[0]);
        // odd function on a mesh symmetric under x -> -x
        assert!(integral(b, &x1).abs() < 1e-15);
        let p = zero_mean_project(&x1, b);
        for (a, v) in p.values().iter().zip(&x1) {
            assert!((a - v).abs() < 1e-15);
        }
        let r = zero_mean_project(&random(s.dim(), 1), b);
        let rr = zero_mean_project(r.values(), b);
        for (a, v) in r.values().iter().zip(rr.values()) {
            assert!((a - v).abs() < 1e-15);
        }
        assert!(ZeroMeanField::new(r.values().to_vec(), b).is_ok());
    }

    #[test]
    fn rejects_nonzero_mean() {
        let (s, inv) = setup(4);
        let err = inv.inverse_laplacian(&vec![1.0; s.dim()]).unwrap_err();
        assert!(matches!(err, Error::NonZeroMeanInput { .. }));
    }

    #[test]
    fn zero_maps_to_zero() {
        let (s, inv) = setup(4);
        let xi = inv.inverse_laplacian(&vec![0.0; s.dim()]).unwrap();
        assert!(xi.values().iter().all(|v| *v == 0.0));
        assert_eq!(inv.h_minus1_norm(&vec![0.0; s.dim()]).unwrap(), 0.0);
    }

    #[test]
    fn defining_relation_and_constraint() {
        let (s, inv) = setup(8);
        let b = inv.basis_integrals().to_vec();
        let zeta = zero_mean_project(&random(s.dim(), 3), &b);
        let xi = inv.solve(&zeta).unwrap();
        assert!(integral(&b, xi.values()).abs() < 1e-14);
        for k in 0..20 {
            let v = random(s.dim(), 100 + k);
            let lhs = inv.stiffness().bilinear(xi.values(), &v);
            let rhs = inv.mass().bilinear(zeta.values(), &v);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn inner_product_is_symmetric() {
        let (s, inv) = setup(8);
        for k in 0..10 {
            let z = random(s.dim(), 2 * k);
            let e = random(s.dim(), 2 * k + 1);
            let a = inv.h_minus1_inner(&z, &e).unwrap();
            let b = inv.h_minus1_inner(&e, &z).unwrap();
            assert!((a - b).abs() < 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn norm_values() {
        let (s, inv) = setup(8);
        let c = vec![2.0; s.dim()];
        assert!((l2_norm(inv.mass(), &c) - 4.0).abs() < 1e-13);
        assert!(h1_seminorm(inv.stiffness(), &c) < 1e-6);
        let x1 = s.mesh().interpolate(|p| p[0]);
        assert!((h1_seminorm(inv.stiffness(), &x1) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn energy_values() {
        let (s, inv) = setup(8);
        let n = s.dim();
        let a = inv.stiffness();
        assert!(discrete_energy(&s, a, &vec![1.0; n], 0.1).abs() < 1e-13);
        assert!(discrete_energy(&s, a, &vec![-1.0; n], 0.1).abs() < 1e-13);
        assert!((discrete_energy(&s, a, &vec![0.0; n], 0.1) - 10.0).abs() < 1e-12);
        // ε = 1, u = x1: 2 + (1/4) ∫∫ (x^2-1)^2 = 2 + (1/4)(2)(16/15) = 2 + 8/15
        let x1 = s.mesh().interpolate(|p| p[0]);
        assert!((discrete_energy(&s, a, &x1, 1.0) - (2.0 + 8.0 / 15.0)).abs() < 1e-13);
    }
}
