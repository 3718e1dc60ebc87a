//! Uniform diagonal-split triangulation of the square `[-1,1]^2`.
//!
//! Vertices are numbered lexicographically by `(x2, x1)`: vertex `(i, j)` sits at
//! `x1 = -1 + 2i/n`, `x2 = -1 + 2j/n` and has index `j (n+1) + i`. Every grid cell is
//! cut along its `(i,j)-(i+1,j+1)` diagonal, so meshes with `n` and `2n` cells per side
//! are nested and P1 prolongation between them is exact.

use std::io::Write;

use crate::error::{Error, Result};

pub const DOMAIN_MIN: f64 = -1.0;
pub const DOMAIN_MAX: f64 = 1.0;
/// |D| for the square `[-1,1]^2`.
pub const DOMAIN_AREA: f64 = 4.0;

pub type Point = [f64; 2];

#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    /// Gradients of the three barycentric basis functions, per triangle.
    grads: Vec<[Point; 3]>,
    h: f64,
}

/// Builds the `n x n` criss-cross mesh of `[-1,1]^2` (`(n+1)^2` vertices, `2n^2` triangles).
pub fn build_uniform_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one subdivision per side"));
    }
    let np = n + 1;
    let spacing = (DOMAIN_MAX - DOMAIN_MIN) / n as f64;
    let mut vertices = Vec::with_capacity(np * np);
    let mut boundary = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([
                DOMAIN_MIN + i as f64 * spacing,
                DOMAIN_MIN + j as f64 * spacing,
            ]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    // pin the far edge exactly to 1.0
    for v in vertices.iter_mut() {
        for c in v.iter_mut() {
            if (*c - DOMAIN_MAX).abs() < 1e-12 {
                *c = DOMAIN_MAX;
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * np + i;
            let v10 = v00 + 1;
            let v01 = v00 + np;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut mesh = Mesh {
        n,
        vertices,
        triangles,
        boundary,
        areas: Vec::new(),
        grads: Vec::new(),
        h: 0.0,
    };
    mesh.compute_geometry()?;
    Ok(mesh)
}

impl Mesh {
    fn compute_geometry(&mut self) -> Result<()> {
        self.areas.clear();
        self.grads.clear();
        let mut h: f64 = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let [p0, p1, p2] = tri.map(|v| self.vertices[v]);
            let twice_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if twice_area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area"
                )));
            }
            let inv = 1.0 / twice_area;
            self.grads.push([
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ]);
            self.areas.push(0.5 * twice_area);
            for (a, b) in [(p0, p1), (p1, p2), (p2, p0)] {
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        self.h = h;
        Ok(())
    }

    /// Subdivisions per side.
    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn basis_gradients(&self, t: usize) -> &[Point; 3] {
        &self.grads[t]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Longest edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Grid spacing along the axes, `2/n`. This is the `h` quoted in convergence tables.
    pub fn h_axis(&self) -> f64 {
        (DOMAIN_MAX - DOMAIN_MIN) / self.n as f64
    }

    /// Constant gradient of the P1 interpolant of `coeffs` on triangle `t`.
    pub fn gradient_on_triangle(&self, t: usize, coeffs: &[f64]) -> Result<Point> {
        if t >= self.triangles.len() {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: self.triangles.len(),
            });
        }
        if coeffs.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vertices.len(),
                got: coeffs.len(),
            });
        }
        Ok(self.gradient_unchecked(t, coeffs))
    }

    pub(crate) fn gradient_unchecked(&self, t: usize, coeffs: &[f64]) -> Point {
        let tri = self.triangles[t];
        let g = &self.grads[t];
        let mut out = [0.0; 2];
        for k in 0..3 {
            let c = coeffs[tri[k]];
            out[0] += c * g[k][0];
            out[1] += c * g[k][1];
        }
        out
    }

    /// Nodal interpolant of a pointwise function.
    pub fn interpolate<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        self.vertices.iter().map(|&p| f(p)).collect()
    }

    /// Finds the triangle containing `p` and the barycentric coordinates of `p` in it.
    /// Points on shared edges resolve to one of the adjacent triangles.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        if p[0] < DOMAIN_MIN - tol
            || p[0] > DOMAIN_MAX + tol
            || p[1] < DOMAIN_MIN - tol
            || p[1] > DOMAIN_MAX + tol
        {
            return None;
        }
        let n = self.n;
        let s = self.h_axis();
        let fi = ((p[0] - DOMAIN_MIN) / s).floor();
        let fj = ((p[1] - DOMAIN_MIN) / s).floor();
        let i = (fi.max(0.0) as usize).min(n - 1);
        let j = (fj.max(0.0) as usize).min(n - 1);
        let local_x = (p[0] - DOMAIN_MIN) / s - i as f64;
        let local_y = (p[1] - DOMAIN_MIN) / s - j as f64;
        let cell = j * n + i;
        // lower triangle [v00, v10, v11] has local_y <= local_x
        let t = if local_y <= local_x { 2 * cell } else { 2 * cell + 1 };
        Some((t, self.barycentric(t, p)))
    }

    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [p0, _, _] = self.triangle_points(t);
        let g = &self.grads[t];
        let d = [p[0] - p0[0], p[1] - p0[1]];
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }

    /// Evaluates the P1 function with nodal values `coeffs` at `p`.
    pub fn evaluate(&self, coeffs: &[f64], p: Point) -> Option<f64> {
        let (t, bary) = self.locate(p)?;
        let tri = self.triangles[t];
        Some((0..3).map(|k| bary[k] * coeffs[tri[k]]).sum())
    }

    /// Interpolates a P1 field living on `coarse` onto the vertices of `self`.
    /// Exact when the meshes are nested.
    pub fn prolongate_from(&self, coarse: &Mesh, coarse_values: &[f64]) -> Result<Vec<f64>> {
        if coarse_values.len() != coarse.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: coarse.num_vertices(),
                got: coarse_values.len(),
            });
        }
        self.vertices
            .iter()
            .map(|&p| {
                coarse
                    .evaluate(coarse_values, p)
                    .ok_or_else(|| Error::InvalidMesh(format!("vertex {p:?} outside coarse mesh")))
            })
            .collect()
    }

    /// Vertex neighbours (including the vertex itself), sorted ascending.
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = (0..self.num_vertices()).map(|v| vec![v]).collect();
        for tri in &self.triangles {
            for &a in tri {
                for &b in tri {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }

    /// Nested-dissection elimination order of the vertices: `order[k]` is the vertex
    /// eliminated k-th. Each grid line is a vertex separator for this mesh family.
    pub fn nested_dissection_order(&self) -> Vec<usize> {
        let np = self.n + 1;
        let mut order = Vec::with_capacity(np * np);
        dissect(np, 0, np, 0, np, &mut order);
        order
    }

    /// Plain-text dump: a header line, then `v <x1> <x2> <boundary>` and `t <a> <b> <c>` records.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# mesh n={} vertices={} triangles={} h={:.17e}",
            self.n,
            self.num_vertices(),
            self.num_triangles(),
            self.h
        )?;
        for (v, p) in self.vertices.iter().enumerate() {
            writeln!(w, "v {:.17e} {:.17e} {}", p[0], p[1], self.boundary[v] as u8)?;
        }
        for t in &self.triangles {
            writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn dissect(np: usize, i0: usize, i1: usize, j0: usize, j1: usize, order: &mut Vec<usize>) {
    let wi = i1 - i0;
    let wj = j1 - j0;
    if wi == 0 || wj == 0 {
        return;
    }
    if wi * wj <= 6 || wi < 3 && wj < 3 {
        for j in j0..j1 {
            for i in i0..i1 {
                order.push(j * np + i);
            }
        }
        return;
    }
    if wi >= wj {
        let mid = i0 + wi / 2;
        dissect(np, i0, mid, j0, j1, order);
        dissect(np, mid + 1, i1, j0, j1, order);
        for j in j0..j1 {
            order.push(j * np + mid);
        }
    } else {
        let mid = j0 + wj / 2;
        dissect(np, i0, i1, j0, mid, order);
        dissect(np, i0, i1, mid + 1, j1, order);
        for i in i0..i1 {
            order.push(mid * np + i);
        }
    }
}
