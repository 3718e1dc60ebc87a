//! Ensemble means, zero-level-set extraction, ellipse signed distances and CSV emitters.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::stepper::{Discretization, NodalField, Snapshot};

pub const LEVEL_SET_SCHEMA: &str = "level-set/v1";
pub const MASS_SCHEMA: &str = "mass-series/v1";
pub const ENERGY_SCHEMA: &str = "energy-series/v1";

/// Shift applied to vertex values that are exactly zero before contouring.
pub const ZERO_TIE_BREAK: f64 = 1e-14;

/// Coefficient-wise average.
pub fn mean_field(fields: &[&[f64]]) -> Result<NodalField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::invalid("fields", "mean of an empty ensemble"))?;
    let n = first.len();
    let mut acc = vec![0.0; n];
    for f in fields {
        if f.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: f.len() });
        }
        for (a, v) in acc.iter_mut().zip(f.iter()) {
            *a += v;
        }
    }
    let m = fields.len() as f64;
    NodalField::new(acc.into_iter().map(|a| a / m).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub time: f64,
    pub segments: Vec<[Point; 2]>,
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Marching triangles on the P1 interpolant: one segment per triangle with mixed signs.
pub fn extract_zero_level_set(mesh: &Mesh, field: &[f64], time: f64) -> Result<LevelSet> {
    if field.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_vertices(),
            got: field.len(),
        });
    }
    let value = |v: usize| if field[v] == 0.0 { ZERO_TIE_BREAK } else { field[v] };
    let mut segments = Vec::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let vals = [value(tri[0]), value(tri[1]), value(tri[2])];
        let mut cross = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (e, (e + 1) % 3);
            if (vals[a] > 0.0) != (vals[b] > 0.0) {
                let s = vals[a] / (vals[a] - vals[b]);
                cross.push([
                    pts[a][0] + s * (pts[b][0] - pts[a][0]),
                    pts[a][1] + s * (pts[b][1] - pts[a][1]),
                ]);
            }
        }
        if cross.len() == 2 {
            segments.push([cross[0], cross[1]]);
        }
    }
    Ok(LevelSet { time, segments })
}

fn point_segment_distance(p: Point, s: &[Point; 2]) -> f64 {
    let d = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - s[0][0]) * d[0] + (p[1] - s[0][1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - s[0][0] - t * d[0]).hypot(p[1] - s[0][1] - t * d[1])
}

/// Distance from `p` to the union of segments.
pub fn distance_to_set(p: Point, set: &LevelSet) -> f64 {
    set.segments
        .iter()
        .map(|s| point_segment_distance(p, s))
        .fold(f64::INFINITY, f64::min)
}

fn directed(a: &LevelSet, b: &LevelSet, samples: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for s in &a.segments {
        for k in 0..=samples {
            let t = k as f64 / samples as f64;
            let p = [s[0][0] + t * (s[1][0] - s[0][0]), s[0][1] + t * (s[1][1] - s[0][1])];
            worst = worst.max(distance_to_set(p, b));
        }
    }
    worst
}

/// Hausdorff distance between two segment sets, with each segment sampled at
/// `samples + 1` equispaced points. Infinite when exactly one set is empty.
pub fn hausdorff_distance(a: &LevelSet, b: &LevelSet, samples: usize) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => directed(a, b, samples.max(1)).max(directed(b, a, samples.max(1))),
    }
}

/// Axis-aligned ellipse `((x - c)/a)^2 + ((y - c)/b)^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Point,
    pub semi_x: f64,
    pub semi_y: f64,
}

impl Ellipse {
    pub fn new(center: Point, semi_x: f64, semi_y: f64) -> Self {
        Ellipse { center, semi_x, semi_y }
    }

    /// Signed Euclidean distance to the curve, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let y = [(p[0] - self.center[0]).abs(), (p[1] - self.center[1]).abs()];
        // closest-point problem in the first quadrant with the major axis first
        let (e0, e1, y0, y1) = if self.semi_x >= self.semi_y {
            (self.semi_x, self.semi_y, y[0], y[1])
        } else {
            (self.semi_y, self.semi_x, y[1], y[0])
        };
        let inside = (y0 / e0).powi(2) + (y1 / e1).powi(2) < 1.0;
        let d = quadrant_distance(e0, e1, y0, y1);
        if inside {
            -d
        } else {
            d
        }
    }
}

/// Distance from `(y0, y1)`, both nonnegative, to the ellipse with semi-axes `e0 ≥ e1`.
fn quadrant_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = closest_point_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xd = numer / denom;
            let x0 = e0 * xd;
            let x1 = e1 * (1.0 - xd * xd).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

/// Root `s > -1` of `F(s) = (r0 z0 / (s + r0))^2 + (z1 / (s + 1))^2 - 1`, which is convex and
/// decreasing there. Newton from the left end of the bracket increases monotonically to the
/// root; bisection guards against roundoff.
fn closest_point_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let f = |s: f64| (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
    let df = |s: f64| -2.0 * (n0 * n0 / (s + r0).powi(3) + z1 * z1 / (s + 1.0).powi(3));
    let mut lo = z1 - 1.0;
    let mut hi = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = lo;
    for _ in 0..200 {
        let fs = f(s);
        if fs == 0.0 {
            return s;
        }
        if fs > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let mut next = s - fs / df(s);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 4.0 * f64::EPSILON * next.abs().max(1.0) {
            return next;
        }
        s = next;
    }
    s
}

/// Initial data `tanh(d0 / (√2 ε))` from a signed distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhProfile {
    pub ellipses: Vec<Ellipse>,
    pub epsilon: f64,
}

impl TanhProfile {
    /// Single ellipse `x1²/0.36 + x2²/0.04 = 1`.
    pub fn single_ellipse(epsilon: f64) -> Self {
        TanhProfile {
            ellipses: vec![Ellipse::new([0.0, 0.0], 0.6, 0.2)],
            epsilon,
        }
    }

    /// Two ellipses centred at `(±0.2, 0)` with semi-axes 0.15 and 0.45.
    pub fn two_ellipses(epsilon: f64) -> Self {
        TanhProfile {
            ellipses: vec![Ellipse::new([-0.2, 0.0], 0.15, 0.45), Ellipse::new([0.2, 0.0], 0.15, 0.45)],
            epsilon,
        }
    }

    /// `min_k d_k(p)`
    pub fn signed_distance(&self, p: Point) -> f64 {
        self.ellipses
            .iter()
            .map(|e| e.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.signed_distance(p) / (std::f64::consts::SQRT_2 * self.epsilon)).tanh()
    }
}

/// `(t, (u, 1))` per snapshot.
pub fn mass_series(disc: &Discretization, snapshots: &[Snapshot]) -> Vec<(f64, f64)> {
    snapshots.iter().map(|s| (s.time, disc.mass(&s.u))).collect()
}

/// `(t, J(u))` per snapshot.
pub fn energy_series(disc: &Discretization, snapshots: &[Snapshot], epsilon: f64) -> Vec<(f64, f64)> {
    snapshots.iter().map(|s| (s.time, disc.energy(&s.u, epsilon))).collect()
}

/// Columns `t,x1a,x2a,x1b,x2b`.
pub fn write_level_sets<W: Write>(w: W, sets: &[LevelSet]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "x1a", "x2a", "x1b", "x2b"])?;
    for set in sets {
        for s in &set.segments {
            wr.serialize((set.time, s[0][0], s[0][1], s[1][0], s[1][1]))?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Columns `t,mass`.
pub fn write_mass_series<W: Write>(w: W, series: &[(f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "mass"])?;
    for row in series {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Columns `t,energy,stderr`.
pub fn write_energy_series<W: Write>(w: W, series: &[(f64, f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "energy", "stderr"])?;
    for row in series {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;

    /// Distance to the ellipse by dense angular sampling followed by golden-section refinement.
    fn brute_distance(e: &Ellipse, p: Point) -> f64 {
        let dist = |t: f64| {
            (p[0] - e.center[0] - e.semi_x * t.cos()).hypot(p[1] - e.center[1] - e.semi_y * t.sin())
        };
        let n = 100_000;
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let k = (0..n).min_by(|&a, &b| dist(a as f64 * step).total_cmp(&dist(b as f64 * step))).unwrap();
        let (mut a, mut b) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if dist(c) < dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        dist(0.5 * (a + b))
    }

    #[test]
    fn ellipse_distance_matches_brute_force() {
        let e = Ellipse::new([0.0, 0.0], 0.6, 0.2);
        let f = Ellipse::new([0.2, 0.0], 0.15, 0.45);
        for p in [
            [0.0, 0.0],
            [0.3, 0.1],
            [0.99, 0.99],
            [-0.7, 0.05],
            [0.1, -0.5],
            [0.59, 0.0],
            [0.0, 0.19],
            [0.55, 0.15],
            [-0.2, 0.3],
        ] {
            for el in [&e, &f] {
                let sd = el.signed_distance(p);
                let bd = brute_distance(el, p);
                assert!((sd.abs() - bd).abs() < 1e-10, "{p:?}: {sd} vs {bd}");
            }
        }
        assert!(e.signed_distance([0.0, 0.0]) < 0.0);
        assert!((e.signed_distance([0.0, 0.0]) + 0.2).abs() < 1e-15);
        assert!(e.signed_distance([0.9, 0.0]) > 0.0);
    }

    #[test]
    fn tanh_initial_data() {
        let u = TanhProfile::single_ellipse(0.01);
        let v = u.eval([0.0, 0.0]);
        assert!(v > -1.0 && v < 0.0);
        assert!(u.eval([0.99, 0.99]).abs() > 0.999);
        let w = TanhProfile::two_ellipses(0.01);
        assert!(w.eval([0.2, 0.0]) < 0.0 && w.eval([-0.2, 0.0]) < 0.0);
        assert!(w.eval([0.0, 0.0]) > 0.0);
        assert!((w.signed_distance([0.0, 0.0]) - 0.05).abs() < 1e-14);
    }

    #[test]
    fn mean_field_cases() {
        let a = vec![1.0, -2.0, 3.0];
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(mean_field(&[&a]).unwrap().values(), &a[..]);
        assert!(mean_field(&[&a, &b]).unwrap().iter().all(|v| *v == 0.0));
        let c = vec![[2.0; 3], [4.0; 3], [9.0; 3]];
        let refs: Vec<&[f64]> = c.iter().map(|x| &x[..]).collect();
        assert!(mean_field(&refs).unwrap().iter().all(|v| *v == 5.0));
        assert!(mean_field(&[&a, &a[..2]]).is_err());
        assert!(mean_field(&[]).is_err());
    }

    #[test]
    fn level_set_of_constant_is_empty() {
        let m = build_uniform_mesh(4).unwrap();
        assert!(extract_zero_level_set(&m, &vec![1.0; 25], 0.0).unwrap().is_empty());
    }

    #[test]
    fn level_set_of_a_line() {
        let m = build_uniform_mesh(5).unwrap();
        let f = m.interpolate(|p| p[0] - 0.1);
        let ls = extract_zero_level_set(&m, &f, 0.0).unwrap();
        assert!(!ls.is_empty());
        for s in &ls.segments {
            for p in s {
                assert!((p[0] - 0.1).abs() < 1e-12);
                assert!(m.evaluate(&f, *p).unwrap().abs() < 1e-12);
            }
        }
        // exact vertex zeros are perturbed: the line x1 = 0 on an even grid still yields segments
        let m4 = build_uniform_mesh(4).unwrap();
        let g = m4.interpolate(|p| p[0]);
        let ls = extract_zero_level_set(&m4, &g, 0.0).unwrap();
        assert!(!ls.is_empty());
        assert!(ls.segments.iter().flatten().all(|p| p[0].abs() <= m4.h()));
    }

    #[test]
    fn level_set_of_the_ellipse_profile() {
        let m = build_uniform_mesh(64).unwrap();
        let prof = TanhProfile::single_ellipse(0.02);
        let f = m.interpolate(|p| prof.eval(p));
        let ls = extract_zero_level_set(&m, &f, 0.0).unwrap();
        let e = Ellipse::new([0.0, 0.0], 0.6, 0.2);
        for s in &ls.segments {
            for p in s {
                assert!(e.signed_distance(*p).abs() < m.h());
            }
        }
    }

    #[test]
    fn hausdorff_cases() {
        let a = LevelSet { time: 0.0, segments: vec![[[0.0, 0.0], [1.0, 0.0]]] };
        let b = LevelSet { time: 0.0, segments: vec![[[0.0, 0.5], [1.0, 0.5]]] };
        assert!((hausdorff_distance(&a, &b, 8) - 0.5).abs() < 1e-15);
        assert_eq!(hausdorff_distance(&a, &a, 8), 0.0);
        let e = LevelSet { time: 0.0, segments: vec![] };
        assert_eq!(hausdorff_distance(&e, &e, 8), 0.0);
        assert!(hausdorff_distance(&a, &e, 8).is_infinite());
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_level_sets(&mut buf, &[LevelSet { time: 0.5, segments: vec![[[0.0, 1.0], [2.0, 3.0]]] }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x1a,x2a,x1b,x2b\n0.5,0.0,1.0,2.0,3.0\n");
        let mut buf = Vec::new();
        write_mass_series(&mut buf, &[(0.0, 1.0)]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,mass\n"));
        let mut buf = Vec::new();
        write_energy_series(&mut buf, &[(0.0, 1.0, 0.1)]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,energy,stderr\n"));
    }
}
