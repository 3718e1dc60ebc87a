//! Integration over a triangle clipped to the disc `|x| < R`, in polar coordinates about
//! the origin.
//!
//! Integrands may steepen without bound as `r -> R` (smooth compactly supported cutoffs).
//! The radial integral therefore uses Gauss-Legendre pieces on a grid graded geometrically
//! toward `R`; the angular integral is adaptive, with breakpoints at the vertex directions
//! and where edges cross the circle.

use std::f64::consts::PI;

use crate::mesh::Point;
use crate::quadrature::gauss_legendre_unit;

/// Finest radial grading step, relative to `R`.
const GRADING_LEVELS: i32 = 24;

#[derive(Debug, Clone)]
pub(crate) struct PolarQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    radius: f64,
    rel_tol: f64,
    max_depth: usize,
}

struct Ray {
    normals: [Point; 3],
    offsets: [f64; 3],
}

impl Ray {
    /// Inward normals `n_e` and offsets `n_e·a_e` such that `x ∈ T` iff `n_e·x ≥ offset_e`.
    fn new(tri: &[Point; 3]) -> Self {
        let orient = (tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
            - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]);
        let sign = if orient >= 0.0 { 1.0 } else { -1.0 };
        let mut normals = [[0.0; 2]; 3];
        let mut offsets = [0.0; 3];
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let n = [-(b[1] - a[1]) * sign, (b[0] - a[0]) * sign];
            normals[e] = n;
            offsets[e] = n[0] * a[0] + n[1] * a[1];
        }
        Ray { normals, offsets }
    }

    /// `[r1, r2]` with `{r u : r1 ≤ r ≤ r2} = T ∩ ray(θ)`, clipped to `[0, rmax]`.
    fn clip(&self, theta: f64, rmax: f64) -> Option<(f64, f64)> {
        let u = [theta.cos(), theta.sin()];
        let (mut lo, mut hi) = (0.0f64, rmax);
        for e in 0..3 {
            let nu = self.normals[e][0] * u[0] + self.normals[e][1] * u[1];
            let c = self.offsets[e];
            let scale = self.normals[e][0].abs() + self.normals[e][1].abs();
            if nu.abs() <= 1e-15 * scale {
                if c > 1e-15 * scale {
                    return None;
                }
            } else if nu > 0.0 {
                lo = lo.max(c / nu);
            } else {
                hi = hi.min(c / nu);
            }
        }
        (hi > lo).then_some((lo, hi))
    }
}

impl PolarQuadrature {
    pub(crate) fn new(points: usize, radius: f64) -> Self {
        let (nodes, weights) = gauss_legendre_unit(points);
        PolarQuadrature {
            nodes,
            weights,
            radius,
            rel_tol: 1e-14,
            max_depth: 40,
        }
    }

    fn gauss<const K: usize>(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> [f64; K]) -> [f64; K] {
        let len = b - a;
        let mut acc = [0.0; K];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = g(a + len * x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc.map(|v| v * len)
    }

    fn radial<const K: usize, F: Fn(Point) -> [f64; K]>(&self, theta: f64, r1: f64, r2: f64, f: &F) -> [f64; K] {
        let (c, s) = (theta.cos(), theta.sin());
        let g = |r: f64| f([r * c, r * s]).map(|v| v * r);
        let mut acc = [0.0; K];
        let mut add = |a: f64, b: f64| {
            if b > a {
                let v = self.gauss(a, b, g);
                for k in 0..K {
                    acc[k] += v[k];
                }
            }
        };
        // breakpoints R - R 2^-k inside (r1, r2), increasing
        let mut left = r1;
        for k in 1..=GRADING_LEVELS {
            let bp = self.radius * (1.0 - 0.5f64.powi(k));
            if bp <= left {
                continue;
            }
            if bp >= r2 {
                break;
            }
            add(left, bp);
            left = bp;
        }
        add(left, r2);
        acc
    }

    fn angular<const K: usize>(&self, a: f64, b: f64, value: &impl Fn(f64) -> [f64; K]) -> [f64; K] {
        self.gauss(a, b, value)
    }

    fn adapt<const K: usize>(
        &self,
        a: f64,
        b: f64,
        whole: [f64; K],
        value: &impl Fn(f64) -> [f64; K],
        tol: f64,
        depth: usize,
    ) -> [f64; K] {
        let m = 0.5 * (a + b);
        let left = self.angular(a, m, value);
        let right = self.angular(m, b, value);
        let mut sum = [0.0; K];
        let mut err = 0.0f64;
        for k in 0..K {
            sum[k] = left[k] + right[k];
            err = err.max((sum[k] - whole[k]).abs());
        }
        if err <= tol || depth == 0 {
            return sum;
        }
        let l = self.adapt(a, m, left, value, 0.5 * tol, depth - 1);
        let r = self.adapt(m, b, right, value, 0.5 * tol, depth - 1);
        let mut out = [0.0; K];
        for k in 0..K {
            out[k] = l[k] + r[k];
        }
        out
    }

    /// `∫_{T ∩ {|x| < R}} f dx`, componentwise.
    pub(crate) fn integrate<const K: usize, F: Fn(Point) -> [f64; K]>(&self, tri: &[Point; 3], f: &F) -> [f64; K] {
        let ray = Ray::new(tri);
        let area = crate::quadrature::triangle_area(tri);
        let diam = tri
            .iter()
            .flat_map(|p| tri.iter().map(move |q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()))
            .fold(0.0, f64::max);
        let tiny = 1e-12 * diam;

        // angular extent of T as seen from the origin
        let inside = ray.normals.iter().zip(&ray.offsets).all(|(n, c)| -c > tiny * (n[0].abs() + n[1].abs()));
        let mut breaks: Vec<f64> = Vec::new();
        let (start, end) = if inside {
            let mut ang: Vec<f64> = tri.iter().map(|p| p[1].atan2(p[0])).collect();
            ang.sort_by(f64::total_cmp);
            breaks.extend(&ang[1..]);
            (ang[0], ang[0] + 2.0 * PI)
        } else {
            let cen = [(tri[0][0] + tri[1][0] + tri[2][0]) / 3.0, (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0];
            let base = cen[1].atan2(cen[0]);
            let rel: Vec<f64> = tri
                .iter()
                .filter(|p| p[0].hypot(p[1]) > tiny)
                .map(|p| base + (cen[0] * p[1] - cen[1] * p[0]).atan2(cen[0] * p[0] + cen[1] * p[1]))
                .collect();
            let lo = rel.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            breaks.extend(rel.iter().copied().filter(|&t| t > lo && t < hi));
            (lo, hi)
        };
        if end - start <= 0.0 {
            return [0.0; K];
        }
        // directions where an edge crosses the circle
        let r = self.radius;
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let d = [b[0] - a[0], b[1] - a[1]];
            let qa = d[0] * d[0] + d[1] * d[1];
            let qb = 2.0 * (a[0] * d[0] + a[1] * d[1]);
            let qc = a[0] * a[0] + a[1] * a[1] - r * r;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc <= 0.0 {
                continue;
            }
            for s in [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)] {
                if s > 0.0 && s < 1.0 {
                    let p = [a[0] + s * d[0], a[1] + s * d[1]];
                    let mut t = p[1].atan2(p[0]);
                    while t < start {
                        t += 2.0 * PI;
                    }
                    while t > start + 2.0 * PI {
                        t -= 2.0 * PI;
                    }
                    if t > start && t < end {
                        breaks.push(t);
                    }
                }
            }
        }
        breaks.push(end);
        breaks.sort_by(f64::total_cmp);

        let value = |theta: f64| match ray.clip(theta, r) {
            Some((r1, r2)) => self.radial(theta, r1, r2, f),
            None => [0.0; K],
        };
        let tol = self.rel_tol * area;
        let mut acc = [0.0; K];
        let mut left = start;
        for &b in &breaks {
            if b - left <= 1e-15 {
                continue;
            }
            let whole = self.angular(left, b, &value);
            let share = tol * (b - left) / (end - start);
            let v = self.adapt(left, b, whole, &value, share, self.max_depth);
            for k in 0..K {
                acc[k] += v[k];
            }
            left = b;
        }
        acc
    }
}
