//! Symmetric quadrature rules on triangles.
//!
//! Rules are stored in barycentric coordinates with weights normalized to sum to one,
//! so `∫_T f ≈ |T| Σ w_q f(x_q)`. Degrees up to 8 use Dunavant's symmetric rules (all
//! weights positive); higher degrees fall back to a collapsed Gauss-Legendre product rule.

use crate::mesh::Point;

#[derive(Debug, Clone)]
pub struct TriangleRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl TriangleRule {
    /// Smallest available rule that integrates polynomials of total degree `degree` exactly.
    pub fn with_degree(degree: usize) -> Self {
        let mut rule = TriangleRule {
            degree,
            points: Vec::new(),
            weights: Vec::new(),
        };
        match degree {
            0 | 1 => rule.push_centroid(1.0),
            2 => rule.push_orbit3(1.0 / 6.0, 1.0 / 3.0),
            3 | 4 => {
                rule.push_orbit3(0.445948490915965, 0.223381589678011);
                rule.push_orbit3(0.091576213509771, 0.109951743655322);
            }
            5 => {
                rule.push_centroid(0.225);
                rule.push_orbit3(0.470142064105115, 0.132394152788506);
                rule.push_orbit3(0.101286507323456, 0.125939180544827);
            }
            6 => {
                rule.push_orbit3(0.249286745170910, 0.116786275726379);
                rule.push_orbit3(0.063089014491502, 0.050844906370207);
                rule.push_orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374);
            }
            7 | 8 => {
                rule.push_centroid(0.144315607677787);
                rule.push_orbit3(0.459292588292723, 0.095091634267285);
                rule.push_orbit3(0.170569307751760, 0.103217370534718);
                rule.push_orbit3(0.050547228317031, 0.032458497623198);
                rule.push_orbit6(0.008394777409958, 0.263112829634638, 0.027230314174435);
            }
            _ => return collapsed_gauss(degree),
        }
        rule
    }

    fn push_centroid(&mut self, w: f64) {
        self.points.push([1.0 / 3.0; 3]);
        self.weights.push(w);
    }

    fn push_orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn push_orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(barycentric point, normalized weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Integrates `f` over the triangle with corners `tri`.
    pub fn integrate<F: FnMut(Point) -> f64>(&self, tri: &[Point; 3], mut f: F) -> f64 {
        let area = triangle_area(tri);
        let mut acc = 0.0;
        for (l, w) in self.iter() {
            acc += w * f(map_point(tri, l));
        }
        acc * area
    }
}

pub(crate) fn triangle_area(tri: &[Point; 3]) -> f64 {
    let [p0, p1, p2] = tri;
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs()
}

pub(crate) fn map_point(tri: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
        l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
    ]
}

/// Gauss-Legendre nodes and weights on `[0,1]`.
pub fn gauss_legendre_unit(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        // Tricomi initial guess, then Newton on P_k.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(k, x);
        dp = if d != 0.0 { d } else { dp };
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Conical product rule exact for total degree `degree` (Duffy collapse of the square).
fn collapsed_gauss(degree: usize) -> TriangleRule {
    let k = degree / 2 + 2;
    let (x, w) = gauss_legendre_unit(k);
    let mut points = Vec::with_capacity(k * k);
    let mut weights = Vec::with_capacity(k * k);
    for (s, ws) in x.iter().zip(&w) {
        for (t, wt) in x.iter().zip(&w) {
            let xi = *s;
            let eta = (1.0 - s) * t;
            points.push([1.0 - xi - eta, xi, eta]);
            // reference area is 1/2, so normalized weight = 2 * ws * wt * (1 - s)
            weights.push(2.0 * ws * wt * (1.0 - s));
        }
    }
    TriangleRule {
        degree,
        points,
        weights,
    }
}
