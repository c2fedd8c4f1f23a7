//! Gauss rules on the reference interval, square `[0,1]²` and triangle
//! `{ξ, η ≥ 0, ξ + η ≤ 1}`.
//!
//! Triangle rules are conical products (collapsed Gauss–Legendre), so every
//! weight is positive and exactness holds for the full polynomial space of the
//! stated total degree.

use crate::error::{Error, Result};

/// Highest degree accepted by the public constructors.
pub const MAX_DEGREE: usize = 7;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre needs at least one node");
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Tensor Gauss rule on `[0,1]²`, exact for `Q_degree`.
    pub fn square(degree: usize) -> Result<Self> {
        check_degree(degree)?;
        Ok(Self::square_any(degree))
    }

    /// Conical-product rule on the reference triangle, exact for `P_degree`.
    pub fn triangle(degree: usize) -> Result<Self> {
        check_degree(degree)?;
        Ok(Self::triangle_any(degree))
    }

    pub(crate) fn square_any(degree: usize) -> Self {
        let n = (degree + 2) / 2;
        let (x, w) = unit_interval(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([x[i], x[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        Self { points, weights, degree }
    }

    pub(crate) fn triangle_any(degree: usize) -> Self {
        // the collapse ξ = u, η = v(1-u) adds one power of (1-u)
        let nu = (degree + 3) / 2;
        let nv = (degree + 2) / 2;
        let (xu, wu) = unit_interval(nu);
        let (xv, wv) = unit_interval(nv);
        let mut points = Vec::with_capacity(nu * nv);
        let mut weights = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let u = xu[i];
                points.push([u, xv[j] * (1.0 - u)]);
                weights.push(wu[i] * wv[j] * (1.0 - u));
            }
        }
        Self { points, weights, degree }
    }

    /// The rule repeated on each of the `m²` congruent pieces of a uniform split.
    pub fn composite(&self, m: usize, triangle: bool) -> Self {
        let m = m.max(1);
        let s = 1.0 / m as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut piece = |o: [f64; 2], e1: [f64; 2], e2: [f64; 2]| {
            for (&[u, v], &w) in self.points.iter().zip(&self.weights) {
                points.push([o[0] + u * e1[0] + v * e2[0], o[1] + u * e1[1] + v * e2[1]]);
                weights.push(w * s * s);
            }
        };
        for j in 0..m {
            for i in 0..m {
                let o = [i as f64 * s, j as f64 * s];
                if !triangle {
                    piece(o, [s, 0.0], [0.0, s]);
                    continue;
                }
                if i + j < m {
                    piece(o, [s, 0.0], [0.0, s]);
                }
                if i + j + 1 < m {
                    piece([o[0] + s, o[1] + s], [-s, 0.0], [0.0, -s]);
                }
            }
        }
        Self { points, weights, degree: self.degree }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of `w · f(point)` on the reference element.
    pub fn apply(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

fn unit_interval(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|t| 0.5 * t).collect())
}

fn check_degree(degree: usize) -> Result<()> {
    if (1..=MAX_DEGREE).contains(&degree) {
        Ok(())
    } else {
        Err(Error::UnsupportedDegree(degree))
    }
}
