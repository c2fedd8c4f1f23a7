//! Manufactured solution, orthotropic error functionals and convergence rates.

use crate::error::{Error, Result};
use crate::fespace::{ElementKind, FeFunction};
use crate::fespace::quadrature::QuadratureRule;
use crate::nfunc::{conjugate_exponent, GrowthLaw};

/// Default quadrature degree for error integrals.
pub const ERROR_DEGREE: usize = 5;
/// Each cell is split uniformly into `m²` pieces for error integrals: the
/// integrands have kinks where a partial derivative of the error changes sign.
pub const ERROR_SUBDIVISIONS: usize = 4;

/// `u(x) = |x₁|^{q₁}/q₁ − |x₂|^{q₂}/q₂` with `q_i` conjugate to `p_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    q: [f64; 2],
}

impl ManufacturedSolution {
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        for q in [q1, q2] {
            if !(q > 1.0 && q.is_finite()) {
                return Err(Error::Domain(format!("exponent q = {q} must exceed 1")));
            }
        }
        Ok(Self { q: [q1, q2] })
    }

    /// The A-harmonic solution for `law`.
    pub fn for_law(law: &GrowthLaw) -> Result<Self> {
        Self::new(conjugate_exponent(law.p(0))?, conjugate_exponent(law.p(1))?)
    }

    pub fn q(&self) -> [f64; 2] {
        self.q
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let [q1, q2] = self.q;
        x[0].abs().powf(q1) / q1 - x[1].abs().powf(q2) / q2
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let d = |t: f64, q: f64| if t == 0.0 { 0.0 } else { t.signum() * t.abs().powf(q - 1.0) };
        [d(x[0], self.q[0]), -d(x[1], self.q[1])]
    }
}

pub fn exact_eval(ms: &ManufacturedSolution, x: [f64; 2]) -> f64 {
    ms.eval(x)
}

pub fn exact_grad(ms: &ManufacturedSolution, x: [f64; 2]) -> [f64; 2] {
    ms.grad(x)
}

/// Central-difference approximation of `Σ_i ∂_i A_i(∂_i u)` at `x`.
pub fn strong_residual(ms: &ManufacturedSolution, law: &GrowthLaw, x: [f64; 2], step: f64) -> f64 {
    let mut r = 0.0;
    for i in 0..2 {
        let (mut lo, mut hi) = (x, x);
        lo[i] -= step;
        hi[i] += step;
        r += (law.flux_a(i, ms.grad(hi)[i]) - law.flux_a(i, ms.grad(lo)[i])) / (2.0 * step);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `‖∂_i(u − u_h)‖_{L^{p_i}}`.
    pub e_p: [f64; 2],
    /// `‖V(∇u) − V(∇u_h)‖_{L²}`.
    pub e_v: f64,
    /// `‖‖∇(u − u_h)‖_{ℓ^p}‖_{L^p}`, only when `p₁ = p₂`.
    pub e_comb: Option<f64>,
    pub degree: usize,
    pub subdivisions: usize,
}

pub fn error_norms(u_h: &FeFunction, ms: &ManufacturedSolution, law: &GrowthLaw, degree: usize) -> Result<ErrorReport> {
    error_norms_with(u_h, |x| ms.grad(x), law, degree, ERROR_SUBDIVISIONS)
}

/// [`error_norms`] against an arbitrary exact gradient.
pub fn error_norms_with(
    u_h: &FeFunction,
    grad: impl Fn([f64; 2]) -> [f64; 2],
    law: &GrowthLaw,
    degree: usize,
    subdivisions: usize,
) -> Result<ErrorReport> {
    let space = u_h.space();
    let rule = match space.kind() {
        ElementKind::P1 => QuadratureRule::triangle(degree)?.composite(subdivisions, true),
        ElementKind::Q1 => QuadratureRule::square(degree)?.composite(subdivisions, false),
    };
    let p = [law.p(0), law.p(1)];
    let isotropic = p[0] == p[1];
    let (mut ip, mut iv, mut ic) = ([0.0f64; 2], 0.0f64, 0.0f64);
    for c in 0..space.mesh().num_cells() {
        for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
            let (_, det) = space.physical_grads(c, xi);
            let x = space.map_point(c, xi);
            let gu = grad(x);
            let gh = u_h.grad_in_cell(c, xi);
            let wt = w * det;
            for i in 0..2 {
                let e = (gu[i] - gh[i]).abs();
                ip[i] += wt * e.powf(p[i]);
                let dv = law.natural_v(i, gu[i]) - law.natural_v(i, gh[i]);
                iv += wt * dv * dv;
                if isotropic {
                    ic += wt * e.powf(p[0]);
                }
            }
        }
    }
    Ok(ErrorReport {
        e_p: [ip[0].powf(1.0 / p[0]), ip[1].powf(1.0 / p[1])],
        e_v: iv.sqrt(),
        e_comb: isotropic.then(|| ic.powf(1.0 / p[0])),
        degree,
        subdivisions,
    })
}

/// `ln(e_curr/e_prev) / ln(dim_curr/dim_prev)`.
pub fn eoc(dim_prev: usize, e_prev: f64, dim_curr: usize, e_curr: f64) -> Result<f64> {
    if !(e_prev > 0.0 && e_curr > 0.0) {
        return Err(Error::Domain(format!("rates need positive errors, got {e_prev} and {e_curr}")));
    }
    if dim_prev == 0 || dim_curr <= dim_prev {
        return Err(Error::Domain(format!("dimensions must increase, got {dim_prev} then {dim_curr}")));
    }
    Ok((e_curr / e_prev).ln() / (dim_curr as f64 / dim_prev as f64).ln())
}

/// One table row; every error column may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TableRow {
    pub dim: usize,
    pub e_p1: Option<f64>,
    pub rate_p1: Option<f64>,
    pub e_p2: Option<f64>,
    pub rate_p2: Option<f64>,
    pub e_v: Option<f64>,
    pub rate_v: Option<f64>,
    pub e_comb: Option<f64>,
    pub rate_comb: Option<f64>,
}

impl TableRow {
    pub fn from_report(dim: usize, r: &ErrorReport) -> Self {
        Self {
            dim,
            e_p1: Some(r.e_p[0]),
            e_p2: Some(r.e_p[1]),
            e_v: Some(r.e_v),
            e_comb: r.e_comb,
            ..Self::default()
        }
    }

    pub fn errors(&self) -> [Option<f64>; 4] {
        [self.e_p1, self.e_p2, self.e_v, self.e_comb]
    }

    pub fn rates(&self) -> [Option<f64>; 4] {
        [self.rate_p1, self.rate_p2, self.rate_v, self.rate_comb]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    /// Free-form run description, e.g. mesh pattern and exponents.
    pub meta: String,
    pub rows: Vec<TableRow>,
}

impl ConvergenceTable {
    pub fn new(meta: impl Into<String>) -> Self {
        Self { meta: meta.into(), rows: Vec::new() }
    }

    /// Appends a row, filling its rates from the previous one.
    pub fn push(&mut self, mut row: TableRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if row.dim <= prev.dim {
                return Err(Error::Domain(format!("dimensions must increase, got {} after {}", row.dim, prev.dim)));
            }
            let rate = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => eoc(prev.dim, a, row.dim, b).ok(),
                _ => None,
            };
            row.rate_p1 = rate(prev.e_p1, row.e_p1);
            row.rate_p2 = rate(prev.e_p2, row.e_p2);
            row.rate_v = rate(prev.e_v, row.e_v);
            row.rate_comb = rate(prev.e_comb, row.e_comb);
        } else {
            row.rate_p1 = None;
            row.rate_p2 = None;
            row.rate_v = None;
            row.rate_comb = None;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn row_at_dim(&self, dim: usize) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.dim == dim)
    }
}
