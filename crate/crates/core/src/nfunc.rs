//! Scalar N-function calculus for the (regularized) power class.
//!
//! `PowerNFunction` is `φ(t) = (δ² + t²)^{p/2} / p`, which reduces to `t^p / p`
//! when `δ = 0`. `GrowthLaw` bundles one such function per coordinate direction
//! and exposes the derived maps used by the discretization: the flux `A_i`, the
//! frozen weight `B_i` with `A_i(t) = B_i(t) t`, the natural distance `V_i`, and
//! the companion N-function `ψ_i` with `ψ_i'(t)² = t φ_i'(t)`.

use crate::error::{Error, Result};

/// Default clamp on `|t|` used by [`GrowthLaw::weight_b`] for `p < 2`, `δ = 0`.
pub const DEFAULT_CLAMP: f64 = 1e-10;

const GAUSS_NODES: usize = 32;
const ADAPTIVE_RTOL: f64 = 1e-10;
const ADAPTIVE_MAX_DEPTH: usize = 40;
// below this t/a ratio the closed-form antiderivative loses digits to cancellation
const CLOSED_FORM_RATIO: f64 = 1e-2;

/// `φ(t) = (δ² + t²)^{p/2} / p` with `p > 1`, `δ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerNFunction {
    p: f64,
    delta: f64,
}

impl PowerNFunction {
    pub fn new(p: f64, delta: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("exponent p = {p} must lie in (1, inf)")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("regularization delta = {delta} must be >= 0")));
        }
        Ok(Self { p, delta })
    }

    /// Unregularized power `t^p / p`.
    pub fn power(p: f64) -> Result<Self> {
        Self::new(p, 0.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        Ok(self.value_unchecked(t))
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        Ok(self.deriv_unchecked(t))
    }

    /// Exact second derivative. For `δ = 0`, `p < 2` it is infinite at `t = 0`.
    pub fn deriv2(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        let (p, d) = (self.p, self.delta);
        if d == 0.0 {
            return Ok((p - 1.0) * t.powf(p - 2.0));
        }
        let r = d * d + t * t;
        Ok(r.powf((p - 4.0) / 2.0) * (d * d + (p - 1.0) * t * t))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        if self.delta == 0.0 {
            t.powf(self.p) / self.p
        } else {
            (self.delta * self.delta + t * t).powf(self.p / 2.0) / self.p
        }
    }

    pub(crate) fn deriv_unchecked(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        if self.delta == 0.0 {
            t.powf(self.p - 1.0)
        } else {
            t * (self.delta * self.delta + t * t).powf((self.p - 2.0) / 2.0)
        }
    }

    /// Doubling ratio `φ(2t) / φ(t)`.
    pub fn doubling_ratio(&self, t: f64) -> Result<f64> {
        check_positive("t", t)?;
        Ok(self.value_unchecked(2.0 * t) / self.value_unchecked(t))
    }

    /// `ψ'(t) = sqrt(t φ'(t))`.
    pub fn psi_deriv(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        Ok((t * self.deriv_unchecked(t)).sqrt())
    }

    /// `ψ(t) = ∫_0^t ψ'(s) ds`; closed form `2/(p+2) t^{(p+2)/2}` when `δ = 0`.
    pub fn psi(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        if self.delta == 0.0 {
            let e = (self.p + 2.0) / 2.0;
            return Ok(t.powf(e) / e);
        }
        Ok(adaptive_integral(&|s| (s * self.deriv_unchecked(s)).sqrt(), 0.0, t))
    }
}

/// Shifted N-function `φ_a` with `φ_a'(t) = t / (a + t) · φ'(a + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedNFunction {
    base: PowerNFunction,
    a: f64,
}

impl ShiftedNFunction {
    pub fn new(base: PowerNFunction, a: f64) -> Result<Self> {
        check_nonneg("shift a", a)?;
        Ok(Self { base, a })
    }

    pub fn base(&self) -> PowerNFunction {
        self.base
    }

    pub fn shift(&self) -> f64 {
        self.a
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        Ok(self.deriv_unchecked(t))
    }

    fn deriv_unchecked(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let s = self.a + t;
        t / s * self.base.deriv_unchecked(s)
    }

    /// `φ_a(t) = ∫_0^t φ_a'(s) ds`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_nonneg("t", t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let (p, a) = (self.base.p, self.a);
        if self.base.delta == 0.0 && t >= CLOSED_FORM_RATIO * a {
            if a == 0.0 {
                return Ok(t.powf(p) / p);
            }
            // ∫_a^{a+t} (u - a) u^{p-2} du
            let anti = |u: f64| u.powf(p) / p - a * u.powf(p - 1.0) / (p - 1.0);
            return Ok(anti(a + t) - anti(a));
        }
        Ok(adaptive_integral(&|s| self.deriv_unchecked(s), 0.0, t))
    }
}

/// Free-function form of `φ(t)`.
pub fn phi_eval(phi: &PowerNFunction, t: f64) -> Result<f64> {
    phi.value(t)
}

pub fn phi_deriv(phi: &PowerNFunction, t: f64) -> Result<f64> {
    phi.deriv(t)
}

pub fn phi_deriv2(phi: &PowerNFunction, t: f64) -> Result<f64> {
    phi.deriv2(t)
}

pub fn shifted_eval(phi: &PowerNFunction, a: f64, t: f64) -> Result<f64> {
    ShiftedNFunction::new(*phi, a)?.value(t)
}

pub fn shifted_deriv(phi: &PowerNFunction, a: f64, t: f64) -> Result<f64> {
    ShiftedNFunction::new(*phi, a)?.deriv(t)
}

/// Hölder conjugate `q = p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("conjugate exponent needs p > 1, got {p}")));
    }
    Ok(p / (p - 1.0))
}

/// Coordinate direction, `0` for `x₁` and `1` for `x₂`.
pub type Direction = usize;

/// Per-coordinate growth `(p_i, δ_i)` for `d = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthLaw {
    phis: [PowerNFunction; 2],
}

impl GrowthLaw {
    pub fn new(p1: f64, p2: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            phis: [PowerNFunction::new(p1, delta)?, PowerNFunction::new(p2, delta)?],
        })
    }

    pub fn from_parts(phis: [PowerNFunction; 2]) -> Self {
        Self { phis }
    }

    /// Orthotropic p-Laplacian with `δ = 0`.
    pub fn orthotropic(p1: f64, p2: f64) -> Result<Self> {
        Self::new(p1, p2, 0.0)
    }

    pub fn phi(&self, i: Direction) -> &PowerNFunction {
        &self.phis[i]
    }

    pub fn p(&self, i: Direction) -> f64 {
        self.phis[i].p
    }

    pub fn delta(&self, i: Direction) -> f64 {
        self.phis[i].delta
    }

    pub fn is_isotropic(&self) -> bool {
        self.phis[0] == self.phis[1]
    }

    /// `A_i(t) = (δ_i² + t²)^{(p_i-2)/2} t`.
    pub fn flux_a(&self, i: Direction, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        t.signum() * self.phis[i].deriv_unchecked(t.abs())
    }

    /// Frozen weight `B_i` of the splitting `A_i(t) = B_i(t) t`.
    ///
    /// For `p_i < 2` and `δ_i = 0` the weight is singular at `0`; `|t|` is then
    /// clamped from below by `clamp`, which must be positive.
    pub fn weight_b(&self, i: Direction, t: f64, clamp: f64) -> Result<f64> {
        let phi = &self.phis[i];
        let e = (phi.p - 2.0) / 2.0;
        if phi.p < 2.0 {
            if phi.delta == 0.0 {
                if !(clamp > 0.0) {
                    return Err(Error::Config(format!(
                        "p = {} < 2 with delta = 0 needs a positive clamp",
                        phi.p
                    )));
                }
                let m = t.abs().max(clamp);
                return Ok((m * m).powf(e));
            }
            return Ok((phi.delta * phi.delta + t * t).powf(e));
        }
        if phi.p == 2.0 {
            return Ok(1.0);
        }
        Ok((phi.delta * phi.delta + t * t).powf(e))
    }

    /// Natural distance `V_i(t) = |t|^{(p_i-2)/2} t`, always evaluated with `δ = 0`.
    pub fn natural_v(&self, i: Direction, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let p = self.phis[i].p;
        t.signum() * t.abs().powf(p / 2.0)
    }

    pub fn psi(&self, i: Direction, t: f64) -> Result<f64> {
        self.phis[i].psi(t)
    }

    pub fn psi_deriv(&self, i: Direction, t: f64) -> Result<f64> {
        self.phis[i].psi_deriv(t)
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be a finite nonnegative number")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be positive")))
    }
}

fn gauss_on(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[(f64, f64)]) -> f64 {
    let (c, r) = ((a + b) / 2.0, (b - a) / 2.0);
    r * nodes.iter().map(|&(x, w)| w * f(c + r * x)).sum::<f64>()
}

/// Adaptive Gauss–Legendre integration with interval bisection.
fn adaptive_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let rule = crate::fespace::quadrature::gauss_legendre(GAUSS_NODES);
    let nodes: Vec<(f64, f64)> = rule.0.into_iter().zip(rule.1).collect();
    fn go(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, nodes: &[(f64, f64)], depth: usize) -> f64 {
        let m = (a + b) / 2.0;
        let left = gauss_on(f, a, m, nodes);
        let right = gauss_on(f, m, b, nodes);
        let sum = left + right;
        if depth >= ADAPTIVE_MAX_DEPTH || (sum - whole).abs() <= ADAPTIVE_RTOL * sum.abs().max(f64::MIN_POSITIVE) {
            return sum;
        }
        go(f, a, m, left, nodes, depth + 1) + go(f, m, b, right, nodes, depth + 1)
    }
    let whole = gauss_on(f, a, b, &nodes);
    go(f, a, b, whole, &nodes, 0)
}
