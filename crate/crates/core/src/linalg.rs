//! Compressed sparse row matrices and a Jacobi-preconditioned CG solver.

use crate::error::{Error, Result};

/// Dense fallback limit for [`dense_solve`].
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicates, sorts columns and drops entries that are exactly zero.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= dim {
                return Err(Error::OutOfRange { index: r, limit: dim });
            }
            if c >= dim {
                return Err(Error::OutOfRange { index: c, limit: dim });
            }
        }
        let mut counts = vec![0usize; dim + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut tmp = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            tmp[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            let row = &mut tmp[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == c {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    cols.push(c);
                    vals.push(sum);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { dim, row_ptr, cols, vals })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, row_ptr: (0..=dim).collect(), cols: (0..dim).collect(), vals: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Mismatch(format!("dims {} and {}", self.dim, other.dim)));
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim {
            t.extend(self.row(r).map(|(c, v)| (r, c, a * v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, b * v)));
        }
        Self::from_triplets(self.dim, &t)
    }

    /// Principal submatrix on `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &old in keep {
            let mut row: Vec<(usize, f64)> =
                self.row(old).filter(|&(c, _)| map[c] != usize::MAX).map(|(c, v)| (map[c], v)).collect();
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { dim: keep.len(), row_ptr, cols, vals }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.dim]; self.dim];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Entrywise symmetry check relative to the largest absolute entry.
    pub fn check_symmetric(&self, rel_tol: f64) -> Result<()> {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let diff = (v - self.get(c, r)).abs();
                if diff > rel_tol * scale {
                    return Err(Error::NotSymmetric { row: r, col: c, diff });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub rel_tol: f64,
    /// `None` means `10 · dim`.
    pub max_iter: Option<usize>,
    /// Record `½xᵀAx − bᵀx` after every iteration.
    pub record_energy: bool,
    pub check_symmetry: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_iter: None, record_energy: false, check_symmetry: false }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!("CG tolerance {} must lie in (0, 1)", self.rel_tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::Config("CG needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub energies: Vec<f64>,
    pub converged: bool,
}

/// Times the recurrence may claim convergence while the true residual disagrees.
const MAX_RESIDUAL_GAPS: usize = 5;
/// Iterations without a 1% improvement of the best residual before giving up.
const STALL_WINDOW: usize = 200;

pub fn cg_solve(a: &CsrMatrix, b: &[f64], cfg: &CgConfig) -> Result<CgOutcome> {
    cg_solve_from(a, b, vec![0.0; b.len()], cfg)
}

/// Preconditioned CG started from `x0`.
pub fn cg_solve_from(a: &CsrMatrix, b: &[f64], x0: Vec<f64>, cfg: &CgConfig) -> Result<CgOutcome> {
    let out = cg_iterate(a, b, x0, cfg)?;
    if out.converged {
        Ok(out)
    } else {
        Err(Error::CgNotConverged { iterations: out.iterations, residual: out.residual })
    }
}

/// Like [`cg_solve_from`] but returns the last iterate when the tolerance is not met,
/// either because the budget ran out or because rounding stalled the true residual.
pub fn cg_iterate(a: &CsrMatrix, b: &[f64], x0: Vec<f64>, cfg: &CgConfig) -> Result<CgOutcome> {
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n || x0.len() != n {
        return Err(Error::Mismatch(format!("system of size {n}, rhs {}, guess {}", b.len(), x0.len())));
    }
    if cfg.check_symmetry {
        a.check_symmetric(1e-12)?;
    }
    let max_iter = cfg.max_iter.unwrap_or(10 * n.max(1));
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm(b);
    let mut x = x0;
    let energy = |x: &[f64], ax: &[f64]| 0.5 * dot(x, ax) - dot(b, x);
    let mut ax = a.spmv(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut energies = Vec::new();
    if cfg.record_energy {
        energies.push(energy(&x, &ax));
    }
    if bnorm == 0.0 && norm(&r) == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, residual: 0.0, energies, converged: true });
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut res = norm(&r) / scale;
    if res <= cfg.rel_tol {
        return Ok(CgOutcome { x, iterations: 0, residual: res, energies, converged: true });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut gaps = 0;
    let (mut best, mut best_it) = (res, 0);
    for it in 1..=max_iter {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Ok(CgOutcome { x, iterations: it, residual: res, energies, converged: false });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if cfg.record_energy {
            ax = a.spmv(&x);
            energies.push(energy(&x, &ax));
        }
        res = norm(&r) / scale;
        if res < 0.99 * best {
            best = res;
            best_it = it;
        } else if it - best_it > STALL_WINDOW.max(n) {
            let res = norm(&residual(a, &x, b)) / scale;
            return Ok(CgOutcome { x, iterations: it, residual: res, energies, converged: false });
        }
        if res <= cfg.rel_tol {
            // confirm with the true residual to avoid recurrence drift
            let true_r = residual(a, &x, b);
            res = norm(&true_r) / scale;
            if res <= cfg.rel_tol {
                return Ok(CgOutcome { x, iterations: it, residual: res, energies, converged: true });
            }
            gaps += 1;
            if gaps >= MAX_RESIDUAL_GAPS {
                return Ok(CgOutcome { x, iterations: it, residual: res, energies, converged: false });
            }
            r = true_r;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&residual(a, &x, b)) / scale;
    Ok(CgOutcome { x, iterations: max_iter, residual: res, energies, converged: false })
}

/// Gaussian elimination with partial pivoting, for `dim ≤ DENSE_LIMIT`.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if n > DENSE_LIMIT {
        return Err(Error::Config(format!("dense solve limited to {DENSE_LIMIT} unknowns, got {n}")));
    }
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::Mismatch("dense system is not square".into()));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("nonempty pivot range");
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::Singular);
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (x[r] - s) / m[r][r];
    }
    Ok(x)
}

pub fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.spmv(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
