//! Preconditioned semi-implicit gradient flow for `−Σ_i ∂_i A_i(∂_i u) = f`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{ElementKind, FeFunction, FeSpace};
use crate::linalg::{cg_iterate, norm, CgConfig, CsrMatrix};
use crate::nfunc::{GrowthLaw, DEFAULT_CLAMP};

/// Rule degree on quadrilaterals; P1 gradients are cellwise constant.
pub const Q1_DEGREE: usize = 4;

pub type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ProblemSpec {
    pub space: Arc<FeSpace>,
    pub law: GrowthLaw,
    /// `None` means `f ≡ 0`.
    pub source: Option<ScalarField>,
    pub dirichlet: ScalarField,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("mesh", &self.space.mesh().kind().name())
            .field("n", &self.space.mesh().n())
            .field("law", &self.law)
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(space: Arc<FeSpace>, law: GrowthLaw, dirichlet: ScalarField) -> Self {
        Self { space, law, source: None, dirichlet }
    }

    pub fn with_source(mut self, f: ScalarField) -> Self {
        self.source = Some(f);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub tau: f64,
    /// Absolute bound on `J(u^{k+1} − u^k)`.
    pub tol: f64,
    pub max_iter: usize,
    pub clamp: f64,
    pub cg: CgConfig,
    /// Also require the max-norm Galerkin residual below this value.
    pub residual_tol: Option<f64>,
    /// Halve `τ` whenever the residual norm grows, at most this many times.
    pub max_halvings: usize,
    /// A stalled inner CG is accepted when its relative residual is below this;
    /// the outer iteration absorbs the remaining error.
    pub cg_floor: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            tol: 1e-10,
            max_iter: 5000,
            clamp: DEFAULT_CLAMP,
            cg: CgConfig::default(),
            residual_tol: None,
            max_halvings: 20,
            cg_floor: 1e-8,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("tau", self.tau)?;
        positive("tol", self.tol)?;
        positive("clamp", self.clamp)?;
        positive("cg floor", self.cg_floor)?;
        if let Some(r) = self.residual_tol {
            positive("residual tolerance", r)?;
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max-iter must be at least 1".into()));
        }
        self.cg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `J(u^{k+1} − u^k)` per outer step.
    pub increments: Vec<f64>,
    pub final_increment: f64,
    pub cg_iterations: usize,
    /// `(iteration, τ)` each time `τ` was set.
    pub tau_schedule: Vec<(usize, f64)>,
    /// Max-norm Galerkin residual over interior basis functions at the returned iterate.
    pub residual: f64,
    pub converged: bool,
}

/// Physical gradients and weights at every quadrature point of every cell.
struct Geometry {
    space: Arc<FeSpace>,
    points: Vec<Vec<QuadPoint>>,
}

struct QuadPoint {
    grads: [[f64; 2]; 4],
    weight: f64,
    x: [f64; 2],
    shape: [f64; 4],
}

impl Geometry {
    fn new(space: &Arc<FeSpace>) -> Self {
        let degree = match space.kind() {
            ElementKind::P1 => 1,
            ElementKind::Q1 => Q1_DEGREE,
        };
        let rule = space.reference_rule(degree).expect("supported degree");
        let points = (0..space.mesh().num_cells())
            .map(|c| {
                rule.points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&xi, &w)| {
                        let (grads, det) = space.physical_grads(c, xi);
                        QuadPoint { grads, weight: w * det, x: space.map_point(c, xi), shape: space.shape_values(xi) }
                    })
                    .collect()
            })
            .collect();
        Self { space: space.clone(), points }
    }

    fn nloc(&self) -> usize {
        self.space.local_dofs()
    }

    fn gradient(&self, c: usize, q: &QuadPoint, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (k, &v) in self.space.mesh().cell(c).iter().enumerate() {
            g[0] += q.grads[k][0] * u[v];
            g[1] += q.grads[k][1] * u[v];
        }
        g
    }

    /// `∫ Σ_i w_i(x) ∂_iφ_a ∂_iφ_b` with per-point direction weights.
    fn assemble(&self, mut weights: impl FnMut(usize, &QuadPoint) -> Result<[f64; 2]>) -> Result<CsrMatrix> {
        let mesh = self.space.mesh();
        let nloc = self.nloc();
        let mut trip = Vec::with_capacity(mesh.num_cells() * nloc * nloc);
        for (c, qps) in self.points.iter().enumerate() {
            let mut local = [[0.0; 4]; 4];
            for q in qps {
                let b = weights(c, q)?;
                for a in 0..nloc {
                    for e in 0..nloc {
                        local[a][e] += q.weight
                            * (b[0] * q.grads[a][0] * q.grads[e][0] + b[1] * q.grads[a][1] * q.grads[e][1]);
                    }
                }
            }
            let verts = mesh.cell(c);
            for a in 0..nloc {
                for e in 0..nloc {
                    trip.push((verts[a], verts[e], local[a][e]));
                }
            }
        }
        CsrMatrix::from_triplets(self.space.num_dofs(), &trip)
    }

    fn load(&self, f: Option<&ScalarField>) -> Vec<f64> {
        let mut out = vec![0.0; self.space.num_dofs()];
        if let Some(f) = f {
            for (c, qps) in self.points.iter().enumerate() {
                let verts = self.space.mesh().cell(c);
                for q in qps {
                    let fx = f(q.x);
                    for a in 0..self.nloc() {
                        out[verts[a]] += q.weight * fx * q.shape[a];
                    }
                }
            }
        }
        out
    }

    fn energy(&self, w: &[f64], law: &GrowthLaw) -> f64 {
        let phi0 = [law.phi(0).value_unchecked(0.0), law.phi(1).value_unchecked(0.0)];
        let mut total = 0.0;
        for (c, qps) in self.points.iter().enumerate() {
            for q in qps {
                let g = self.gradient(c, q, w);
                let mut s = 0.0;
                for i in 0..2 {
                    s += law.phi(i).value_unchecked(g[i].abs()) - phi0[i];
                }
                total += q.weight * s;
            }
        }
        total
    }

    /// `∫ A(∇u)·∇φ_a − ∫ f φ_a` for every node.
    fn residual(&self, u: &[f64], law: &GrowthLaw, load: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = load.iter().map(|v| -v).collect();
        for (c, qps) in self.points.iter().enumerate() {
            let verts = self.space.mesh().cell(c);
            for q in qps {
                let g = self.gradient(c, q, u);
                let a = [law.flux_a(0, g[0]), law.flux_a(1, g[1])];
                for k in 0..self.nloc() {
                    r[verts[k]] += q.weight * (a[0] * q.grads[k][0] + a[1] * q.grads[k][1]);
                }
            }
        }
        r
    }
}

/// Laplacian stiffness over all nodes.
pub fn assemble_stiffness(space: &Arc<FeSpace>) -> CsrMatrix {
    Geometry::new(space).assemble(|_, _| Ok([1.0, 1.0])).expect("indices come from the mesh")
}

/// `∫ Σ_i B_i(∂_i u_k) ∂_iφ_a ∂_iφ_b`.
pub fn assemble_weighted_stiffness(space: &Arc<FeSpace>, u_k: &FeFunction, law: &GrowthLaw, clamp: f64) -> Result<CsrMatrix> {
    check_space(space, u_k)?;
    weighted(&Geometry::new(space), u_k.coeffs(), law, clamp)
}

fn weighted(geo: &Geometry, u: &[f64], law: &GrowthLaw, clamp: f64) -> Result<CsrMatrix> {
    geo.assemble(|c, q| {
        let g = geo.gradient(c, q, u);
        let b = [law.weight_b(0, g[0], clamp)?, law.weight_b(1, g[1], clamp)?];
        if !(b[0].is_finite() && b[1].is_finite()) {
            return Err(Error::NonFinite(format!("weight {b:?} in cell {c}")));
        }
        Ok(b)
    })
}

fn check_space(space: &Arc<FeSpace>, u: &FeFunction) -> Result<()> {
    if !Arc::ptr_eq(space, u.space()) && u.coeffs().len() != space.num_dofs() {
        return Err(Error::Mismatch("function lives on a different space".into()));
    }
    Ok(())
}

/// `J(w) = Σ_i ∫ φ_i(|∂_i w|) − φ_i(0)`.
pub fn energy(space: &Arc<FeSpace>, w: &FeFunction, law: &GrowthLaw) -> Result<f64> {
    check_space(space, w)?;
    Ok(Geometry::new(space).energy(w.coeffs(), law))
}

/// Galerkin residual `∫ A(∇u)·∇φ_a − ∫ f φ_a` for every node (boundary entries included).
pub fn galerkin_residual(spec: &ProblemSpec, u: &FeFunction) -> Result<Vec<f64>> {
    check_space(&spec.space, u)?;
    let geo = Geometry::new(&spec.space);
    Ok(geo.residual(u.coeffs(), &spec.law, &geo.load(spec.source.as_ref())))
}

fn interior_max(space: &FeSpace, r: &[f64]) -> f64 {
    space.interior_dofs().iter().fold(0.0f64, |m, &a| m.max(r[a].abs()))
}

fn interior_norm(space: &FeSpace, r: &[f64]) -> f64 {
    let v: Vec<f64> = space.interior_dofs().iter().map(|&a| r[a]).collect();
    norm(&v)
}

/// Solves `(K/τ + K_B) u^{k+1} = F + (K/τ) u^k` on interior nodes, keeping the
/// boundary entries of `u_k`. Returns the new iterate and the CG iteration count.
pub fn flow_step(
    k: &CsrMatrix,
    k_b: &CsrMatrix,
    load: &[f64],
    u_k: &FeFunction,
    tau: f64,
    cg: &CgConfig,
) -> Result<(FeFunction, usize)> {
    step(k, k_b, load, u_k, tau, cg, None)
}

fn step(
    k: &CsrMatrix,
    k_b: &CsrMatrix,
    load: &[f64],
    u_k: &FeFunction,
    tau: f64,
    cg: &CgConfig,
    floor: Option<f64>,
) -> Result<(FeFunction, usize)> {
    let space = u_k.space();
    let n = space.num_dofs();
    if k.dim() != n || k_b.dim() != n || load.len() != n {
        return Err(Error::Mismatch(format!("system size {} / {} / {} for {n} dofs", k.dim(), k_b.dim(), load.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let m = k.linear_combination(1.0 / tau, k_b, 1.0)?;
    let u = u_k.coeffs();
    // increment form: (K/τ + K_B) d = F − K_B u^k with d = 0 on the boundary
    let kbu = k_b.spmv(u);
    let interior = space.interior_dofs();
    let rhs: Vec<f64> = interior.iter().map(|&a| load[a] - kbu[a]).collect();
    let out = cg_iterate(&m.submatrix(interior), &rhs, vec![0.0; rhs.len()], cg)?;
    if !out.converged && floor.map_or(true, |f| !(out.residual <= f)) {
        return Err(Error::CgNotConverged { iterations: out.iterations, residual: out.residual });
    }
    let mut next = u.to_vec();
    for (&a, &d) in interior.iter().zip(&out.x) {
        next[a] += d;
    }
    Ok((FeFunction::new(space.clone(), next)?, out.iterations))
}

/// Nodal lifting of the Dirichlet data with zero interior values.
pub fn initial_guess(spec: &ProblemSpec) -> Result<FeFunction> {
    let space = &spec.space;
    let mut coeffs = vec![0.0; space.num_dofs()];
    for (a, c) in coeffs.iter_mut().enumerate() {
        if space.mesh().is_boundary(a) {
            let x = space.mesh().coord(a);
            let v = (spec.dirichlet)(x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("boundary value {v} at ({}, {})", x[0], x[1])));
            }
            *c = v;
        }
    }
    FeFunction::new(space.clone(), coeffs)
}

pub fn solve(spec: &ProblemSpec, cfg: &FlowConfig) -> Result<(FeFunction, SolveReport)> {
    solve_from(spec, cfg, initial_guess(spec)?)
}

/// Gradient flow started from `u0`; its boundary entries are used as Dirichlet values.
pub fn solve_from(spec: &ProblemSpec, cfg: &FlowConfig, u0: FeFunction) -> Result<(FeFunction, SolveReport)> {
    cfg.validate()?;
    check_space(&spec.space, &u0)?;
    let space = &spec.space;
    let geo = Geometry::new(space);
    let k = geo.assemble(|_, _| Ok([1.0, 1.0]))?;
    let load = geo.load(spec.source.as_ref());

    let mut tau = cfg.tau;
    let mut halvings = 0;
    let mut report = SolveReport {
        iterations: 0,
        increments: Vec::new(),
        final_increment: f64::INFINITY,
        cg_iterations: 0,
        tau_schedule: vec![(0, tau)],
        residual: f64::INFINITY,
        converged: false,
    };
    let mut u = u0;
    let mut res_norm = interior_norm(space, &geo.residual(u.coeffs(), &spec.law, &load));
    for it in 1..=cfg.max_iter {
        let k_b = weighted(&geo, u.coeffs(), &spec.law, cfg.clamp)?;
        let (next, cg_its) = step(&k, &k_b, &load, &u, tau, &cfg.cg, Some(cfg.cg_floor))?;
        report.cg_iterations += cg_its;
        let diff: Vec<f64> = next.coeffs().iter().zip(u.coeffs()).map(|(a, b)| a - b).collect();
        let inc = geo.energy(&diff, &spec.law);
        if !inc.is_finite() {
            return Err(Error::NonFinite(format!("energy increment at iteration {it}")));
        }
        report.increments.push(inc);
        report.final_increment = inc;
        report.iterations = it;
        u = next;
        let r = geo.residual(u.coeffs(), &spec.law, &load);
        let new_norm = interior_norm(space, &r);
        report.residual = interior_max(space, &r);
        let residual_ok = cfg.residual_tol.map_or(true, |t| report.residual < t);
        if inc < cfg.tol && residual_ok {
            report.converged = true;
            break;
        }
        if new_norm > res_norm && halvings < cfg.max_halvings {
            tau *= 0.5;
            halvings += 1;
            report.tau_schedule.push((it, tau));
        }
        res_norm = new_norm;
    }
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::interpolate_nodal;
    use crate::linalg::dense_solve;
    use crate::mesh::{build_quad, build_tri, TrianglePattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(n: usize) -> Arc<FeSpace> {
        FeSpace::new(build_quad(n).unwrap())
    }

    fn random_interior(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng) -> FeFunction {
        let c = (0..space.num_dofs())
            .map(|a| if space.mesh().is_boundary(a) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        FeFunction::new(space.clone(), c).unwrap()
    }

    fn harmonic_q2() -> ScalarField {
        Arc::new(|x: [f64; 2]| x[0] * x[0] / 2.0 - x[1] * x[1] / 2.0)
    }

    #[test]
    fn q1_stencil() {
        let space = quad(4);
        let k = assemble_stiffness(&space);
        let mesh = space.mesh();
        let centre = mesh.lattice_node([2, 2]);
        for d2 in -1i64..=1 {
            for d1 in -1i64..=1 {
                let nb = mesh.lattice_node([(2 + d1) as usize, (2 + d2) as usize]);
                let expected = if d1 == 0 && d2 == 0 { 8.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((k.get(centre, nb) - expected).abs() < 1e-14);
            }
        }
        assert_eq!(k.row(centre).count(), 9);
    }

    #[test]
    fn p1_rows_sum_to_zero_and_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for space in [
            FeSpace::new(build_tri(5, TrianglePattern::Boxslash).unwrap()),
            FeSpace::new(build_tri(3, TrianglePattern::Cross).unwrap()),
            quad(5),
        ] {
            let k = assemble_stiffness(&space);
            for &a in space.interior_dofs() {
                assert!(k.row(a).map(|e| e.1).sum::<f64>().abs() < 1e-13);
            }
            let x = random_interior(&space, &mut rng);
            let kx = k.spmv(x.coeffs());
            assert!(crate::linalg::dot(x.coeffs(), &kx) > 0.0);
            let y = random_interior(&space, &mut rng);
            let xy = crate::linalg::dot(x.coeffs(), &k.spmv(y.coeffs()));
            let yx = crate::linalg::dot(y.coeffs(), &kx);
            assert!((xy - yx).abs() < 1e-12);
            k.check_symmetric(1e-14).unwrap();
        }
    }

    /// Independent assembly: loops over cells and reference points directly.
    fn dense_weighted(space: &Arc<FeSpace>, u: &FeFunction, law: &GrowthLaw, clamp: f64) -> Vec<Vec<f64>> {
        let n = space.num_dofs();
        let mut m = vec![vec![0.0; n]; n];
        let rule = match space.kind() {
            ElementKind::P1 => space.reference_rule(1).unwrap(),
            ElementKind::Q1 => space.reference_rule(Q1_DEGREE).unwrap(),
        };
        for c in 0..space.mesh().num_cells() {
            let verts = space.mesh().cell(c).to_vec();
            for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
                let g = u.grad_in_cell(c, xi);
                let (grads, det) = space.physical_grads(c, xi);
                for (a, &va) in verts.iter().enumerate() {
                    for (e, &ve) in verts.iter().enumerate() {
                        let mut s = 0.0;
                        for i in 0..2 {
                            s += law.weight_b(i, g[i], clamp).unwrap() * grads[a][i] * grads[e][i];
                        }
                        m[va][ve] += w * det * s;
                    }
                }
            }
        }
        m
    }

    #[test]
    fn weighted_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let law = GrowthLaw::orthotropic(3.0, 1.5).unwrap();
        for space in [quad(4), FeSpace::new(build_tri(4, TrianglePattern::AlternatingKuhn).unwrap())] {
            let u = random_interior(&space, &mut rng);
            let kb = assemble_weighted_stiffness(&space, &u, &law, DEFAULT_CLAMP).unwrap();
            let dense = dense_weighted(&space, &u, &law, DEFAULT_CLAMP);
            let scale = dense.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for (r, row) in dense.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    assert!((kb.get(r, c) - v).abs() <= 1e-12 * scale.max(1.0));
                }
            }
            kb.check_symmetric(1e-13).unwrap();
            for _ in 0..5 {
                let x = random_interior(&space, &mut rng);
                assert!(crate::linalg::dot(x.coeffs(), &kb.spmv(x.coeffs())) >= 0.0);
            }
        }
    }

    #[test]
    fn weighted_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let space = quad(4);
        let u = random_interior(&space, &mut rng);
        let k = assemble_stiffness(&space);
        let kb = assemble_weighted_stiffness(&space, &u, &GrowthLaw::orthotropic(2.0, 2.0).unwrap(), 1e-10).unwrap();
        assert_eq!(k, kb);
        let zero = FeFunction::zeros(space.clone());
        let kb = assemble_weighted_stiffness(&space, &zero, &GrowthLaw::orthotropic(3.0, 2.5).unwrap(), 1e-10).unwrap();
        assert_eq!(kb.nnz(), 0);
        let err = assemble_weighted_stiffness(&space, &zero, &GrowthLaw::orthotropic(1.5, 1.5).unwrap(), 0.0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn energy_examples() {
        let space = quad(4);
        let x1 = interpolate_nodal(&space, |x| x[0]).unwrap();
        let zero = FeFunction::zeros(space.clone());
        assert_eq!(energy(&space, &zero, &GrowthLaw::orthotropic(1.5, 3.0).unwrap()).unwrap(), 0.0);
        assert!((energy(&space, &x1, &GrowthLaw::orthotropic(2.0, 2.0).unwrap()).unwrap() - 0.5).abs() < 1e-14);
        assert!((energy(&space, &x1, &GrowthLaw::orthotropic(3.0, 1.5).unwrap()).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        let reg = GrowthLaw::new(3.0, 3.0, 0.5).unwrap();
        assert!(energy(&space, &zero, &reg).unwrap().abs() < 1e-15);
    }

    fn direct_linear(space: &Arc<FeSpace>, g: &ScalarField) -> Vec<f64> {
        let k = assemble_stiffness(space);
        let lifted = {
            let mut v = vec![0.0; space.num_dofs()];
            for (a, x) in v.iter_mut().enumerate() {
                if space.mesh().is_boundary(a) {
                    *x = g(space.mesh().coord(a));
                }
            }
            v
        };
        let kl = k.spmv(&lifted);
        let interior = space.interior_dofs();
        let rhs: Vec<f64> = interior.iter().map(|&a| -kl[a]).collect();
        let x = dense_solve(&k.submatrix(interior).to_dense(), &rhs).unwrap();
        let mut out = lifted;
        for (&a, &v) in interior.iter().zip(&x) {
            out[a] = v;
        }
        out
    }

    #[test]
    fn cg_matches_dense_on_q1_stiffness() {
        let space = quad(8);
        let k = assemble_stiffness(&space).submatrix(space.interior_dofs());
        let b: Vec<f64> = (0..k.dim()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let cg = crate::linalg::cg_solve(&k, &b, &CgConfig::default()).unwrap();
        let d = dense_solve(&k.to_dense(), &b).unwrap();
        for (x, y) in cg.x.iter().zip(&d) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn large_tau_step_is_linear_solve() {
        let space = FeSpace::new(build_tri(6, TrianglePattern::Boxslash).unwrap());
        let law = GrowthLaw::orthotropic(2.0, 2.0).unwrap();
        let g: ScalarField = Arc::new(|x: [f64; 2]| (x[0] + 0.3).sin() * x[1].exp());
        let spec = ProblemSpec::new(space.clone(), law, g.clone());
        let u0 = initial_guess(&spec).unwrap();
        let k = assemble_stiffness(&space);
        let kb = assemble_weighted_stiffness(&space, &u0, &law, 1e-10).unwrap();
        let (u1, _) = flow_step(&k, &kb, &vec![0.0; space.num_dofs()], &u0, 1e12, &CgConfig::default()).unwrap();
        let direct = direct_linear(&space, &g);
        for (a, b) in u1.coeffs().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-8);
        }
        // the linear solution is a fixed point for any τ
        let sol = FeFunction::new(space.clone(), direct.clone()).unwrap();
        let (again, _) = flow_step(&k, &kb, &vec![0.0; space.num_dofs()], &sol, 1.0, &CgConfig::default()).unwrap();
        for (a, b) in again.coeffs().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        for (p1, p2) in [(1.5, 1.5), (3.0, 1.5), (2.0, 2.0)] {
            let space = quad(5);
            let spec = ProblemSpec::new(space, GrowthLaw::orthotropic(p1, p2).unwrap(), Arc::new(|_| 0.0));
            let (u, rep) = solve(&spec, &FlowConfig::default()).unwrap();
            assert!(u.coeffs().iter().all(|&c| c == 0.0));
            assert_eq!(rep.iterations, 1);
            assert!(rep.converged);
        }
    }

    #[test]
    fn linear_case_matches_harmonic_interpolant() {
        for n in [4, 8] {
            let space = quad(n);
            let spec = ProblemSpec::new(space.clone(), GrowthLaw::orthotropic(2.0, 2.0).unwrap(), harmonic_q2());
            let cfg = FlowConfig { tol: 1e-24, residual_tol: Some(1e-12), ..FlowConfig::default() };
            let (u, rep) = solve(&spec, &cfg).unwrap();
            assert!(rep.converged);
            let exact = interpolate_nodal(&space, |x| x[0] * x[0] / 2.0 - x[1] * x[1] / 2.0).unwrap();
            for (a, b) in u.coeffs().iter().zip(exact.coeffs()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nonlinear_flow_reduces_residual() {
        let space = FeSpace::new(build_tri(8, TrianglePattern::Boxslash).unwrap());
        for (p1, p2) in [(3.0, 1.5), (1.5, 1.5), (3.0, 3.0)] {
            let q = [p1 / (p1 - 1.0), p2 / (p2 - 1.0)];
            let g: ScalarField = Arc::new(move |x: [f64; 2]| x[0].powf(q[0]) / q[0] - x[1].powf(q[1]) / q[1]);
            let spec = ProblemSpec::new(space.clone(), GrowthLaw::orthotropic(p1, p2).unwrap(), g);
            let cfg = FlowConfig { tol: 1e-14, residual_tol: Some(1e-9), ..FlowConfig::default() };
            let (u, rep) = solve(&spec, &cfg).unwrap();
            assert!(rep.converged, "{p1} {p2}: {rep:?}");
            assert!(rep.increments.iter().all(|v| v.is_finite()));
            let r = galerkin_residual(&spec, &u).unwrap();
            assert!(interior_max(&space, &r) < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig { tau: 0.0, ..FlowConfig::default() }.validate().is_err());
        assert!(FlowConfig { max_iter: 0, ..FlowConfig::default() }.validate().is_err());
        assert!(FlowConfig { residual_tol: Some(-1.0), ..FlowConfig::default() }.validate().is_err());
        assert!(FlowConfig::default().validate().is_ok());
    }
}
