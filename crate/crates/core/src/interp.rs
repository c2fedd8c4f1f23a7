//! Orthotropically stable operators onto lattice P1/Q1 spaces: box-averaged
//! interpolants, dual-basis projections and the nodal transfer between Q1 and P1.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::quadrature::QuadratureRule;
use crate::fespace::{ElementKind, FeFunction, FeSpace};
use crate::linalg::dense_solve;
use crate::mesh::{build_tri, refine_kuhn_half, MeshKind, NodeIndex, StructuredMesh, TrianglePattern};

/// Quadrature degree on grid-aligned pieces of a piecewise polynomial input.
pub const EXACT_DEGREE: usize = 6;
/// Extra subdivision applied when the input has no polynomial structure.
const ANALYTIC_REFINE: usize = 4;

/// Something that can be integrated against local polynomials.
pub trait Field {
    /// Value at `x`; `None` where the field is undefined.
    fn value(&self, x: [f64; 2]) -> Option<f64>;

    /// `Some(m)` when the field is a polynomial of degree at most two on every
    /// triangle obtained by cutting the cells of the uniform `m × m` grid along
    /// both diagonals.
    fn grid(&self) -> Option<usize> {
        None
    }
}

impl<T: Field + ?Sized> Field for &T {
    fn value(&self, x: [f64; 2]) -> Option<f64> {
        (**self).value(x)
    }

    fn grid(&self) -> Option<usize> {
        (**self).grid()
    }
}

/// Closure defined on the closed unit square.
pub struct Analytic<F>(pub F);

impl<F: Fn([f64; 2]) -> f64> Field for Analytic<F> {
    fn value(&self, x: [f64; 2]) -> Option<f64> {
        let eps = 1e-12;
        if x.iter().all(|&t| (-eps..=1.0 + eps).contains(&t)) {
            Some((self.0)(x))
        } else {
            None
        }
    }
}

impl Field for FeFunction {
    fn value(&self, x: [f64; 2]) -> Option<f64> {
        self.eval(x)
    }

    fn grid(&self) -> Option<usize> {
        let mesh = self.space().mesh();
        match mesh.kind() {
            MeshKind::Triangle(TrianglePattern::UnionJack) => Some(2 * mesh.n()),
            _ => Some(mesh.n()),
        }
    }
}

/// Repeated odd reflection across the sides of the unit square.
pub struct OddReflection<F>(pub F);

impl<F: Field> Field for OddReflection<F> {
    fn value(&self, x: [f64; 2]) -> Option<f64> {
        let mut y = x;
        let mut sign = 1.0;
        for t in &mut y {
            if !t.is_finite() {
                return None;
            }
            loop {
                if *t < 0.0 {
                    *t = -*t;
                    sign = -sign;
                } else if *t > 1.0 {
                    *t = 2.0 - *t;
                    sign = -sign;
                } else {
                    break;
                }
            }
        }
        self.0.value(y).map(|v| sign * v)
    }

    fn grid(&self) -> Option<usize> {
        self.0.grid()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integration grid and rule for a square region whose sides lie on the `base` grid.
fn integration_plan(w: &dyn Field, base: usize) -> (usize, QuadratureRule) {
    match w.grid() {
        Some(m) => (base / gcd(base, m) * m, QuadratureRule::triangle_any(EXACT_DEGREE)),
        None => (base * ANALYTIC_REFINE, QuadratureRule::triangle_any(7)),
    }
}

/// `∫ w·g` over `[lo/l, hi/l]²`, cutting each `l`-grid cell along both diagonals.
/// `g` receives the physical point and the centroid of the piece containing it.
fn integrate_region(
    w: &dyn Field,
    l: usize,
    lo: [i64; 2],
    hi: [i64; 2],
    rule: &QuadratureRule,
    g: impl Fn([f64; 2], [f64; 2]) -> f64,
) -> Result<f64> {
    let lf = l as f64;
    let area = 0.25 / (lf * lf);
    let mut total = 0.0;
    for b in lo[1]..hi[1] {
        for a in lo[0]..hi[0] {
            let c = [(2 * a + 1) as f64 / (2.0 * lf), (2 * b + 1) as f64 / (2.0 * lf)];
            let corners = [
                [a as f64 / lf, b as f64 / lf],
                [(a + 1) as f64 / lf, b as f64 / lf],
                [(a + 1) as f64 / lf, (b + 1) as f64 / lf],
                [a as f64 / lf, (b + 1) as f64 / lf],
            ];
            for e in 0..4 {
                let (p, q) = (corners[e], corners[(e + 1) % 4]);
                let centroid = [(p[0] + q[0] + c[0]) / 3.0, (p[1] + q[1] + c[1]) / 3.0];
                for (&[u, v], &wt) in rule.points.iter().zip(&rule.weights) {
                    let x = [
                        p[0] + u * (q[0] - p[0]) + v * (c[0] - p[0]),
                        p[1] + u * (q[1] - p[1]) + v * (c[1] - p[1]),
                    ];
                    let f = w.value(x).ok_or_else(|| Error::OutsideDomain(format!("({}, {})", x[0], x[1])))?;
                    total += 2.0 * area * wt * f * g(x, centroid);
                }
            }
        }
    }
    Ok(total)
}

fn check_lattice_target(space: &FeSpace) -> Result<()> {
    if !space.mesh().is_lattice() {
        return Err(Error::Mesh(format!(
            "{} meshes carry non-lattice nodes; stable operators need a lattice mesh",
            space.mesh().kind().name()
        )));
    }
    if !space.mesh().is_unit_square() {
        return Err(Error::Mesh("stable operators are defined on the unit square only".into()));
    }
    Ok(())
}

/// `W_k`: mean of `w` over `v(k) + (−h/2, h/2)²` on the lattice with `n` cells per side.
pub fn cell_average(w: &dyn Field, n: usize, k: NodeIndex) -> Result<f64> {
    if n == 0 {
        return Err(Error::Mesh("N must be positive".into()));
    }
    let (l, rule) = integration_plan(w, 2 * n);
    let r = (l / (2 * n)) as i64;
    let lo = [(2 * k[0] as i64 - 1) * r, (2 * k[1] as i64 - 1) * r];
    let hi = [lo[0] + 2 * r, lo[1] + 2 * r];
    let h = 1.0 / n as f64;
    Ok(integrate_region(w, l, lo, hi, &rule, |_, _| 1.0)? / (h * h))
}

/// `Π_h^{Q,+}` or `Π_h^{P,+}` depending on the target space.
#[derive(Debug, Clone)]
pub struct AveragedInterpolant {
    target: Arc<FeSpace>,
}

impl AveragedInterpolant {
    pub fn new(target: Arc<FeSpace>) -> Result<Self> {
        check_lattice_target(&target)?;
        Ok(Self { target })
    }

    pub fn target(&self) -> &Arc<FeSpace> {
        &self.target
    }

    /// `Σ_{k interior} W_k Λ_{h,k}`; boundary coefficients are zero.
    pub fn apply(&self, w: &dyn Field) -> Result<FeFunction> {
        let mesh = self.target.mesh();
        let mut coeffs = vec![0.0; self.target.num_dofs()];
        for k in mesh.interior_lattice() {
            coeffs[mesh.lattice_node(k)] = cell_average(w, mesh.n(), k)?;
        }
        FeFunction::new(self.target.clone(), coeffs)
    }
}

pub fn apply_averaged(interp: &AveragedInterpolant, w: &dyn Field) -> Result<FeFunction> {
    interp.apply(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualKind {
    /// Piecewise quadratic on the eight `T_{h/2}` simplices around a node.
    Simplicial,
    /// Bilinear on the four cubes around a node.
    Cubic,
}

/// One piece of the reference patch, in units of `h` relative to the node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPiece {
    pub verts: [[f64; 2]; 3],
    /// Vertex coefficients, then the midpoint opposite each vertex; scaled by `h⁻²`.
    pub coeffs: [f64; 6],
}

impl DualPiece {
    fn barycentric(&self, y: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.verts;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((y[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (y[1] - a[1]) - (y[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    fn eval(&self, y: [f64; 2]) -> f64 {
        let l = self.barycentric(y);
        let mut v = 0.0;
        for i in 0..3 {
            v += self.coeffs[i] * l[i] * (2.0 * l[i] - 1.0);
            v += self.coeffs[3 + i] * 4.0 * l[(i + 1) % 3] * l[(i + 2) % 3];
        }
        v
    }
}

/// `Λ_j*` on the lattice with `n` cells per side.
#[derive(Debug, Clone)]
pub struct DualBasisProjector {
    kind: DualKind,
    n: usize,
    pieces: Vec<DualPiece>,
}

/// Simplicial coefficients: node vertex, other vertices, midpoint opposite the node, other midpoints.
pub const SIMPLICIAL_TABLE: [f64; 4] = [36.0, 6.0, 6.0, -1.5];
/// Cubic coefficients of `ρ₀₀, ρ₀₁, ρ₁₀, ρ₁₁` per adjacent cube, scaled by `h⁻²`.
pub const CUBIC_TABLE: [f64; 4] = [4.0, -2.0, -2.0, 1.0];

pub fn build_dual_table(kind: DualKind, mesh: &StructuredMesh) -> Result<DualBasisProjector> {
    if !mesh.is_unit_square() {
        return Err(Error::Mesh("dual bases are defined on the unit square only".into()));
    }
    match kind {
        DualKind::Simplicial => {
            if mesh.kind() != MeshKind::Triangle(TrianglePattern::AlternatingKuhn) {
                return Err(Error::Mismatch(format!(
                    "simplicial dual basis needs an alternating-kuhn mesh, got {}",
                    mesh.kind().name()
                )));
            }
            let pieces = simplicial_pieces()?;
            Ok(DualBasisProjector { kind, n: mesh.n(), pieces })
        }
        DualKind::Cubic => {
            if !mesh.is_quad() {
                return Err(Error::Mismatch(format!("cubic dual basis needs a quad mesh, got {}", mesh.kind().name())));
            }
            validate_cubic()?;
            Ok(DualBasisProjector { kind, n: mesh.n(), pieces: Vec::new() })
        }
    }
}

/// Local P2 Lagrange space on the reference patch: nodes in quarter units of `h`.
struct P2Patch {
    tris: Vec<[[i64; 2]; 3]>,
    nodes: Vec<[i64; 2]>,
}

impl P2Patch {
    fn new(tris: Vec<[[i64; 2]; 3]>) -> Self {
        let mut nodes = Vec::new();
        for t in &tris {
            for i in 0..3 {
                let v = [2 * t[i][0], 2 * t[i][1]];
                let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                for x in [v, [a[0] + b[0], a[1] + b[1]]] {
                    if !nodes.contains(&x) {
                        nodes.push(x);
                    }
                }
            }
        }
        nodes.sort();
        Self { tris, nodes }
    }

    /// Global node index of the six local P2 nodes of triangle `t`.
    fn local_nodes(&self, t: &[[i64; 2]; 3]) -> [usize; 6] {
        let find = |x: [i64; 2]| self.nodes.iter().position(|&y| y == x).expect("node present");
        let mut out = [0; 6];
        for i in 0..3 {
            out[i] = find([2 * t[i][0], 2 * t[i][1]]);
            let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
            out[3 + i] = find([a[0] + b[0], a[1] + b[1]]);
        }
        out
    }
}

fn p2_shape(l: [f64; 3]) -> [f64; 6] {
    let mut s = [0.0; 6];
    for i in 0..3 {
        s[i] = l[i] * (2.0 * l[i] - 1.0);
        s[3 + i] = 4.0 * l[(i + 1) % 3] * l[(i + 2) % 3];
    }
    s
}

/// Solves the local mass system for the dual of the node function and checks it
/// against [`SIMPLICIAL_TABLE`].
fn simplicial_pieces() -> Result<Vec<DualPiece>> {
    let refined = refine_kuhn_half(&build_tri(2, TrianglePattern::AlternatingKuhn)?)?;
    let shape = refined.sigma_shape([1, 1]).ok_or_else(|| Error::Mesh("missing reference patch".into()))?;
    // orient every piece with the node vertex first
    let tris: Vec<[[i64; 2]; 3]> = shape
        .into_iter()
        .map(|t| {
            let r = t.iter().position(|&v| v == [0, 0]).expect("patch pieces touch the node");
            [t[r], t[(r + 1) % 3], t[(r + 2) % 3]]
        })
        .collect();
    let patch = P2Patch::new(tris);
    let dim = patch.nodes.len();
    let rule = QuadratureRule::triangle_any(4);
    let mut mass = vec![vec![0.0; dim]; dim];
    for t in &patch.tris {
        let ids = patch.local_nodes(t);
        // piece area with h = 1, vertices in half units
        let [a, b, c] = t.map(|v| [v[0] as f64 / 2.0, v[1] as f64 / 2.0]);
        let det = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
        for (&[u, v], &wt) in rule.points.iter().zip(&rule.weights) {
            let s = p2_shape([1.0 - u - v, u, v]);
            for i in 0..6 {
                for j in 0..6 {
                    mass[ids[i]][ids[j]] += wt * det * s[i] * s[j];
                }
            }
        }
    }
    let centre = patch.nodes.iter().position(|&x| x == [0, 0]).expect("node at centre");
    let mut rhs = vec![0.0; dim];
    rhs[centre] = 1.0;
    let dual = dense_solve(&mass, &rhs)?;
    let [at_node, other_vertex, opposite_mid, other_mid] = SIMPLICIAL_TABLE;
    let expected = [at_node, other_vertex, other_vertex, opposite_mid, other_mid, other_mid];
    let mut pieces = Vec::with_capacity(patch.tris.len());
    for t in &patch.tris {
        let ids = patch.local_nodes(t);
        let mut coeffs = [0.0; 6];
        for i in 0..6 {
            coeffs[i] = dual[ids[i]];
            if (coeffs[i] - expected[i]).abs() > 1e-10 {
                return Err(Error::Mismatch(format!(
                    "simplicial dual coefficient {i} is {} by mass inversion, table says {}",
                    coeffs[i], expected[i]
                )));
            }
        }
        pieces.push(DualPiece { verts: t.map(|v| [v[0] as f64 / 2.0, v[1] as f64 / 2.0]), coeffs: expected });
    }
    Ok(pieces)
}

/// Q1 mass inversion on the 2×2 block of unit cubes around the origin.
fn validate_cubic() -> Result<()> {
    let idx = |x: i64, y: i64| ((y + 1) * 3 + (x + 1)) as usize;
    let (pts, wts) = crate::fespace::quadrature::gauss_legendre(3);
    let mut mass = vec![vec![0.0; 9]; 9];
    for (cx, cy) in [(-1, -1), (0, -1), (0, 0), (-1, 0)] {
        let corners = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)];
        for (i, &xi) in pts.iter().enumerate() {
            for (j, &yj) in pts.iter().enumerate() {
                let (s, t) = (0.5 * (xi + 1.0), 0.5 * (yj + 1.0));
                let w = 0.25 * wts[i] * wts[j];
                let sh = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                for a in 0..4 {
                    for b in 0..4 {
                        let (ia, ib) = (idx(corners[a].0, corners[a].1), idx(corners[b].0, corners[b].1));
                        mass[ia][ib] += w * sh[a] * sh[b];
                    }
                }
            }
        }
    }
    let mut rhs = vec![0.0; 9];
    rhs[idx(0, 0)] = 1.0;
    let dual = dense_solve(&mass, &rhs)?;
    let checks = [(idx(0, 0), CUBIC_TABLE[0]), (idx(1, 0), CUBIC_TABLE[1]), (idx(0, 1), CUBIC_TABLE[2]), (idx(1, 1), CUBIC_TABLE[3])];
    for (k, expected) in checks {
        if (dual[k] - expected).abs() > 1e-10 {
            return Err(Error::Mismatch(format!("cubic dual coefficient is {} by mass inversion, table says {expected}", dual[k])));
        }
    }
    Ok(())
}

impl DualBasisProjector {
    pub fn kind(&self) -> DualKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Reference pieces of the simplicial patch (empty for the cubic kind).
    pub fn pieces(&self) -> &[DualPiece] {
        &self.pieces
    }

    /// `Λ_j*` at `x`, zero outside `σ_j`.
    pub fn eval(&self, j: NodeIndex, x: [f64; 2]) -> f64 {
        let h = self.h();
        let y = [x[0] / h - j[0] as f64, x[1] / h - j[1] as f64];
        self.eval_reference(y, y) / (h * h)
    }

    /// Unscaled `h²Λ_j*` at the relative point `y`; `hint` selects the piece.
    fn eval_reference(&self, y: [f64; 2], hint: [f64; 2]) -> f64 {
        match self.kind {
            DualKind::Cubic => {
                let (s, t) = (y[0].abs(), y[1].abs());
                if s > 1.0 || t > 1.0 {
                    0.0
                } else {
                    (2.0 - 3.0 * s) * (2.0 - 3.0 * t)
                }
            }
            DualKind::Simplicial => {
                let tol = 1e-12;
                self.pieces
                    .iter()
                    .find(|p| p.barycentric(hint).iter().all(|&l| l >= -tol))
                    .map_or(0.0, |p| p.eval(y))
            }
        }
    }

    fn support_radius(&self) -> usize {
        match self.kind {
            DualKind::Simplicial => 1,
            DualKind::Cubic => 2,
        }
    }

    /// `⟨w, Λ_j*⟩_{σ_j}`.
    pub fn pairing(&self, w: &dyn Field, j: NodeIndex) -> Result<f64> {
        let n = self.n;
        let (l, rule) = integration_plan(w, 2 * n);
        let r = (l / (2 * n)) as i64;
        let rad = self.support_radius() as i64;
        let lo = [(2 * j[0] as i64 - rad) * r, (2 * j[1] as i64 - rad) * r];
        let hi = [lo[0] + 2 * rad * r, lo[1] + 2 * rad * r];
        let h = self.h();
        let rel = |x: [f64; 2]| [x[0] / h - j[0] as f64, x[1] / h - j[1] as f64];
        Ok(integrate_region(w, l, lo, hi, &rule, |x, centroid| self.eval_reference(rel(x), rel(centroid)))? / (h * h))
    }

    /// `Σ_{j interior} ⟨w, Λ_j*⟩ Λ_{h,j}` in `target`.
    pub fn apply(&self, w: &dyn Field, target: &Arc<FeSpace>) -> Result<FeFunction> {
        check_lattice_target(target)?;
        let mesh = target.mesh();
        if mesh.n() != self.n {
            return Err(Error::Mismatch(format!("projector built for N={}, target has N={}", self.n, mesh.n())));
        }
        if self.kind == DualKind::Cubic && target.kind() != ElementKind::Q1 {
            return Err(Error::Mismatch("the cubic dual basis targets Q1 spaces only".into()));
        }
        let mut coeffs = vec![0.0; target.num_dofs()];
        for k in mesh.interior_lattice() {
            coeffs[mesh.lattice_node(k)] = self.pairing(w, k)?;
        }
        FeFunction::new(target.clone(), coeffs)
    }
}

pub fn dual_pairing(proj: &DualBasisProjector, w: &dyn Field, j: NodeIndex) -> Result<f64> {
    proj.pairing(w, j)
}

pub fn apply_projection(proj: &DualBasisProjector, w: &dyn Field, target: &Arc<FeSpace>) -> Result<FeFunction> {
    proj.apply(w, target)
}

fn transfer(v: &FeFunction, target: &Arc<FeSpace>, from: ElementKind, to: ElementKind) -> Result<FeFunction> {
    let src = v.space();
    if src.kind() != from || target.kind() != to {
        return Err(Error::Mismatch(format!("transfer expects {from:?} to {to:?}")));
    }
    check_lattice_target(target)?;
    if src.mesh().n() != target.mesh().n() {
        return Err(Error::Mismatch(format!("lattices N={} and N={}", src.mesh().n(), target.mesh().n())));
    }
    FeFunction::new(target.clone(), v.coeffs().to_vec())
}

/// Same nodal values, read as a P1 function on a lattice triangulation.
pub fn transfer_q_to_p(v: &FeFunction, target: &Arc<FeSpace>) -> Result<FeFunction> {
    transfer(v, target, ElementKind::Q1, ElementKind::P1)
}

pub fn transfer_p_to_q(v: &FeFunction, target: &Arc<FeSpace>) -> Result<FeFunction> {
    transfer(v, target, ElementKind::P1, ElementKind::Q1)
}

/// Exact `⨍_cell |∂_i f|` for P1 or Q1 functions.
pub fn mean_abs_partial(f: &FeFunction, c: usize, i: usize) -> f64 {
    match f.space().kind() {
        ElementKind::P1 => f.grad_in_cell(c, [1.0 / 3.0, 1.0 / 3.0])[i].abs(),
        ElementKind::Q1 => {
            // ∂_i is affine in the other coordinate
            let mut e1 = [0.0; 2];
            e1[1 - i] = 1.0;
            let a = f.grad_in_cell(c, [0.0, 0.0])[i];
            let b = f.grad_in_cell(c, e1)[i];
            mean_abs_affine(a, b)
        }
    }
}

/// `∫₀¹ |a + (b − a)t| dt`.
pub fn mean_abs_affine(a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * (a + b).abs()
    } else {
        0.5 * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// Orthotropic stability margins of `Πw` against `w`, worst over cells and directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMargins {
    /// `max ⨍_T |∂_i Πw| − ⨍_{N_T} |∂_i w|`
    pub excess: f64,
    /// `max ⨍_T |∂_i Πw| / (h⁻² ∫_{N_T} |∂_i w|)`, infinite if a zero patch integral faces a nonzero slope
    pub ratio: f64,
}

/// Margins of `Πw`, with `w` on a mesh whose cells each lie inside one target cell.
pub fn stability_margins(w: &FeFunction, pi_w: &FeFunction) -> Result<StabilityMargins> {
    let fine = w.space().mesh();
    let coarse = pi_w.space().mesh();
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); coarse.num_cells()];
    for f in 0..fine.num_cells() {
        let verts = fine.cell(f);
        let mut c = [0.0; 2];
        for &v in verts {
            let x = fine.coord(v);
            c[0] += x[0] / verts.len() as f64;
            c[1] += x[1] / verts.len() as f64;
        }
        let parent = coarse.locate(c).ok_or_else(|| Error::Mismatch("input mesh leaves the target domain".into()))?;
        if !verts.iter().all(|&v| cell_contains(coarse, parent, fine.coord(v))) {
            return Err(Error::Mismatch("input mesh is not nested in the target mesh".into()));
        }
        parts[parent].push(f);
    }
    let patches = coarse.patches();
    let h2 = coarse.h() * coarse.h();
    let mut out = StabilityMargins { excess: f64::NEG_INFINITY, ratio: 0.0 };
    for t in 0..coarse.num_cells() {
        let patch = patches.patch(t);
        let area: f64 = patch.iter().map(|&k| coarse.cell_area(k).abs()).sum();
        for i in 0..2 {
            let mut mass = 0.0;
            for &k in patch {
                for &f in &parts[k] {
                    mass += mean_abs_partial(w, f, i) * fine.cell_area(f).abs();
                }
            }
            let lhs = mean_abs_partial(pi_w, t, i);
            out.excess = out.excess.max(lhs - mass / area);
            if lhs > 0.0 {
                out.ratio = out.ratio.max(if mass > 0.0 { lhs * h2 / mass } else { f64::INFINITY });
            }
        }
    }
    Ok(out)
}

fn cell_contains(mesh: &StructuredMesh, c: usize, x: [f64; 2]) -> bool {
    let tol = 1e-12;
    if mesh.is_quad() {
        let a = mesh.coord(mesh.cell(c)[0]);
        let h = mesh.h();
        (0..2).all(|d| x[d] >= a[d] - tol && x[d] <= a[d] + h + tol)
    } else {
        mesh.barycentric(c, x).iter().all(|&l| l >= -tol)
    }
}

/// Largest `sup_S |Πw| · h² / ∫_{N_S} |w|` over cells `S` with a nonzero patch integral.
///
/// `∫|w|` uses the cell rule of `degree` composited `m × m` times.
pub fn locality_constant(pi_w: &FeFunction, w: &dyn Field, degree: usize, m: usize) -> Result<f64> {
    let space = pi_w.space();
    let mesh = space.mesh();
    let rule = space.reference_rule(degree)?.composite(m, space.kind() == ElementKind::P1);
    let mut cell_mass = Vec::with_capacity(mesh.num_cells());
    for c in 0..mesh.num_cells() {
        let mut acc = 0.0;
        for (&xi, &wt) in rule.points.iter().zip(&rule.weights) {
            let (_, det) = space.physical_grads(c, xi);
            let x = space.map_point(c, xi);
            let v = w.value(x).ok_or_else(|| Error::Domain(format!("input undefined at ({}, {})", x[0], x[1])))?;
            acc += wt * det * v.abs();
        }
        cell_mass.push(acc);
    }
    let h = mesh.h();
    let patches = mesh.patches();
    let mut worst: f64 = 0.0;
    for s in 0..mesh.num_cells() {
        let mass: f64 = patches.patch(s).iter().map(|&k| cell_mass[k]).sum();
        if mass <= 0.0 {
            continue;
        }
        let sup = mesh.cell(s).iter().map(|&v| pi_w.coeffs()[v].abs()).fold(0.0, f64::max);
        worst = worst.max(sup * h * h / mass);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::interpolate_nodal;
    use crate::mesh::build_quad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kuhn(n: usize) -> Arc<FeSpace> {
        FeSpace::new(build_tri(n, TrianglePattern::AlternatingKuhn).unwrap())
    }

    fn quad(n: usize) -> Arc<FeSpace> {
        FeSpace::new(build_quad(n).unwrap())
    }

    fn random_fe(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng) -> FeFunction {
        let coeffs = (0..space.num_dofs())
            .map(|i| if space.mesh().is_boundary(i) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        FeFunction::new(space.clone(), coeffs).unwrap()
    }

    fn hat(space: &Arc<FeSpace>, k: NodeIndex) -> FeFunction {
        let mut f = FeFunction::zeros(space.clone());
        f.coeffs_mut()[space.mesh().lattice_node(k)] = 1.0;
        f
    }

    #[test]
    fn averages_of_simple_fields() {
        assert!((cell_average(&Analytic(|_| 2.5), 4, [1, 3]).unwrap() - 2.5).abs() < 1e-14);
        assert!((cell_average(&Analytic(|x: [f64; 2]| x[0]), 4, [2, 2]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn average_of_fine_q1_matches_composite_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fine = quad(8);
        let w = random_fe(&fine, &mut rng);
        for k in [[1, 1], [2, 3], [3, 2]] {
            // box around v(k) on the N=4 lattice covers four whole fine cells
            let mut oracle = 0.0;
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (ci, cj) = (2 * k[0] - 1 + di, 2 * k[1] - 1 + dj);
                let cell = cj * 8 + ci;
                let v: f64 = fine.mesh().cell(cell).iter().map(|&n| w.coeffs()[n]).sum();
                oracle += v / 4.0;
            }
            oracle /= 4.0;
            assert!((cell_average(&w, 4, k).unwrap() - oracle).abs() < 1e-13);
        }
    }

    #[test]
    fn averages_outside_domain_fail_without_extension() {
        let f = Analytic(|_: [f64; 2]| 1.0);
        assert!(matches!(cell_average(&f, 4, [0, 2]), Err(Error::OutsideDomain(_))));
        assert!((cell_average(&OddReflection(&f), 4, [0, 2]).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn averaged_interpolant_zero_and_positive() {
        for target in [quad(6), kuhn(6)] {
            let pi = AveragedInterpolant::new(target.clone()).unwrap();
            let zero = pi.apply(&Analytic(|_| 0.0)).unwrap();
            assert!(zero.coeffs().iter().all(|&c| c == 0.0));
            let fine = FeSpace::new(target.mesh().clone());
            let w = hat(&fine, [3, 2]);
            let out = pi.apply(&w).unwrap();
            assert!(out.coeffs().iter().all(|&c| c >= 0.0));
            assert!(out.coeffs().iter().any(|&c| c > 0.0));
        }
        let uj = FeSpace::new(build_tri(4, TrianglePattern::UnionJack).unwrap());
        assert!(AveragedInterpolant::new(uj).is_err());
    }

    #[test]
    fn boundary_cells_reproduce_linear_in_x1() {
        let n = 8;
        let q = 1.7;
        let target = quad(n);
        let out = AveragedInterpolant::new(target.clone()).unwrap().apply(&Analytic(|x: [f64; 2]| q * x[0])).unwrap();
        for j in 1..n - 1 {
            let c = j * n;
            for &v in target.mesh().cell(c) {
                let x = target.mesh().coord(v);
                assert!((out.coeffs()[v] - q * x[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tables_build_and_reject_wrong_meshes() {
        let p = build_dual_table(DualKind::Simplicial, &build_tri(4, TrianglePattern::AlternatingKuhn).unwrap()).unwrap();
        assert_eq!(p.pieces().len(), 8);
        let area: f64 = p
            .pieces()
            .iter()
            .map(|q| {
                let [a, b, c] = q.verts;
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
            })
            .sum();
        assert!((area - 1.0).abs() < 1e-15);
        assert!(build_dual_table(DualKind::Cubic, &build_quad(4).unwrap()).is_ok());
        assert!(build_dual_table(DualKind::Simplicial, &build_quad(4).unwrap()).is_err());
        assert!(build_dual_table(DualKind::Simplicial, &build_tri(4, TrianglePattern::Boxslash).unwrap()).is_err());
        assert!(build_dual_table(DualKind::Cubic, &build_tri(4, TrianglePattern::AlternatingKuhn).unwrap()).is_err());
    }

    #[test]
    fn biorthogonal_against_lattice_hats() {
        let n = 4;
        let proj_s = build_dual_table(DualKind::Simplicial, &build_tri(n, TrianglePattern::AlternatingKuhn).unwrap()).unwrap();
        let proj_c = build_dual_table(DualKind::Cubic, &build_quad(n).unwrap()).unwrap();
        let j = [2, 2];
        for (proj, spaces) in [(&proj_s, vec![quad(n), kuhn(n)]), (&proj_c, vec![quad(n)])] {
            for space in spaces {
                for m in space.mesh().interior_lattice() {
                    let val = proj.pairing(&hat(&space, m), j).unwrap();
                    let expected = if m == j { 1.0 } else { 0.0 };
                    assert!((val - expected).abs() < 1e-12, "{:?} {m:?} {val}", proj.kind());
                }
            }
        }
    }

    #[test]
    fn cubic_table_scale_on_half_mesh() {
        let space = quad(2);
        let proj = build_dual_table(DualKind::Cubic, space.mesh()).unwrap();
        let one = proj.pairing(&hat(&space, [1, 1]), [1, 1]).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        // the factor 16/h² would overshoot by exactly sixteen
        assert!((16.0 * one - 16.0).abs() < 1e-10);
    }

    #[test]
    fn dual_sup_bound() {
        let proj = build_dual_table(DualKind::Simplicial, &build_tri(8, TrianglePattern::AlternatingKuhn).unwrap()).unwrap();
        let h = proj.h();
        let mut sup = 0.0f64;
        for a in -50..=50 {
            for b in -50..=50 {
                let x = [0.5 + a as f64 * h / 100.0, 0.5 + b as f64 * h / 100.0];
                sup = sup.max(proj.eval([4, 4], x).abs());
            }
        }
        assert!((sup * h * h - 36.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_pairing_vanishes_for_odd_extension() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let proj = build_dual_table(DualKind::Simplicial, &build_tri(n, TrianglePattern::AlternatingKuhn).unwrap()).unwrap();
        let cubic = build_dual_table(DualKind::Cubic, &build_quad(n).unwrap()).unwrap();
        let fine = quad(8);
        let mut w = random_fe(&fine, &mut rng);
        for (i, c) in w.coeffs_mut().iter_mut().enumerate() {
            if fine.mesh().is_boundary(i) {
                *c = 0.0;
            }
        }
        for j in [[0, 2], [4, 1], [2, 0], [1, 4], [0, 0], [4, 4]] {
            assert!(matches!(proj.pairing(&w, j), Err(Error::OutsideDomain(_))));
            assert!(proj.pairing(&OddReflection(&w), j).unwrap().abs() < 1e-13);
            assert!(cubic.pairing(&OddReflection(&w), j).unwrap().abs() < 1e-13);
        }
        let smooth = Analytic(|x: [f64; 2]| (x[0] * 2.1).sin() + x[1] * x[1]);
        assert!(proj.pairing(&OddReflection(&smooth), [0, 3]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn projections_are_idempotent_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let proj = build_dual_table(DualKind::Simplicial, &build_tri(n, TrianglePattern::AlternatingKuhn).unwrap()).unwrap();
        let cubic = build_dual_table(DualKind::Cubic, &build_quad(n).unwrap()).unwrap();
        for (pr, target) in [(&proj, quad(n)), (&proj, kuhn(n)), (&cubic, quad(n))] {
            let v = random_fe(&target, &mut rng);
            let out = pr.apply(&v, &target).unwrap();
            for (a, b) in out.coeffs().iter().zip(v.coeffs()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(pr.apply(&Analytic(|_| 0.0), &target).unwrap().coeffs().iter().all(|&c| c == 0.0));
            let fine = FeSpace::new(if target.kind() == ElementKind::Q1 {
                build_quad(2 * n).unwrap()
            } else {
                build_tri(2 * n, TrianglePattern::AlternatingKuhn).unwrap()
            });
            let (a, b) = (random_fe(&fine, &mut rng), random_fe(&fine, &mut rng));
            let sum = FeFunction::new(fine.clone(), a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| 2.0 * x - y).collect()).unwrap();
            let (pa, pb, ps) = (pr.apply(&a, &target).unwrap(), pr.apply(&b, &target).unwrap(), pr.apply(&sum, &target).unwrap());
            for k in 0..target.num_dofs() {
                assert!((ps.coeffs()[k] - 2.0 * pa.coeffs()[k] + pb.coeffs()[k]).abs() < 1e-12);
            }
        }
        assert!(cubic.apply(&Analytic(|_| 1.0), &kuhn(n)).is_err());
        assert!(proj.apply(&Analytic(|_| 1.0), &quad(n + 1)).is_err());
    }

    #[test]
    fn transfer_round_trip_and_commutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 5;
        let (q, p) = (quad(n), kuhn(n));
        let xy = interpolate_nodal(&q, |x| x[0] * x[1]).unwrap();
        let moved = transfer_q_to_p(&xy, &p).unwrap();
        for k in 0..q.mesh().num_lattice_nodes() {
            assert_eq!(moved.coeffs()[k], xy.coeffs()[k]);
            assert_eq!(p.mesh().coord(k), q.mesh().coord(k));
        }
        let back = transfer_p_to_q(&moved, &q).unwrap();
        assert_eq!(back.coeffs(), xy.coeffs());
        assert!(transfer_q_to_p(&xy, &kuhn(n + 1)).is_err());
        assert!(transfer_p_to_q(&xy, &q).is_err());

        let proj = build_dual_table(DualKind::Simplicial, p.mesh()).unwrap();
        for _ in 0..20 {
            let (a, b, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0));
            let w = Analytic(move |x: [f64; 2]| (a * x[0] + b * x[1]).sin() + c * x[0] * x[0]);
            let via_q = transfer_q_to_p(&proj.apply(&w, &q).unwrap(), &p).unwrap();
            let direct = proj.apply(&w, &p).unwrap();
            for (u, v) in direct.coeffs().iter().zip(via_q.coeffs()) {
                assert!((u - v).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn degenerate_kernels_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 6;
        let (q, p) = (quad(n), kuhn(n));
        let (mut hits_zero, mut hits_nonzero) = (0, 0);
        for _ in 0..30 {
            // rows or columns of equal values make some partials vanish
            let mut v = random_fe(&q, &mut rng);
            for k2 in 0..=n {
                if rng.gen_bool(0.5) {
                    let base = v.coeffs()[q.mesh().lattice_node([1, k2])];
                    for k1 in 1..n {
                        v.coeffs_mut()[q.mesh().lattice_node([k1, k2])] = base;
                    }
                }
            }
            let vp = transfer_q_to_p(&v, &p).unwrap();
            for c in 0..q.mesh().num_cells() {
                let zero_q = mean_abs_partial(&v, c, 0) < 1e-15;
                let sq = q.mesh().cell_square(c);
                let tris: Vec<usize> = (0..p.mesh().num_cells()).filter(|&t| p.mesh().cell_square(t) == sq).collect();
                let zero_p = tris.iter().all(|&t| mean_abs_partial(&vp, t, 0) < 1e-15);
                assert_eq!(zero_q, zero_p);
                if zero_q {
                    hits_zero += 1;
                } else {
                    hits_nonzero += 1;
                }
            }
        }
        assert!(hits_zero > 0 && hits_nonzero > 0);
    }

    #[test]
    fn abs_affine_mean() {
        assert_eq!(mean_abs_affine(1.0, 3.0), 2.0);
        assert_eq!(mean_abs_affine(-1.0, 1.0), 0.5);
        let (a, b) = (-0.3f64, 1.1f64);
        let m = 200_000;
        let num: f64 = (0..m).map(|k| (a + (b - a) * (k as f64 + 0.5) / m as f64).abs()).sum::<f64>() / m as f64;
        assert!((mean_abs_affine(a, b) - num).abs() < 1e-9);
    }
}
