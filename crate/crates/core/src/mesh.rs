//! Structured meshes of the unit square.
//!
//! Every node lives on the half lattice `(h/2)·ℤ²`, so coordinates are kept as
//! exact integer pairs in units of `h/2` alongside their floating-point values.
//! Lattice nodes `v(k) = h·k` always come first, numbered lexicographically by
//! `(k₂, k₁)`; pattern-specific extra nodes (edge midpoints, cell centers) are
//! appended after them and flagged through [`NodeKind`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Integer node index `k ∈ [0, N]²`.
pub type NodeIndex = [usize; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrianglePattern {
    /// Every square cut along its northeast diagonal.
    Boxslash,
    /// Diagonal orientation alternates checkerboard-style.
    AlternatingKuhn,
    /// Both diagonals plus both midlines, eight triangles per square.
    UnionJack,
    /// Both diagonals, four triangles per square.
    Cross,
}

impl TrianglePattern {
    pub fn name(&self) -> &'static str {
        match self {
            TrianglePattern::Boxslash => "boxslash",
            TrianglePattern::AlternatingKuhn => "alternating-kuhn",
            TrianglePattern::UnionJack => "unionjack",
            TrianglePattern::Cross => "cross",
        }
    }

    /// Triangles per lattice square.
    pub fn cells_per_square(&self) -> usize {
        match self {
            TrianglePattern::Boxslash | TrianglePattern::AlternatingKuhn => 2,
            TrianglePattern::UnionJack => 8,
            TrianglePattern::Cross => 4,
        }
    }

    /// True when every node is a lattice node.
    pub fn is_lattice(&self) -> bool {
        matches!(self, TrianglePattern::Boxslash | TrianglePattern::AlternatingKuhn)
    }
}

impl FromStr for TrianglePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxslash" => Ok(TrianglePattern::Boxslash),
            "alternating-kuhn" | "kuhn" => Ok(TrianglePattern::AlternatingKuhn),
            "unionjack" | "union-jack" => Ok(TrianglePattern::UnionJack),
            "cross" => Ok(TrianglePattern::Cross),
            other => Err(Error::Mesh(format!("unknown triangle pattern '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Quad,
    Triangle(TrianglePattern),
}

impl MeshKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeshKind::Quad => "quad",
            MeshKind::Triangle(p) => p.name(),
        }
    }

    pub fn is_lattice(&self) -> bool {
        match self {
            MeshKind::Quad => true,
            MeshKind::Triangle(p) => p.is_lattice(),
        }
    }
}

impl FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quad" => Ok(MeshKind::Quad),
            other => Ok(MeshKind::Triangle(other.parse()?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Lattice(NodeIndex),
    EdgeMidpoint,
    CellCenter,
}

#[derive(Debug, Clone)]
pub struct StructuredMesh {
    n: usize,
    kind: MeshKind,
    half: Vec<[i64; 2]>,
    coords: Vec<[f64; 2]>,
    node_kind: Vec<NodeKind>,
    boundary: Vec<bool>,
    verts_per_cell: usize,
    cells: Vec<usize>,
    cell_square: Vec<NodeIndex>,
    origin: f64,
    side: f64,
}

impl StructuredMesh {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    /// The same lattice mapped affinely onto `(lo, hi)²`.
    pub fn on_box(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Mesh(format!("box ({lo}, {hi}) is empty or not finite")));
        }
        let den = 2.0 * self.n as f64;
        let side = hi - lo;
        self.coords = self.half.iter().map(|p| [lo + side * p[0] as f64 / den, lo + side * p[1] as f64 / den]).collect();
        self.origin = lo;
        self.side = side;
        Ok(self)
    }

    /// Lower corner and side length of the square the mesh covers.
    pub fn bounds(&self) -> (f64, f64) {
        (self.origin, self.side)
    }

    pub fn is_unit_square(&self) -> bool {
        self.origin == 0.0 && self.side == 1.0
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn pattern(&self) -> Option<TrianglePattern> {
        match self.kind {
            MeshKind::Quad => None,
            MeshKind::Triangle(p) => Some(p),
        }
    }

    pub fn is_quad(&self) -> bool {
        self.kind == MeshKind::Quad
    }

    pub fn is_lattice(&self) -> bool {
        self.kind.is_lattice()
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cell_square.len()
    }

    pub fn verts_per_cell(&self) -> usize {
        self.verts_per_cell
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Node position in units of `h/2`.
    pub fn half_coord(&self, node: usize) -> [i64; 2] {
        self.half[node]
    }

    pub fn node_kind(&self, node: usize) -> NodeKind {
        self.node_kind[node]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let s = self.verts_per_cell;
        &self.cells[c * s..(c + 1) * s]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.verts_per_cell)
    }

    /// Lattice square `(k₁, k₂)` containing cell `c`.
    pub fn cell_square(&self, c: usize) -> NodeIndex {
        self.cell_square[c]
    }

    /// Global number of the lattice node `v(k)`.
    pub fn lattice_node(&self, k: NodeIndex) -> usize {
        k[1] * (self.n + 1) + k[0]
    }

    pub fn num_lattice_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn lattice_index(&self, node: usize) -> Option<NodeIndex> {
        match self.node_kind[node] {
            NodeKind::Lattice(k) => Some(k),
            _ => None,
        }
    }

    /// Interior lattice indices `N⁰`, ordered by `(k₂, k₁)`.
    pub fn interior_lattice(&self) -> Vec<NodeIndex> {
        let n = self.n;
        let mut out = Vec::with_capacity((n - 1) * (n - 1));
        for k2 in 1..n {
            for k1 in 1..n {
                out.push([k1, k2]);
            }
        }
        out
    }

    /// Signed cell area (positive for counter-clockwise ordering).
    pub fn cell_area(&self, c: usize) -> f64 {
        let v = self.cell(c);
        let mut twice = 0.0;
        for a in 0..v.len() {
            let p = self.coords[v[a]];
            let q = self.coords[v[(a + 1) % v.len()]];
            twice += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * twice
    }

    /// Twice the signed area in exact `(h/2)²` units.
    pub fn cell_area_exact(&self, c: usize) -> i64 {
        let v = self.cell(c);
        let mut twice = 0;
        for a in 0..v.len() {
            let p = self.half[v[a]];
            let q = self.half[v[(a + 1) % v.len()]];
            twice += p[0] * q[1] - q[0] * p[1];
        }
        twice
    }

    /// Cell containing `x` (closed cells; ties resolved toward the lowest id).
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let eps = 1e-12;
        let y = [(x[0] - self.origin) / self.side, (x[1] - self.origin) / self.side];
        if y[0] < -eps || y[0] > 1.0 + eps || y[1] < -eps || y[1] > 1.0 + eps {
            return None;
        }
        let n = self.n;
        let i = ((y[0] * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let j = ((y[1] * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let per = self.cells_per_square();
        let first = (j * n + i) * per;
        if self.is_quad() {
            return Some(first);
        }
        let mut best = (first, f64::NEG_INFINITY);
        for c in first..first + per {
            let m = self.min_barycentric(c, x);
            if m >= -1e-12 {
                return Some(c);
            }
            if m > best.1 {
                best = (c, m);
            }
        }
        Some(best.0)
    }

    fn cells_per_square(&self) -> usize {
        match self.kind {
            MeshKind::Quad => 1,
            MeshKind::Triangle(p) => p.cells_per_square(),
        }
    }

    fn min_barycentric(&self, c: usize, x: [f64; 2]) -> f64 {
        let l = self.barycentric(c, x);
        l[0].min(l[1]).min(l[2])
    }

    /// Barycentric coordinates of `x` in triangle `c`.
    pub fn barycentric(&self, c: usize, x: [f64; 2]) -> [f64; 3] {
        let v = self.cell(c);
        let (a, b, d) = (self.coords[v[0]], self.coords[v[1]], self.coords[v[2]]);
        let det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((x[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (x[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Cells sharing at least one vertex with each cell.
    pub fn patches(&self) -> PatchMap {
        let mut node_cells = vec![Vec::new(); self.num_nodes()];
        for (c, verts) in self.cells().enumerate() {
            for &v in verts {
                node_cells[v].push(c);
            }
        }
        let mut patches = Vec::with_capacity(self.num_cells());
        for verts in self.cells() {
            let mut p: Vec<usize> = verts.iter().flat_map(|&v| node_cells[v].iter().copied()).collect();
            p.sort_unstable();
            p.dedup();
            patches.push(p);
        }
        PatchMap { patches }
    }

    pub fn element_patch(&self, c: usize) -> Result<Vec<usize>> {
        if c >= self.num_cells() {
            return Err(Error::OutOfRange { index: c, limit: self.num_cells() });
        }
        let verts = self.cell(c);
        Ok((0..self.num_cells()).filter(|&k| self.cell(k).iter().any(|v| verts.contains(v))).collect())
    }

    /// Plain-text dump: `n x y b` per node, then `c i j k [l]` per cell.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, x) in self.coords.iter().enumerate() {
            let _ = writeln!(s, "n {} {} {}", x[0], x[1], u8::from(self.boundary[i]));
        }
        for verts in self.cells() {
            s.push('c');
            for v in verts {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Element patches `N_T`.
#[derive(Debug, Clone)]
pub struct PatchMap {
    patches: Vec<Vec<usize>>,
}

impl PatchMap {
    pub fn patch(&self, c: usize) -> &[usize] {
        &self.patches[c]
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

struct Builder {
    n: usize,
    half: Vec<[i64; 2]>,
    kinds: Vec<NodeKind>,
    lookup: BTreeMap<[i64; 2], usize>,
}

impl Builder {
    fn new(n: usize) -> Self {
        let mut b = Builder { n, half: Vec::new(), kinds: Vec::new(), lookup: BTreeMap::new() };
        for k2 in 0..=n {
            for k1 in 0..=n {
                b.push([2 * k1 as i64, 2 * k2 as i64], NodeKind::Lattice([k1, k2]));
            }
        }
        b
    }

    fn push(&mut self, half: [i64; 2], kind: NodeKind) -> usize {
        let id = self.half.len();
        self.half.push(half);
        self.kinds.push(kind);
        self.lookup.insert(half, id);
        id
    }

    fn node(&mut self, half: [i64; 2], kind: NodeKind) -> usize {
        match self.lookup.get(&half) {
            Some(&id) => id,
            None => self.push(half, kind),
        }
    }

    fn lattice(&self, k1: usize, k2: usize) -> usize {
        k2 * (self.n + 1) + k1
    }

    fn finish(self, kind: MeshKind, verts_per_cell: usize, cells: Vec<usize>, cell_square: Vec<NodeIndex>) -> StructuredMesh {
        let top = 2 * self.n as i64;
        let den = top as f64;
        let coords = self.half.iter().map(|p| [p[0] as f64 / den, p[1] as f64 / den]).collect();
        let boundary = self.half.iter().map(|p| p[0] == 0 || p[1] == 0 || p[0] == top || p[1] == top).collect();
        StructuredMesh {
            n: self.n,
            kind,
            half: self.half,
            coords,
            node_kind: self.kinds,
            boundary,
            verts_per_cell,
            cells,
            cell_square,
            origin: 0.0,
            side: 1.0,
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Mesh(format!("N = {n} leaves no interior nodes; need N >= 2")));
    }
    Ok(())
}

/// Uniform quadrilaterals `Q_k`, vertices counter-clockwise from `v(k)`.
pub fn build_quad(n: usize) -> Result<StructuredMesh> {
    check_n(n)?;
    let b = Builder::new(n);
    let mut cells = Vec::with_capacity(4 * n * n);
    let mut squares = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.extend([b.lattice(i, j), b.lattice(i + 1, j), b.lattice(i + 1, j + 1), b.lattice(i, j + 1)]);
            squares.push([i, j]);
        }
    }
    Ok(b.finish(MeshKind::Quad, 4, cells, squares))
}

/// Triangulation of the `N × N` lattice squares by `pattern`.
pub fn build_tri(n: usize, pattern: TrianglePattern) -> Result<StructuredMesh> {
    check_n(n)?;
    Ok(build_tri_unchecked(n, pattern))
}

fn build_tri_unchecked(n: usize, pattern: TrianglePattern) -> StructuredMesh {
    let mut b = Builder::new(n);
    let mut cells = Vec::with_capacity(3 * pattern.cells_per_square() * n * n);
    let mut squares = Vec::with_capacity(pattern.cells_per_square() * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = b.lattice(i, j);
            let bb = b.lattice(i + 1, j);
            let c = b.lattice(i + 1, j + 1);
            let d = b.lattice(i, j + 1);
            let (x, y) = (2 * i as i64, 2 * j as i64);
            let tris: Vec<[usize; 3]> = match pattern {
                TrianglePattern::Boxslash => vec![[a, bb, c], [a, c, d]],
                TrianglePattern::AlternatingKuhn => {
                    if (i + j) % 2 == 0 {
                        vec![[a, bb, c], [a, c, d]]
                    } else {
                        vec![[a, bb, d], [bb, c, d]]
                    }
                }
                TrianglePattern::Cross => {
                    let m = b.node([x + 1, y + 1], NodeKind::CellCenter);
                    vec![[a, bb, m], [bb, c, m], [c, d, m], [d, a, m]]
                }
                TrianglePattern::UnionJack => {
                    let m = b.node([x + 1, y + 1], NodeKind::CellCenter);
                    let s = b.node([x + 1, y], NodeKind::EdgeMidpoint);
                    let e = b.node([x + 2, y + 1], NodeKind::EdgeMidpoint);
                    let nn = b.node([x + 1, y + 2], NodeKind::EdgeMidpoint);
                    let w = b.node([x, y + 1], NodeKind::EdgeMidpoint);
                    vec![[a, s, m], [s, bb, m], [bb, e, m], [e, c, m], [c, nn, m], [nn, d, m], [d, w, m], [w, a, m]]
                }
            };
            for t in tris {
                cells.extend(t);
                squares.push([i, j]);
            }
        }
    }
    b.finish(MeshKind::Triangle(pattern), 3, cells, squares)
}

/// `T_{h/2}`: every parent triangle bisected twice, in half-lattice units.
#[derive(Debug, Clone)]
pub struct HalfRefinement {
    parent: StructuredMesh,
    children: Vec<[[i64; 2]; 3]>,
    sigma: BTreeMap<NodeIndex, Vec<usize>>,
}

impl HalfRefinement {
    pub fn parent(&self) -> &StructuredMesh {
        &self.parent
    }

    /// Child triangles with vertex positions in units of `h/2`.
    pub fn children(&self) -> &[[[i64; 2]; 3]] {
        &self.children
    }

    /// Child triangles forming `σ_j`.
    pub fn sigma(&self, j: NodeIndex) -> Option<&[usize]> {
        self.sigma.get(&j).map(|v| v.as_slice())
    }

    pub fn sigma_map(&self) -> &BTreeMap<NodeIndex, Vec<usize>> {
        &self.sigma
    }

    /// Vertex set of `σ_j` relative to `v(j)`, sorted.
    pub fn sigma_shape(&self, j: NodeIndex) -> Option<Vec<[[i64; 2]; 3]>> {
        let ids = self.sigma.get(&j)?;
        let c = [2 * j[0] as i64, 2 * j[1] as i64];
        let mut out: Vec<[[i64; 2]; 3]> = ids
            .iter()
            .map(|&t| {
                let mut tri = self.children[t].map(|v| [v[0] - c[0], v[1] - c[1]]);
                tri.sort();
                tri
            })
            .collect();
        out.sort();
        Some(out)
    }

    pub fn child_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.children[t];
        let twice = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let hh = 0.5 * self.parent.h();
        0.5 * twice as f64 * hh * hh
    }
}

/// Two newest-vertex bisections of every alternating-Kuhn triangle.
pub fn refine_kuhn_half(mesh: &StructuredMesh) -> Result<HalfRefinement> {
    if mesh.kind() != MeshKind::Triangle(TrianglePattern::AlternatingKuhn) {
        return Err(Error::Mesh(format!(
            "half refinement needs an alternating-kuhn mesh, got {}",
            mesh.kind().name()
        )));
    }
    let children: Vec<[[i64; 2]; 3]> = (0..mesh.num_cells()).flat_map(|c| bisect_cell(mesh, c)).collect();
    let mut sigma: BTreeMap<NodeIndex, Vec<usize>> = BTreeMap::new();
    for k in mesh.interior_lattice() {
        let c = [2 * k[0] as i64, 2 * k[1] as i64];
        let ids = children.iter().enumerate().filter(|(_, t)| t.contains(&c)).map(|(i, _)| i).collect();
        sigma.insert(k, ids);
    }
    Ok(HalfRefinement { parent: mesh.clone(), children, sigma })
}

fn ccw(mut t: [[i64; 2]; 3]) -> [[i64; 2]; 3] {
    let [a, b, c] = t;
    if (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]) < 0 {
        t.swap(1, 2);
    }
    t
}

/// Children of the alternating-Kuhn triangulation at any `N ≥ 1`, without σ.
pub fn bisect_twice(n: usize) -> Result<Vec<[[i64; 2]; 3]>> {
    if n == 0 {
        return Err(Error::Mesh("N must be positive".into()));
    }
    let parent = build_tri_unchecked(n, TrianglePattern::AlternatingKuhn);
    Ok((0..parent.num_cells()).flat_map(|c| bisect_cell(&parent, c)).collect())
}

fn bisect_cell(mesh: &StructuredMesh, c: usize) -> Vec<[[i64; 2]; 3]> {
    let verts = mesh.cell(c);
    let p = [mesh.half[verts[0]], mesh.half[verts[1]], mesh.half[verts[2]]];
    let len2 = |a: [i64; 2], b: [i64; 2]| (a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2);
    // the right-angle vertex sits opposite the diagonal
    let r = (0..3).max_by_key(|&k| len2(p[(k + 1) % 3], p[(k + 2) % 3])).expect("three vertices");
    let (apex, b1, b2) = (p[r], p[(r + 1) % 3], p[(r + 2) % 3]);
    let mid = |a: [i64; 2], b: [i64; 2]| [(a[0] + b[0]) / 2, (a[1] + b[1]) / 2];
    let m = mid(b1, b2);
    // first bisection gives (b1, apex, m) and (apex, b2, m); the second splits each leg
    let mut out = Vec::with_capacity(4);
    for (u, v) in [(b1, apex), (apex, b2)] {
        let s = mid(u, v);
        out.push(ccw([u, s, m]));
        out.push(ccw([s, v, m]));
    }
    out
}
