//! Conforming P1/Q1 spaces on structured meshes.

pub mod quadrature;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{MeshKind, StructuredMesh};
pub use quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    /// Affine elements on triangles.
    P1,
    /// Bilinear elements on quadrilaterals.
    Q1,
}

/// One degree of freedom per mesh node; boundary nodes stay in the numbering.
#[derive(Debug)]
pub struct FeSpace {
    mesh: StructuredMesh,
    kind: ElementKind,
    interior: Vec<usize>,
}

impl FeSpace {
    /// Space matching the mesh: Q1 on quads, P1 on triangles.
    pub fn new(mesh: StructuredMesh) -> Arc<Self> {
        let kind = match mesh.kind() {
            MeshKind::Quad => ElementKind::Q1,
            MeshKind::Triangle(_) => ElementKind::P1,
        };
        let interior = mesh.interior_nodes();
        Arc::new(Self { mesh, kind, interior })
    }

    pub fn with_kind(mesh: StructuredMesh, kind: ElementKind) -> Result<Arc<Self>> {
        let expected = if mesh.is_quad() { ElementKind::Q1 } else { ElementKind::P1 };
        if kind != expected {
            return Err(Error::Mismatch(format!("{kind:?} elements on a {} mesh", mesh.kind().name())));
        }
        Ok(Self::new(mesh))
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    /// `dim V_h` counted over all nodes, as in the convergence tables.
    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior
    }

    pub fn local_dofs(&self) -> usize {
        match self.kind {
            ElementKind::P1 => 3,
            ElementKind::Q1 => 4,
        }
    }

    pub fn reference_rule(&self, degree: usize) -> Result<QuadratureRule> {
        match self.kind {
            ElementKind::P1 => QuadratureRule::triangle(degree),
            ElementKind::Q1 => QuadratureRule::square(degree),
        }
    }

    fn contains_reference(&self, xi: [f64; 2]) -> bool {
        let eps = 1e-12;
        match self.kind {
            ElementKind::P1 => xi[0] >= -eps && xi[1] >= -eps && xi[0] + xi[1] <= 1.0 + eps,
            ElementKind::Q1 => (-eps..=1.0 + eps).contains(&xi[0]) && (-eps..=1.0 + eps).contains(&xi[1]),
        }
    }

    /// Reference shape values, in the cell's local vertex order.
    pub fn shape_values(&self, xi: [f64; 2]) -> [f64; 4] {
        let [s, t] = xi;
        match self.kind {
            ElementKind::P1 => [1.0 - s - t, s, t, 0.0],
            ElementKind::Q1 => [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t],
        }
    }

    fn shape_grads_ref(&self, xi: [f64; 2]) -> [[f64; 2]; 4] {
        let [s, t] = xi;
        match self.kind {
            ElementKind::P1 => [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            ElementKind::Q1 => [[-(1.0 - t), -(1.0 - s)], [1.0 - t, -s], [t, s], [-t, 1.0 - s]],
        }
    }

    /// Reference-to-physical map of cell `c`.
    pub fn map_point(&self, c: usize, xi: [f64; 2]) -> [f64; 2] {
        let verts = self.mesh.cell(c);
        let n = self.shape_values(xi);
        let mut x = [0.0; 2];
        for (k, &v) in verts.iter().enumerate() {
            let p = self.mesh.coord(v);
            x[0] += n[k] * p[0];
            x[1] += n[k] * p[1];
        }
        x
    }

    /// Physical shape gradients and `|det J|` at a reference point.
    pub fn physical_grads(&self, c: usize, xi: [f64; 2]) -> ([[f64; 2]; 4], f64) {
        let verts = self.mesh.cell(c);
        let g = self.shape_grads_ref(xi);
        let mut jac = [[0.0; 2]; 2];
        for (k, &v) in verts.iter().enumerate() {
            let p = self.mesh.coord(v);
            for r in 0..2 {
                jac[r][0] += p[r] * g[k][0];
                jac[r][1] += p[r] * g[k][1];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // J^{-T} ∇̂N
        let inv = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        let mut out = [[0.0; 2]; 4];
        for k in 0..verts.len() {
            out[k][0] = inv[0][0] * g[k][0] + inv[0][1] * g[k][1];
            out[k][1] = inv[1][0] * g[k][0] + inv[1][1] * g[k][1];
        }
        (out, det.abs())
    }

    /// Inverse map for a point known to lie in cell `c`.
    pub fn reference_point(&self, c: usize, x: [f64; 2]) -> [f64; 2] {
        match self.kind {
            ElementKind::P1 => {
                let l = self.mesh.barycentric(c, x);
                [l[1], l[2]]
            }
            ElementKind::Q1 => {
                let a = self.mesh.coord(self.mesh.cell(c)[0]);
                let h = self.mesh.h();
                [(x[0] - a[0]) / h, (x[1] - a[1]) / h]
            }
        }
    }

    pub fn basis_eval(&self, c: usize, local: usize, xi: [f64; 2]) -> Result<f64> {
        self.check_local(c, local, xi)?;
        Ok(self.shape_values(xi)[local])
    }

    pub fn basis_grad(&self, c: usize, local: usize, xi: [f64; 2]) -> Result<[f64; 2]> {
        self.check_local(c, local, xi)?;
        Ok(self.physical_grads(c, xi).0[local])
    }

    fn check_local(&self, c: usize, local: usize, xi: [f64; 2]) -> Result<()> {
        if c >= self.mesh.num_cells() {
            return Err(Error::OutOfRange { index: c, limit: self.mesh.num_cells() });
        }
        if local >= self.local_dofs() {
            return Err(Error::OutOfRange { index: local, limit: self.local_dofs() });
        }
        if !self.contains_reference(xi) {
            return Err(Error::OutsideReference(xi[0], xi[1]));
        }
        Ok(())
    }

    /// `∫_cell f` with a rule of the given degree; `f` takes physical points.
    pub fn integrate(&self, c: usize, f: impl Fn([f64; 2]) -> f64, degree: usize) -> Result<f64> {
        if c >= self.mesh.num_cells() {
            return Err(Error::OutOfRange { index: c, limit: self.mesh.num_cells() });
        }
        let rule = self.reference_rule(degree)?;
        Ok(self.integrate_with(c, &rule, f))
    }

    pub(crate) fn integrate_with(&self, c: usize, rule: &QuadratureRule, f: impl Fn([f64; 2]) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(&xi, &w)| {
                let det = self.physical_grads(c, xi).1;
                w * det * f(self.map_point(c, xi))
            })
            .sum()
    }
}

/// Nodal coefficient vector; boundary entries carry the Dirichlet values.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::Mismatch(format!(
                "{} coefficients for a space with {} dofs",
                coeffs.len(),
                space.num_dofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let n = space.num_dofs();
        Self { space, coeffs: vec![0.0; n] }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn value_in_cell(&self, c: usize, xi: [f64; 2]) -> f64 {
        let n = self.space.shape_values(xi);
        self.space.mesh().cell(c).iter().enumerate().map(|(k, &v)| n[k] * self.coeffs[v]).sum()
    }

    pub fn grad_in_cell(&self, c: usize, xi: [f64; 2]) -> [f64; 2] {
        let (g, _) = self.space.physical_grads(c, xi);
        let mut out = [0.0; 2];
        for (k, &v) in self.space.mesh().cell(c).iter().enumerate() {
            out[0] += g[k][0] * self.coeffs[v];
            out[1] += g[k][1] * self.coeffs[v];
        }
        out
    }

    /// Point evaluation; `None` outside the closed unit square.
    pub fn eval(&self, x: [f64; 2]) -> Option<f64> {
        let c = self.space.mesh().locate(x)?;
        Some(self.value_in_cell(c, self.space.reference_point(c, x)))
    }

    /// `self - other` on the same space.
    pub fn difference(&self, other: &FeFunction) -> Result<FeFunction> {
        if !Arc::ptr_eq(&self.space, &other.space) && self.coeffs.len() != other.coeffs.len() {
            return Err(Error::Mismatch("functions live on different spaces".into()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(FeFunction { space: self.space.clone(), coeffs })
    }
}

/// Nodal interpolant `f(v(k))` at every node.
pub fn interpolate_nodal(space: &Arc<FeSpace>, f: impl Fn([f64; 2]) -> f64) -> Result<FeFunction> {
    let mut coeffs = Vec::with_capacity(space.num_dofs());
    for (i, &x) in space.mesh().coords().iter().enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("sample {v} at node {i} ({}, {})", x[0], x[1])));
        }
        coeffs.push(v);
    }
    FeFunction::new(space.clone(), coeffs)
}
