//! Structured triangulation of the unit square and Taylor-Hood elements.
//!
//! The mesh is the equi-distant lattice with `n` vertices per side,
//! `h = 1/(n-1)`, each cell split along the lower-left to upper-right
//! diagonal. Velocity is discretised componentwise with continuous
//! quadratics (P2: vertices + edge midpoints), pressure with continuous
//! linears (P1: vertices). All element integrals use a fixed 6-point
//! triangle rule of polynomial exactness 4, which integrates every
//! matrix entry of the P2/P1 pair exactly.
//!
//! Assembled constant operators:
//!
//! * `M`, `A` — vector mass and stiffness, block-diagonal over the two
//!   components,
//! * `B` — divergence pairing with entries `B[i,j] = -(div phi_j, q_i)`,
//!   so that `B^T p` is the weak gradient pairing `(p, div phi_i)` with
//!   the sign of `-(grad p, phi_i)` after integration by parts,
//! * `Mp`, `Ap` — pressure mass and stiffness,
//! * `mean_vec` — the integrals of the pressure basis functions, used as
//!   the zero-mean gauge row in saddle-point solves.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::sparse::{self, Coo, Csc};

/// Conforming triangulation of the closed unit square.
#[derive(Clone, Debug)]
pub struct Mesh {
    /// Vertices per side.
    pub n: usize,
    /// Lattice spacing `1/(n-1)`.
    pub h: f64,
    /// Vertex `j*n + i` sits at `(i*h, j*h)`.
    pub vertices: Vec<[f64; 2]>,
    /// Vertex-index triples, counter-clockwise; two per lattice cell.
    pub triangles: Vec<[usize; 3]>,
    /// Indices of vertices on the boundary of the square, ascending.
    pub boundary_vertices: Vec<usize>,
}

/// Builds the structured mesh with `n` vertices per side.
pub fn build_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::invalid(format!("mesh needs n >= 2 vertices per side, got {n}")));
    }
    let h = 1.0 / (n - 1) as f64;
    let mut vertices = Vec::with_capacity(n * n);
    let mut boundary_vertices = Vec::new();
    for j in 0..n {
        for i in 0..n {
            vertices.push([i as f64 * h, j as f64 * h]);
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                boundary_vertices.push(j * n + i);
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let v00 = j * n + i;
            let v10 = v00 + 1;
            let v01 = v00 + n;
            let v11 = v01 + 1;
            // Diagonal v00 -> v11; both triangles counter-clockwise.
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(Mesh { n, h, vertices, triangles, boundary_vertices })
}

/// One point of the triangle quadrature rule, in barycentric coordinates.
/// Weights are normalised to sum to 1 and are multiplied by the triangle
/// area during integration.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// 6-point symmetric triangle rule, exact for polynomials of degree 4.
pub const QUADRATURE: [QuadPoint; 6] = {
    const A: f64 = 0.445948490915965;
    const WA: f64 = 0.223381589678011;
    const B: f64 = 0.091576213509771;
    const WB: f64 = 0.109951743655322;
    [
        QuadPoint { bary: [A, A, 1.0 - 2.0 * A], weight: WA },
        QuadPoint { bary: [A, 1.0 - 2.0 * A, A], weight: WA },
        QuadPoint { bary: [1.0 - 2.0 * A, A, A], weight: WA },
        QuadPoint { bary: [B, B, 1.0 - 2.0 * B], weight: WB },
        QuadPoint { bary: [B, 1.0 - 2.0 * B, B], weight: WB },
        QuadPoint { bary: [1.0 - 2.0 * B, B, B], weight: WB },
    ]
};

/// Taylor-Hood spaces on a [`Mesh`].
///
/// Scalar P2 nodes are numbered vertices first, then edge midpoints in
/// order of first appearance while sweeping the triangles. A velocity
/// coefficient vector stacks the two components: dof of component `c`
/// at scalar node `k` is `c * n_scalar + k`.
#[derive(Clone, Debug)]
pub struct FeSpaces {
    pub mesh: Mesh,
    /// Number of scalar P2 nodes (vertices + edges).
    pub n_scalar: usize,
    /// Per-triangle scalar node indices, locally ordered
    /// `[v0, v1, v2, mid(1,2), mid(2,0), mid(0,1)]`.
    pub tri_p2: Vec<[usize; 6]>,
    /// Coordinates of every scalar P2 node.
    pub p2_coords: Vec<[f64; 2]>,
    /// Whether a scalar P2 node lies on the boundary.
    pub p2_boundary: Vec<bool>,
}

/// Builds the Taylor-Hood spaces over `mesh`.
pub fn build_spaces(mesh: Mesh) -> FeSpaces {
    let n_v = mesh.vertices.len();
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut p2_coords: Vec<[f64; 2]> = mesh.vertices.clone();
    let mut tri_p2 = Vec::with_capacity(mesh.triangles.len());
    for tri in &mesh.triangles {
        let mut nodes = [0usize; 6];
        nodes[..3].copy_from_slice(tri);
        // Local midpoints opposite each vertex: 3 = mid(1,2), 4 = mid(2,0), 5 = mid(0,1).
        for (slot, (a, b)) in [(3, (tri[1], tri[2])), (4, (tri[2], tri[0])), (5, (tri[0], tri[1]))] {
            let key = (a.min(b), a.max(b));
            let next = n_v + edge_index.len();
            let idx = *edge_index.entry(key).or_insert(next);
            if idx == p2_coords.len() {
                let pa = mesh.vertices[a];
                let pb = mesh.vertices[b];
                p2_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
            nodes[slot] = idx;
        }
        tri_p2.push(nodes);
    }
    let eps = 1e-12;
    let p2_boundary = p2_coords
        .iter()
        .map(|&[x, y]| x < eps || y < eps || x > 1.0 - eps || y > 1.0 - eps)
        .collect();
    FeSpaces { mesh, n_scalar: p2_coords.len(), tri_p2, p2_coords, p2_boundary }
}

impl FeSpaces {
    /// Velocity dof count: both components of the scalar P2 space.
    pub fn n_velocity(&self) -> usize {
        2 * self.n_scalar
    }

    /// Pressure dof count: one coefficient per vertex.
    pub fn n_pressure(&self) -> usize {
        self.mesh.vertices.len()
    }

    /// Velocity dof of component `comp` at scalar node `node`.
    #[inline]
    pub fn velocity_dof(&self, comp: usize, node: usize) -> usize {
        comp * self.n_scalar + node
    }

    /// All velocity dofs sitting on the boundary, ascending.
    pub fn boundary_velocity_dofs(&self) -> Vec<usize> {
        let mut dofs = Vec::new();
        for comp in 0..2 {
            for (k, &on) in self.p2_boundary.iter().enumerate() {
                if on {
                    dofs.push(self.velocity_dof(comp, k));
                }
            }
        }
        dofs
    }
}

/// Per-triangle geometry: vertex coordinates, area, and the (constant)
/// gradients of the barycentric coordinates.
#[derive(Clone, Copy, Debug)]
pub struct TriGeom {
    pub verts: [[f64; 2]; 3],
    pub area: f64,
    pub grad_l: [[f64; 2]; 3],
}

/// Geometry of triangle `t` of the mesh.
pub fn tri_geom(mesh: &Mesh, t: usize) -> TriGeom {
    let [i0, i1, i2] = mesh.triangles[t];
    let p0 = mesh.vertices[i0];
    let p1 = mesh.vertices[i1];
    let p2 = mesh.vertices[i2];
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let grad_l = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    TriGeom { verts: [p0, p1, p2], area: 0.5 * det, grad_l }
}

/// Physical coordinates of a barycentric point of `g`.
#[inline]
pub fn bary_point(g: &TriGeom, l: &[f64; 3]) -> [f64; 2] {
    [
        l[0] * g.verts[0][0] + l[1] * g.verts[1][0] + l[2] * g.verts[2][0],
        l[0] * g.verts[0][1] + l[1] * g.verts[1][1] + l[2] * g.verts[2][1],
    ]
}

/// Values of the six P2 basis functions at barycentric coordinates `l`.
#[inline]
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

/// Physical gradients of the six P2 basis functions at `l`.
#[inline]
pub fn p2_gradients(l: &[f64; 3], g: &TriGeom) -> [[f64; 2]; 6] {
    let gl = &g.grad_l;
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        for d in 0..2 {
            out[i][d] = (4.0 * l[i] - 1.0) * gl[i][d];
        }
    }
    // N3 = 4 l1 l2, N4 = 4 l2 l0, N5 = 4 l0 l1.
    for d in 0..2 {
        out[3][d] = 4.0 * (l[2] * gl[1][d] + l[1] * gl[2][d]);
        out[4][d] = 4.0 * (l[0] * gl[2][d] + l[2] * gl[0][d]);
        out[5][d] = 4.0 * (l[1] * gl[0][d] + l[0] * gl[1][d]);
    }
    out
}

/// The constant matrices of the Taylor-Hood discretisation.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    /// Vector mass matrix (block-diagonal over components).
    pub m: Csc,
    /// Vector stiffness matrix (Dirichlet rows unconstrained at assembly).
    pub a: Csc,
    /// Divergence matrix, `B[i,j] = -(div phi_j, q_i)`.
    pub b: Csc,
    /// Pressure mass matrix.
    pub mp: Csc,
    /// Pressure stiffness matrix (nullspace: constants).
    pub ap: Csc,
    /// Integrals of the pressure basis functions.
    pub mean_vec: Vec<f64>,
    /// Scalar P2 mass matrix (one component).
    pub m_scalar: Csc,
    /// Scalar P2 stiffness matrix (one component).
    pub a_scalar: Csc,
}

/// Assembles every constant operator of the pair.
pub fn assemble_operators(spaces: &FeSpaces) -> Result<OperatorSet> {
    let ns = spaces.n_scalar;
    let np = spaces.n_pressure();
    let mesh = &spaces.mesh;
    let mut m_s = Coo::new(ns, ns);
    let mut a_s = Coo::new(ns, ns);
    let mut b = Coo::new(np, 2 * ns);
    let mut mp = Coo::new(np, np);
    let mut ap = Coo::new(np, np);
    let mut mean_vec = vec![0.0; np];

    for (t, nodes) in spaces.tri_p2.iter().enumerate() {
        let g = tri_geom(mesh, t);
        let tri = mesh.triangles[t];
        let mut loc_m = [[0.0; 6]; 6];
        let mut loc_a = [[0.0; 6]; 6];
        let mut loc_b = [[[0.0; 6]; 3]; 2]; // [component][pressure][velocity]
        let mut loc_mp = [[0.0; 3]; 3];
        let mut loc_mean = [0.0; 3];
        for q in &QUADRATURE {
            let w = q.weight * g.area;
            let phi = p2_values(&q.bary);
            let dphi = p2_gradients(&q.bary, &g);
            for i in 0..6 {
                for j in 0..6 {
                    loc_m[i][j] += w * phi[i] * phi[j];
                    loc_a[i][j] += w * (dphi[i][0] * dphi[j][0] + dphi[i][1] * dphi[j][1]);
                }
            }
            for i in 0..3 {
                let li = q.bary[i];
                loc_mean[i] += w * li;
                for j in 0..3 {
                    loc_mp[i][j] += w * li * q.bary[j];
                }
                for j in 0..6 {
                    for c in 0..2 {
                        loc_b[c][i][j] -= w * li * dphi[j][c];
                    }
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                m_s.push(nodes[i], nodes[j], loc_m[i][j]);
                a_s.push(nodes[i], nodes[j], loc_a[i][j]);
            }
        }
        for i in 0..3 {
            mean_vec[tri[i]] += loc_mean[i];
            for j in 0..3 {
                mp.push(tri[i], tri[j], loc_mp[i][j]);
                // P1 stiffness is exact in closed form: constant gradients.
                let dot = g.grad_l[i][0] * g.grad_l[j][0] + g.grad_l[i][1] * g.grad_l[j][1];
                ap.push(tri[i], tri[j], g.area * dot);
            }
            for j in 0..6 {
                for c in 0..2 {
                    b.push(tri[i], c * ns + nodes[j], loc_b[c][i][j]);
                }
            }
        }
    }

    let m_scalar = m_s.to_csc()?;
    let a_scalar = a_s.to_csc()?;
    let mut m = Coo::new(2 * ns, 2 * ns);
    let mut a = Coo::new(2 * ns, 2 * ns);
    for c in 0..2 {
        m.push_block(&m_scalar, c * ns, c * ns, 1.0);
        a.push_block(&a_scalar, c * ns, c * ns, 1.0);
    }
    Ok(OperatorSet {
        m: m.to_csc()?,
        a: a.to_csc()?,
        b: b.to_csc()?,
        mp: mp.to_csc()?,
        ap: ap.to_csc()?,
        mean_vec,
        m_scalar,
        a_scalar,
    })
}

/// Nodal interpolation of an analytic velocity field `(t, x, y) -> R^2`.
pub fn interpolate_velocity<F>(spaces: &FeSpaces, field: F, t: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let ns = spaces.n_scalar;
    let mut u = vec![0.0; 2 * ns];
    for (k, &[x, y]) in spaces.p2_coords.iter().enumerate() {
        let v = field(t, x, y);
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(Error::NumericDomain(format!(
                "velocity field non-finite at ({x}, {y}), t = {t}"
            )));
        }
        u[k] = v[0];
        u[ns + k] = v[1];
    }
    Ok(u)
}

/// Nodal interpolation of an analytic pressure field `(t, x, y) -> R`.
pub fn interpolate_pressure<F>(spaces: &FeSpaces, field: F, t: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut p = vec![0.0; spaces.n_pressure()];
    for (k, &[x, y]) in spaces.mesh.vertices.iter().enumerate() {
        let v = field(t, x, y);
        if !v.is_finite() {
            return Err(Error::NumericDomain(format!(
                "pressure field non-finite at ({x}, {y}), t = {t}"
            )));
        }
        p[k] = v;
    }
    Ok(p)
}

/// Quadrature of `(f, phi_i)` against every velocity basis function.
pub fn assemble_velocity_load<F>(spaces: &FeSpaces, f: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> [f64; 2],
{
    let ns = spaces.n_scalar;
    let mut load = vec![0.0; 2 * ns];
    for (t, nodes) in spaces.tri_p2.iter().enumerate() {
        let g = tri_geom(&spaces.mesh, t);
        for q in &QUADRATURE {
            let w = q.weight * g.area;
            let [x, y] = bary_point(&g, &q.bary);
            let fv = f(x, y);
            let phi = p2_values(&q.bary);
            for j in 0..6 {
                load[nodes[j]] += w * fv[0] * phi[j];
                load[ns + nodes[j]] += w * fv[1] * phi[j];
            }
        }
    }
    load
}

/// Which coefficient space a vector lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Velocity,
    Pressure,
}

/// Which norm to measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1Semi,
}

/// `sqrt(v^T M v)` or `sqrt(v^T A v)` in the requested space.
pub fn norm(ops: &OperatorSet, v: &[f64], kind: NormKind, space: Space) -> Result<f64> {
    let mat = match (space, kind) {
        (Space::Velocity, NormKind::L2) => &ops.m,
        (Space::Velocity, NormKind::H1Semi) => &ops.a,
        (Space::Pressure, NormKind::L2) => &ops.mp,
        (Space::Pressure, NormKind::H1Semi) => &ops.ap,
    };
    if v.len() != mat.ncols() {
        return Err(Error::invalid(format!(
            "norm: vector length {} does not match space dimension {}",
            v.len(),
            mat.ncols()
        )));
    }
    Ok(sparse::quad_form(mat, v, v).max(0.0).sqrt())
}

/// Interpolated boundary values of an analytic field at time `t`, as
/// `(velocity dof, value)` pairs in ascending dof order.
pub fn boundary_values<F>(spaces: &FeSpaces, bc: F, t: f64) -> Result<Vec<(usize, f64)>>
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let ns = spaces.n_scalar;
    let mut out = Vec::new();
    for comp in 0..2 {
        for (k, &[x, y]) in spaces.p2_coords.iter().enumerate() {
            if !spaces.p2_boundary[k] {
                continue;
            }
            let v = bc(t, x, y);
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::NumericDomain(format!(
                    "boundary field non-finite at ({x}, {y}), t = {t}"
                )));
            }
            out.push((comp * ns + k, v[comp]));
        }
    }
    Ok(out)
}

/// Fixes the listed dofs to the given values by algebraic elimination.
///
/// Constrained rows become the identity and columns are moved to the
/// right-hand side, preserving symmetry of symmetric systems. Eliminated
/// entries are zeroed in place (not removed), so the sparsity pattern of
/// the output is independent of the boundary data.
pub fn apply_dirichlet_values(coo: &mut Coo, rhs: &mut [f64], bc: &[(usize, f64)]) {
    let n = coo.nrows();
    assert_eq!(rhs.len(), n, "dirichlet: rhs length mismatch");
    let mut value: Vec<Option<f64>> = vec![None; n];
    for &(d, v) in bc {
        value[d] = Some(v);
    }
    for e in coo.entries_mut() {
        if value[e.row].is_some() {
            e.val = 0.0;
        } else if let Some(v) = value[e.col] {
            rhs[e.row] -= e.val * v;
            e.val = 0.0;
        }
    }
    for &(d, v) in bc {
        coo.push(d, d, 1.0);
        rhs[d] = v;
    }
}

/// Constrains a system to interpolated boundary values of `bc` at time `t`.
pub fn apply_dirichlet<F>(
    coo: &mut Coo,
    rhs: &mut [f64],
    bc: F,
    spaces: &FeSpaces,
    t: f64,
) -> Result<()>
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let values = boundary_values(spaces, bc, t)?;
    apply_dirichlet_values(coo, rhs, &values);
    Ok(())
}

/// Locates the triangle containing `(x, y)` and returns its index with
/// the barycentric coordinates of the point. Coordinates are clamped to
/// the closed square.
pub fn locate(mesh: &Mesh, x: f64, y: f64) -> (usize, [f64; 3]) {
    let n = mesh.n;
    let h = mesh.h;
    let xc = x.clamp(0.0, 1.0);
    let yc = y.clamp(0.0, 1.0);
    let i = ((xc / h) as usize).min(n - 2);
    let j = ((yc / h) as usize).min(n - 2);
    let xi = (xc - i as f64 * h) / h;
    let eta = (yc - j as f64 * h) / h;
    // The diagonal runs from the lower-left to the upper-right corner of
    // the cell: eta <= xi selects the lower triangle.
    let t = 2 * (j * (n - 1) + i) + usize::from(eta > xi);
    let g = tri_geom(mesh, t);
    let [p0, p1, p2] = g.verts;
    let det = 2.0 * g.area;
    let l1 = ((xc - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (yc - p0[1])) / det;
    let l2 = ((p1[0] - p0[0]) * (yc - p0[1]) - (xc - p0[0]) * (p1[1] - p0[1])) / det;
    (t, [1.0 - l1 - l2, l1, l2])
}

/// Point evaluation of a velocity coefficient vector.
pub fn eval_velocity(spaces: &FeSpaces, u: &[f64], x: f64, y: f64) -> [f64; 2] {
    let ns = spaces.n_scalar;
    let (t, l) = locate(&spaces.mesh, x, y);
    let phi = p2_values(&l);
    let nodes = &spaces.tri_p2[t];
    let mut out = [0.0; 2];
    for j in 0..6 {
        out[0] += u[nodes[j]] * phi[j];
        out[1] += u[ns + nodes[j]] * phi[j];
    }
    out
}

/// Point evaluation of a pressure coefficient vector.
pub fn eval_pressure(mesh: &Mesh, p: &[f64], x: f64, y: f64) -> f64 {
    let (t, l) = locate(mesh, x, y);
    let tri = mesh.triangles[t];
    l[0] * p[tri[0]] + l[1] * p[tri[1]] + l[2] * p[tri[2]]
}

/// Quadrature L2 distance between a velocity coefficient vector and an
/// analytic field at time `t` (used by interpolation-order checks and the
/// exact-error measures of the benchmark catalogue).
pub fn velocity_l2_distance<F>(spaces: &FeSpaces, u: &[f64], field: F, t: f64) -> f64
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let ns = spaces.n_scalar;
    let mut acc = 0.0;
    for (tt, nodes) in spaces.tri_p2.iter().enumerate() {
        let g = tri_geom(&spaces.mesh, tt);
        for q in &QUADRATURE {
            let w = q.weight * g.area;
            let [x, y] = bary_point(&g, &q.bary);
            let ex = field(t, x, y);
            let phi = p2_values(&q.bary);
            let mut uh = [0.0; 2];
            for j in 0..6 {
                uh[0] += u[nodes[j]] * phi[j];
                uh[1] += u[ns + nodes[j]] * phi[j];
            }
            acc += w * ((uh[0] - ex[0]).powi(2) + (uh[1] - ex[1]).powi(2));
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{inf_norm, matvec, quad_form};
    use approx::assert_abs_diff_eq;

    // The velocity shape of the first manufactured example; a quartic
    // polynomial, divergence-free, vanishing on the boundary.
    fn shape_g(x: f64, y: f64) -> [f64; 2] {
        [
            2.0 * x * x * (1.0 - x) * (1.0 - x) * y * (y - 1.0) * (2.0 * y - 1.0),
            -2.0 * y * y * (1.0 - y) * (1.0 - y) * x * (x - 1.0) * (2.0 * x - 1.0),
        ]
    }

    fn spaces(n: usize) -> FeSpaces {
        build_spaces(build_mesh(n).unwrap())
    }

    #[test]
    fn mesh_counts_and_area() {
        let m = build_mesh(2).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        let m16 = build_mesh(16).unwrap();
        assert_eq!(m16.vertices.len(), 256);
        assert_eq!(m16.triangles.len(), 450);
        assert_eq!(build_mesh(5).unwrap().boundary_vertices.len(), 16);
        assert!(build_mesh(1).is_err());

        for mesh in [&m, &m16] {
            let mut total = 0.0;
            for t in 0..mesh.triangles.len() {
                let g = tri_geom(mesh, t);
                assert!(g.area > 0.0, "triangle {t} not counter-clockwise");
                total += g.area;
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn space_counts() {
        let sp = spaces(16);
        // 2n(n-1) axis-parallel edges + (n-1)^2 diagonals = 705 for n = 16.
        assert_eq!(sp.n_scalar, 256 + 705);
        assert_eq!(sp.n_velocity(), 1922);
        assert_eq!(sp.n_pressure(), 256);
        assert_eq!(sp.boundary_velocity_dofs().len(), 2 * (4 * 31 - 4));
    }

    #[test]
    fn partition_of_unity_and_mass_total() {
        let sp = spaces(7);
        let ops = assemble_operators(&sp).unwrap();
        let c = interpolate_velocity(&sp, |_, _, _| [3.5, -1.25], 0.0).unwrap();
        for &(x, y) in &[(0.31, 0.77), (0.0, 0.0), (1.0, 0.42), (0.5, 0.5)] {
            let v = eval_velocity(&sp, &c, x, y);
            assert_abs_diff_eq!(v[0], 3.5, epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], -1.25, epsilon = 1e-14);
        }
        let ones = vec![1.0; sp.n_velocity()];
        assert_abs_diff_eq!(quad_form(&ops.m, &ones, &ones), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn operator_invariants() {
        let sp = spaces(9);
        let ops = assemble_operators(&sp).unwrap();

        let c = interpolate_velocity(&sp, |_, _, _| [1.0, -2.0], 0.0).unwrap();
        assert!(inf_norm(&matvec(&ops.a, &c)) <= 1e-12);

        let v = interpolate_velocity(&sp, |_, x, y| [x, -y], 0.0).unwrap();
        assert!(inf_norm(&matvec(&ops.b, &v)) <= 1e-12);

        // Symmetry via random-ish quadratic forms.
        let x: Vec<f64> = (0..sp.n_velocity()).map(|i| ((i * 37 + 11) % 101) as f64 / 101.0).collect();
        let y: Vec<f64> = (0..sp.n_velocity()).map(|i| ((i * 53 + 5) % 97) as f64 / 97.0).collect();
        assert_abs_diff_eq!(quad_form(&ops.m, &x, &y), quad_form(&ops.m, &y, &x), epsilon = 1e-12);
        assert_abs_diff_eq!(quad_form(&ops.a, &x, &y), quad_form(&ops.a, &y, &x), epsilon = 1e-10);

        // Pressure stiffness annihilates constants; basis integrals tile the square.
        let onep = vec![1.0; sp.n_pressure()];
        assert!(inf_norm(&matvec(&ops.ap, &onep)) <= 1e-12);
        assert_abs_diff_eq!(ops.mean_vec.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn interpolation_value_oracle() {
        let sp = spaces(5);
        let u = interpolate_velocity(&sp, |_, x, y| shape_g(x, y), 0.0).unwrap();
        let v = eval_velocity(&sp, &u, 0.5, 0.25);
        assert_abs_diff_eq!(v[0], 0.01171875, epsilon = 1e-15);
    }

    #[test]
    fn pressure_norm_of_linear() {
        let sp = spaces(6);
        let ops = assemble_operators(&sp).unwrap();
        let p = interpolate_pressure(&sp, |_, x, _| x, 0.0).unwrap();
        let n = norm(&ops, &p, NormKind::L2, Space::Pressure).unwrap();
        assert_abs_diff_eq!(n, (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert!(norm(&ops, &p[..3], NormKind::L2, Space::Pressure).is_err());
    }

    #[test]
    fn quadratic_exactness() {
        let sp = spaces(4);
        let ops = assemble_operators(&sp).unwrap();
        // || (x^2, 0) ||_L2 = sqrt(int x^4) = 1/sqrt(5).
        let u = interpolate_velocity(&sp, |_, x, _| [x * x, 0.0], 0.0).unwrap();
        let n = norm(&ops, &u, NormKind::L2, Space::Velocity).unwrap();
        assert_abs_diff_eq!(n, 1.0 / 5.0f64.sqrt(), epsilon = 1e-12);
        // || (0, xy) ||_L2 = sqrt(int x^2 y^2) = 1/3.
        let u = interpolate_velocity(&sp, |_, x, y| [0.0, x * y], 0.0).unwrap();
        let n = norm(&ops, &u, NormKind::L2, Space::Velocity).unwrap();
        assert_abs_diff_eq!(n, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_order_at_least_cubic() {
        let mut errs = Vec::new();
        for n in [5usize, 9, 17] {
            let sp = spaces(n);
            let u = interpolate_velocity(&sp, |_, x, y| shape_g(x, y), 0.0).unwrap();
            errs.push((sp.mesh.h, velocity_l2_distance(&sp, &u, |_, x, y| shape_g(x, y), 0.0)));
        }
        for w in errs.windows(2) {
            let rate = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!(rate >= 2.8, "interpolation order {rate} below 2.8");
        }
    }

    #[test]
    fn dirichlet_elimination_is_consistent() {
        let sp = spaces(5);
        let ops = assemble_operators(&sp).unwrap();
        // Pick w satisfying the bc, form rhs = M w, eliminate, and check
        // that w still solves the constrained system exactly.
        let w = interpolate_velocity(&sp, |_, x, y| [x + 2.0 * y, x * y - 1.0], 0.0).unwrap();
        let mut rhs = matvec(&ops.m, &w);
        let mut coo = Coo::new(sp.n_velocity(), sp.n_velocity());
        coo.push_block(&ops.m, 0, 0, 1.0);
        apply_dirichlet(&mut coo, &mut rhs, |_, x, y| [x + 2.0 * y, x * y - 1.0], &sp, 0.0).unwrap();
        let k = coo.to_csc().unwrap();
        let mut res = matvec(&k, &w);
        for (r, b) in res.iter_mut().zip(&rhs) {
            *r -= b;
        }
        assert!(inf_norm(&res) <= 1e-12);

        // Homogeneous bc zeroes exactly the boundary dofs of the solution
        // of the (diagonalised) constrained rows.
        let mut rhs2 = vec![1.0; sp.n_velocity()];
        let mut coo2 = Coo::new(sp.n_velocity(), sp.n_velocity());
        coo2.push_block(&ops.m, 0, 0, 1.0);
        apply_dirichlet(&mut coo2, &mut rhs2, |_, _, _| [0.0, 0.0], &sp, 0.0).unwrap();
        for d in sp.boundary_velocity_dofs() {
            assert_eq!(rhs2[d], 0.0);
        }
    }

    #[test]
    fn lid_boundary_values() {
        let sp = spaces(6);
        let lid = |_t: f64, _x: f64, y: f64| if y >= 1.0 { [1.0, 0.0] } else { [0.0, 0.0] };
        let vals = boundary_values(&sp, lid, 0.0).unwrap();
        let ns = sp.n_scalar;
        for (d, v) in vals {
            let node = d % ns;
            let comp = d / ns;
            let [_, y] = sp.p2_coords[node];
            if comp == 0 && y >= 1.0 - 1e-12 {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }
}
