//! Discrete spaces: discontinuous scalar `P_k` and Raviart-Thomas `RT_k`
//! vector spaces for `k` in `{0, 1}`, with their degree-of-freedom maps,
//! basis evaluation, L2 projection and canonical (Fortin) interpolation.
//!
//! RT degrees of freedom are edge moments of the normal component against an
//! orthonormal polynomial basis in the edge parameter (low to high vertex),
//! plus, for `k = 1`, cellwise averages of the two components.  The basis on
//! each cell is built as the dual of these functionals by inverting a small
//! generalised Vandermonde matrix, so the returned basis functions are
//! globally oriented and normal-continuous across edges by construction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre_01, simplex_rule, QuadratureRule};

/// Gauss points used for edge moments; generous so that interpolating smooth
/// non-polynomial fields keeps the commuting identity at the 1e-10 level.
const EDGE_GAUSS_POINTS: usize = 8;
/// Cell quadrature degree for projections and interior interpolation moments.
const PROJECTION_DEGREE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    DgScalar,
    RtVector,
}

#[derive(Debug, Clone)]
pub struct FESpace {
    pub mesh: Arc<Mesh>,
    pub kind: SpaceKind,
    pub degree: usize,
    pub dofs_per_edge: usize,
    pub dofs_per_cell_interior: usize,
    pub total_dofs: usize,
    /// Per cell: ordered `(global dof, orientation sign)` pairs.  The sign is
    /// the cell-outward vs global-normal flag of the dof's edge (always +1
    /// for scalar and interior dofs); evaluated basis functions are already
    /// globally oriented.
    pub cell_dofs: Vec<Vec<(usize, i8)>>,
    /// Edge dofs of boundary edges when a zero normal trace was requested.
    pub constrained_boundary_dofs: Vec<usize>,
    /// RT only: per cell, row-major `nloc x nloc` matrix of raw-basis
    /// coefficients whose column `j` is the basis dual to local functional `j`.
    dual: Vec<Vec<f64>>,
}

fn check_degree(k: usize) -> Result<()> {
    if k > 1 {
        return Err(Error::InvalidArgument(format!(
            "unsupported polynomial degree k={k} (need 0 or 1)"
        )));
    }
    Ok(())
}

/// Discontinuous piecewise `P_k` scalar space.
pub fn build_dg_space(mesh: Arc<Mesh>, k: usize) -> Result<FESpace> {
    check_degree(k)?;
    let dim = if k == 0 { 1 } else { 3 };
    let nc = mesh.num_cells();
    let cell_dofs = (0..nc)
        .map(|c| (0..dim).map(|i| (c * dim + i, 1i8)).collect())
        .collect();
    Ok(FESpace {
        mesh,
        kind: SpaceKind::DgScalar,
        degree: k,
        dofs_per_edge: 0,
        dofs_per_cell_interior: dim,
        total_dofs: nc * dim,
        cell_dofs,
        constrained_boundary_dofs: Vec::new(),
        dual: Vec::new(),
    })
}

/// Raviart-Thomas `RT_k` space; `zero_normal_trace` marks the edge dofs of
/// boundary edges as constrained (the H_0(div) variant).
pub fn build_rt_space(mesh: Arc<Mesh>, k: usize, zero_normal_trace: bool) -> Result<FESpace> {
    check_degree(k)?;
    let per_edge = k + 1;
    let per_cell = 2 * k;
    let (ne, nc) = (mesh.num_edges(), mesh.num_cells());
    let total_dofs = ne * per_edge + nc * per_cell;
    let nloc = 3 * per_edge + per_cell;

    let mut cell_dofs = Vec::with_capacity(nc);
    let mut dual = Vec::with_capacity(nc);
    for c in 0..nc {
        let mut dofs = Vec::with_capacity(nloc);
        for l in 0..3 {
            let (e, sign) = mesh.cell_edges[c][l];
            for m in 0..per_edge {
                dofs.push((e * per_edge + m, sign));
            }
        }
        for m in 0..per_cell {
            dofs.push((ne * per_edge + c * per_cell + m, 1i8));
        }
        dual.push(build_rt_dual(&mesh, c, k)?);
        cell_dofs.push(dofs);
    }

    let mut constrained_boundary_dofs = Vec::new();
    if zero_normal_trace {
        for &e in &mesh.boundary_edges {
            for m in 0..per_edge {
                constrained_boundary_dofs.push(e * per_edge + m);
            }
        }
        constrained_boundary_dofs.sort_unstable();
    }

    Ok(FESpace {
        mesh,
        kind: SpaceKind::RtVector,
        degree: k,
        dofs_per_edge: per_edge,
        dofs_per_cell_interior: per_cell,
        total_dofs,
        cell_dofs,
        constrained_boundary_dofs,
        dual,
    })
}

/// Raw (undualised) RT basis on a cell, in coordinates centred at the cell
/// centroid and scaled by the longest edge.  Returns values and divergences.
fn raw_rt_basis(k: usize, center: [f64; 2], scale: f64, x: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let xt = (x[0] - center[0]) / scale;
    let yt = (x[1] - center[1]) / scale;
    if k == 0 {
        (
            vec![[1.0, 0.0], [0.0, 1.0], [xt, yt]],
            vec![0.0, 0.0, 2.0 / scale],
        )
    } else {
        (
            vec![
                [1.0, 0.0],
                [0.0, 1.0],
                [xt, 0.0],
                [0.0, xt],
                [yt, 0.0],
                [0.0, yt],
                [xt * xt, xt * yt],
                [xt * yt, yt * yt],
            ],
            vec![
                0.0,
                0.0,
                1.0 / scale,
                0.0,
                0.0,
                1.0 / scale,
                3.0 * xt / scale,
                3.0 * yt / scale,
            ],
        )
    }
}

fn cell_center_scale(mesh: &Mesh, c: usize) -> ([f64; 2], f64) {
    let [p0, p1, p2] = mesh.cell_coords(c);
    let center = [
        (p0[0] + p1[0] + p2[0]) / 3.0,
        (p0[1] + p1[1] + p2[1]) / 3.0,
    ];
    let mut scale: f64 = 0.0;
    for (a, b) in [(p0, p1), (p1, p2), (p2, p0)] {
        scale = scale.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
    }
    (center, scale)
}

/// Orthonormal moment weights in the edge parameter `t` in `[0, 1]`.
fn edge_moment_weight(m: usize, t: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => 3.0f64.sqrt() * (2.0 * t - 1.0),
        _ => unreachable!("edge moments only up to k=1"),
    }
}

/// Edge moment functional: integral over the edge of `(f . n_global) q_m(t)`.
fn edge_moment(mesh: &Mesh, e: usize, m: usize, f: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let (pts, wts) = gauss_legendre_01(EDGE_GAUSS_POINTS);
    let n = mesh.edge_normal(e);
    let len = mesh.edge_length(e);
    let mut acc = 0.0;
    for (&t, &w) in pts.iter().zip(&wts) {
        let x = mesh.edge_point(e, t);
        let v = f(x);
        acc += w * (v[0] * n[0] + v[1] * n[1]) * edge_moment_weight(m, t);
    }
    acc * len
}

/// Interior moment functional: cellwise average of component `d`.
fn interior_moment(
    mesh: &Mesh,
    c: usize,
    d: usize,
    rule: &QuadratureRule,
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> f64 {
    let (_, det) = mesh.jacobian(c);
    let area = 0.5 * det;
    let mut acc = 0.0;
    for (&p, &w) in rule.points.iter().zip(&rule.weights) {
        let x = mesh.ref_to_phys(c, p);
        acc += w * det * f(x)[d];
    }
    acc / area
}

/// Inverts the generalised Vandermonde of the local functionals applied to
/// the raw basis, yielding the dual-basis coefficient matrix for one cell.
fn build_rt_dual(mesh: &Mesh, c: usize, k: usize) -> Result<Vec<f64>> {
    let per_edge = k + 1;
    let nloc = 3 * per_edge + 2 * k;
    let (center, scale) = cell_center_scale(mesh, c);
    let rule = simplex_rule(4).expect("stocked rule");
    let mut v = vec![0.0; nloc * nloc];
    for j in 0..nloc {
        let raw_j = |x: [f64; 2]| raw_rt_basis(k, center, scale, x).0[j];
        let mut i = 0;
        for l in 0..3 {
            let (e, _) = mesh.cell_edges[c][l];
            for m in 0..per_edge {
                v[i * nloc + j] = edge_moment(mesh, e, m, raw_j);
                i += 1;
            }
        }
        for d in 0..2 * k {
            v[i * nloc + j] = interior_moment(mesh, c, d, &rule, raw_j);
            i += 1;
        }
    }
    invert_dense(nloc, &mut v).map_err(|_| Error::Singular {
        what: format!("RT dual basis construction on cell {c}"),
        pivot: None,
    })?;
    Ok(v)
}

impl FESpace {
    fn assert_kind(&self, kind: SpaceKind) {
        assert!(self.kind == kind, "operation needs a {kind:?} space");
    }

    pub fn local_dofs(&self) -> usize {
        match self.kind {
            SpaceKind::DgScalar => self.dofs_per_cell_interior,
            SpaceKind::RtVector => 3 * self.dofs_per_edge + self.dofs_per_cell_interior,
        }
    }

    /// RT basis values and divergences at a reference point of a cell.
    pub fn eval_rt_basis(&self, c: usize, xref: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
        self.assert_kind(SpaceKind::RtVector);
        let nloc = self.local_dofs();
        let (center, scale) = cell_center_scale(&self.mesh, c);
        let x = self.mesh.ref_to_phys(c, xref);
        let (raw, raw_div) = raw_rt_basis(self.degree, center, scale, x);
        let dual = &self.dual[c];
        let mut vals = vec![[0.0; 2]; nloc];
        let mut divs = vec![0.0; nloc];
        for j in 0..nloc {
            let mut v = [0.0; 2];
            let mut dv = 0.0;
            for m in 0..nloc {
                let w = dual[m * nloc + j];
                v[0] += w * raw[m][0];
                v[1] += w * raw[m][1];
                dv += w * raw_div[m];
            }
            vals[j] = v;
            divs[j] = dv;
        }
        (vals, divs)
    }

    /// DG basis values and gradients at a reference point of a cell.
    pub fn eval_dg_basis(&self, c: usize, xref: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        self.assert_kind(SpaceKind::DgScalar);
        let (j, det) = self.mesh.jacobian(c);
        // Reference basis {1, x, y}; gradients mapped by J^{-T}.
        let jinv_t = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        if self.degree == 0 {
            (vec![1.0], vec![[0.0, 0.0]])
        } else {
            let grads = vec![
                [0.0, 0.0],
                [jinv_t[0][0], jinv_t[1][0]],
                [jinv_t[0][1], jinv_t[1][1]],
            ];
            (vec![1.0, xref[0], xref[1]], grads)
        }
    }

    /// Value of a DG field at a reference point of a cell.
    pub fn eval_dg_field(&self, coeffs: &[f64], c: usize, xref: [f64; 2]) -> f64 {
        let (vals, _) = self.eval_dg_basis(c, xref);
        self.cell_dofs[c]
            .iter()
            .zip(vals)
            .map(|(&(g, _), v)| coeffs[g] * v)
            .sum()
    }

    /// Value and divergence of an RT field at a reference point of a cell.
    pub fn eval_rt_field(&self, coeffs: &[f64], c: usize, xref: [f64; 2]) -> ([f64; 2], f64) {
        let (vals, divs) = self.eval_rt_basis(c, xref);
        let mut v = [0.0, 0.0];
        let mut dv = 0.0;
        for (idx, &(g, _)) in self.cell_dofs[c].iter().enumerate() {
            v[0] += coeffs[g] * vals[idx][0];
            v[1] += coeffs[g] * vals[idx][1];
            dv += coeffs[g] * divs[idx];
        }
        (v, dv)
    }
}

/// L2 projection of a scalar function onto a DG space at time `t`.
pub fn project_l2(space: &FESpace, f: impl Fn([f64; 2], f64) -> f64, t: f64) -> Vec<f64> {
    space.assert_kind(SpaceKind::DgScalar);
    let rule = simplex_rule(PROJECTION_DEGREE).expect("stocked rule");
    let dim = space.dofs_per_cell_interior;
    let mut coeffs = vec![0.0; space.total_dofs];
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        let mut mass = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space.eval_dg_basis(c, p);
            let fx = f(space.mesh.ref_to_phys(c, p), t);
            for i in 0..dim {
                rhs[i] += w * det * fx * vals[i];
                for j in 0..dim {
                    mass[i * dim + j] += w * det * vals[i] * vals[j];
                }
            }
        }
        solve_dense(dim, &mut mass, &mut rhs).expect("cell mass matrix is SPD");
        for (i, &(g, _)) in space.cell_dofs[c].iter().enumerate() {
            coeffs[g] = rhs[i];
        }
    }
    coeffs
}

/// Canonical RT interpolation: the coefficients are the dof functionals of
/// `f` (edge moments by Gauss quadrature, interior averages by cell
/// quadrature).  Commutes with the divergence through the L2 projection.
pub fn interpolate_rt(
    space: &FESpace,
    f: impl Fn([f64; 2], f64) -> [f64; 2],
    t: f64,
) -> Vec<f64> {
    space.assert_kind(SpaceKind::RtVector);
    let mesh = &space.mesh;
    let per_edge = space.dofs_per_edge;
    let mut coeffs = vec![0.0; space.total_dofs];
    for e in 0..mesh.num_edges() {
        for m in 0..per_edge {
            coeffs[e * per_edge + m] = edge_moment(mesh, e, m, |x| f(x, t));
        }
    }
    if space.dofs_per_cell_interior > 0 {
        let rule = simplex_rule(PROJECTION_DEGREE).expect("stocked rule");
        let offset = mesh.num_edges() * per_edge;
        for c in 0..mesh.num_cells() {
            for d in 0..2 {
                coeffs[offset + c * 2 + d] = interior_moment(mesh, c, d, &rule, |x| f(x, t));
            }
        }
    }
    coeffs
}

/// DG coefficients representing the divergence of an RT field.  Exact, since
/// `div RT_k` lies in the DG `P_k` space cellwise.
pub fn dg_divergence(space_u: &FESpace, space_rt: &FESpace, rt_coeffs: &[f64]) -> Vec<f64> {
    space_u.assert_kind(SpaceKind::DgScalar);
    space_rt.assert_kind(SpaceKind::RtVector);
    let rule = simplex_rule(2 * space_u.degree.max(1) + 2).expect("stocked rule");
    let dim = space_u.dofs_per_cell_interior;
    let mut coeffs = vec![0.0; space_u.total_dofs];
    for c in 0..space_u.mesh.num_cells() {
        let (_, det) = space_u.mesh.jacobian(c);
        let mut mass = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space_u.eval_dg_basis(c, p);
            let (_, dv) = space_rt.eval_rt_field(rt_coeffs, c, p);
            for i in 0..dim {
                rhs[i] += w * det * dv * vals[i];
                for j in 0..dim {
                    mass[i * dim + j] += w * det * vals[i] * vals[j];
                }
            }
        }
        solve_dense(dim, &mut mass, &mut rhs).expect("cell mass matrix is SPD");
        for (i, &(g, _)) in space_u.cell_dofs[c].iter().enumerate() {
            coeffs[g] = rhs[i];
        }
    }
    coeffs
}

/// Coefficient vectors of the three unknowns at one time level.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
    /// Mean-constraint multiplier (Cahn-Hilliard boundary conditions only).
    pub mu: Option<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn zeros(space_u: &FESpace, space_m: &FESpace, with_multiplier: bool, t: f64) -> Self {
        FieldState {
            u: vec![0.0; space_u.total_dofs],
            sigma: vec![0.0; space_m.total_dofs],
            phi: vec![0.0; space_m.total_dofs],
            mu: if with_multiplier { Some(0.0) } else { None },
            t,
        }
    }
}

/// In-place dense LU solve with partial pivoting (row-major `a`).
pub(crate) fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Result<()> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return Err(Error::Singular {
                what: "dense solve".into(),
                pivot: Some(col),
            });
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= factor * a[col * n + j];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for j in col + 1..n {
            x -= a[col * n + j] * b[j];
        }
        b[col] = x / a[col * n + col];
    }
    Ok(())
}

/// In-place dense inverse via column-by-column solves.
fn invert_dense(n: usize, a: &mut Vec<f64>) -> Result<()> {
    let orig = a.clone();
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut work = orig.clone();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        solve_dense(n, &mut work, &mut e)?;
        for r in 0..n {
            inv[r * n + col] = e[r];
        }
    }
    *a = inv;
    Ok(())
}
