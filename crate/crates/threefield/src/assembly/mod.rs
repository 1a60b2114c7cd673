//! Global assembly of the saddle-point blocks and load functionals.
//!
//! Block naming follows the variational structure: `divdiv` is the
//! div-sigma/div-tau form, `b_mass` and `b_div` the two parts of the
//! constraint form (vector mass against the multiplier and `v div psi`),
//! `mass_u`/`mass_m` the scalar and vector mass matrices, and the nonlinear
//! terms come from the cubic reaction `g(u) = u^3 - u`.

mod sparse;
mod system;

pub use sparse::SparseMatrix;
pub use system::{
    factorize_matrix, BlockSystem, BoundaryCondition, FactorizedSystem, SaddleSolver,
};

use crate::error::{Error, Result};
use crate::quadrature::simplex_rule;
use crate::spaces::{FESpace, SpaceKind};

/// Cubic reaction term.
pub fn g(u: f64) -> f64 {
    u * u * u - u
}

/// Derivative of the cubic reaction term.
pub fn g_prime(u: f64) -> f64 {
    3.0 * u * u - 1.0
}

/// Quadrature degree that integrates every bilinear form exactly for
/// `k <= 1`, including the cubic term tested against the DG basis.
fn assembly_degree(k: usize) -> usize {
    2 * k + 4
}

/// Quadrature degree for data terms (the source `f` is generally not a
/// polynomial).
const LOAD_DEGREE: usize = 10;

fn check_meshes(a: &FESpace, b: &FESpace) -> Result<()> {
    if !std::sync::Arc::ptr_eq(&a.mesh, &b.mesh) {
        return Err(Error::InvalidArgument(
            "spaces are built on different meshes".into(),
        ));
    }
    Ok(())
}

/// `(A)_ij = integral of div tau_j div tau_i` over an RT space.
pub fn assemble_divdiv(space: &FESpace) -> SparseMatrix {
    let order: Vec<usize> = (0..space.mesh.num_cells()).collect();
    assemble_divdiv_ordered(space, &order)
}

pub(crate) fn assemble_divdiv_ordered(space: &FESpace, order: &[usize]) -> SparseMatrix {
    assert_eq!(space.kind, SpaceKind::RtVector);
    let rule = simplex_rule(assembly_degree(space.degree)).expect("stocked rule");
    let n = space.total_dofs;
    let mut m = SparseMatrix::new(n, n);
    for &c in order {
        let (_, det) = space.mesh.jacobian(c);
        let nloc = space.local_dofs();
        let mut local = vec![0.0; nloc * nloc];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (_, divs) = space.eval_rt_basis(c, p);
            for i in 0..nloc {
                for j in 0..nloc {
                    local[i * nloc + j] += w * det * divs[i] * divs[j];
                }
            }
        }
        scatter(&mut m, &space.cell_dofs[c], &space.cell_dofs[c], &local);
    }
    m.compress();
    m
}

/// `(C)_ij = integral of tau_j . tau_i` over an RT space (SPD).
pub fn assemble_vector_mass(space: &FESpace) -> SparseMatrix {
    assert_eq!(space.kind, SpaceKind::RtVector);
    let rule = simplex_rule(assembly_degree(space.degree)).expect("stocked rule");
    let n = space.total_dofs;
    let mut m = SparseMatrix::new(n, n);
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        let nloc = space.local_dofs();
        let mut local = vec![0.0; nloc * nloc];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space.eval_rt_basis(c, p);
            for i in 0..nloc {
                for j in 0..nloc {
                    local[i * nloc + j] +=
                        w * det * (vals[i][0] * vals[j][0] + vals[i][1] * vals[j][1]);
                }
            }
        }
        scatter(&mut m, &space.cell_dofs[c], &space.cell_dofs[c], &local);
    }
    m.compress();
    m
}

/// Constraint-form blocks: `b_mass[i][q] = integral of tau_q . psi_i` over
/// the multiplier space and `b_div[i][p] = integral of v_p div psi_i`.
/// The sigma and phi spaces share one layout, so one RT space serves both.
pub fn assemble_coupling(
    space_u: &FESpace,
    space_m: &FESpace,
) -> Result<(SparseMatrix, SparseMatrix)> {
    assert_eq!(space_u.kind, SpaceKind::DgScalar);
    assert_eq!(space_m.kind, SpaceKind::RtVector);
    check_meshes(space_u, space_m)?;
    let rule = simplex_rule(assembly_degree(space_m.degree)).expect("stocked rule");
    let (nm, nu) = (space_m.total_dofs, space_u.total_dofs);
    let mut b_mass = SparseMatrix::new(nm, nm);
    let mut b_div = SparseMatrix::new(nm, nu);
    for c in 0..space_m.mesh.num_cells() {
        let (_, det) = space_m.mesh.jacobian(c);
        let nloc_m = space_m.local_dofs();
        let nloc_u = space_u.local_dofs();
        let mut local_mass = vec![0.0; nloc_m * nloc_m];
        let mut local_div = vec![0.0; nloc_m * nloc_u];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, divs) = space_m.eval_rt_basis(c, p);
            let (scal, _) = space_u.eval_dg_basis(c, p);
            for i in 0..nloc_m {
                for q in 0..nloc_m {
                    local_mass[i * nloc_m + q] +=
                        w * det * (vals[q][0] * vals[i][0] + vals[q][1] * vals[i][1]);
                }
                for p_ in 0..nloc_u {
                    local_div[i * nloc_u + p_] += w * det * scal[p_] * divs[i];
                }
            }
        }
        scatter(&mut b_mass, &space_m.cell_dofs[c], &space_m.cell_dofs[c], &local_mass);
        scatter(&mut b_div, &space_m.cell_dofs[c], &space_u.cell_dofs[c], &local_div);
    }
    b_mass.compress();
    b_div.compress();
    Ok((b_mass, b_div))
}

/// Scalar DG mass matrix.
pub fn assemble_scalar_mass(space: &FESpace) -> SparseMatrix {
    assert_eq!(space.kind, SpaceKind::DgScalar);
    let rule = simplex_rule(assembly_degree(space.degree)).expect("stocked rule");
    let n = space.total_dofs;
    let mut m = SparseMatrix::new(n, n);
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        let nloc = space.local_dofs();
        let mut local = vec![0.0; nloc * nloc];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space.eval_dg_basis(c, p);
            for i in 0..nloc {
                for j in 0..nloc {
                    local[i * nloc + j] += w * det * vals[i] * vals[j];
                }
            }
        }
        scatter(&mut m, &space.cell_dofs[c], &space.cell_dofs[c], &local);
    }
    m.compress();
    m
}

/// Load vector `l_p = integral of f(x, t) v_p`.
pub fn assemble_load(space: &FESpace, f: impl Fn([f64; 2], f64) -> f64, t: f64) -> Vec<f64> {
    assemble_load_with_degree(space, f, t, LOAD_DEGREE.max(assembly_degree(space.degree)))
}

pub(crate) fn assemble_load_with_degree(
    space: &FESpace,
    f: impl Fn([f64; 2], f64) -> f64,
    t: f64,
    degree: usize,
) -> Vec<f64> {
    assert_eq!(space.kind, SpaceKind::DgScalar);
    let rule = simplex_rule(degree).expect("stocked rule");
    let mut out = vec![0.0; space.total_dofs];
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space.eval_dg_basis(c, p);
            let fx = f(space.mesh.ref_to_phys(c, p), t);
            for (i, &(gdof, _)) in space.cell_dofs[c].iter().enumerate() {
                out[gdof] += w * det * fx * vals[i];
            }
        }
    }
    out
}

/// Mean-constraint vector `m_p = integral of v_p`, the bordered row/column
/// enforcing the zero mean of `u` with a real Lagrange multiplier.
pub fn assemble_mean_vector(space: &FESpace) -> Vec<f64> {
    assemble_load_with_degree(space, |_, _| 1.0, 0.0, assembly_degree(space.degree))
}

/// Residual `r_p = integral of g(u_h) v_p` and Jacobian
/// `J_pq = integral of g'(u_h) v_q v_p` of the cubic term.  The quadrature
/// is exact for `k <= 1`, keeping Newton quadratic.
pub fn assemble_nonlinear(space: &FESpace, u_coeffs: &[f64]) -> (Vec<f64>, SparseMatrix) {
    assert_eq!(space.kind, SpaceKind::DgScalar);
    assert_eq!(u_coeffs.len(), space.total_dofs);
    let rule = simplex_rule(assembly_degree(space.degree)).expect("stocked rule");
    let n = space.total_dofs;
    let mut residual = vec![0.0; n];
    let mut jac = SparseMatrix::new(n, n);
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        let nloc = space.local_dofs();
        let mut local_r = vec![0.0; nloc];
        let mut local_j = vec![0.0; nloc * nloc];
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space.eval_dg_basis(c, p);
            let uh: f64 = space.cell_dofs[c]
                .iter()
                .zip(&vals)
                .map(|(&(gi, _), v)| u_coeffs[gi] * v)
                .sum();
            let (gu, dgu) = (g(uh), g_prime(uh));
            for i in 0..nloc {
                local_r[i] += w * det * gu * vals[i];
                for j in 0..nloc {
                    local_j[i * nloc + j] += w * det * dgu * vals[j] * vals[i];
                }
            }
        }
        for (i, &(gi, _)) in space.cell_dofs[c].iter().enumerate() {
            residual[gi] += local_r[i];
        }
        scatter(&mut jac, &space.cell_dofs[c], &space.cell_dofs[c], &local_j);
    }
    jac.compress();
    (residual, jac)
}

fn scatter(
    m: &mut SparseMatrix,
    row_dofs: &[(usize, i8)],
    col_dofs: &[(usize, i8)],
    local: &[f64],
) {
    let ncols = col_dofs.len();
    for (i, &(gi, _)) in row_dofs.iter().enumerate() {
        for (j, &(gj, _)) in col_dofs.iter().enumerate() {
            m.push(gi, gj, local[i * ncols + j]);
        }
    }
}
