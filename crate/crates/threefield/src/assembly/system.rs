//! The composed saddle-point operator and its sparse direct factorisation.
//!
//! Unknown ordering is `[u | sigma | phi | mu]` with the scalar mean
//! multiplier present only for Cahn-Hilliard boundary conditions.  The
//! constraint block-row is scaled by `gamma` so the composed matrix is
//! symmetric; scaling an equation by a positive constant leaves the solution
//! unchanged.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `u = Lap u = 0` on the boundary.
    SimplySupported,
    /// `du/dn = d(Lap u)/dn = 0` on the boundary, with zero-mean `u`.
    CahnHilliard,
}

impl BoundaryCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryCondition::SimplySupported => "ss",
            BoundaryCondition::CahnHilliard => "ch",
        }
    }
}

/// Assembled blocks of the three-field system.
#[derive(Debug)]
pub struct BlockSystem {
    /// div-div form on the sigma/phi space.
    pub divdiv: SparseMatrix,
    /// Vector mass on the sigma/phi space (time-dependent runs only).
    pub mass_m: SparseMatrix,
    /// Constraint form, multiplier rows against sigma columns.
    pub b_mass: SparseMatrix,
    /// Constraint form, multiplier rows against u columns.
    pub b_div: SparseMatrix,
    /// Scalar mass on the u space.
    pub mass_u: SparseMatrix,
    /// Mean-constraint border vector.
    pub mean: Vec<f64>,
    pub gamma: f64,
    /// `None` for the stationary biharmonic problem.
    pub dt: Option<f64>,
    pub bc: BoundaryCondition,
    pub n_u: usize,
    pub n_m: usize,
    /// Constrained sigma/phi dofs (space-local indices) for the zero normal
    /// trace; empty for simply supported boundary conditions.
    pub constrained: Vec<usize>,
}

impl BlockSystem {
    pub fn has_multiplier(&self) -> bool {
        self.bc == BoundaryCondition::CahnHilliard
    }

    pub fn num_unknowns(&self) -> usize {
        self.n_u + 2 * self.n_m + usize::from(self.has_multiplier())
    }

    pub fn offset_sigma(&self) -> usize {
        self.n_u
    }

    pub fn offset_phi(&self) -> usize {
        self.n_u + self.n_m
    }

    pub fn offset_mu(&self) -> usize {
        self.n_u + 2 * self.n_m
    }

    /// Global indices eliminated by the zero normal trace (both RT fields).
    pub fn constrained_global(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.constrained.len());
        for &i in &self.constrained {
            out.push(self.offset_sigma() + i);
        }
        for &i in &self.constrained {
            out.push(self.offset_phi() + i);
        }
        out
    }

    /// Zeroes the constrained entries of a global vector (the symmetric
    /// elimination keeps unit diagonals there, so this enforces zero values).
    pub fn zero_constrained(&self, v: &mut [f64]) {
        for g in self.constrained_global() {
            v[g] = 0.0;
        }
    }

    /// Composes the global matrix.  `uu_extra` adds a matrix (e.g. the
    /// reaction Jacobian) to the u-u block; its sparsity must not change
    /// between calls when a cached symbolic factorisation is reused.
    pub fn compose(&self, uu_extra: Option<&SparseMatrix>) -> SparseMatrix {
        let n = self.num_unknowns();
        let (off_s, off_p) = (self.offset_sigma(), self.offset_phi());
        let g = self.gamma;
        let mut constrained_flag = vec![false; n];
        for idx in self.constrained_global() {
            constrained_flag[idx] = true;
        }

        let mut m = SparseMatrix::new(n, n);
        let push = |r: usize, c: usize, v: f64, m: &mut SparseMatrix| {
            if !constrained_flag[r] && !constrained_flag[c] {
                m.push(r, c, v);
            }
        };

        if let Some(dt) = self.dt {
            for (r, c, v) in self.mass_u.entries() {
                push(r, c, v / dt, &mut m);
            }
            for (r, c, v) in self.mass_m.entries() {
                push(off_s + r, off_s + c, v, &mut m);
            }
        }
        if let Some(extra) = uu_extra {
            for (r, c, v) in extra.entries() {
                push(r, c, v, &mut m);
            }
        }
        for (r, c, v) in self.divdiv.entries() {
            push(off_s + r, off_s + c, g * v, &mut m);
        }
        // Constraint columns in the first block-rows, and the gamma-scaled
        // constraint block-row itself.
        for (i, p, v) in self.b_div.entries() {
            push(p, off_p + i, g * v, &mut m);
            push(off_p + i, p, g * v, &mut m);
        }
        for (i, q, v) in self.b_mass.entries() {
            push(off_s + q, off_p + i, g * v, &mut m);
            push(off_p + i, off_s + q, g * v, &mut m);
        }
        if self.has_multiplier() {
            let off_mu = self.offset_mu();
            for (p, &v) in self.mean.iter().enumerate() {
                push(p, off_mu, v, &mut m);
                push(off_mu, p, v, &mut m);
            }
        }
        for (idx, &flag) in constrained_flag.iter().enumerate() {
            if flag {
                m.push(idx, idx, 1.0);
            }
        }
        m.compress();
        m
    }

    /// Detects the vanishing constraint block the nonlinear solver struggles
    /// with at very small `gamma`.
    fn near_singular_warning(&self) -> Option<String> {
        if self.dt.is_some() {
            let coupling = self.gamma * self.b_mass.max_abs();
            let mass = self.mass_m.max_abs();
            if coupling < 1e-5 * mass {
                return Some(format!(
                    "constraint blocks scaled by gamma={:.1e} are vanishing relative to the \
                     vector mass; the composed matrix is close to rank-deficient",
                    self.gamma
                ));
            }
        }
        None
    }
}

/// Direct solver wrapper; caches the symbolic factorisation, which stays
/// valid across Newton iterations and time steps because only matrix values
/// change.
pub struct SaddleSolver<'a> {
    system: &'a BlockSystem,
    symbolic: Option<SymbolicLu<usize>>,
}

impl<'a> SaddleSolver<'a> {
    pub fn new(system: &'a BlockSystem) -> Self {
        SaddleSolver {
            system,
            symbolic: None,
        }
    }

    pub fn system(&self) -> &BlockSystem {
        self.system
    }

    pub fn factor(&mut self, uu_extra: Option<&SparseMatrix>) -> Result<FactorizedSystem> {
        let global = self.system.compose(uu_extra);
        factorize(global, &mut self.symbolic, self.system.near_singular_warning())
    }
}

/// Factorises an already-composed matrix (no symbolic reuse).
pub fn factorize_matrix(global: SparseMatrix) -> Result<FactorizedSystem> {
    factorize(global, &mut None, None)
}

fn factorize(
    global: SparseMatrix,
    symbolic_cache: &mut Option<SymbolicLu<usize>>,
    warning: Option<String>,
) -> Result<FactorizedSystem> {
    let n = global.nrows();
    // Structural singularity: an empty row or column cannot be pivoted.
    let mut row_count = vec![0usize; n];
    let mut col_count = vec![0usize; n];
    for (r, c, _) in global.entries() {
        row_count[r] += 1;
        col_count[c] += 1;
    }
    for i in 0..n {
        if row_count[i] == 0 || col_count[i] == 0 {
            return Err(Error::Singular {
                what: "structurally singular global matrix (empty row or column)".into(),
                pivot: Some(i),
            });
        }
    }

    let triplets: Vec<Triplet<usize, usize, f64>> = global
        .entries()
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Singular {
            what: format!("sparse matrix creation failed: {e:?}"),
            pivot: None,
        })?;
    if symbolic_cache.is_none() {
        *symbolic_cache = Some(SymbolicLu::try_new(mat.symbolic()).map_err(|e| {
            Error::Singular {
                what: format!("symbolic LU failed: {e:?}"),
                pivot: None,
            }
        })?);
    }
    let lu = Lu::try_new_with_symbolic(symbolic_cache.clone().unwrap(), mat.as_ref()).map_err(
        |e| Error::Singular {
            what: format!("numeric LU failed: {e:?}"),
            pivot: None,
        },
    )?;
    Ok(FactorizedSystem {
        lu,
        matrix: mat,
        n,
        warning,
    })
}

/// A factorised global operator with its matrix retained for residual
/// checks.
pub struct FactorizedSystem {
    lu: Lu<usize, f64>,
    matrix: SparseColMat<usize, f64>,
    pub n: usize,
    pub warning: Option<String>,
}

impl FactorizedSystem {
    /// Solves and reports the relative residual; runs one step of iterative
    /// refinement when plain substitution is not at machine precision.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
        assert_eq!(rhs.len(), self.n);
        let b = faer::Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let mut x = self.lu.solve(&b);
        let mut relres = self.relative_residual(&x, rhs);
        if !relres.is_finite() || relres > 1e-13 {
            let r = faer::Mat::from_fn(self.n, 1, |i, _| {
                rhs[i] - (&self.matrix * &x)[(i, 0)]
            });
            let dx = self.lu.solve(&r);
            for i in 0..self.n {
                x[(i, 0)] += dx[(i, 0)];
            }
            relres = self.relative_residual(&x, rhs);
        }
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular {
                what: "numerically singular matrix (non-finite solution)".into(),
                pivot: Some(bad),
            });
        }
        Ok((out, relres))
    }

    fn relative_residual(&self, x: &faer::Mat<f64>, rhs: &[f64]) -> f64 {
        let ax = &self.matrix * x;
        let mut r2 = 0.0;
        let mut b2 = 0.0;
        for (i, &b) in rhs.iter().enumerate() {
            r2 += (b - ax[(i, 0)]).powi(2);
            b2 += b * b;
        }
        (r2 / b2.max(1e-300)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble_coupling, assemble_divdiv, assemble_mean_vector, assemble_nonlinear,
        assemble_scalar_mass, assemble_vector_mass,
    };
    use crate::mesh::Mesh;
    use crate::spaces::{build_dg_space, build_rt_space};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn block_system(n: usize, k: usize, bc: BoundaryCondition, gamma: f64, dt: Option<f64>) -> BlockSystem {
        let mesh = Arc::new(Mesh::unit_square(n).unwrap());
        let dg = build_dg_space(mesh.clone(), k).unwrap();
        let rt = build_rt_space(
            mesh,
            k,
            bc == BoundaryCondition::CahnHilliard,
        )
        .unwrap();
        let (b_mass, b_div) = assemble_coupling(&dg, &rt).unwrap();
        BlockSystem {
            divdiv: assemble_divdiv(&rt),
            mass_m: assemble_vector_mass(&rt),
            b_mass,
            b_div,
            mass_u: assemble_scalar_mass(&dg),
            mean: assemble_mean_vector(&dg),
            gamma,
            dt,
            bc,
            n_u: dg.total_dofs,
            n_m: rt.total_dofs,
            constrained: rt.constrained_boundary_dofs.clone(),
        }
    }

    #[test]
    fn composed_matrix_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for (bc, dt) in [
            (BoundaryCondition::SimplySupported, Some(0.01)),
            (BoundaryCondition::CahnHilliard, Some(0.01)),
            (BoundaryCondition::SimplySupported, None),
        ] {
            let sys = block_system(2, 0, bc, if dt.is_some() { 0.37 } else { 1.0 }, dt);
            let mesh = Arc::new(Mesh::unit_square(2).unwrap());
            let dg = build_dg_space(mesh, 0).unwrap();
            let u: Vec<f64> = (0..dg.total_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, jac) = assemble_nonlinear(&dg, &u);
            let global = sys.compose(dt.map(|_| &jac));
            let err = global.symmetry_error();
            assert!(
                err <= 1e-10 * global.max_abs().max(1.0),
                "{bc:?}/{dt:?}: asymmetry {err}"
            );
        }
    }

    #[test]
    fn stationary_solve_meets_residual_contract() {
        let sys = block_system(4, 0, BoundaryCondition::SimplySupported, 1.0, None);
        let mut solver = SaddleSolver::new(&sys);
        let factored = solver.factor(None).unwrap();
        assert!(factored.warning.is_none());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let rhs: Vec<f64> = (0..sys.num_unknowns())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let (_, relres) = factored.solve(&rhs).unwrap();
        assert!(relres <= 1e-10, "relative residual {relres}");
    }

    #[test]
    fn gamma_scaling_warning_paths() {
        let healthy = block_system(2, 0, BoundaryCondition::SimplySupported, 1.0, Some(1.0));
        let mut solver = SaddleSolver::new(&healthy);
        assert!(solver.factor(None).unwrap().warning.is_none());

        let tiny = block_system(2, 0, BoundaryCondition::SimplySupported, 1e-6, Some(1.0));
        let mut solver = SaddleSolver::new(&tiny);
        let factored = solver.factor(None).unwrap();
        assert!(factored.warning.is_some(), "gamma=1e-6 must flag near-singularity");
    }

    #[test]
    fn zero_normal_trace_elimination() {
        let sys = block_system(2, 0, BoundaryCondition::CahnHilliard, 1.0, Some(0.01));
        assert_eq!(sys.constrained.len(), 8);
        assert_eq!(sys.constrained_global().len(), 16);
        let global = sys.compose(None);
        for g in sys.constrained_global() {
            let row: Vec<(usize, usize, f64)> =
                global.entries().filter(|&(r, _, _)| r == g).collect();
            assert_eq!(row.len(), 1, "constrained row {g} must be identity");
            assert_eq!(row[0].1, g);
            assert_eq!(row[0].2, 1.0);
        }
        // Eliminated dofs read back exactly zero after a solve.
        let mut solver = SaddleSolver::new(&sys);
        let factored = solver.factor(None).unwrap();
        let mut rhs = vec![1.0; sys.num_unknowns()];
        sys.zero_constrained(&mut rhs);
        let (x, _) = factored.solve(&rhs).unwrap();
        for g in sys.constrained_global() {
            assert_eq!(x[g], 0.0);
        }
    }

    #[test]
    fn simply_supported_has_no_constraints() {
        let sys = block_system(2, 0, BoundaryCondition::SimplySupported, 1.0, Some(0.01));
        assert!(sys.constrained.is_empty());
        assert!(sys.constrained_global().is_empty());
    }

    #[test]
    fn structural_singularity_reports_location() {
        let mut m = SparseMatrix::new(3, 3);
        m.push(0, 0, 1.0);
        m.push(2, 2, 1.0);
        // Row/column 1 left empty.
        m.compress();
        match factorize_matrix(m) {
            Err(Error::Singular { pivot: Some(1), .. }) => {}
            Err(other) => panic!("expected structural singularity at 1, got {other:?}"),
            Ok(_) => panic!("expected structural singularity at 1, got a factorisation"),
        }
    }
}
