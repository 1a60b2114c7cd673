//! Stationary biharmonic solves and the backward Euler / Newton time
//! integrator for the extended Fisher-Kolmogorov equation.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::assembly::{
    assemble_coupling, assemble_divdiv, assemble_load, assemble_mean_vector, assemble_nonlinear,
    assemble_scalar_mass, assemble_vector_mass, g, BlockSystem, BoundaryCondition,
    FactorizedSystem, SaddleSolver,
};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::simplex_rule;
use crate::spaces::{build_dg_space, build_rt_space, project_l2, FESpace, FieldState, SpaceKind};

/// Everything a single run needs: boundary conditions, discretisation
/// parameters and Newton controls.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub bc: BoundaryCondition,
    pub k: usize,
    /// Cells per side of the structured unit-square mesh.
    pub n: usize,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Absolute tolerance on the algebraic residual 2-norm.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Manufactured-case identifier.
    pub case: String,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            bc: BoundaryCondition::SimplySupported,
            k: 0,
            n: 8,
            gamma: 1.0,
            dt: 0.01,
            t_final: 0.1,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            case: "efk_ss_2d".into(),
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > 1 {
            return Err(Error::InvalidArgument(format!("k={} not in {{0,1}}", self.k)));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        if !(self.dt > 0.0) || self.t_final < 0.0 {
            return Err(Error::InvalidArgument("need dt > 0 and T >= 0".into()));
        }
        if self.t_final > 0.0 {
            let ratio = self.t_final / self.dt;
            if (ratio - ratio.round()).abs() > 1e-8 * ratio.max(1.0) || ratio.round() < 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "T/dt = {ratio} is not a positive integer"
                )));
            }
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Wall-clock breakdown of a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub assembly: Duration,
    pub factorization: Duration,
    pub newton: Duration,
}

/// Mesh, spaces and assembled blocks for one problem instance.
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub space_u: FESpace,
    /// Layout shared by the sigma unknown.
    pub space_m: FESpace,
    /// Independent instance of the same layout for the multiplier phi.
    pub space_phi: FESpace,
    pub system: BlockSystem,
    pub assembly_time: Duration,
}

impl Discretization {
    pub fn stationary(config: &ProblemConfig) -> Result<Self> {
        let mesh = Arc::new(Mesh::unit_square(config.n)?);
        Self::on_mesh(config, mesh, true)
    }

    pub fn time_dependent(config: &ProblemConfig) -> Result<Self> {
        let mesh = Arc::new(Mesh::unit_square(config.n)?);
        Self::on_mesh(config, mesh, false)
    }

    /// Builds the discretisation on an arbitrary conforming triangle mesh.
    /// Stationary problems drop the vector mass and use gamma = 1.
    pub fn on_mesh(config: &ProblemConfig, mesh: Arc<Mesh>, stationary: bool) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let zero_normal_trace = config.bc == BoundaryCondition::CahnHilliard;
        let space_u = build_dg_space(mesh.clone(), config.k)?;
        let space_m = build_rt_space(mesh.clone(), config.k, zero_normal_trace)?;
        let space_phi = build_rt_space(mesh.clone(), config.k, zero_normal_trace)?;
        let (b_mass, b_div) = assemble_coupling(&space_u, &space_m)?;
        let system = BlockSystem {
            divdiv: assemble_divdiv(&space_m),
            mass_m: assemble_vector_mass(&space_m),
            b_mass,
            b_div,
            mass_u: assemble_scalar_mass(&space_u),
            mean: assemble_mean_vector(&space_u),
            gamma: if stationary { 1.0 } else { config.gamma },
            dt: if stationary { None } else { Some(config.dt) },
            bc: config.bc,
            n_u: space_u.total_dofs,
            n_m: space_m.total_dofs,
            constrained: space_m.constrained_boundary_dofs.clone(),
        };
        Ok(Discretization {
            mesh,
            space_u,
            space_m,
            space_phi,
            system,
            assembly_time: start.elapsed(),
        })
    }

    /// Total unknowns reported in convergence tables: field dofs plus the
    /// mean multiplier when present (eliminated dofs are still counted).
    pub fn reported_dofs(&self) -> usize {
        self.system.num_unknowns()
    }

    pub fn pack(&self, state: &FieldState) -> Vec<f64> {
        let sys = &self.system;
        let mut x = vec![0.0; sys.num_unknowns()];
        x[..sys.n_u].copy_from_slice(&state.u);
        x[sys.offset_sigma()..sys.offset_sigma() + sys.n_m].copy_from_slice(&state.sigma);
        x[sys.offset_phi()..sys.offset_phi() + sys.n_m].copy_from_slice(&state.phi);
        if sys.has_multiplier() {
            x[sys.offset_mu()] = state.mu.unwrap_or(0.0);
        }
        x
    }

    pub fn unpack(&self, x: &[f64], t: f64) -> FieldState {
        let sys = &self.system;
        FieldState {
            u: x[..sys.n_u].to_vec(),
            sigma: x[sys.offset_sigma()..sys.offset_sigma() + sys.n_m].to_vec(),
            phi: x[sys.offset_phi()..sys.offset_phi() + sys.n_m].to_vec(),
            mu: sys.has_multiplier().then(|| x[sys.offset_mu()]),
            t,
        }
    }

    /// L2 norm of a scalar field through the mass matrix.
    pub fn u_l2(&self, u: &[f64]) -> f64 {
        dot(u, &self.system.mass_u.matvec(u)).max(0.0).sqrt()
    }

    /// L2 norm of a vector field through the vector mass matrix.
    pub fn m_l2(&self, v: &[f64]) -> f64 {
        dot(v, &self.system.mass_m.matvec(v)).max(0.0).sqrt()
    }

    /// H(div) norm: field L2 part plus divergence L2 part.
    pub fn m_hdiv(&self, v: &[f64]) -> f64 {
        let field = dot(v, &self.system.mass_m.matvec(v));
        let div = dot(v, &self.system.divdiv.matvec(v));
        (field + div).max(0.0).sqrt()
    }

    /// Constraint residual `|b_mass sigma + b_div u|_2` of a state, over the
    /// active multiplier test space (rows of eliminated normal-trace dofs do
    /// not constrain the solution).
    pub fn constraint_residual(&self, state: &FieldState) -> f64 {
        let mut r = self.system.b_mass.matvec(&state.sigma);
        for (ri, bi) in r.iter_mut().zip(self.system.b_div.matvec(&state.u)) {
            *ri += bi;
        }
        for &i in &self.system.constrained {
            r[i] = 0.0;
        }
        norm2(&r)
    }

    /// Weighted mean of `u` (zero for converged Cahn-Hilliard solutions).
    pub fn mean_value(&self, u: &[f64]) -> f64 {
        dot(&self.system.mean, u)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Per-solve Newton record.
#[derive(Debug, Clone)]
pub struct NewtonStats {
    /// Number of Jacobian solves performed.
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Residual norms, starting with the initial one.
    pub residual_history: Vec<f64>,
    pub warning: Option<String>,
    pub factor_time: Duration,
}

impl NewtonStats {
    /// Quadratic-convergence constant estimated from the last two residuals:
    /// `|r_last| <= kappa |r_prev|^2`.  Needs at least three recorded norms.
    pub fn quadratic_kappa(&self) -> Option<f64> {
        let h = &self.residual_history;
        if h.len() < 3 {
            return None;
        }
        let (prev, last) = (h[h.len() - 2], h[h.len() - 1]);
        (prev > 0.0).then(|| last / (prev * prev))
    }
}

/// Damped Newton iteration: full steps, halving up to eight times when the
/// residual norm fails to decrease.  Returns the final iterate with its
/// statistics; `converged` is false on stagnation or the iteration limit.
pub(crate) fn newton_iterate(
    mut residual: impl FnMut(&[f64]) -> Vec<f64>,
    mut jacobian: impl FnMut(&[f64]) -> Result<FactorizedSystem>,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, NewtonStats)> {
    let mut x = x0;
    let mut r = residual(&x);
    let mut rnorm = norm2(&r);
    let mut history = vec![rnorm];
    let mut warning = None;
    let mut iterations = 0;
    let mut factor_time = Duration::ZERO;
    let mut stalled = false;

    while rnorm > tol && iterations < max_iter && !stalled {
        let t0 = Instant::now();
        let factored = jacobian(&x)?;
        factor_time += t0.elapsed();
        if warning.is_none() {
            warning = factored.warning.clone();
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let (dx, _) = factored.solve(&neg_r)?;
        iterations += 1;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + alpha * di).collect();
            let r_trial = residual(&trial);
            let rt = norm2(&r_trial);
            if rt < rnorm || rt <= tol {
                x = trial;
                r = r_trial;
                rnorm = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        history.push(rnorm);
        if !accepted {
            stalled = true;
        }
    }

    let converged = rnorm <= tol;
    Ok((
        x,
        NewtonStats {
            iterations,
            final_residual: rnorm,
            converged,
            residual_history: history,
            warning,
            factor_time,
        },
    ))
}

/// Strict Newton driver: divergence (stagnation or the iteration limit) is
/// an error carrying the residual history.
pub fn newton_solve(
    residual: impl FnMut(&[f64]) -> Vec<f64>,
    jacobian: impl FnMut(&[f64]) -> Result<FactorizedSystem>,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, NewtonStats)> {
    let (x, stats) = newton_iterate(residual, jacobian, x0, tol, max_iter)?;
    if !stats.converged {
        return Err(Error::NewtonDiverged {
            step: None,
            iterations: stats.iterations,
            residual: stats.final_residual,
            history: stats.residual_history,
        });
    }
    Ok((x, stats))
}

/// Residual of one backward Euler step (or of the stationary problem when
/// `time_dependent` is false), in the global unknown ordering.
struct StepResidual<'a> {
    disc: &'a Discretization,
    /// `l + (1/dt) Mu u_old`; just `l` for stationary solves.
    fixed_u: Vec<f64>,
    time_dependent: bool,
}

impl StepResidual<'_> {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let sys = &self.disc.system;
        let g_par = sys.gamma;
        let (n_u, n_m) = (sys.n_u, sys.n_m);
        let (off_s, off_p) = (sys.offset_sigma(), sys.offset_phi());
        let u = &x[..n_u];
        let s = &x[off_s..off_s + n_m];
        let p = &x[off_p..off_p + n_m];

        let mut out = vec![0.0; sys.num_unknowns()];

        let bdt_p = sys.b_div.transpose_matvec(p);
        for i in 0..n_u {
            out[i] = g_par * bdt_p[i] - self.fixed_u[i];
        }
        if self.time_dependent {
            let dt = sys.dt.expect("time-dependent residual needs dt");
            let mu_u = sys.mass_u.matvec(u);
            let reaction = reaction_residual(&self.disc.space_u, u);
            for i in 0..n_u {
                out[i] += mu_u[i] / dt + reaction[i];
            }
        }
        if sys.has_multiplier() {
            let mu = x[sys.offset_mu()];
            for i in 0..n_u {
                out[i] += sys.mean[i] * mu;
            }
            out[sys.offset_mu()] = dot(&sys.mean, u);
        }

        let a_s = sys.divdiv.matvec(s);
        let bmt_p = sys.b_mass.transpose_matvec(p);
        for i in 0..n_m {
            out[off_s + i] = g_par * (a_s[i] + bmt_p[i]);
        }
        if self.time_dependent {
            let c_s = sys.mass_m.matvec(s);
            for i in 0..n_m {
                out[off_s + i] += c_s[i];
            }
        }

        // Gamma-scaled constraint block-row.
        let bd_u = sys.b_div.matvec(u);
        let bm_s = sys.b_mass.matvec(s);
        for i in 0..n_m {
            out[off_p + i] = g_par * (bd_u[i] + bm_s[i]);
        }

        // Eliminated dofs: the residual pins them to zero.
        for gidx in sys.constrained_global() {
            out[gidx] = x[gidx];
        }
        out
    }
}

/// Reaction residual `integral of g(u_h) v_p` without the Jacobian.
fn reaction_residual(space: &FESpace, u: &[f64]) -> Vec<f64> {
    assert_eq!(space.kind, SpaceKind::DgScalar);
    let rule = simplex_rule(2 * space.degree + 4).expect("stocked rule");
    let mut out = vec![0.0; space.total_dofs];
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = space.eval_dg_basis(c, p);
            let uh: f64 = space.cell_dofs[c]
                .iter()
                .zip(&vals)
                .map(|(&(gi, _), v)| u[gi] * v)
                .sum();
            let gu = g(uh);
            for (i, &(gi, _)) in space.cell_dofs[c].iter().enumerate() {
                out[gi] += w * det * gu * vals[i];
            }
        }
    }
    out
}

/// Solves the stationary biharmonic problem with load `f` evaluated at time
/// `t`.  For Cahn-Hilliard boundary conditions the zero mean of `u` is
/// enforced through the bordered multiplier.
pub fn solve_biharmonic(
    disc: &Discretization,
    f: &dyn Fn([f64; 2], f64) -> f64,
    t: f64,
) -> Result<FieldState> {
    let sys = &disc.system;
    assert!(sys.dt.is_none(), "discretisation must be stationary");
    let load = assemble_load(&disc.space_u, f, t);
    let mut rhs = vec![0.0; sys.num_unknowns()];
    rhs[..sys.n_u].copy_from_slice(&load);
    sys.zero_constrained(&mut rhs);

    let mut solver = SaddleSolver::new(sys);
    let factored = solver.factor(None)?;
    let (x, relres) = factored.solve(&rhs)?;
    if relres > 1e-8 {
        return Err(Error::Singular {
            what: format!("direct solve residual {relres:.2e} above contract"),
            pivot: None,
        });
    }
    Ok(disc.unpack(&x, t))
}

/// One backward Euler step from `state` to `state.t + dt`, solving the
/// nonlinear system with Newton started from the previous time level.
pub fn step_backward_euler(
    disc: &Discretization,
    state: &FieldState,
    config: &ProblemConfig,
    f: &dyn Fn([f64; 2], f64) -> f64,
) -> Result<(FieldState, NewtonStats)> {
    let mut solver = SaddleSolver::new(&disc.system);
    step_with_solver(disc, &mut solver, state, config, f)
}

pub(crate) fn step_with_solver(
    disc: &Discretization,
    solver: &mut SaddleSolver,
    state: &FieldState,
    config: &ProblemConfig,
    f: &dyn Fn([f64; 2], f64) -> f64,
) -> Result<(FieldState, NewtonStats)> {
    let sys = &disc.system;
    let dt = sys.dt.expect("discretisation must be time-dependent");
    let t_next = state.t + dt;

    let load = assemble_load(&disc.space_u, f, t_next);
    let mu_un = sys.mass_u.matvec(&state.u);
    let fixed_u: Vec<f64> = load.iter().zip(&mu_un).map(|(l, m)| l + m / dt).collect();
    let residual = StepResidual {
        disc,
        fixed_u,
        time_dependent: true,
    };

    let mut x0 = disc.pack(state);
    sys.zero_constrained(&mut x0);

    let space_u = &disc.space_u;
    let n_u = sys.n_u;
    let (x, stats) = newton_iterate(
        |x| residual.eval(x),
        |x| {
            let (_, jac) = assemble_nonlinear(space_u, &x[..n_u]);
            solver.factor(Some(&jac))
        },
        x0,
        config.newton_tol,
        config.newton_max_iter,
    )?;
    Ok((disc.unpack(&x, t_next), stats))
}

/// A finished time-dependent run.
pub struct EfkRun {
    pub state: FieldState,
    pub steps: Vec<NewtonStats>,
    pub timings: PhaseTimings,
}

/// Integrates the extended Fisher-Kolmogorov problem from `u_h(0) = P_h u0`
/// to `T` with constant steps; aborts with the failing time index when
/// Newton does not converge.
pub fn run_efk(
    disc: &Discretization,
    config: &ProblemConfig,
    f: &dyn Fn([f64; 2], f64) -> f64,
    u0: &dyn Fn([f64; 2]) -> f64,
) -> Result<EfkRun> {
    let t_start = Instant::now();
    let sys = &disc.system;
    let mut state = FieldState::zeros(&disc.space_u, &disc.space_m, sys.has_multiplier(), 0.0);
    state.u = project_l2(&disc.space_u, |x, _| u0(x), 0.0);

    let mut solver = SaddleSolver::new(sys);
    let mut steps = Vec::with_capacity(config.num_steps());
    let mut factor_total = Duration::ZERO;
    for step_index in 1..=config.num_steps() {
        let (next, stats) = step_with_solver(disc, &mut solver, &state, config, f)?;
        factor_total += stats.factor_time;
        state = next;
        // Keep time exact: t_n = n * dt avoids drift from repeated addition.
        state.t = step_index as f64 * config.dt;
        let converged = stats.converged;
        let (iters, res, hist) = (
            stats.iterations,
            stats.final_residual,
            stats.residual_history.clone(),
        );
        steps.push(stats);
        if !converged {
            return Err(Error::NewtonDiverged {
                step: Some(step_index),
                iterations: iters,
                residual: res,
                history: hist,
            });
        }
    }
    let newton_total = t_start.elapsed();
    Ok(EfkRun {
        state,
        steps,
        timings: PhaseTimings {
            assembly: disc.assembly_time,
            factorization: factor_total,
            newton: newton_total,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{factorize_matrix, SparseMatrix};
    use std::f64::consts::PI;

    fn ss_config(n: usize, k: usize) -> ProblemConfig {
        ProblemConfig {
            n,
            k,
            ..ProblemConfig::default()
        }
    }

    /// Manufactured source for u = t sin(pi x) sin(pi y) in the EFK equation.
    fn efk_ss_source(gamma: f64) -> impl Fn([f64; 2], f64) -> f64 {
        move |x, t| {
            let s = (PI * x[0]).sin() * (PI * x[1]).sin();
            s + (gamma * 4.0 * PI.powi(4) + 2.0 * PI * PI - 1.0) * t * s + (t * s).powi(3)
        }
    }

    #[test]
    fn config_validation() {
        assert!(ss_config(8, 0).validate().is_ok());
        let mut bad = ss_config(8, 0);
        bad.t_final = 0.095; // not a multiple of dt = 0.01
        assert!(bad.validate().is_err());
        let mut bad = ss_config(8, 0);
        bad.gamma = 0.0;
        assert!(bad.validate().is_err());
        assert_eq!(ss_config(4, 0).num_steps(), 10);
    }

    #[test]
    fn newton_converges_in_one_iteration_for_linear_problems() {
        // F(x) = A x - b with SPD A.
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 2.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 3.0)],
        );
        let b = [1.0, -2.0];
        let (x, stats) = newton_solve(
            |x| {
                let ax = a.matvec(x);
                vec![ax[0] - b[0], ax[1] - b[1]]
            },
            |_| factorize_matrix(a.clone()),
            vec![0.0, 0.0],
            1e-10,
            25,
        )
        .unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(stats.converged);
        let ax = a.matvec(&x);
        assert!((ax[0] - b[0]).abs() < 1e-12 && (ax[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn biharmonic_zero_load_gives_zero_solution() {
        for bc in [
            BoundaryCondition::SimplySupported,
            BoundaryCondition::CahnHilliard,
        ] {
            let mut config = ss_config(4, 0);
            config.bc = bc;
            let disc = Discretization::stationary(&config).unwrap();
            let state = solve_biharmonic(&disc, &|_, _| 0.0, 0.0).unwrap();
            assert!(state.u.iter().all(|&v| v.abs() < 1e-12));
            assert!(state.sigma.iter().all(|&v| v.abs() < 1e-12));
            assert!(state.phi.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn biharmonic_satisfies_discrete_equations() {
        // Galerkin residual of the stationary system at solver accuracy.
        let f =
            |x: [f64; 2], _t: f64| 4.0 * PI.powi(4) * (PI * x[0]).sin() * (PI * x[1]).sin();
        let config = ss_config(8, 1);
        let disc = Discretization::stationary(&config).unwrap();
        let state = solve_biharmonic(&disc, &f, 1.0).unwrap();
        let load = assemble_load(&disc.space_u, f, 1.0);
        let residual = StepResidual {
            disc: &disc,
            fixed_u: load.clone(),
            time_dependent: false,
        };
        let r = residual.eval(&disc.pack(&state));
        let scale = norm2(&load);
        assert!(norm2(&r) <= 1e-10 * scale, "{} vs {scale}", norm2(&r));
    }

    #[test]
    fn biharmonic_ch_solution_has_zero_mean() {
        let f =
            |x: [f64; 2], _t: f64| 4.0 * PI.powi(4) * (PI * x[0]).cos() * (PI * x[1]).cos();
        let mut config = ss_config(8, 0);
        config.bc = BoundaryCondition::CahnHilliard;
        let disc = Discretization::stationary(&config).unwrap();
        let state = solve_biharmonic(&disc, &f, 1.0).unwrap();
        assert!(disc.mean_value(&state.u).abs() <= 1e-10);
        assert!(state.mu.is_some());
        // Eliminated normal-trace dofs read back exactly zero.
        for &d in &disc.space_m.constrained_boundary_dofs {
            assert_eq!(state.sigma[d], 0.0);
            assert_eq!(state.phi[d], 0.0);
        }
    }

    #[test]
    fn stability_constant_stays_bounded_under_refinement() {
        let f =
            |x: [f64; 2], _t: f64| 4.0 * PI.powi(4) * (PI * x[0]).sin() * (PI * x[1]).sin();
        let mut ratios = Vec::new();
        for n in [2usize, 4, 8, 16] {
            let config = ss_config(n, 0);
            let disc = Discretization::stationary(&config).unwrap();
            let state = solve_biharmonic(&disc, &f, 1.0).unwrap();
            let f_norm = 4.0 * PI.powi(4) * 0.5; // |sin sin|_0 = 1/2
            let total =
                disc.u_l2(&state.u) + disc.m_hdiv(&state.sigma) + disc.m_hdiv(&state.phi);
            ratios.push(total / f_norm);
        }
        println!("observed stability constants: {ratios:?}");
        let (first, last) = (ratios[0], *ratios.last().unwrap());
        assert!(
            last <= 1.5 * first + 0.5,
            "stability trend blows up: {ratios:?}"
        );
    }

    #[test]
    fn kernel_coercivity_witness_ratios_bounded() {
        let f =
            |x: [f64; 2], _t: f64| 4.0 * PI.powi(4) * (PI * x[0]).sin() * (PI * x[1]).sin();
        let mut r_u = Vec::new();
        let mut r_s = Vec::new();
        for n in [4usize, 8, 16] {
            let config = ss_config(n, 0);
            let disc = Discretization::stationary(&config).unwrap();
            let state = solve_biharmonic(&disc, &f, 1.0).unwrap();
            let div_norm = dot(&state.sigma, &disc.system.divdiv.matvec(&state.sigma)).sqrt();
            r_u.push(disc.u_l2(&state.u) / disc.m_l2(&state.sigma));
            r_s.push(disc.m_l2(&state.sigma) / div_norm);
        }
        println!("coercivity witnesses |u|/|sigma| = {r_u:?}, |sigma|/|div| = {r_s:?}");
        for r in [&r_u, &r_s] {
            let max = r.iter().cloned().fold(0.0f64, f64::max);
            let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min < 2.0, "witness ratio drifts: {r:?}");
        }
    }

    #[test]
    fn efk_step_converges_quickly() {
        let config = ss_config(8, 0);
        let disc = Discretization::time_dependent(&config).unwrap();
        let state = FieldState::zeros(&disc.space_u, &disc.space_m, false, 0.0);
        let f = efk_ss_source(1.0);
        let (next, stats) = step_backward_euler(&disc, &state, &config, &f).unwrap();
        assert!(stats.converged);
        assert!(
            stats.iterations <= 4,
            "expected a handful of Newton iterations, got {}",
            stats.iterations
        );
        assert!(stats.final_residual <= 1e-10);
        // Forcing acts: the first step produces a nonzero solution.
        assert!(disc.u_l2(&next.u) > 1e-4);
        if let Some(kappa) = stats.quadratic_kappa() {
            assert!(kappa.is_finite());
        }
    }

    #[test]
    fn efk_run_preserves_constraints() {
        for bc in [
            BoundaryCondition::SimplySupported,
            BoundaryCondition::CahnHilliard,
        ] {
            let mut config = ss_config(8, 0);
            config.bc = bc;
            let disc = Discretization::time_dependent(&config).unwrap();
            let f = efk_ss_source(1.0);
            let run = run_efk(&disc, &config, &f, &|_| 0.0).unwrap();
            assert_eq!(run.steps.len(), 10);
            assert!(run.steps.iter().all(|s| s.converged));
            assert!(disc.constraint_residual(&run.state) <= 1e-8);
            if bc == BoundaryCondition::CahnHilliard {
                assert!(disc.mean_value(&run.state.u).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn efk_energy_stays_within_gronwall_bound() {
        // Zero forcing, small initial data: sup_n |u^n|^2 <= e^{3T} |u^0|^2.
        let config = ss_config(8, 0);
        let disc = Discretization::time_dependent(&config).unwrap();
        let u0 = |x: [f64; 2]| 0.1 * (PI * x[0]).sin() * (PI * x[1]).sin();
        let mut state = FieldState::zeros(&disc.space_u, &disc.space_m, false, 0.0);
        state.u = project_l2(&disc.space_u, |x, _| u0(x), 0.0);
        let e0 = disc.u_l2(&state.u).powi(2);
        let mut sup = e0;
        let f = |_: [f64; 2], _: f64| 0.0;
        for _ in 0..config.num_steps() {
            let (next, stats) = step_backward_euler(&disc, &state, &config, &f).unwrap();
            assert!(stats.converged);
            state = next;
            sup = sup.max(disc.u_l2(&state.u).powi(2));
        }
        let bound = (3.0 * config.t_final).exp() * e0;
        assert!(sup <= bound * (1.0 + 1e-8), "sup {sup} vs bound {bound}");
    }
}
