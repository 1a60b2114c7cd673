//! Manufactured solutions, error norms, experimental orders of convergence
//! and the study runners that produce the convergence tables and the
//! gamma-parametric sweep.
//!
//! For the time-dependent cases the exact multiplier is derived from the
//! first equation tested with vanishing scalar part and an integration by
//! parts (boundary terms vanish for both boundary-condition sets):
//! `phi = grad(Lap u) - (1/gamma) grad u`, so that
//! `f = du/dt + gamma div phi + g(u)` holds pointwise.  For the stationary
//! biharmonic problem `phi = grad(Lap u)`.

use std::f64::consts::PI;

use crate::assembly::BoundaryCondition;
use crate::error::{Error, Result};
use crate::quadrature::simplex_rule;
use crate::solver::{
    run_efk, solve_biharmonic, step_backward_euler, Discretization, NewtonStats, PhaseTimings,
    ProblemConfig,
};
use crate::spaces::{FESpace, FieldState, SpaceKind};

pub type ScalarFn = Box<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Quadrature degree for error norms; the exact solutions are trigonometric.
const ERROR_QUAD_DEGREE: usize = 10;

/// Default parameter list of the gamma sweep.
pub const DEFAULT_GAMMAS: [f64; 7] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// A closed-form exact solution with all derived data.
pub struct ManufacturedCase {
    pub name: String,
    pub bc: BoundaryCondition,
    pub gamma: f64,
    /// Stationary biharmonic cases solve once instead of time stepping.
    pub stationary: bool,
    pub u: ScalarFn,
    pub du_dt: ScalarFn,
    pub sigma: VectorFn,
    pub div_sigma: ScalarFn,
    pub phi: VectorFn,
    pub div_phi: ScalarFn,
    pub f: ScalarFn,
}

impl ManufacturedCase {
    pub fn u0(&self, x: [f64; 2]) -> f64 {
        (self.u)(x, 0.0)
    }

    /// Finite-difference consistency of the closures: `sigma = grad u`,
    /// `div sigma` from differences of `sigma`, the same for `phi`, and the
    /// source identity `f = du/dt + gamma div phi + g(u)` (the spatial terms
    /// are analytic, the time derivative is a central difference).
    pub fn validate(&self) -> Result<()> {
        let mut rng_state: u64 = 0x6b8b4567;
        let mut unit = move || {
            rng_state = rng_state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let h = 1e-6;
        let check = |what: &str, got: f64, want: f64, tol: f64| -> Result<()> {
            if (got - want).abs() > tol * want.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "manufactured case {}: {what} mismatch ({got} vs {want})",
                    self.name
                )));
            }
            Ok(())
        };
        for _ in 0..100 {
            let x = [0.05 + 0.9 * unit(), 0.05 + 0.9 * unit()];
            let t = 0.05 + unit();

            let grad_u = [
                ((self.u)([x[0] + h, x[1]], t) - (self.u)([x[0] - h, x[1]], t)) / (2.0 * h),
                ((self.u)([x[0], x[1] + h], t) - (self.u)([x[0], x[1] - h], t)) / (2.0 * h),
            ];
            let sigma = (self.sigma)(x, t);
            check("sigma_x = du/dx", sigma[0], grad_u[0], 1e-5)?;
            check("sigma_y = du/dy", sigma[1], grad_u[1], 1e-5)?;

            let div_sigma_fd = ((self.sigma)([x[0] + h, x[1]], t)[0]
                - (self.sigma)([x[0] - h, x[1]], t)[0]
                + (self.sigma)([x[0], x[1] + h], t)[1]
                - (self.sigma)([x[0], x[1] - h], t)[1])
                / (2.0 * h);
            check("div sigma", (self.div_sigma)(x, t), div_sigma_fd, 1e-5)?;

            let div_phi_fd = ((self.phi)([x[0] + h, x[1]], t)[0]
                - (self.phi)([x[0] - h, x[1]], t)[0]
                + (self.phi)([x[0], x[1] + h], t)[1]
                - (self.phi)([x[0], x[1] - h], t)[1])
                / (2.0 * h);
            check("div phi", (self.div_phi)(x, t), div_phi_fd, 1e-5)?;

            let dudt_fd = ((self.u)(x, t + h) - (self.u)(x, t - h)) / (2.0 * h);
            check("du/dt", (self.du_dt)(x, t), dudt_fd, 1e-5)?;

            let u = (self.u)(x, t);
            let f_expected = if self.stationary {
                (self.div_phi)(x, t)
            } else {
                dudt_fd + self.gamma * (self.div_phi)(x, t) + (u.powi(3) - u)
            };
            check("source term", (self.f)(x, t), f_expected, 1e-8)?;
        }
        Ok(())
    }
}

/// Builds one of the stocked manufactured cases.
pub fn make_case(name: &str, gamma: f64) -> Result<ManufacturedCase> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    match name {
        // u = t sin(pi x) sin(pi y): simply supported EFK problem.
        "efk_ss_2d" => {
            let s = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
            let grad_s = |x: [f64; 2]| {
                [
                    PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                    PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                ]
            };
            // Lap u = -2 pi^2 u, so phi = (-2 pi^2 - 1/gamma) sigma.
            let lam = -2.0 * PI * PI - 1.0 / gamma;
            Ok(ManufacturedCase {
                name: name.into(),
                bc: BoundaryCondition::SimplySupported,
                gamma,
                stationary: false,
                u: Box::new(move |x, t| t * s(x)),
                du_dt: Box::new(move |x, _| s(x)),
                sigma: Box::new(move |x, t| {
                    let g = grad_s(x);
                    [t * g[0], t * g[1]]
                }),
                div_sigma: Box::new(move |x, t| -2.0 * PI * PI * t * s(x)),
                phi: Box::new(move |x, t| {
                    let g = grad_s(x);
                    [lam * t * g[0], lam * t * g[1]]
                }),
                div_phi: Box::new(move |x, t| lam * -2.0 * PI * PI * t * s(x)),
                f: Box::new(move |x, t| {
                    let sv = s(x);
                    let u = t * sv;
                    sv + (gamma * 4.0 * PI.powi(4) + 2.0 * PI * PI) * u + u.powi(3) - u
                }),
            })
        }
        // u = t cos(pi x) cos(pi y): Cahn-Hilliard EFK problem.
        "efk_ch_2d" => {
            let cz = |x: [f64; 2]| (PI * x[0]).cos() * (PI * x[1]).cos();
            let grad_c = |x: [f64; 2]| {
                [
                    -PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    -PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                ]
            };
            let lam = -2.0 * PI * PI - 1.0 / gamma;
            Ok(ManufacturedCase {
                name: name.into(),
                bc: BoundaryCondition::CahnHilliard,
                gamma,
                stationary: false,
                u: Box::new(move |x, t| t * cz(x)),
                du_dt: Box::new(move |x, _| cz(x)),
                sigma: Box::new(move |x, t| {
                    let g = grad_c(x);
                    [t * g[0], t * g[1]]
                }),
                div_sigma: Box::new(move |x, t| -2.0 * PI * PI * t * cz(x)),
                phi: Box::new(move |x, t| {
                    let g = grad_c(x);
                    [lam * t * g[0], lam * t * g[1]]
                }),
                div_phi: Box::new(move |x, t| lam * -2.0 * PI * PI * t * cz(x)),
                f: Box::new(move |x, t| {
                    let cv = cz(x);
                    let u = t * cv;
                    cv + (gamma * 4.0 * PI.powi(4) + 2.0 * PI * PI) * u + u.powi(3) - u
                }),
            })
        }
        // Stationary biharmonic with the same simply supported profile;
        // phi = grad(Lap u) exactly and f = Lap^2 u.
        "biharmonic_ss_2d" => {
            let s = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
            let grad_s = |x: [f64; 2]| {
                [
                    PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                    PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                ]
            };
            let lam = -2.0 * PI * PI;
            Ok(ManufacturedCase {
                name: name.into(),
                bc: BoundaryCondition::SimplySupported,
                gamma: 1.0,
                stationary: true,
                u: Box::new(move |x, t| t * s(x)),
                du_dt: Box::new(move |x, _| s(x)),
                sigma: Box::new(move |x, t| {
                    let g = grad_s(x);
                    [t * g[0], t * g[1]]
                }),
                div_sigma: Box::new(move |x, t| lam * t * s(x)),
                phi: Box::new(move |x, t| {
                    let g = grad_s(x);
                    [lam * t * g[0], lam * t * g[1]]
                }),
                div_phi: Box::new(move |x, t| 4.0 * PI.powi(4) * t * s(x)),
                f: Box::new(move |x, t| 4.0 * PI.powi(4) * t * s(x)),
            })
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown manufactured case '{other}' (expected efk_ss_2d, efk_ch_2d or biharmonic_ss_2d)"
        ))),
    }
}

/// L2 error of a DG field against an exact scalar solution at time `t`.
pub fn error_l2_scalar(
    space: &FESpace,
    coeffs: &[f64],
    exact: &dyn Fn([f64; 2], f64) -> f64,
    t: f64,
) -> f64 {
    assert_eq!(space.kind, SpaceKind::DgScalar);
    let rule = simplex_rule(ERROR_QUAD_DEGREE).expect("stocked rule");
    let mut e2 = 0.0;
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let d = space.eval_dg_field(coeffs, c, p) - exact(space.mesh.ref_to_phys(c, p), t);
            e2 += w * det * d * d;
        }
    }
    e2.sqrt()
}

/// H(div) error of an RT field: L2 field error and L2 divergence error
/// combined.
pub fn error_hdiv(
    space: &FESpace,
    coeffs: &[f64],
    exact: &dyn Fn([f64; 2], f64) -> [f64; 2],
    exact_div: &dyn Fn([f64; 2], f64) -> f64,
    t: f64,
) -> f64 {
    assert_eq!(space.kind, SpaceKind::RtVector);
    let rule = simplex_rule(ERROR_QUAD_DEGREE).expect("stocked rule");
    let mut e2 = 0.0;
    for c in 0..space.mesh.num_cells() {
        let (_, det) = space.mesh.jacobian(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = space.mesh.ref_to_phys(c, p);
            let (v, dv) = space.eval_rt_field(coeffs, c, p);
            let ve = exact(x, t);
            let de = exact_div(x, t);
            e2 += w
                * det
                * ((v[0] - ve[0]).powi(2) + (v[1] - ve[1]).powi(2) + (dv - de).powi(2));
        }
    }
    e2.sqrt()
}

/// Experimental order of convergence between two levels.
pub fn eoc(e1: f64, h1: f64, e2: f64, h2: f64) -> Result<f64> {
    if !(e1 > 0.0 && e2 > 0.0 && h1 > 0.0 && h2 > 0.0) {
        return Err(Error::InvalidArgument(
            "EOC needs positive errors and mesh sizes".into(),
        ));
    }
    if h2 >= h1 {
        return Err(Error::InvalidArgument("EOC needs h2 < h1".into()));
    }
    Ok((e1 / e2).ln() / (h1 / h2).ln())
}

/// All errors of a state against its manufactured case, at the state's time.
pub fn state_errors(
    disc: &Discretization,
    case: &ManufacturedCase,
    state: &FieldState,
) -> (f64, f64, f64) {
    let t = state.t;
    let e_u = error_l2_scalar(&disc.space_u, &state.u, &case.u, t);
    let e_sigma = error_hdiv(&disc.space_m, &state.sigma, &case.sigma, &case.div_sigma, t);
    let e_phi = error_hdiv(&disc.space_phi, &state.phi, &case.phi, &case.div_phi, t);
    (e_u, e_sigma, e_phi)
}

#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub case: String,
    pub k: usize,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub bc: BoundaryCondition,
}

#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub n: usize,
    pub dof: usize,
    pub h: f64,
    pub e_u: f64,
    pub e_sigma: f64,
    pub e_phi: f64,
    pub eoc_u: Option<f64>,
    pub eoc_sigma: Option<f64>,
    pub eoc_phi: Option<f64>,
    /// Largest Newton iteration count over the run's time steps.
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub meta: ReportMeta,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// Recomputes the EOC columns from the error columns; the coarsest row
    /// has no rate.
    pub fn fill_eocs(&mut self) -> Result<()> {
        for i in 0..self.rows.len() {
            if i == 0 {
                self.rows[i].eoc_u = None;
                self.rows[i].eoc_sigma = None;
                self.rows[i].eoc_phi = None;
            } else {
                let (prev, cur) = (self.rows[i - 1].clone(), &mut self.rows[i]);
                cur.eoc_u = Some(eoc(prev.e_u, prev.h, cur.e_u, cur.h)?);
                cur.eoc_sigma = Some(eoc(prev.e_sigma, prev.h, cur.e_sigma, cur.h)?);
                cur.eoc_phi = Some(eoc(prev.e_phi, prev.h, cur.e_phi, cur.h)?);
            }
        }
        Ok(())
    }

    /// CSV with one row per refinement level; the coarsest EOC cells are
    /// empty.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("case,k,gamma,dt,T,dof,h,e_u,eoc_u,e_sigma,eoc_sigma,e_phi,eoc_phi\n");
        for row in &self.rows {
            let fmt_eoc = |e: Option<f64>| e.map(|v| format!("{v:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:e},{},{},{},{:.4},{:.6e},{},{:.6e},{},{:.6e},{}\n",
                self.meta.case,
                self.meta.k,
                self.meta.gamma,
                self.meta.dt,
                self.meta.t_final,
                row.dof,
                row.h,
                row.e_u,
                fmt_eoc(row.eoc_u),
                row.e_sigma,
                fmt_eoc(row.eoc_sigma),
                row.e_phi,
                fmt_eoc(row.eoc_phi),
            ));
        }
        out
    }

    /// Markdown table in the layout of the convergence tables; the coarsest
    /// row prints a star instead of a rate.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "Case {} (k = {}, bc = {}, gamma = {:e}, dt = {}, T = {})\n\n",
            self.meta.case,
            self.meta.k,
            self.meta.bc.as_str(),
            self.meta.gamma,
            self.meta.dt,
            self.meta.t_final
        );
        out.push_str("| DoF | h | e(u) | EOC | e(sigma) | EOC | e(phi) | EOC |\n");
        out.push_str("|----:|:--|:-----|:----|:---------|:----|:-------|:----|\n");
        for row in &self.rows {
            let fmt_eoc = |e: Option<f64>| e.map(|v| format!("{v:.3}")).unwrap_or("*".into());
            out.push_str(&format!(
                "| {} | {:.4} | {:.3e} | {} | {:.3e} | {} | {:.3e} | {} |\n",
                row.dof,
                row.h,
                row.e_u,
                fmt_eoc(row.eoc_u),
                row.e_sigma,
                fmt_eoc(row.eoc_sigma),
                row.e_phi,
                fmt_eoc(row.eoc_phi),
            ));
        }
        out
    }
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("empty refinement list".into()));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "refinement list must be strictly increasing".into(),
            ));
        }
    }
    for &n in n_list {
        if !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "refinement level n={n} is not a power of two"
            )));
        }
    }
    Ok(())
}

/// Runs one solve per refinement level and fills the convergence table.
/// Errors are measured at the final time step.
pub fn run_convergence_study(
    case: &ManufacturedCase,
    k: usize,
    n_list: &[usize],
    dt: f64,
    t_final: f64,
    newton_tol: f64,
) -> Result<(ErrorReport, PhaseTimings)> {
    check_n_list(n_list)?;
    case.validate()?;
    let mut report = ErrorReport {
        meta: ReportMeta {
            case: case.name.clone(),
            k,
            gamma: case.gamma,
            dt,
            t_final,
            bc: case.bc,
        },
        rows: Vec::with_capacity(n_list.len()),
    };
    let mut timings = PhaseTimings::default();
    for &n in n_list {
        let config = ProblemConfig {
            bc: case.bc,
            k,
            n,
            gamma: case.gamma,
            dt,
            t_final,
            newton_tol,
            newton_max_iter: 25,
            case: case.name.clone(),
        };
        let (disc, state, newton_iterations) = if case.stationary {
            let disc = Discretization::stationary(&config)?;
            let state = solve_biharmonic(&disc, &case.f, t_final)?;
            (disc, state, 0)
        } else {
            let disc = Discretization::time_dependent(&config)?;
            let run = run_efk(&disc, &config, &case.f, &|x| case.u0(x))?;
            timings.factorization += run.timings.factorization;
            timings.newton += run.timings.newton;
            let iters = run.steps.iter().map(|s| s.iterations).max().unwrap_or(0);
            (disc, run.state, iters)
        };
        timings.assembly += disc.assembly_time;
        let (e_u, e_sigma, e_phi) = state_errors(&disc, case, &state);
        report.rows.push(ErrorRow {
            n,
            dof: disc.reported_dofs(),
            h: disc.mesh.mesh_size(),
            e_u,
            e_sigma,
            e_phi,
            eoc_u: None,
            eoc_sigma: None,
            eoc_phi: None,
            newton_iterations,
        });
    }
    report.fill_eocs()?;
    Ok((report, timings))
}

/// Outcome of one `(gamma, n)` single-step run in the parametric sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub gamma: f64,
    pub n: usize,
    pub dof: usize,
    pub h: f64,
    pub e_u: Option<f64>,
    pub e_sigma: Option<f64>,
    pub e_phi: Option<f64>,
    pub newton_iterations: usize,
    pub status: SweepStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    Converged,
    /// Newton stalled; errors are still reported from the final iterate.
    NewtonStalled,
    /// The linear solver failed; no errors available.
    SolveFailed,
}

impl SweepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepStatus::Converged => "converged",
            SweepStatus::NewtonStalled => "newton-stalled",
            SweepStatus::SolveFailed => "solve-failed",
        }
    }
}

#[derive(Debug)]
pub struct GammaSweep {
    pub case: String,
    pub k: usize,
    pub rows: Vec<SweepRow>,
    /// Per-gamma error reports over the refinement levels (converged and
    /// stalled rows included; failed solves are skipped).
    pub reports: Vec<(f64, ErrorReport)>,
}

impl GammaSweep {
    /// Summary CSV sorted by descending gamma.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("gamma,n,dof,h,e_u,e_sigma,e_phi,newton_iters,status\n");
        for row in &self.rows {
            let fmt = |e: Option<f64>| e.map(|v| format!("{v:.6e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:e},{},{},{:.4},{},{},{},{},{}\n",
                row.gamma,
                row.n,
                row.dof,
                row.h,
                fmt(row.e_u),
                fmt(row.e_sigma),
                fmt(row.e_phi),
                row.newton_iterations,
                row.status.as_str(),
            ));
        }
        out
    }
}

/// Single-step parametric study: for each gamma one backward Euler step with
/// `T = 1`, `dt = 1`, recording errors and Newton iteration counts per
/// refinement level.  Individual failures are recorded and the sweep
/// continues.
pub fn run_gamma_sweep(
    case_name: &str,
    k: usize,
    n_list: &[usize],
    gamma_list: &[f64],
) -> Result<GammaSweep> {
    check_n_list(n_list)?;
    let mut gammas: Vec<f64> = gamma_list.to_vec();
    gammas.sort_by(|a, b| b.partial_cmp(a).expect("finite gammas"));
    let mut sweep = GammaSweep {
        case: case_name.into(),
        k,
        rows: Vec::new(),
        reports: Vec::new(),
    };
    for &gamma in &gammas {
        let case = make_case(case_name, gamma)?;
        case.validate()?;
        let mut report = ErrorReport {
            meta: ReportMeta {
                case: case.name.clone(),
                k,
                gamma,
                dt: 1.0,
                t_final: 1.0,
                bc: case.bc,
            },
            rows: Vec::new(),
        };
        for &n in n_list {
            let config = ProblemConfig {
                bc: case.bc,
                k,
                n,
                gamma,
                dt: 1.0,
                t_final: 1.0,
                newton_tol: 1e-10,
                newton_max_iter: 25,
                case: case.name.clone(),
            };
            let disc = Discretization::time_dependent(&config)?;
            let mut state =
                FieldState::zeros(&disc.space_u, &disc.space_m, disc.system.has_multiplier(), 0.0);
            state.u = crate::spaces::project_l2(&disc.space_u, |x, _| case.u0(x), 0.0);
            let row = match step_backward_euler(&disc, &state, &config, &case.f) {
                Ok((next, stats)) => {
                    let (e_u, e_sigma, e_phi) = state_errors(&disc, &case, &next);
                    let status = if stats.converged {
                        SweepStatus::Converged
                    } else {
                        SweepStatus::NewtonStalled
                    };
                    if status != SweepStatus::SolveFailed {
                        report.rows.push(ErrorRow {
                            n,
                            dof: disc.reported_dofs(),
                            h: disc.mesh.mesh_size(),
                            e_u,
                            e_sigma,
                            e_phi,
                            eoc_u: None,
                            eoc_sigma: None,
                            eoc_phi: None,
                            newton_iterations: stats.iterations,
                        });
                    }
                    SweepRow {
                        gamma,
                        n,
                        dof: disc.reported_dofs(),
                        h: disc.mesh.mesh_size(),
                        e_u: Some(e_u),
                        e_sigma: Some(e_sigma),
                        e_phi: Some(e_phi),
                        newton_iterations: stats.iterations,
                        status,
                    }
                }
                Err(_) => SweepRow {
                    gamma,
                    n,
                    dof: disc.reported_dofs(),
                    h: disc.mesh.mesh_size(),
                    e_u: None,
                    e_sigma: None,
                    e_phi: None,
                    newton_iterations: config.newton_max_iter,
                    status: SweepStatus::SolveFailed,
                },
            };
            sweep.rows.push(row);
        }
        let _ = report.fill_eocs();
        sweep.reports.push((gamma, report));
    }
    Ok(sweep)
}

/// Newton statistics of a fresh single-step run at the given gamma, used by
/// the iteration-trend checks.
pub fn single_step_newton_stats(
    case_name: &str,
    k: usize,
    n: usize,
    gamma: f64,
) -> Result<NewtonStats> {
    let case = make_case(case_name, gamma)?;
    let config = ProblemConfig {
        bc: case.bc,
        k,
        n,
        gamma,
        dt: 1.0,
        t_final: 1.0,
        newton_tol: 1e-10,
        newton_max_iter: 25,
        case: case.name.clone(),
    };
    let disc = Discretization::time_dependent(&config)?;
    let mut state =
        FieldState::zeros(&disc.space_u, &disc.space_m, disc.system.has_multiplier(), 0.0);
    state.u = crate::spaces::project_l2(&disc.space_u, |x, _| case.u0(x), 0.0);
    let (_, stats) = step_backward_euler(&disc, &state, &config, &case.f)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::spaces::{build_dg_space, build_rt_space, project_l2};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    #[test]
    fn stocked_cases_validate() {
        for name in ["efk_ss_2d", "efk_ch_2d", "biharmonic_ss_2d"] {
            let case = make_case(name, 1.0).unwrap();
            case.validate().unwrap();
        }
        for gamma in [1e-2, 1e-4] {
            make_case("efk_ss_2d", gamma).unwrap().validate().unwrap();
        }
        assert!(make_case("efk_3d", 1.0).is_err());
        assert!(make_case("efk_ss_2d", 0.0).is_err());
    }

    #[test]
    fn cases_vanish_at_initial_time() {
        for name in ["efk_ss_2d", "efk_ch_2d", "biharmonic_ss_2d"] {
            let case = make_case(name, 0.5).unwrap();
            for x in [[0.3, 0.7], [0.11, 0.52], [0.9, 0.05]] {
                assert_eq!((case.u)(x, 0.0), 0.0);
                assert_eq!((case.sigma)(x, 0.0), [0.0, 0.0]);
                assert_eq!((case.phi)(x, 0.0), [0.0, 0.0]);
                assert_eq!(case.u0(x), 0.0);
            }
        }
    }

    #[test]
    fn multiplier_to_gradient_ratio_at_unit_gamma() {
        // |phi| / |sigma| = 2 pi^2 + 1 pointwise when gamma = 1.
        let case = make_case("efk_ss_2d", 1.0).unwrap();
        let expected = 2.0 * PI * PI + 1.0;
        for x in [[0.21, 0.43], [0.63, 0.17]] {
            let s = (case.sigma)(x, 0.7);
            let p = (case.phi)(x, 0.7);
            let ratio = (p[0] * p[0] + p[1] * p[1]).sqrt() / (s[0] * s[0] + s[1] * s[1]).sqrt();
            assert!((ratio - expected).abs() < 1e-10, "{ratio} vs {expected}");
        }
    }

    #[test]
    fn biharmonic_multiplier_is_gradient_of_laplacian() {
        // phi = grad(Lap u) = -2 pi^2 sigma for the stationary case.
        let case = make_case("biharmonic_ss_2d", 1.0).unwrap();
        for x in [[0.3, 0.8], [0.52, 0.29]] {
            let s = (case.sigma)(x, 1.0);
            let p = (case.phi)(x, 1.0);
            for d in 0..2 {
                assert!((p[d] + 2.0 * PI * PI * s[d]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eoc_reproduces_tabulated_rates() {
        // Frozen from the printed error pairs.
        let r = eoc(2.72e-2, 0.7071, 1.42e-2, 0.3536).unwrap();
        assert!((r - 0.938).abs() < 5e-4, "{r}");
        let r = eoc(1.42e-2, 0.3536, 7.18e-3, 0.1768).unwrap();
        assert!((r - 0.984).abs() < 5e-4, "{r}");
        // Error halves when h halves.
        assert!((eoc(1.0, 1.0, 0.5, 0.5).unwrap() - 1.0).abs() < 1e-14);
        // Constant error: rate zero.
        assert_eq!(eoc(0.3, 1.0, 0.3, 0.5).unwrap(), 0.0);
        assert!(eoc(-1.0, 1.0, 0.5, 0.5).is_err());
        assert!(eoc(1.0, 0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn hdiv_error_matches_matrix_norm() {
        // Against the zero field the error is the discrete H(div) norm.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let config = ProblemConfig {
            n: 3,
            ..ProblemConfig::default()
        };
        let disc = Discretization::time_dependent(&config).unwrap();
        let coeffs: Vec<f64> = (0..disc.space_m.total_dofs)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let via_quadrature = error_hdiv(
            &disc.space_m,
            &coeffs,
            &|_, _| [0.0, 0.0],
            &|_, _| 0.0,
            0.0,
        );
        let via_matrices = disc.m_hdiv(&coeffs);
        assert!(
            (via_quadrature - via_matrices).abs() <= 1e-10 * via_matrices,
            "{via_quadrature} vs {via_matrices}"
        );
    }

    #[test]
    fn scalar_error_trivial_and_projection_scale() {
        let mesh = Arc::new(Mesh::unit_square(4).unwrap());
        let dg = build_dg_space(mesh, 1).unwrap();
        let zero = vec![0.0; dg.total_dofs];
        assert_eq!(error_l2_scalar(&dg, &zero, &|_, _| 0.0, 0.0), 0.0);
    }

    #[test]
    fn projection_error_decays_at_second_order_for_p1() {
        let case = make_case("efk_ss_2d", 1.0).unwrap();
        let t = 0.1;
        let err = |n: usize| {
            let mesh = Arc::new(Mesh::unit_square(n).unwrap());
            let dg = build_dg_space(mesh, 1).unwrap();
            let coeffs = project_l2(&dg, &case.u, t);
            error_l2_scalar(&dg, &coeffs, &case.u, t)
        };
        let (e8, e16) = (err(8), err(16));
        let rate = eoc(e8, 2f64.sqrt() / 8.0, e16, 2f64.sqrt() / 16.0).unwrap();
        assert!(rate > 1.9, "projection rate {rate}");
        // Projection of the exact solution on a fine mesh is well below the
        // discretisation errors it is compared against.
        assert!(e16 < 1e-3, "P1 projection error at n=16: {e16}");
    }

    #[test]
    fn interpolant_of_representable_field_has_tiny_hdiv_error() {
        let mesh = Arc::new(Mesh::unit_square(3).unwrap());
        let rt = build_rt_space(mesh, 0, false).unwrap();
        let coeffs = crate::spaces::interpolate_rt(&rt, |_, _| [2.0, -1.0], 0.0);
        let e = error_hdiv(&rt, &coeffs, &|_, _| [2.0, -1.0], &|_, _| 0.0, 0.0);
        assert!(e <= 1e-12, "constant-field interpolation error {e}");
    }

    #[test]
    fn report_formatting_and_eoc_consistency() {
        let mut report = ErrorReport {
            meta: ReportMeta {
                case: "efk_ss_2d".into(),
                k: 0,
                gamma: 1.0,
                dt: 0.01,
                t_final: 0.1,
                bc: BoundaryCondition::SimplySupported,
            },
            rows: vec![
                ErrorRow {
                    n: 2,
                    dof: 40,
                    h: 0.7071,
                    e_u: 2.72e-2,
                    e_sigma: 5.42e-1,
                    e_phi: 1.07e1,
                    eoc_u: None,
                    eoc_sigma: None,
                    eoc_phi: None,
                    newton_iterations: 3,
                },
                ErrorRow {
                    n: 4,
                    dof: 144,
                    h: 0.3536,
                    e_u: 1.42e-2,
                    e_sigma: 2.85e-1,
                    e_phi: 5.61e0,
                    eoc_u: None,
                    eoc_sigma: None,
                    eoc_phi: None,
                    newton_iterations: 3,
                },
            ],
        };
        report.fill_eocs().unwrap();
        assert!(report.rows[0].eoc_u.is_none());
        let rate = report.rows[1].eoc_u.unwrap();
        assert!((rate - 0.938).abs() < 5e-4);

        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "case,k,gamma,dt,T,dof,h,e_u,eoc_u,e_sigma,eoc_sigma,e_phi,eoc_phi"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("efk_ss_2d,0,1e0,0.01,0.1,40,0.7071,2.720000e-2,,"));

        let md = report.to_markdown();
        assert!(md.contains("| 40 | 0.7071 |"));
        assert!(md.contains("| * |"), "coarsest row must print a star");
    }

    #[test]
    fn n_list_validation() {
        assert!(check_n_list(&[2, 4, 8]).is_ok());
        assert!(check_n_list(&[]).is_err());
        assert!(check_n_list(&[4, 2]).is_err());
        assert!(check_n_list(&[2, 3]).is_err());
    }
}
