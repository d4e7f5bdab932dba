//! Filter line-search interior-point method for
//! `min f(x) s.t. c(x) = 0, l ≤ x ≤ u`.
//!
//! Each iteration condenses the primal-dual Newton system (module
//! [`crate::kkt`]), solves it through [`KktSolver`], regularizes with the
//! curvature test, and backtracks along the step until the filter accepts.
//! When backtracking stalls, an elastic feasibility problem is solved by the
//! same method with restoration disabled.
//!
//! Iteration log columns (whitespace separated, stable):
//!
//! | column    | content                                                  |
//! |-----------|----------------------------------------------------------|
//! | `iter`    | iteration count, suffixed `r` inside restoration         |
//! | `objective` | `f(x)`                                                 |
//! | `inf_pr`  | `‖c(x)‖∞`                                                |
//! | `inf_du`  | `‖∇f + Aᵀλ − z_L + z_U‖∞`                                |
//! | `mu`      | barrier parameter                                        |
//! | `alpha_pr`, `alpha_du` | step sizes that produced this iterate       |
//! | `lin_it`  | linear-solver iterations of that step                    |
//! | `delta_w` | primal regularization of that step                       |

pub mod filter;
pub mod restoration;
pub mod scaling;

use std::time::Instant;

use crate::kkt::{barrier_gradient, recover_bound_step, KktAssembler, OracleValues, PrimalDualPoint};
use crate::linalg::{KktSolver, LinalgError, LinearSolverConfig};
use crate::nlp::NlpProblem;
pub use filter::{curvature_test, filter_accept, fraction_to_boundary, update_barrier, Acceptance, Filter};
use filter::LineSearchPoint;
use restoration::RestorationProblem;
use scaling::ScaledProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    RestorationFailure,
    TrialPointFailure,
    RegularizationExhausted,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::RestorationFailure => "restoration_failure",
            SolveStatus::TrialPointFailure => "trial_point_failure",
            SolveStatus::RegularizationExhausted => "regularization_exhausted",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub linear_solver: LinearSolverConfig,
    /// Relative residual target of iterative linear solves.
    pub linear_tol: f64,
    pub scaling: bool,
    pub max_gradient: f64,
    pub restoration: bool,
    pub bound_push: f64,
    pub bound_frac: f64,
    pub max_regularizations: usize,
    /// Bound on `(x − l) z_L / μ` and its reciprocal.
    pub kappa_sigma: f64,
    pub s_max: f64,
    pub print: bool,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-8,
            max_iter: 1000,
            mu_init: 0.1,
            linear_solver: LinearSolverConfig::Direct,
            linear_tol: 1e-10,
            scaling: true,
            max_gradient: 100.0,
            restoration: true,
            bound_push: 1e-2,
            bound_frac: 1e-2,
            max_regularizations: 20,
            kappa_sigma: 1e10,
            s_max: 100.0,
            print: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub restorations: usize,
    pub objective: f64,
    /// Scaled optimality error `E₀` at the final iterate.
    pub kkt_error: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mu: f64,
    pub linear_iterations: usize,
    pub time_function: f64,
    pub time_linear: f64,
    pub time_other: f64,
    pub time_total: f64,
    pub log: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub point: PrimalDualPoint,
    pub report: SolveReport,
}

/// Header line of the iteration log.
pub fn log_header() -> String {
    format!(
        "{:>6} {:>23} {:>12} {:>12} {:>12} {:>12} {:>12} {:>6} {:>12}",
        "iter", "objective", "inf_pr", "inf_du", "mu", "alpha_pr", "alpha_du", "lin_it", "delta_w"
    )
}

#[derive(Default)]
struct Context {
    iterations: usize,
    restorations: usize,
    linear_iterations: usize,
    time_function: f64,
    time_linear: f64,
    log: Vec<String>,
    print: bool,
}

impl Context {
    fn timed<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.time_function += t.elapsed().as_secs_f64();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Status(SolveStatus),
    Stopped,
}

struct CoreResult {
    point: PrimalDualPoint,
    outcome: Outcome,
    objective: f64,
    kkt_error: f64,
    inf_pr: f64,
    inf_du: f64,
    mu: f64,
}

/// Solves `nlp`; fails only when the linear solver cannot be set up.
pub fn solve(nlp: &dyn NlpProblem, options: &IpmOptions) -> Result<Solution, LinalgError> {
    let start = Instant::now();
    let mut ctx = Context {
        print: options.print,
        ..Default::default()
    };
    let header = log_header();
    if ctx.print {
        println!("{header}");
    }
    ctx.log.push(header);

    let x0 = push_inside(
        &nlp.initial_point(),
        nlp.lower_bounds(),
        nlp.upper_bounds(),
        options.bound_push,
        options.bound_frac,
    );
    let scaled = options
        .scaling
        .then(|| ScaledProblem::new(nlp, &x0, options.max_gradient))
        .filter(|s| !s.is_identity());
    let problem: &dyn NlpProblem = match &scaled {
        Some(s) => s,
        None => nlp,
    };
    let mut solver = KktSolver::new(options.linear_solver, problem.structure())?;
    let core = run(problem, options, &mut solver, &mut ctx, None, false);

    let mut point = core.point;
    let mut objective = core.objective;
    if let Some(s) = &scaled {
        let sf = s.obj_scale();
        objective /= sf;
        for (l, sc) in point.lambda.iter_mut().zip(s.con_scale()) {
            *l *= sc / sf;
        }
        for z in point.z_l.iter_mut().chain(point.z_u.iter_mut()) {
            *z /= sf;
        }
    }
    let status = match core.outcome {
        Outcome::Status(s) => s,
        Outcome::Stopped => SolveStatus::Optimal,
    };
    let time_total = start.elapsed().as_secs_f64();
    let report = SolveReport {
        status,
        iterations: ctx.iterations,
        restorations: ctx.restorations,
        objective,
        kkt_error: core.kkt_error,
        primal_infeasibility: core.inf_pr,
        dual_infeasibility: core.inf_du,
        mu: core.mu,
        linear_iterations: ctx.linear_iterations,
        time_function: ctx.time_function,
        time_linear: ctx.time_linear,
        time_other: (time_total - ctx.time_function - ctx.time_linear).max(0.0),
        time_total,
        log: ctx.log,
    };
    Ok(Solution { point, report })
}

/// Moves `x` strictly inside its bounds.
pub fn push_inside(x: &[f64], lb: &[f64], ub: &[f64], push: f64, frac: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let (l, u) = (lb[j], ub[j]);
            let mut v = x[j];
            let pl = push * l.abs().max(1.0);
            let pu = push * u.abs().max(1.0);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => {
                    let w = u - l;
                    let pl = pl.min(frac * w);
                    let pu = pu.min(frac * w);
                    v = v.max(l + pl).min(u - pu);
                }
                (true, false) => v = v.max(l + pl),
                (false, true) => v = v.min(u - pu),
                (false, false) => {}
            }
            v
        })
        .collect()
}

struct Bounds<'a> {
    lb: &'a [f64],
    ub: &'a [f64],
}

impl Bounds<'_> {
    fn barrier(&self, f: f64, x: &[f64], mu: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..x.len() {
            if self.lb[j].is_finite() {
                s += (x[j] - self.lb[j]).ln();
            }
            if self.ub[j].is_finite() {
                s += (self.ub[j] - x[j]).ln();
            }
        }
        f - mu * s
    }

    fn interior(&self, x: &[f64]) -> bool {
        (0..x.len()).all(|j| {
            (!self.lb[j].is_finite() || x[j] > self.lb[j])
                && (!self.ub[j].is_finite() || x[j] < self.ub[j])
        })
    }

    fn centered_multipliers(&self, x: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let zl = (0..x.len())
            .map(|j| if self.lb[j].is_finite() { mu / (x[j] - self.lb[j]) } else { 0.0 })
            .collect();
        let zu = (0..x.len())
            .map(|j| if self.ub[j].is_finite() { mu / (self.ub[j] - x[j]) } else { 0.0 })
            .collect();
        (zl, zu)
    }
}

struct Errors {
    inf_pr: f64,
    inf_du: f64,
    scaled_du: f64,
    s_c: f64,
}

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

struct Iterate {
    point: PrimalDualPoint,
    f: f64,
    vals: OracleValues,
}

impl Iterate {
    fn errors(&self, jac_structure: &[(usize, usize)], bounds: &Bounds, s_max: f64) -> Errors {
        let p = &self.point;
        let mut rd = self.vals.grad.clone();
        for (&(r, c), &a) in jac_structure.iter().zip(&self.vals.jac) {
            rd[c] += a * p.lambda[r];
        }
        for j in 0..rd.len() {
            rd[j] += p.z_u[j] - p.z_l[j];
        }
        let nb = (0..p.x.len())
            .map(|j| bounds.lb[j].is_finite() as usize + bounds.ub[j].is_finite() as usize)
            .sum::<usize>();
        let zsum = norm1(&p.z_l) + norm1(&p.z_u);
        let count = nb + p.lambda.len();
        let s_d = if count == 0 {
            1.0
        } else {
            s_max.max((norm1(&p.lambda) + zsum) / count as f64) / s_max
        };
        let s_c = if nb == 0 { 1.0 } else { s_max.max(zsum / nb as f64) / s_max };
        let inf_du = norm_inf(&rd);
        Errors {
            inf_pr: norm_inf(&self.vals.c),
            inf_du,
            scaled_du: inf_du / s_d,
            s_c,
        }
    }

    fn complementarity(&self, bounds: &Bounds, mu: f64) -> f64 {
        let p = &self.point;
        let mut e = 0.0f64;
        for j in 0..p.x.len() {
            if bounds.lb[j].is_finite() {
                e = e.max(((p.x[j] - bounds.lb[j]) * p.z_l[j] - mu).abs());
            }
            if bounds.ub[j].is_finite() {
                e = e.max(((bounds.ub[j] - p.x[j]) * p.z_u[j] - mu).abs());
            }
        }
        e
    }

    fn optimality_error(&self, e: &Errors, bounds: &Bounds, mu: f64) -> f64 {
        e.scaled_du
            .max(e.inf_pr)
            .max(self.complementarity(bounds, mu) / e.s_c)
    }
}

struct Step {
    dx: Vec<f64>,
    dlambda: Vec<f64>,
    dz_l: Vec<f64>,
    dz_u: Vec<f64>,
    lin_iters: usize,
    delta_w: f64,
}

#[allow(clippy::too_many_arguments)]
fn compute_step(
    problem: &dyn NlpProblem,
    assembler: &KktAssembler,
    solver: &mut KktSolver,
    it: &Iterate,
    bounds: &Bounds,
    mu: f64,
    options: &IpmOptions,
    ctx: &mut Context,
) -> Result<Step, SolveStatus> {
    let n = problem.num_variables();
    let m = problem.num_constraints();
    let jac_structure = problem.jacobian_structure();
    let assemble = |dw: f64, dc: f64| {
        assembler
            .assemble(&it.vals, jac_structure, bounds.lb, bounds.ub, &it.point, mu, dw, dc)
            .expect("iterate is interior")
    };
    let mut dw = 0.0;
    let mut dc = 0.0;
    let mut dw0 = None;
    let mut escalations = 0;
    let mut lin_iters = 0;
    loop {
        let sys = assemble(dw, dc);
        let first = *dw0.get_or_insert_with(|| 1e-4 * sys.hessian_inf_norm().max(1.0));
        let t = Instant::now();
        let res = solver.solve(&sys.matrix, &sys.rhs, options.linear_tol);
        ctx.time_linear += t.elapsed().as_secs_f64();
        let mut deficit = 0.0;
        match res {
            Ok((d, info)) => {
                lin_iters += info.iterations;
                let dx = &d[..n];
                if info.converged && d.iter().all(|v| v.is_finite()) {
                    let q = sys.primal_curvature(dx);
                    if curvature_test(q, dx) {
                        let (dz_l, dz_u) = recover_bound_step(&it.point, bounds.lb, bounds.ub, dx, mu);
                        ctx.linear_iterations += lin_iters;
                        return Ok(Step {
                            dx: dx.to_vec(),
                            dlambda: d[n..].to_vec(),
                            dz_l,
                            dz_u,
                            lin_iters,
                            delta_w: dw,
                        });
                    }
                    let dd: f64 = dx.iter().map(|v| v * v).sum();
                    deficit = (dw - q / dd).max(0.0);
                }
            }
            Err(LinalgError::SingularMatrix | LinalgError::SubdomainSingular(_)) if dc == 0.0 && m > 0 => {
                dc = 1e-8 * mu.powf(0.25);
                continue;
            }
            Err(_) => {}
        }
        escalations += 1;
        if escalations > options.max_regularizations {
            ctx.linear_iterations += lin_iters;
            return Err(SolveStatus::RegularizationExhausted);
        }
        dw = if dw == 0.0 { first.max(2.0 * deficit) } else { (10.0 * dw).max(2.0 * deficit) };
    }
}

#[allow(clippy::too_many_arguments)]
fn log_line(
    ctx: &mut Context,
    resto: bool,
    it: &Iterate,
    e: &Errors,
    mu: f64,
    alpha: (f64, f64),
    lin_iters: usize,
    dw: f64,
) {
    let tag = format!("{}{}", ctx.iterations, if resto { "r" } else { "" });
    let line = format!(
        "{:>6} {:>23.15e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>6} {:>12.6e}",
        tag, it.f, e.inf_pr, e.inf_du, mu, alpha.0, alpha.1, lin_iters, dw
    );
    if ctx.print {
        println!("{line}");
    }
    ctx.log.push(line);
}

fn evaluate_point(problem: &dyn NlpProblem, x: &[f64], ctx: &mut Context) -> Option<(f64, Vec<f64>)> {
    let m = problem.num_constraints();
    ctx.timed(|| {
        let f = problem.objective(x).ok()?;
        let mut c = vec![0.0; m];
        problem.constraints(x, &mut c).ok()?;
        (f.is_finite() && c.iter().all(|v| v.is_finite())).then_some((f, c))
    })
}

fn evaluate_derivatives(problem: &dyn NlpProblem, x: &[f64], grad: &mut [f64], jac: &mut [f64], ctx: &mut Context) -> bool {
    ctx.timed(|| problem.gradient(x, grad).is_ok() && problem.jacobian_values(x, jac).is_ok())
}

/// Interior-point loop on `problem`. `hook` is polled after every accepted
/// step; returning true stops with [`Outcome::Stopped`].
fn run(
    problem: &dyn NlpProblem,
    options: &IpmOptions,
    solver: &mut KktSolver,
    ctx: &mut Context,
    mut hook: Option<&mut dyn FnMut(&[f64]) -> bool>,
    resto: bool,
) -> CoreResult {
    let n = problem.num_variables();
    let m = problem.num_constraints();
    let bounds = Bounds {
        lb: problem.lower_bounds(),
        ub: problem.upper_bounds(),
    };
    let jac_structure = problem.jacobian_structure();
    let assembler = KktAssembler::for_problem(problem);
    let mut mu = options.mu_init;
    let x = push_inside(&problem.initial_point(), bounds.lb, bounds.ub, options.bound_push, options.bound_frac);
    let (z_l, z_u) = bounds.centered_multipliers(&x, mu);
    let mut it = Iterate {
        point: PrimalDualPoint {
            x,
            lambda: vec![0.0; m],
            z_l,
            z_u,
        },
        f: f64::NAN,
        vals: OracleValues {
            grad: vec![0.0; n],
            c: vec![0.0; m],
            jac: vec![0.0; jac_structure.len()],
            hess: vec![0.0; problem.hessian_structure().len()],
        },
    };

    let fail = |it: Iterate, status: SolveStatus, mu: f64| CoreResult {
        point: it.point,
        outcome: Outcome::Status(status),
        objective: it.f,
        kkt_error: f64::INFINITY,
        inf_pr: f64::INFINITY,
        inf_du: f64::INFINITY,
        mu,
    };
    match evaluate_point(problem, &it.point.x, ctx) {
        Some((f, c)) => {
            it.f = f;
            it.vals.c = c;
        }
        None => return fail(it, SolveStatus::TrialPointFailure, mu),
    }
    if !evaluate_derivatives(problem, &it.point.x, &mut it.vals.grad, &mut it.vals.jac, ctx) {
        return fail(it, SolveStatus::TrialPointFailure, mu);
    }

    let theta0 = norm1(&it.vals.c);
    let theta_max = 1e4 * theta0.max(1.0);
    let theta_min = 1e-4 * theta0.max(1.0);
    let mut filter = Filter::new();
    let mut last = ((0.0, 0.0), 0usize, 0.0);

    loop {
        let e = it.errors(jac_structure, &bounds, options.s_max);
        log_line(ctx, resto, &it, &e, mu, last.0, last.1, last.2);
        let e0 = it.optimality_error(&e, &bounds, 0.0);
        let done = |it: Iterate, outcome: Outcome, mu: f64| CoreResult {
            objective: it.f,
            point: it.point,
            outcome,
            kkt_error: e0,
            inf_pr: e.inf_pr,
            inf_du: e.inf_du,
            mu,
        };
        if e0 <= options.tol {
            return done(it, Outcome::Status(SolveStatus::Optimal), mu);
        }
        while mu > options.tol / 10.0 && it.optimality_error(&e, &bounds, mu) <= 10.0 * mu {
            mu = update_barrier(mu, options.tol);
            filter.clear();
        }
        if ctx.iterations >= options.max_iter {
            return done(it, Outcome::Status(SolveStatus::MaxIter), mu);
        }

        let hess_ok = ctx.timed(|| {
            problem
                .hessian_values(&it.point.x, 1.0, &it.point.lambda, &mut it.vals.hess)
                .is_ok()
        });
        if !hess_ok {
            return done(it, Outcome::Status(SolveStatus::TrialPointFailure), mu);
        }
        let step = match compute_step(problem, &assembler, solver, &it, &bounds, mu, options, ctx) {
            Ok(s) => s,
            Err(status) => return done(it, Outcome::Status(status), mu),
        };

        let tau = filter::tau(mu);
        let p = &it.point;
        let (alpha_max, alpha_z) = fraction_to_boundary(
            &p.x, bounds.lb, bounds.ub, &step.dx, &p.z_l, &p.z_u, &step.dz_l, &step.dz_u, tau,
        );
        let theta = norm1(&it.vals.c);
        let phi = bounds.barrier(it.f, &p.x, mu);
        let bg = barrier_gradient(&it.vals.grad, &p.x, bounds.lb, bounds.ub, mu);
        let slope: f64 = bg.iter().zip(&step.dx).map(|(a, b)| a * b).sum();
        let cur = LineSearchPoint {
            theta,
            phi,
            slope,
            theta_min,
            theta_max,
        };
        let tiny = step
            .dx
            .iter()
            .zip(&p.x)
            .all(|(d, x)| d.abs() / (1.0 + x.abs()) < 10.0 * f64::EPSILON);

        let alpha_min = cur.alpha_min();
        let mut alpha = alpha_max;
        let mut accepted = None;
        loop {
            let xt: Vec<f64> = p.x.iter().zip(&step.dx).map(|(x, d)| x + alpha * d).collect();
            if bounds.interior(&xt) {
                if let Some((ft, ct)) = evaluate_point(problem, &xt, ctx) {
                    let theta_t = norm1(&ct);
                    let phi_t = bounds.barrier(ft, &xt, mu);
                    let verdict = if tiny {
                        Acceptance::Armijo
                    } else {
                        filter_accept(&filter, &cur, alpha, theta_t, phi_t)
                    };
                    if verdict != Acceptance::Reject {
                        if verdict == Acceptance::Reduction {
                            filter.augment(theta, phi);
                        }
                        accepted = Some((xt, ft, ct));
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < alpha_min {
                break;
            }
        }

        let Some((xt, ft, ct)) = accepted else {
            if resto || !options.restoration {
                return done(it, Outcome::Status(SolveStatus::RestorationFailure), mu);
            }
            filter.augment(theta, phi);
            ctx.restorations += 1;
            match restore(problem, &it, &filter, &bounds, mu, options, ctx) {
                Ok(x) => {
                    let (z_l, z_u) = bounds.centered_multipliers(&x, mu);
                    let ok = evaluate_point(problem, &x, ctx);
                    let Some((f, c)) = ok else {
                        return done(it, Outcome::Status(SolveStatus::TrialPointFailure), mu);
                    };
                    it.point = PrimalDualPoint {
                        x,
                        lambda: vec![0.0; m],
                        z_l,
                        z_u,
                    };
                    it.f = f;
                    it.vals.c = c;
                    if !evaluate_derivatives(problem, &it.point.x, &mut it.vals.grad, &mut it.vals.jac, ctx) {
                        return done(it, Outcome::Status(SolveStatus::TrialPointFailure), mu);
                    }
                    last = ((1.0, 1.0), 0, 0.0);
                    continue;
                }
                Err((status, x)) => {
                    it.point.x = x;
                    if let Some((f, c)) = evaluate_point(problem, &it.point.x, ctx) {
                        it.f = f;
                        it.vals.c = c;
                    }
                    let e = it.errors(jac_structure, &bounds, options.s_max);
                    return CoreResult {
                        objective: it.f,
                        point: it.point,
                        outcome: Outcome::Status(status),
                        kkt_error: f64::INFINITY,
                        inf_pr: e.inf_pr,
                        inf_du: e.inf_du,
                        mu,
                    };
                }
            }
        };

        let pt = &mut it.point;
        for j in 0..n {
            pt.z_l[j] += alpha_z * step.dz_l[j];
            pt.z_u[j] += alpha_z * step.dz_u[j];
        }
        for (l, d) in pt.lambda.iter_mut().zip(&step.dlambda) {
            *l += alpha * d;
        }
        pt.x = xt;
        let k = options.kappa_sigma;
        for j in 0..n {
            if bounds.lb[j].is_finite() {
                let s = pt.x[j] - bounds.lb[j];
                pt.z_l[j] = pt.z_l[j].min(k * mu / s).max(mu / (k * s));
            }
            if bounds.ub[j].is_finite() {
                let s = bounds.ub[j] - pt.x[j];
                pt.z_u[j] = pt.z_u[j].min(k * mu / s).max(mu / (k * s));
            }
        }
        it.f = ft;
        it.vals.c = ct;
        if !evaluate_derivatives(problem, &it.point.x, &mut it.vals.grad, &mut it.vals.jac, ctx) {
            return done(it, Outcome::Status(SolveStatus::TrialPointFailure), mu);
        }
        ctx.iterations += 1;
        last = ((alpha, alpha_z), step.lin_iters, step.delta_w);
        if let Some(h) = hook.as_mut() {
            if h(&it.point.x) {
                let e = it.errors(jac_structure, &bounds, options.s_max);
                log_line(ctx, resto, &it, &e, mu, last.0, last.1, last.2);
                return CoreResult {
                    objective: it.f,
                    kkt_error: it.optimality_error(&e, &bounds, 0.0),
                    inf_pr: e.inf_pr,
                    inf_du: e.inf_du,
                    point: it.point,
                    outcome: Outcome::Stopped,
                    mu,
                };
            }
        }
    }
}

/// Runs the feasibility phase from `it`; returns the new primal point or the
/// failure status with the last primal point.
fn restore(
    problem: &dyn NlpProblem,
    it: &Iterate,
    filter: &Filter,
    bounds: &Bounds,
    mu: f64,
    options: &IpmOptions,
    ctx: &mut Context,
) -> Result<Vec<f64>, (SolveStatus, Vec<f64>)> {
    let n = problem.num_variables();
    let theta_ref = norm1(&it.vals.c);
    let mu_r = mu.max(norm_inf(&it.vals.c));
    let resto = RestorationProblem::new(problem, &it.point.x, &it.vals.c, mu_r);
    let inner = IpmOptions {
        mu_init: mu_r,
        linear_solver: LinearSolverConfig::Direct,
        scaling: false,
        restoration: false,
        ..options.clone()
    };
    let mut solver = KktSolver::new(LinearSolverConfig::Direct, None).expect("direct solver");
    let m = problem.num_constraints();
    let mut c = vec![0.0; m];
    let mut hook = |z: &[f64]| -> bool {
        let x = &z[..n];
        let Ok(f) = problem.objective(x) else { return false };
        if problem.constraints(x, &mut c).is_err() {
            return false;
        }
        let theta = norm1(&c);
        theta <= 0.9 * theta_ref && filter.acceptable(theta, bounds.barrier(f, x, mu))
    };
    let out = run(&resto, &inner, &mut solver, ctx, Some(&mut hook), true);
    let x = out.point.x[..n].to_vec();
    match out.outcome {
        Outcome::Stopped => Ok(x),
        Outcome::Status(SolveStatus::Optimal) => {
            let mut c = vec![0.0; m];
            match problem.constraints(&x, &mut c) {
                Ok(()) if norm_inf(&c) <= options.tol => Ok(x),
                _ => Err((SolveStatus::RestorationFailure, x)),
            }
        }
        Outcome::Status(SolveStatus::MaxIter) => Err((SolveStatus::MaxIter, x)),
        Outcome::Status(_) => Err((SolveStatus::RestorationFailure, x)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{OptiGraph, Sense};

    fn single(
        lbs: &[(f64, f64, f64)],
        obj: impl Fn(&[Expr]) -> Expr,
        cons: impl Fn(&[Expr]) -> Vec<(Expr, Sense, f64)>,
    ) -> crate::nlp::StandardNLP {
        let mut g = OptiGraph::new();
        let a = g.add_node();
        let xs: Vec<Expr> = lbs
            .iter()
            .enumerate()
            .map(|(i, &(l, u, s))| Expr::var(g.add_variable(a, &format!("x{i}"), l, u, Some(s)).unwrap()))
            .collect();
        g.add_objective_term(a, obj(&xs)).unwrap();
        for (e, s, r) in cons(&xs) {
            g.add_constraint(a, e, s, r).unwrap();
        }
        g.flatten().unwrap()
    }

    #[test]
    fn bound_constrained_quadratic() {
        let nlp = single(&[(0.0, f64::INFINITY, 0.5)], |x| (&x[0] - 2.0).square(), |_| vec![]);
        let sol = solve(&nlp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        assert!((sol.point.x[0] - 2.0).abs() < 1e-7);
        assert!(sol.point.z_l[0].abs() < 1e-7);
    }

    #[test]
    fn bilinear_equality() {
        let inf = f64::INFINITY;
        let nlp = single(
            &[(0.0, inf, 2.0), (0.0, inf, 0.3)],
            |x| &x[0] + &x[1],
            |x| vec![(&x[0] * &x[1], Sense::Eq, 1.0)],
        );
        let sol = solve(&nlp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal, "{:#?}", sol.report.log);
        assert!((sol.point.x[0] - 1.0).abs() < 1e-7 && (sol.point.x[1] - 1.0).abs() < 1e-7);
        assert!((sol.point.lambda[0] + 1.0).abs() < 1e-6);
        assert!(sol.report.iterations <= 50);
    }

    #[test]
    fn infeasible_bounds_fail_restoration() {
        let nlp = single(&[(0.0, 1.0, 0.0)], |x| x[0].clone(), |x| vec![(&x[0] - 3.0, Sense::Eq, 0.0)]);
        let sol = solve(&nlp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::RestorationFailure, "{:#?}", sol.report.log);
        assert!((sol.point.x[0] - 1.0).abs() < 1e-3, "{}", sol.point.x[0]);
        assert!(sol.report.restorations >= 1);
    }

    #[test]
    fn negative_curvature_is_regularized() {
        // max x² on [-1, 2] from an interior point: the Hessian is negative throughout.
        let nlp = single(&[(-1.0, 2.0, 0.5)], |x| -x[0].square(), |_| vec![]);
        let sol = solve(&nlp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        assert!((sol.point.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn max_iter_is_reported() {
        let nlp = single(&[(0.0, f64::INFINITY, 0.5)], |x| (&x[0] - 2.0).square(), |_| vec![]);
        let opts = IpmOptions {
            max_iter: 1,
            ..Default::default()
        };
        assert_eq!(solve(&nlp, &opts).unwrap().report.status, SolveStatus::MaxIter);
    }

    #[test]
    fn trial_point_failure_at_start() {
        let nlp = single(&[(f64::NEG_INFINITY, f64::INFINITY, -1.0)], |x| x[0].ln(), |_| vec![]);
        let sol = solve(&nlp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::TrialPointFailure);
    }

    #[test]
    fn four_variable_benchmark() {
        let nlp = single(
            &[(1.0, 5.0, 1.0), (1.0, 5.0, 5.0), (1.0, 5.0, 5.0), (1.0, 5.0, 1.0)],
            |x| &x[0] * &x[3] * (&x[0] + &x[1] + &x[2]) + &x[2],
            |x| {
                vec![
                    (&x[0] * &x[1] * &x[2] * &x[3], Sense::Ge, 25.0),
                    (x[0].square() + x[1].square() + x[2].square() + x[3].square(), Sense::Eq, 40.0),
                ]
            },
        );
        let sol = solve(&nlp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        let x = &sol.point.x;
        assert!((sol.report.objective - 17.014017).abs() < 1e-5, "{}", sol.report.objective);
        assert!((x[0] * x[1] * x[2] * x[3] - 25.0).abs() < 1e-6);
        assert!(sol.report.kkt_error <= 1e-8);
    }

    #[test]
    fn push_inside_rules() {
        let x = push_inside(&[0.0, 5.0, 0.0], &[0.0, 0.0, -1.0], &[f64::INFINITY, 1.0, 1.0], 1e-2, 1e-2);
        assert_eq!(x, vec![0.01, 0.99, 0.0]);
    }
}
