//! The integral operator whose fixed points are exactly the solutions of the
//! nonlocal boundary value problem, and Banach iteration on it.
//!
//! With `Φ(s) = F(s, w(s), w'(s), ∫₀ˢ G(s, σ, w(σ), w'(σ)) dσ)` the operator
//! maps `w` to
//!
//! ```text
//! (Pw)(t)  = A + t/(β−1) ∫₀ᵀ Φ + ∫₀ᵗ (t−s) Φ(s) ds
//! (Pw)'(t) = 1/(β−1) ∫₀ᵀ Φ + ∫₀ᵗ Φ(s) ds
//! A        = (w₀ − Σ c_k [t_k/(β−1) ∫₀ᵀ Φ + ∫₀^{t_k} (t_k−s) Φ(s) ds]) / (1 + Σ c_k)
//! ```
//!
//! Both side conditions hold for `Pw` whatever `w` is; iteration only has to
//! settle the differential equation itself.

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{contraction_constant, Constants};
use crate::expr::ExprError;
use crate::gridfn::{bielecki_distance, Grid, GridError, GridFunction};
use crate::problem::{validate, Problem, Violation, RHS_VARS};
use crate::quadrature::{
    cumulative_trapz, trapz, volterra_inner, weighted_tail, weighted_tail_at, QuadError, SampledIntegrand,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("invalid problem: {0:?}")]
    InvalidProblem(Vec<Violation>),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kernel(#[from] QuadError),
    #[error("right-hand side evaluation failed at node {node}: {source}")]
    Rhs { node: usize, source: ExprError },
    #[error("iteration {iteration} diverged: {reason}")]
    Diverged { iteration: usize, reason: String },
}

impl SolveError {
    /// True for failures raised while evaluating user expressions.
    pub fn is_expression_error(&self) -> bool {
        matches!(self, SolveError::Kernel(QuadError::Kernel { .. }) | SolveError::Rhs { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Number of grid subintervals.
    pub n: usize,
    /// Stop once the weighted increment drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Norm weight used for stopping and for the contraction constant.
    pub gamma: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { n: 400, tol: 1e-10, max_iter: 500, gamma: 1.0 }
    }
}

impl SolveOptions {
    pub fn check(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidOptions(m.to_string()));
        if self.n < 2 {
            return bad("N must be at least 2");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub solution: GridFunction,
    pub iterations: usize,
    /// Weighted distances between consecutive iterates.
    pub increments: Vec<f64>,
    pub q_used: f64,
    /// `q·‖wₙ − wₙ₋₁‖/(1 − q)`, infinite when `q ≥ 1`.
    pub apost_bound: f64,
    pub converged: bool,
}

impl SolveResult {
    pub fn certified(&self) -> bool {
        self.q_used < 1.0
    }
}

/// `Φ(t_i)`, the right-hand side along `f`, including the inner Volterra
/// integral.
pub fn evaluate_rhs(p: &Problem, f: &GridFunction) -> Result<Vec<f64>, SolveError> {
    let inner = volterra_inner(&p.kernel, f)?;
    let rhs = p.rhs.compile(&RHS_VARS).map_err(|source| SolveError::Rhs { node: 0, source })?;
    let grid = f.grid();
    let (w, wp) = (f.values(), f.derivatives());
    (0..grid.len())
        .map(|i| rhs.eval(&[grid.node(i), w[i], wp[i], inner[i]]).map_err(|source| SolveError::Rhs { node: i, source }))
        .collect()
}

/// One application of the integral operator.
pub fn apply_operator(p: &Problem, f: &GridFunction) -> Result<GridFunction, SolveError> {
    let grid = *f.grid();
    let phi = evaluate_rhs(p, f)?;
    if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
        return Err(SolveError::Grid(GridError::NonFinite(i)));
    }
    let phi = SampledIntegrand::new(grid, phi)?;
    let total = trapz(&phi);
    let scale = 1.0 / (p.beta - 1.0);
    let mut nonlocal = 0.0;
    for (c, tk) in p.coefficients.iter().zip(&p.points) {
        nonlocal += c * (tk * scale * total + weighted_tail_at(&phi, *tk)?);
    }
    let base = (p.w0 - nonlocal) / (1.0 + p.sum_c());
    let running = cumulative_trapz(&phi);
    let mut w = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        w.push(base + grid.node(i) * scale * total + weighted_tail(&phi, i)?);
    }
    let wp = running.iter().map(|r| scale * total + r).collect();
    Ok(GridFunction::new(grid, w, wp)?)
}

/// The fixed point for `F ≡ 0`: constant `w₀/(1 + Σc)`, which already
/// satisfies both side conditions.
pub fn initial_guess(p: &Problem, grid: Grid) -> GridFunction {
    GridFunction::constant(grid, p.w0 / (1.0 + p.sum_c()))
}

/// Iterates the operator from [`initial_guess`] until the weighted
/// increment falls below `opts.tol`.
pub fn solve(p: &Problem, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    opts.check()?;
    let violations = validate(p);
    if !violations.is_empty() {
        return Err(SolveError::InvalidProblem(violations));
    }
    let q = contraction_constant(&Constants::from_problem(p), opts.gamma).map(|r| r.q).unwrap_or(f64::INFINITY);
    let grid = Grid::new(p.horizon, opts.n)?;
    let mut current = initial_guess(p, grid);
    let mut increments: Vec<f64> = Vec::new();
    let mut growth_run = 0;
    let mut converged = false;

    for iteration in 1..=opts.max_iter {
        let next = apply_operator(p, &current).map_err(|e| match e {
            SolveError::Grid(GridError::NonFinite(node)) => {
                SolveError::Diverged { iteration, reason: format!("non-finite value at node {node}") }
            }
            other => other,
        })?;
        let step = bielecki_distance(&next, &current, opts.gamma)?;
        if !step.is_finite() {
            return Err(SolveError::Diverged { iteration, reason: "non-finite increment".into() });
        }
        if let Some(&prev) = increments.last() {
            growth_run = if step > prev { growth_run + 1 } else { 0 };
        }
        increments.push(step);
        current = next;
        if step <= opts.tol {
            converged = true;
            break;
        }
        if q >= 1.0 && growth_run >= 5 {
            return Err(SolveError::Diverged {
                iteration,
                reason: "increments grew for 5 consecutive iterations".into(),
            });
        }
    }

    let last = increments.last().copied().unwrap_or(0.0);
    let apost_bound = if q < 1.0 { q * last / (1.0 - q) } else { f64::INFINITY };
    Ok(SolveResult { solution: current, iterations: increments.len(), increments, q_used: q, apost_bound, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::problem::{builtin_example, BuiltinId, FileSettings, KERNEL_VARS};

    fn simple(rhs: &str, kernel: &str) -> Problem {
        Problem {
            label: None,
            horizon: 1.0,
            beta: 2.0,
            w0: 0.7,
            coefficients: vec![0.0],
            points: vec![1.0],
            rhs: parse(rhs, &RHS_VARS).unwrap(),
            kernel: parse(kernel, &KERNEL_VARS).unwrap(),
            lipschitz_rhs: 0.0,
            lipschitz_kernel: 0.0,
            settings: FileSettings::default(),
        }
    }

    fn ex2_exact(n: usize) -> GridFunction {
        let grid = Grid::new(2.0, n).unwrap();
        GridFunction::sample(grid, |t| (t + t * t) / 10.0, |t| (1.0 + 2.0 * t) / 10.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = simple("t + w + I", "1");
        let grid = Grid::new(1.0, 10).unwrap();
        let out = evaluate_rhs(&p, &GridFunction::constant(grid, 0.0)).unwrap();
        for (i, v) in out.iter().enumerate() {
            assert!((v - 2.0 * grid.node(i)).abs() < 1e-15);
        }
        let zero = evaluate_rhs(&simple("0", "w"), &ex2_exact(10)).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ex2_rhs_collapses_to_constant() {
        let p = builtin_example(BuiltinId::Ex2);
        let out = evaluate_rhs(&p, &ex2_exact(400)).unwrap();
        let worst = out.iter().map(|v| (v - 0.2).abs()).fold(0.0, f64::max);
        assert!(worst <= 5e-5, "{worst}");
    }

    #[test]
    fn zero_rhs_maps_everything_to_constant() {
        let mut p = builtin_example(BuiltinId::Ex2);
        p.rhs = parse("0", &RHS_VARS).unwrap();
        let out = apply_operator(&p, &ex2_exact(50)).unwrap();
        assert!(out.values().iter().all(|w| (w - 0.25).abs() < 1e-15));
        assert!(out.derivatives().iter().all(|wp| *wp == 0.0));
    }

    #[test]
    fn constant_rhs_closed_form() {
        // F = 1: I_T = 1, w'(0) = 1/(β − 1) = 1, so w = w0 + t + t²/2
        let p = simple("1", "0");
        let grid = Grid::new(1.0, 20).unwrap();
        let input = GridFunction::sample(grid, |t| t.cos(), |t| -t.sin()).unwrap();
        let out = apply_operator(&p, &input).unwrap();
        for (i, t) in grid.nodes().enumerate() {
            assert!((out.values()[i] - (0.7 + t + t * t / 2.0)).abs() < 1e-14);
            assert!((out.derivatives()[i] - (1.0 + t)).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_ex2_is_near_fixed_point() {
        let p = builtin_example(BuiltinId::Ex2);
        let f = ex2_exact(400);
        let d = bielecki_distance(&apply_operator(&p, &f).unwrap(), &f, 1.0).unwrap();
        assert!(d <= 1e-4, "{d}");
    }

    #[test]
    fn guess_examples() {
        let p = builtin_example(BuiltinId::Ex2);
        let grid = Grid::new(2.0, 8).unwrap();
        let g = initial_guess(&p, grid);
        assert!(g.values().iter().all(|w| (w - 0.25).abs() < 1e-16));
        let nonlocal: f64 = g.values()[0]
            + p.coefficients.iter().zip(&p.points).map(|(c, t)| c * g.eval_at(*t).unwrap().0).sum::<f64>();
        assert!((nonlocal - p.w0).abs() < 1e-15);
        let z = initial_guess(&p.with_w0(0.0), grid);
        assert!(z.values().iter().chain(z.derivatives()).all(|v| *v == 0.0));
    }

    #[test]
    fn solve_zero_rhs_in_two_iterations() {
        let mut p = builtin_example(BuiltinId::Ex1);
        p.rhs = parse("0", &RHS_VARS).unwrap();
        let r = solve(&p, &SolveOptions { n: 50, ..Default::default() }).unwrap();
        assert!(r.converged && r.iterations <= 2);
        let c = p.w0 / 3.0;
        assert!(r.solution.values().iter().all(|w| (w - c).abs() < 1e-15));
    }

    #[test]
    fn solve_constant_rhs() {
        let p = simple("1", "0");
        let r = solve(&p, &SolveOptions { n: 40, ..Default::default() }).unwrap();
        assert!(r.converged && r.iterations <= 3, "{}", r.iterations);
        let grid = r.solution.grid();
        let err = grid
            .nodes()
            .enumerate()
            .map(|(i, t)| (r.solution.values()[i] - (0.7 + t + t * t / 2.0)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10);
        // LF = 0 gives q = 0 and a zero a-posteriori bound
        assert_eq!(r.q_used, 0.0);
        assert_eq!(r.apost_bound, 0.0);
    }

    #[test]
    fn options_are_checked() {
        let p = builtin_example(BuiltinId::Ex2);
        for bad in [
            SolveOptions { n: 1, ..Default::default() },
            SolveOptions { tol: 0.0, ..Default::default() },
            SolveOptions { max_iter: 0, ..Default::default() },
            SolveOptions { gamma: -1.0, ..Default::default() },
        ] {
            assert!(matches!(solve(&p, &bad), Err(SolveError::InvalidOptions(_))));
        }
    }

    #[test]
    fn non_convergence_is_reported_not_failed() {
        let p = builtin_example(BuiltinId::Ex2);
        let r = solve(&p, &SolveOptions { n: 40, max_iter: 2, tol: 1e-14, gamma: 1.0 }).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.increments.len(), 2);
    }

    #[test]
    fn blow_up_is_divergence() {
        let mut p = simple("exp(exp(exp(w)))", "0");
        p.w0 = 50.0;
        p.lipschitz_rhs = 100.0;
        let err = solve(&p, &SolveOptions { n: 10, ..Default::default() }).unwrap_err();
        assert!(matches!(err, SolveError::Diverged { iteration: 1, .. }), "{err:?}");
    }

    #[test]
    fn expression_failures_propagate() {
        let p = simple("log(w - 10)", "0");
        let err = solve(&p, &SolveOptions { n: 10, ..Default::default() }).unwrap_err();
        assert!(err.is_expression_error(), "{err:?}");
    }

    #[test]
    fn channels_are_consistent() {
        let p = builtin_example(BuiltinId::Ex1);
        let grid = Grid::new(1.0, 200).unwrap();
        let input = GridFunction::sample(grid, |t| 3.0 + t.sin(), |t| t.cos()).unwrap();
        let out = apply_operator(&p, &input).unwrap();
        let h = grid.step();
        let w = out.values();
        for i in 1..grid.intervals() {
            let centered = (w[i + 1] - w[i - 1]) / (2.0 * h);
            assert!((centered - out.derivatives()[i]).abs() <= 1e-6, "node {i}");
        }
    }

    #[test]
    fn side_conditions_hold_for_any_output() {
        for id in BuiltinId::ALL {
            let p = builtin_example(id);
            let grid = Grid::new(p.horizon, 160).unwrap();
            let input = GridFunction::sample(grid, |t| 1.0 + t * t, |t| 2.0 * t).unwrap();
            let out = apply_operator(&p, &input).unwrap();
            let wp = out.derivatives();
            assert!((wp[grid.intervals()] - p.beta * wp[0]).abs() <= 1e-12);
            let nonlocal = out.values()[0]
                + p.coefficients.iter().zip(&p.points).map(|(c, t)| c * out.eval_at(*t).unwrap().0).sum::<f64>();
            assert!((nonlocal - p.w0).abs() <= 1e-12, "{id}");
        }
    }
}
