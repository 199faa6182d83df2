//! Certificates and checks around the solver:
//!
//! * the contraction constant
//!   `q = (L_F/γ)(1 + L_G/γ)(1 + [1 + {Tβ + Tβ|Σc/(1+Σc)|}] e^{γT}/(β−1))`,
//!   whose value below one guarantees a unique solution;
//! * the data-dependence bound
//!   `‖w* − v*‖ ≤ (|1/(1+Σc)|·|w₀ − w̃₀| + βL_μ/(β−1)·[1 + (1 + |Σc/(1+Σc)|)T]) / (1 − q)`
//!   with `L_μ = ∫₀ᵀ μ`;
//! * residuals of a candidate solution against the equation and both side
//!   conditions.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::gridfn::{bielecki_distance, Grid, GridError, GridFunction};
use crate::picard::{evaluate_rhs, solve, SolveError, SolveOptions};
use crate::problem::Problem;
use crate::quadrature::{trapz, SampledIntegrand};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no contraction certificate: q = {q} is not below 1")]
    CertificateUnavailable { q: f64 },
    #[error("mu is negative at t = {t} ({value})")]
    NegativeMu { t: f64, value: f64 },
    #[error("mu: {0}")]
    Mu(ExprError),
    #[error("problems differ in T, beta, c or tk")]
    StructuralMismatch,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The problem constants that enter the certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub lipschitz_rhs: f64,
    pub lipschitz_kernel: f64,
    pub horizon: f64,
    pub beta: f64,
    pub sum_c: f64,
}

impl Constants {
    pub fn new(lipschitz_rhs: f64, lipschitz_kernel: f64, horizon: f64, beta: f64, coefficients: &[f64]) -> Constants {
        Constants { lipschitz_rhs, lipschitz_kernel, horizon, beta, sum_c: coefficients.iter().sum() }
    }

    pub fn from_problem(p: &Problem) -> Constants {
        Constants::new(p.lipschitz_rhs, p.lipschitz_kernel, p.horizon, p.beta, &p.coefficients)
    }

    /// `|Σc/(1 + Σc)|`.
    pub fn c_ratio(&self) -> f64 {
        (self.sum_c / (1.0 + self.sum_c)).abs()
    }

    fn check(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::InvalidParameter(m.to_string()));
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return bad("beta must exceed 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("T must be positive");
        }
        if !(self.lipschitz_rhs >= 0.0 && self.lipschitz_kernel >= 0.0) {
            return bad("Lipschitz constants must be non-negative");
        }
        if 1.0 + self.sum_c == 0.0 || !self.sum_c.is_finite() {
            return bad("sum of c must differ from -1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub gamma: f64,
    pub q: f64,
    pub unique: bool,
    pub sum_c: f64,
    pub c_ratio: f64,
    /// `L_F/γ`, `1 + L_G/γ` and the bracketed boundary factor; their product is `q`.
    pub factors: [f64; 3],
}

pub fn contraction_constant(k: &Constants, gamma: f64) -> Result<ContractionReport, AnalysisError> {
    k.check()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AnalysisError::InvalidParameter("gamma must be positive".into()));
    }
    let (t, b) = (k.horizon, k.beta);
    let c_ratio = k.c_ratio();
    let lead = k.lipschitz_rhs / gamma;
    let kernel = 1.0 + k.lipschitz_kernel / gamma;
    let boundary = 1.0 + (1.0 + (t * b + t * b * c_ratio)) * (gamma * t).exp() / (b - 1.0);
    let q = lead * kernel * boundary;
    Ok(ContractionReport { gamma, q, unique: q < 1.0, sum_c: k.sum_c, c_ratio, factors: [lead, kernel, boundary] })
}

const SCAN_POINTS: usize = 1024;

/// Minimizes `q(γ)` over `[lo, hi]`: a logarithmic scan followed by
/// golden-section refinement around the best sample. Ties go to the
/// smallest `γ`.
pub fn optimize_gamma(k: &Constants, lo: f64, hi: f64) -> Result<(f64, f64), AnalysisError> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(AnalysisError::InvalidParameter(format!("invalid gamma range [{lo}, {hi}]")));
    }
    let q = |g: f64| contraction_constant(k, g).map(|r| r.q);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let gammas: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| match i {
            0 => lo,
            i if i == SCAN_POINTS - 1 => hi,
            i => (llo + (lhi - llo) * i as f64 / (SCAN_POINTS - 1) as f64).exp(),
        })
        .collect();
    let mut best = (gammas[0], q(gammas[0])?);
    let mut best_idx = 0;
    for (i, &g) in gammas.iter().enumerate().skip(1) {
        let v = q(g)?;
        if v < best.1 {
            best = (g, v);
            best_idx = i;
        }
    }

    let (mut a, mut b) = (gammas[best_idx.saturating_sub(1)], gammas[(best_idx + 1).min(SCAN_POINTS - 1)]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (q(x1)?, q(x2)?);
    for _ in 0..200 {
        if (b - a) <= 1e-14 * b {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = q(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = q(x2)?;
        }
    }
    let (g, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if v < best.1 {
        best = (g, v);
    }
    Ok(best)
}

/// `∫₀ᵀ μ(s) ds` by the trapezoid on `n` subintervals; `μ` must be
/// non-negative at every sample.
pub fn l_mu(mu: &Expression, horizon: f64, n: usize) -> Result<f64, AnalysisError> {
    let grid = Grid::new(horizon, n)?;
    let compiled = mu.compile(&["t"]).map_err(AnalysisError::Mu)?;
    let mut samples = Vec::with_capacity(grid.len());
    for t in grid.nodes() {
        let value = compiled.eval(&[t]).map_err(AnalysisError::Mu)?;
        if value < 0.0 || !value.is_finite() {
            return Err(AnalysisError::NegativeMu { t, value });
        }
        samples.push(value);
    }
    Ok(trapz(&SampledIntegrand::new(grid, samples)?))
}

/// Right side of the data-dependence inequality.
pub fn dependence_bound(
    w0: f64,
    w0_tilde: f64,
    l_mu: f64,
    beta: f64,
    horizon: f64,
    sum_c: f64,
    q: f64,
) -> Result<f64, AnalysisError> {
    if q.is_nan() || q >= 1.0 {
        return Err(AnalysisError::CertificateUnavailable { q });
    }
    if beta.is_nan() || beta <= 1.0 {
        return Err(AnalysisError::InvalidParameter("beta must exceed 1".into()));
    }
    if 1.0 + sum_c == 0.0 {
        return Err(AnalysisError::InvalidParameter("sum of c must differ from -1".into()));
    }
    if l_mu.is_nan() || l_mu < 0.0 {
        return Err(AnalysisError::InvalidParameter("L_mu must be non-negative".into()));
    }
    let c_ratio = (sum_c / (1.0 + sum_c)).abs();
    let datum = (1.0 / (1.0 + sum_c)).abs() * (w0 - w0_tilde).abs();
    let forcing = beta * l_mu / (beta - 1.0) * (1.0 + (1.0 + c_ratio) * horizon);
    Ok((datum + forcing) / (1.0 - q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub bound: f64,
    pub measured: f64,
    pub l_mu: f64,
    pub q: f64,
    pub delta_w0: f64,
    pub gamma: f64,
    pub holds: bool,
}

/// Solves `p` and its perturbation `p_tilde` on the same grid and compares
/// the measured weighted distance against the bound. `q` comes from `p`.
pub fn compare(
    p: &Problem,
    p_tilde: &Problem,
    mu: &Expression,
    opts: &SolveOptions,
) -> Result<DependenceReport, AnalysisError> {
    if !p.same_structure(p_tilde) {
        return Err(AnalysisError::StructuralMismatch);
    }
    opts.check()?;
    let q = contraction_constant(&Constants::from_problem(p), opts.gamma)?.q;
    if q >= 1.0 {
        return Err(AnalysisError::CertificateUnavailable { q });
    }
    let l_mu = l_mu(mu, p.horizon, opts.n)?;
    let bound = dependence_bound(p.w0, p_tilde.w0, l_mu, p.beta, p.horizon, p.sum_c(), q)?;
    let w_star = solve(p, opts)?;
    let v_star = solve(p_tilde, opts)?;
    let measured = bielecki_distance(&w_star.solution, &v_star.solution, opts.gamma)?;
    Ok(DependenceReport {
        bound,
        measured,
        l_mu,
        q,
        delta_w0: (p.w0 - p_tilde.w0).abs(),
        gamma: opts.gamma,
        holds: measured <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `Δw'_i − Φ_i` with second-order differences of the derivative channel.
    pub ode_residual: Vec<f64>,
    pub ode_residual_max: f64,
    /// `w(0) + Σ c_k w(t_k) − w₀`.
    pub nonlocal_residual: f64,
    /// `w'(T) − β w'(0)`.
    pub boundary_residual: f64,
}

impl ResidualReport {
    pub fn within(&self, ode_tol: f64, side_tol: f64) -> bool {
        self.ode_residual_max <= ode_tol
            && self.nonlocal_residual.abs() <= side_tol
            && self.boundary_residual.abs() <= side_tol
    }
}

/// Second-order first derivative of equally spaced samples: centered inside,
/// three-point one-sided stencils at both ends.
pub fn differentiate(samples: &[f64], h: f64) -> Vec<f64> {
    let n = samples.len() - 1;
    (0..=n)
        .map(|i| match i {
            0 => (-3.0 * samples[0] + 4.0 * samples[1] - samples[2]) / (2.0 * h),
            i if i == n => (3.0 * samples[n] - 4.0 * samples[n - 1] + samples[n - 2]) / (2.0 * h),
            i => (samples[i + 1] - samples[i - 1]) / (2.0 * h),
        })
        .collect()
}

pub fn residuals(p: &Problem, f: &GridFunction) -> Result<ResidualReport, AnalysisError> {
    let grid = f.grid();
    let rhs = evaluate_rhs(p, f)?;
    let second = differentiate(f.derivatives(), grid.step());
    let ode_residual: Vec<f64> = second.iter().zip(&rhs).map(|(d, r)| d - r).collect();
    let ode_residual_max = ode_residual.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let mut nonlocal = f.values()[0];
    for (c, tk) in p.coefficients.iter().zip(&p.points) {
        nonlocal += c * f.eval_at(*tk)?.0;
    }
    let wp = f.derivatives();
    Ok(ResidualReport {
        ode_residual,
        ode_residual_max,
        nonlocal_residual: nonlocal - p.w0,
        boundary_residual: wp[grid.intervals()] - p.beta * wp[0],
    })
}

/// Samples a claimed closed-form solution given as expressions in `t`.
pub fn sample_claimed(
    solution: &Expression,
    derivative: &Expression,
    grid: Grid,
) -> Result<GridFunction, AnalysisError> {
    let (w, wp) = (solution.compile(&["t"]), derivative.compile(&["t"]));
    let (w, wp) = (w.map_err(AnalysisError::Mu)?, wp.map_err(AnalysisError::Mu)?);
    let mut ws = Vec::with_capacity(grid.len());
    let mut wps = Vec::with_capacity(grid.len());
    for t in grid.nodes() {
        ws.push(w.eval(&[t]).map_err(AnalysisError::Mu)?);
        wps.push(wp.eval(&[t]).map_err(AnalysisError::Mu)?);
    }
    Ok(GridFunction::new(grid, ws, wps)?)
}
