//! Solver and analysis toolkit for second-order Volterra integrodifferential
//! equations with a nonlocal multi-point condition and a derivative-ratio
//! boundary condition:
//!
//! ```text
//! w''(t) = F(t, w(t), w'(t), ∫₀ᵗ G(t, s, w(s), w'(s)) ds),   t ∈ [0, T]
//! w(0) + Σ c_k w(t_k) = w₀,     w'(T) = β w'(0)
//! ```
//!
//! The problem is recast as a fixed point of an integral operator on C¹ and
//! solved by Picard iteration in a weighted sup-norm. [`analysis`] evaluates
//! the contraction constant that certifies uniqueness, the bound on how far
//! the solution moves under perturbed data, and residuals of candidate
//! solutions.

pub mod analysis;
pub mod cli;
pub mod expr;
pub mod gridfn;
pub mod picard;
pub mod problem;
pub mod quadrature;

pub use analysis::{
    compare, contraction_constant, dependence_bound, l_mu, optimize_gamma, residuals, Constants, ContractionReport,
    DependenceReport, ResidualReport,
};
pub use expr::{parse, ExprError, Expression};
pub use gridfn::{bielecki_distance, Grid, GridFunction};
pub use picard::{apply_operator, evaluate_rhs, initial_guess, solve, SolveError, SolveOptions, SolveResult};
pub use problem::{builtin_example, load_problem, serialize, BuiltinId, Problem};
