//! Composite trapezoidal kernels: plain, cumulative, `(t − s)`-weighted and
//! the nested Volterra integral `I(t) = ∫₀ᵗ G(t, σ, w(σ), w'(σ)) dσ`.
//!
//! All sums run in ascending node order so results are bit-reproducible,
//! including when target nodes of [`volterra_inner`] are spread over threads.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::gridfn::{Grid, GridError, GridFunction, Location};

/// Variable order for kernel expressions `G`.
pub const KERNEL_VARS: [&str; 4] = ["t", "s", "w", "wp"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("node index {index} out of range 0..={last}")]
    IndexOutOfRange { index: usize, last: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("kernel evaluation failed at target node {node}, sample {sample}: {source}")]
    Kernel { node: usize, sample: usize, source: ExprError },
}

/// Integrand samples `f(t_i)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledIntegrand {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledIntegrand {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<SampledIntegrand, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(SampledIntegrand { grid, values })
    }

    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64) -> Result<SampledIntegrand, GridError> {
        SampledIntegrand::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `h·(f₀/2 + f₁ + … + f_{N−1} + f_N/2)`.
pub fn trapz(f: &SampledIntegrand) -> f64 {
    trapz_prefix(f.grid.step(), &f.values)
}

/// Trapezoid over the first `values.len()` equally spaced samples.
fn trapz_prefix(h: f64, values: &[f64]) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => {
            let mut acc = 0.5 * first;
            for v in inner {
                acc += v;
            }
            acc += 0.5 * last;
            h * acc
        }
    }
}

/// Running integrals `∫₀^{t_i} f`, with `out[0] = 0`.
pub fn cumulative_trapz(f: &SampledIntegrand) -> Vec<f64> {
    let h = f.grid.step();
    let mut out = Vec::with_capacity(f.values.len());
    let mut acc = 0.0;
    out.push(acc);
    for pair in f.values.windows(2) {
        acc += h * (pair[0] + pair[1]) * 0.5;
        out.push(acc);
    }
    out
}

/// `∫₀^{t_j} (t_j − s) f(s) ds` by the trapezoid on nodes `0..=j`.
pub fn weighted_tail(f: &SampledIntegrand, j: usize) -> Result<f64, QuadError> {
    let last = f.grid.intervals();
    if j > last {
        return Err(QuadError::IndexOutOfRange { index: j, last });
    }
    Ok(weighted_prefix(&f.grid, &f.values, f.grid.node(j), j))
}

/// Trapezoid of `(t − s_i)·f_i` over nodes `0..=m`.
fn weighted_prefix(grid: &Grid, values: &[f64], t: f64, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mut acc = 0.5 * t * values[0];
    for (i, v) in values.iter().enumerate().take(m).skip(1) {
        acc += (t - grid.node(i)) * v;
    }
    acc += 0.5 * (t - grid.node(m)) * values[m];
    grid.step() * acc
}

/// `∫₀ᵗ (t − s) f(s) ds` for any `t ∈ [0, T]`: whole cells below `t` plus a
/// trapezoidal partial cell. The kernel vanishes at `s = t`, so the
/// interpolated endpoint sample carries zero weight.
pub fn weighted_tail_at(f: &SampledIntegrand, t: f64) -> Result<f64, QuadError> {
    match f.grid.locate(t)? {
        Location::Node(j) => weighted_tail(f, j),
        Location::Cell(m) => {
            let whole = weighted_prefix(&f.grid, &f.values, t, m);
            let dt = t - f.grid.node(m);
            Ok(whole + 0.5 * dt * (dt * f.values[m]))
        }
    }
}

/// `I(t_i) = ∫₀^{t_i} G(t_i, σ, w(σ), w'(σ)) dσ` at every node, by the
/// trapezoid over σ-nodes `0..=i`. Costs O(N²) kernel evaluations.
pub fn volterra_inner(g: &Expression, f: &GridFunction) -> Result<Vec<f64>, QuadError> {
    let compiled = g.compile(&KERNEL_VARS).map_err(|source| QuadError::Kernel { node: 0, sample: 0, source })?;
    let grid = *f.grid();
    let h = grid.step();
    let (w, wp) = (f.values(), f.derivatives());
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return Ok(0.0);
            }
            let ti = grid.node(i);
            let mut acc = 0.0;
            for m in 0..=i {
                let g_m = compiled.eval(&[ti, grid.node(m), w[m], wp[m]]).map_err(|source| QuadError::Kernel {
                    node: i,
                    sample: m,
                    source,
                })?;
                acc += if m == 0 || m == i { 0.5 * g_m } else { g_m };
            }
            Ok(h * acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use proptest::prelude::*;

    type Exact = fn(f64) -> f64;

    fn unit(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn trapz_examples() {
        assert!(close(trapz(&SampledIntegrand::sample(unit(10), |s| s).unwrap()), 0.5, 1e-15));
        let sq = trapz(&SampledIntegrand::sample(unit(10), |s| s * s).unwrap());
        // 0.1·(Σ_{i=1}^{9} (0.1 i)² + 0.5) = 0.1·(2.85 + 0.5)
        assert!(close(sq, 0.335, 1e-15), "{sq}");
        assert_eq!(trapz(&SampledIntegrand::sample(unit(10), |_| 0.0).unwrap()), 0.0);
    }

    #[test]
    fn cumulative_examples() {
        let ones = SampledIntegrand::sample(unit(4), |_| 1.0).unwrap();
        assert_eq!(cumulative_trapz(&ones), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let lin = SampledIntegrand::sample(unit(4), |s| s).unwrap();
        assert_eq!(cumulative_trapz(&lin), vec![0.0, 0.03125, 0.125, 0.28125, 0.5]);
        let sq = SampledIntegrand::sample(unit(37), |s| (2.0 * s).cos()).unwrap();
        assert!(close(*cumulative_trapz(&sq).last().unwrap(), trapz(&sq), 1e-15));
    }

    #[test]
    fn weighted_tail_examples() {
        let ones = SampledIntegrand::sample(unit(10), |_| 1.0).unwrap();
        assert!(close(weighted_tail(&ones, 10).unwrap(), 0.5, 1e-15));
        assert_eq!(weighted_tail(&ones, 0).unwrap(), 0.0);
        assert!(matches!(weighted_tail(&ones, 11), Err(QuadError::IndexOutOfRange { index: 11, last: 10 })));

        let exact = 1.0 / 6.0;
        let coarse = weighted_tail(&SampledIntegrand::sample(unit(10), |s| s).unwrap(), 10).unwrap();
        let fine = weighted_tail(&SampledIntegrand::sample(unit(100), |s| s).unwrap(), 100).unwrap();
        assert!((coarse - exact).abs() <= 2e-3, "{coarse}");
        assert!((fine - exact).abs() <= 2e-5, "{fine}");
    }

    #[test]
    fn weighted_tail_at_examples() {
        let f = SampledIntegrand::sample(unit(8), |s| (s * 3.0).exp()).unwrap();
        for j in 0..=8 {
            assert_eq!(weighted_tail_at(&f, f.grid().node(j)).unwrap(), weighted_tail(&f, j).unwrap());
        }
        let ones = SampledIntegrand::sample(unit(8), |_| 1.0).unwrap();
        assert!(close(weighted_tail_at(&ones, 0.3).unwrap(), 0.045, 1e-16));
        let zeros = SampledIntegrand::sample(unit(8), |_| 0.0).unwrap();
        assert_eq!(weighted_tail_at(&zeros, 0.71).unwrap(), 0.0);
        assert!(matches!(weighted_tail_at(&ones, 1.5), Err(QuadError::Grid(GridError::OutOfRange { .. }))));
    }

    #[test]
    fn volterra_inner_examples() {
        let g = unit(16);
        let f = GridFunction::sample(g, |t| t.sin(), |t| t.cos()).unwrap();
        let cases: [(&str, Exact); 3] = [("1", |t| t), ("s", |t| t * t / 2.0), ("t*s", |t| t * t * t / 2.0)];
        for (text, exact) in cases {
            let out = volterra_inner(&parse(text, &KERNEL_VARS).unwrap(), &f).unwrap();
            assert_eq!(out[0], 0.0);
            for (i, v) in out.iter().enumerate() {
                assert!(close(*v, exact(g.node(i)), 1e-14), "{text} at {i}: {v}");
            }
        }
    }

    #[test]
    fn volterra_inner_reports_failing_node() {
        let f = GridFunction::sample(unit(4), |t| t - 0.5, |_| 1.0).unwrap();
        let err = volterra_inner(&parse("1/w", &KERNEL_VARS).unwrap(), &f).unwrap_err();
        assert!(matches!(err, QuadError::Kernel { sample: 2, .. }), "{err:?}");
    }

    #[test]
    fn time_independent_kernel_matches_cumulative() {
        let g = unit(50);
        let f = GridFunction::sample(g, |t| t.exp(), |t| t.exp()).unwrap();
        let kernel = parse("s*w + sin(wp)", &KERNEL_VARS).unwrap();
        let nested = volterra_inner(&kernel, &f).unwrap();
        let integrand = SampledIntegrand::sample(g, |s| s * s.exp() + s.exp().sin()).unwrap();
        let cum = cumulative_trapz(&integrand);
        for (a, b) in nested.iter().zip(&cum) {
            assert!(close(*a, *b, 1e-13), "{a} vs {b}");
        }
    }

    #[test]
    fn second_order_ratio_against_closed_forms() {
        let cases: [(Exact, f64, bool); 3] = [
            (|s| s * s, 1.0 / 3.0, false),
            (|s| s.exp(), std::f64::consts::E - 1.0, false),
            // ∫₀¹ (1 − s) s ds via the weighted kernel
            (|s| s, 1.0 / 6.0, true),
        ];
        for (f, exact, weighted) in cases {
            let err = |n: usize| {
                let si = SampledIntegrand::sample(unit(n), f).unwrap();
                let approx = if weighted { weighted_tail(&si, n).unwrap() } else { trapz(&si) };
                (approx - exact).abs()
            };
            for n in [10, 20, 40, 80] {
                let ratio = err(n) / err(2 * n);
                assert!((3.6..=4.4).contains(&ratio), "n={n} ratio={ratio}");
            }
        }
    }

    proptest! {
        #[test]
        fn cumulative_is_additive(vals in prop::collection::vec(-5.0f64..5.0, 3..40), a in 0usize..40, b in 0usize..40) {
            let n = vals.len() - 1;
            let g = Grid::new(2.0, n).unwrap();
            let f = SampledIntegrand::new(g, vals.clone()).unwrap();
            let cum = cumulative_trapz(&f);
            let (j, i) = (a.min(b) % (n + 1), a.max(b) % (n + 1));
            let (j, i) = (j.min(i), j.max(i));
            let direct = trapz_prefix(g.step(), &vals[j..=i]);
            prop_assert!((cum[i] - cum[j] - direct).abs() <= 1e-12);
        }

        #[test]
        fn off_grid_tail_is_continuous(t in 0.0f64..1.0) {
            let f = SampledIntegrand::sample(unit(20), |s| 1.0 + s * s).unwrap();
            let exact = t * t / 2.0 + t.powi(4) / 12.0;
            // trapezoid error h²/12 · t · max|((t − s) f(s))''| with the second derivative at most 6
            let h = 1.0 / 20.0;
            prop_assert!((weighted_tail_at(&f, t).unwrap() - exact).abs() <= h * h / 2.0);
        }
    }
}
