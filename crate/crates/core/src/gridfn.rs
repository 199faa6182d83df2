//! Discrete elements of C¹([0, T]): paired value and derivative samples on a
//! uniform grid, cubic Hermite evaluation between nodes, and the weighted
//! (Bielecki) sup-norm `max_t (|w(t)| + |w'(t)|) e^{-γt}`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs at least {min} subintervals, got {got}")]
    TooFewIntervals { min: usize, got: usize },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("t = {t} lies outside [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
    #[error("norm weight gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at node {0}")]
    NonFinite(usize),
}

/// Uniform grid `t_i = i·h`, `i = 0..=n`, on `[0, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    end: f64,
    n: usize,
}

impl Grid {
    pub fn new(end: f64, n: usize) -> Result<Grid, GridError> {
        if !(end.is_finite() && end > 0.0) {
            return Err(GridError::BadHorizon(end));
        }
        if n < 2 {
            return Err(GridError::TooFewIntervals { min: 2, got: n });
        }
        Ok(Grid { end, n })
    }

    /// Horizon `T`.
    pub fn end(&self) -> f64 {
        self.end
    }

    /// Number of subintervals.
    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.end / self.n as f64
    }

    /// The last node is `T` itself, not `n·h`.
    pub fn node(&self, i: usize) -> f64 {
        if i >= self.n {
            self.end
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|i| self.node(i))
    }

    /// Locates `t` on the grid: `Ok(Node(i))` when `t` coincides with node
    /// `i` up to rounding, otherwise `Ok(Cell(i))` with `t_i < t < t_{i+1}`.
    pub fn locate(&self, t: f64) -> Result<Location, GridError> {
        if !(0.0..=self.end).contains(&t) {
            return Err(GridError::OutOfRange { t, end: self.end });
        }
        let h = self.step();
        let snap = 1e-12 * self.end;
        let nearest = ((t / h).round() as usize).min(self.n);
        if (t - self.node(nearest)).abs() <= snap {
            return Ok(Location::Node(nearest));
        }
        let i = ((t / h).floor() as usize).min(self.n - 1);
        Ok(Location::Cell(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Node(usize),
    Cell(usize),
}

/// Value and derivative samples of a C¹ function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    w: Vec<f64>,
    wp: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, w: Vec<f64>, wp: Vec<f64>) -> Result<GridFunction, GridError> {
        for arr in [&w, &wp] {
            if arr.len() != grid.len() {
                return Err(GridError::LengthMismatch { expected: grid.len(), got: arr.len() });
            }
        }
        if let Some(i) = (0..grid.len()).find(|&i| !w[i].is_finite() || !wp[i].is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(GridFunction { grid, w, wp })
    }

    /// Samples `w` and its derivative `wp` at every node.
    pub fn sample(grid: Grid, w: impl Fn(f64) -> f64, wp: impl Fn(f64) -> f64) -> Result<GridFunction, GridError> {
        let ws = grid.nodes().map(&w).collect();
        let wps = grid.nodes().map(&wp).collect();
        GridFunction::new(grid, ws, wps)
    }

    pub fn constant(grid: Grid, value: f64) -> GridFunction {
        GridFunction { grid, w: vec![value; grid.len()], wp: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.wp
    }

    pub fn into_parts(self) -> (Grid, Vec<f64>, Vec<f64>) {
        (self.grid, self.w, self.wp)
    }

    /// Cubic Hermite value and derivative at `t`. Nodes return the stored
    /// samples unchanged.
    pub fn eval_at(&self, t: f64) -> Result<(f64, f64), GridError> {
        match self.grid.locate(t)? {
            Location::Node(i) => Ok((self.w[i], self.wp[i])),
            Location::Cell(i) => {
                let h = self.grid.step();
                let s = (t - self.grid.node(i)) / h;
                Ok(hermite(self.w[i], self.w[i + 1], self.wp[i], self.wp[i + 1], h, s))
            }
        }
    }

    pub fn bielecki_norm(&self, gamma: f64) -> Result<f64, GridError> {
        check_gamma(gamma)?;
        Ok(weighted_max(&self.grid, gamma, |i| self.w[i].abs() + self.wp[i].abs()))
    }

    pub fn bielecki_distance(&self, other: &GridFunction, gamma: f64) -> Result<f64, GridError> {
        bielecki_distance(self, other, gamma)
    }

    /// Sup-norm of the value channel.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(self.w.iter().zip(&other.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

fn check_gamma(gamma: f64) -> Result<(), GridError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(GridError::BadGamma(gamma))
    }
}

fn weighted_max(grid: &Grid, gamma: f64, mag: impl Fn(usize) -> f64) -> f64 {
    (0..grid.len()).map(|i| mag(i) * (-gamma * grid.node(i)).exp()).fold(0.0, f64::max)
}

/// `‖f − g‖` in the weighted norm; both must share a grid.
pub fn bielecki_distance(f: &GridFunction, g: &GridFunction, gamma: f64) -> Result<f64, GridError> {
    check_gamma(gamma)?;
    if f.grid != g.grid {
        return Err(GridError::GridMismatch);
    }
    Ok(weighted_max(&f.grid, gamma, |i| (f.w[i] - g.w[i]).abs() + (f.wp[i] - g.wp[i]).abs()))
}

/// Cubic Hermite interpolant on one cell of width `h` at local coordinate
/// `s ∈ [0, 1]`, returning value and derivative.
pub fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;

    let dh00 = 6.0 * s2 - 6.0 * s;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = -dh00;
    let dh11 = 3.0 * s2 - 2.0 * s;
    let deriv = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
    (value, deriv)
}
