//! Uniformly sampled paths and the finite-difference stencils used on them.
//!
//! Derivatives are second-order central differences in the interior and
//! second-order one-sided stencils at the two endpoints; quadrature is the
//! trapezoid rule. The matched orders keep refinement studies predictable.

use crate::error::{Error, Result};
use crate::hamiltonian::ExtendedPhasePoint;

/// Fewest samples a path may have (`N ≥ 4` intervals).
pub const MIN_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid spacing {dt} must be positive")));
        }
        if len < MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!("path needs at least {MIN_SAMPLES} samples, got {len}")));
        }
        Ok(TimeGrid { t0, dt, len })
    }

    /// `len` samples spanning `[t0, t1]`.
    pub fn spanning(t0: f64, t1: f64, len: usize) -> Result<Self> {
        Self::new(t0, (t1 - t0) / (len.max(2) - 1) as f64, len)
    }

    /// Accepts sample times that are uniform to within 1e-12 relative.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!("path needs at least {MIN_SAMPLES} samples, got {}", times.len())));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.abs().max(w[1].abs()) {
                return Err(Error::InvalidParameter(format!("non-uniform spacing at sample {k}")));
            }
        }
        Self::new(times[0], dt, times.len())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.time(k)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len - 1)
    }

    /// Trapezoid weight of sample `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.len {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(k, v)| self.weight(k) * v).sum()
    }

    /// Samples whose derivative stencils read sample `k`.
    pub fn stencil_support(&self, k: usize) -> std::ops::RangeInclusive<usize> {
        let last = self.len - 1;
        let lo = if k <= 3 { 0 } else { k - 1 };
        let hi = if k + 3 >= last { last } else { k + 1 };
        lo..=hi
    }
}

/// First derivative of uniformly sampled `x` at sample `k`.
pub fn derivative_at(x: impl Fn(usize) -> f64, len: usize, k: usize, dt: f64) -> f64 {
    let last = len - 1;
    if k == 0 {
        (-3.0 * x(0) + 4.0 * x(1) - x(2)) / (2.0 * dt)
    } else if k == last {
        (3.0 * x(last) - 4.0 * x(last - 1) + x(last - 2)) / (2.0 * dt)
    } else {
        (x(k + 1) - x(k - 1)) / (2.0 * dt)
    }
}

/// Second derivative of uniformly sampled `x` at sample `k`.
pub fn second_derivative_at(x: impl Fn(usize) -> f64, len: usize, k: usize, dt: f64) -> f64 {
    let last = len - 1;
    let dt2 = dt * dt;
    if k == 0 {
        (2.0 * x(0) - 5.0 * x(1) + 4.0 * x(2) - x(3)) / dt2
    } else if k == last {
        (2.0 * x(last) - 5.0 * x(last - 1) + 4.0 * x(last - 2) - x(last - 3)) / dt2
    } else {
        (x(k + 1) - 2.0 * x(k) + x(k - 1)) / dt2
    }
}

pub fn derivative(x: &[f64], dt: f64) -> Vec<f64> {
    (0..x.len()).map(|k| derivative_at(|j| x[j], x.len(), k, dt)).collect()
}

pub fn second_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    (0..x.len()).map(|k| second_derivative_at(|j| x[j], x.len(), k, dt)).collect()
}

/// `C²` bump on `[a, b]`: `(4 s (1 - s))³` with `s = (t - a)/(b - a)`,
/// peak 1 at the midpoint, zero value, slope and curvature at both ends.
pub fn smooth_bump(t: f64, a: f64, b: f64) -> f64 {
    if t <= a || t >= b {
        return 0.0;
    }
    let s = (t - a) / (b - a);
    (4.0 * s * (1.0 - s)).powi(3)
}

pub fn bump_profile(grid: &TimeGrid, a: f64, b: f64) -> Vec<f64> {
    grid.times().into_iter().map(|t| smooth_bump(t, a, b)).collect()
}

/// A sampled configuration-space path `q(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigPath {
    pub grid: TimeGrid,
    pub q: Vec<Vec<f64>>,
}

impl ConfigPath {
    pub fn new(grid: TimeGrid, q: Vec<Vec<f64>>) -> Result<Self> {
        if q.len() != grid.len() {
            return Err(Error::Dimension(format!("{} samples for a grid of {}", q.len(), grid.len())));
        }
        let n = q.first().map_or(0, Vec::len);
        if q.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension("configuration samples differ in length".into()));
        }
        Ok(ConfigPath { grid, q })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        Self::new(grid, grid.times().into_iter().map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.q[0].len()
    }

    pub fn velocity(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| derivative_at(|j| self.q[j][i], self.grid.len(), k, self.grid.dt())).collect()
    }

    pub fn acceleration(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| second_derivative_at(|j| self.q[j][i], self.grid.len(), k, self.grid.dt())).collect()
    }
}

/// A sampled path in extended phase space together with `μ_e(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePath {
    pub grid: TimeGrid,
    pub points: Vec<ExtendedPhasePoint<f64>>,
    pub mu_e: Vec<f64>,
}

impl PhasePath {
    pub fn new(grid: TimeGrid, points: Vec<ExtendedPhasePoint<f64>>, mu_e: Vec<f64>) -> Result<Self> {
        if points.len() != grid.len() || mu_e.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} points and {} multiplier samples for a grid of {}",
                points.len(),
                mu_e.len(),
                grid.len()
            )));
        }
        let n = points[0].dim();
        if points.iter().any(|p| p.dim() != n || !p.is_consistent()) {
            return Err(Error::Dimension("phase points differ in dimension".into()));
        }
        Ok(PhasePath { grid, points, mu_e })
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Time derivative of the coordinate selected by `get` at sample `k`.
    pub fn derivative_at(&self, k: usize, get: impl Fn(&ExtendedPhasePoint<f64>) -> f64) -> f64 {
        derivative_at(|j| get(&self.points[j]), self.len(), k, self.grid.dt())
    }

    pub fn q_dot(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.derivative_at(k, |z| z.q[i])).collect()
    }

    pub fn v_dot(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.derivative_at(k, |z| z.v[i])).collect()
    }

    pub fn e_dot(&self, k: usize) -> f64 {
        self.derivative_at(k, |z| z.e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_are_exact_on_quadratics() {
        let grid = TimeGrid::new(0.0, 0.1, 9).unwrap();
        let x: Vec<f64> = grid.times().iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        let d = derivative(&x, grid.dt());
        let dd = second_derivative(&x, grid.dt());
        for (k, t) in grid.times().iter().enumerate() {
            assert!((d[k] - (6.0 * t - 1.0)).abs() < 1e-12);
            assert!((dd[k] - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stencils_are_second_order() {
        let err = |len: usize| {
            let grid = TimeGrid::spanning(0.0, 1.0, len).unwrap();
            let x: Vec<f64> = grid.times().iter().map(|t| t.sin()).collect();
            let d = derivative(&x, grid.dt());
            let dd = second_derivative(&x, grid.dt());
            grid.times().iter().enumerate().map(|(k, t)| (d[k] - t.cos()).abs().max((dd[k] + t.sin()).abs())).fold(0.0, f64::max)
        };
        let ratio = err(51) / err(101);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let grid = TimeGrid::spanning(1.0, 3.0, 11).unwrap();
        let y: Vec<f64> = grid.times().iter().map(|t| 2.0 * t + 1.0).collect();
        assert!((grid.integrate(&y) - 10.0).abs() < 1e-13);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 0.1, 4).is_err());
        assert!(TimeGrid::new(0.0, -0.1, 10).is_err());
        assert!(TimeGrid::from_times(&[0.0, 0.1, 0.2, 0.3, 0.4]).is_ok());
        assert!(TimeGrid::from_times(&[0.0, 0.1, 0.25, 0.3, 0.4]).is_err());
    }

    #[test]
    fn bump_is_flat_at_the_ends() {
        let (a, b) = (1.0, 2.0);
        assert_eq!(smooth_bump(a, a, b), 0.0);
        assert_eq!(smooth_bump(1.5, a, b), 1.0);
        let h = 1e-4;
        let slope = (smooth_bump(a + h, a, b) - smooth_bump(a, a, b)) / h;
        assert!(slope.abs() < 1e-6);
    }

    #[test]
    fn stencil_support_covers_every_reader() {
        let grid = TimeGrid::new(0.0, 1.0, 12).unwrap();
        for k in 0..grid.len() {
            let support = grid.stencil_support(k);
            for j in 0..grid.len() {
                let reads_k = match j {
                    0 => k <= 3,
                    j if j == grid.len() - 1 => k + 4 >= grid.len(),
                    j => j.abs_diff(k) <= 1,
                };
                if reads_k {
                    assert!(support.contains(&j), "sample {j} reads {k}");
                }
            }
        }
    }
}
