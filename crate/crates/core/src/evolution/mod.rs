//! Evolution operators of `x' = A(t) x`: adaptive explicit integration of the
//! matrix ODE `T' = A(t) T` and cached per-step transition matrices with
//! exact-composition access on a time grid.
//!
//! The grid stores the per-step increments `S_i = T(t_{i+1}, t_i)` rather than
//! a dense pair table: memory stays O(N), the cocycle law holds exactly by
//! construction for forward products, and reverse-time transitions come from
//! linear solves against the forward factors.

mod cache;
mod rk;

pub use cache::{load_grid, save_grid, CacheError};
pub use rk::rk45;

use crate::sysdef::{SysdefError, SystemDef};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("tolerance {0} outside the supported range (1e-13, 1e-2)")]
    BadTolerance(f64),
    #[error("time grid must start at t >= 0, got {0}")]
    NegativeTime(f64),
    #[error("node times must be strictly increasing (node {0})")]
    NotIncreasing(usize),
    #[error("grid needs at least one step")]
    EmptyGrid,
    #[error("step size {h:.3e} does not tile [{a}, {b}] uniformly")]
    BadStep { h: f64, a: f64, b: f64 },
    #[error("integration interval is reversed: {a} > {b}")]
    ReversedInterval { a: f64, b: f64 },
    #[error("step size underflow at t = {t:.6} (remaining error {err:.3e})")]
    StepUnderflow { t: f64, err: f64 },
    #[error("coefficient evaluation at t = {t:.6}: {source}")]
    Coefficient { t: f64, source: SysdefError },
    #[error("non-finite values in the state at t = {t:.6}")]
    NonFinite { t: f64 },
    #[error("state norm exceeded the blow-up cap {cap:.3e} at t = {t:.6}")]
    BlowUp { t: f64, cap: f64 },
    #[error("reverse transition is singular to tolerance (condition estimate {cond:.3e})")]
    Singular { cond: f64 },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

pub(crate) fn check_tol(tol: f64) -> Result<(), EvolutionError> {
    if tol <= 1e-13 || tol >= 1e-2 {
        return Err(EvolutionError::BadTolerance(tol));
    }
    Ok(())
}

/// Largest singular value; the matrix norm used throughout.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().singular_values().max()
}

/// Discretization of a finite window of the half line.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    uniform_h: Option<f64>,
}

impl TimeGrid {
    /// Uniform grid from `t0` to `t_end` with step `h`; `h` must tile the
    /// span up to rounding.
    pub fn uniform(t0: f64, t_end: f64, h: f64) -> Result<TimeGrid, EvolutionError> {
        if t0 < 0.0 {
            return Err(EvolutionError::NegativeTime(t0));
        }
        if t_end <= t0 {
            return Err(EvolutionError::EmptyGrid);
        }
        let span = t_end - t0;
        let steps = (span / h).round() as usize;
        if steps == 0 || (t0 + steps as f64 * h - t_end).abs() > 1e-9 * span.max(1.0) {
            return Err(EvolutionError::BadStep { h, a: t0, b: t_end });
        }
        let times = (0..=steps)
            .map(|k| if k == steps { t_end } else { t0 + k as f64 * h })
            .collect();
        Ok(TimeGrid {
            times,
            uniform_h: Some(h),
        })
    }

    /// Arbitrary strictly increasing node times.
    pub fn from_times(times: Vec<f64>) -> Result<TimeGrid, EvolutionError> {
        if times.len() < 2 {
            return Err(EvolutionError::EmptyGrid);
        }
        if times[0] < 0.0 {
            return Err(EvolutionError::NegativeTime(times[0]));
        }
        for k in 1..times.len() {
            if times[k] <= times[k - 1] {
                return Err(EvolutionError::NotIncreasing(k));
            }
        }
        Ok(TimeGrid {
            times,
            uniform_h: None,
        })
    }

    /// Uniform grid with the step chosen so that `max ||A(t)|| * h <= 0.2`
    /// (sampled), clamped to [1e-3, 0.25]; keeps per-step products
    /// well-conditioned.
    pub fn auto(sys: &SystemDef, t0: f64, t_end: f64) -> Result<TimeGrid, EvolutionError> {
        let mut max_norm: f64 = 0.0;
        let samples = 256;
        for k in 0..=samples {
            let t = t0 + (t_end - t0) * k as f64 / samples as f64;
            let a = sys
                .coefficient_matrix(t)
                .map_err(|source| EvolutionError::Coefficient { t, source })?;
            max_norm = max_norm.max(spectral_norm(&a));
        }
        let raw = if max_norm > 0.0 { 0.2 / max_norm } else { 0.25 };
        let h = raw.clamp(1e-3, 0.25);
        // Round down to an integer number of steps.
        let steps = ((t_end - t0) / h).ceil().max(1.0);
        TimeGrid::uniform(t0, t_end, (t_end - t0) / steps)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn num_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn uniform_step(&self) -> Option<f64> {
        self.uniform_h
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }
}

/// Cached transition matrices of a linear system on a time grid.
///
/// Immutable after build; all accessors take `&self` and the per-step data is
/// safe for concurrent sweeps.
#[derive(Debug)]
pub struct EvolutionGrid {
    grid: TimeGrid,
    dim: usize,
    /// steps[i] = T(t_{i+1}, t_i)
    steps: Vec<DMatrix<f64>>,
    tol: f64,
    max_step_cond: f64,
    step_lu: OnceLock<Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>>,
}

impl Clone for EvolutionGrid {
    fn clone(&self) -> Self {
        EvolutionGrid {
            grid: self.grid.clone(),
            dim: self.dim,
            steps: self.steps.clone(),
            tol: self.tol,
            max_step_cond: self.max_step_cond,
            step_lu: OnceLock::new(),
        }
    }
}

/// Integrate the transition matrix T(b, a) of `sys` with the embedded 4(5)
/// Runge-Kutta pair, local error per step below `tol * (1 + ||T||)`.
pub fn integrate_transition(
    sys: &SystemDef,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<DMatrix<f64>, EvolutionError> {
    let n = sys.dim();
    integrate_transition_with(
        &|t| {
            sys.coefficient_matrix(t)
                .map_err(|source| EvolutionError::Coefficient { t, source })
        },
        n,
        a,
        b,
        tol,
    )
}

/// Same as [`integrate_transition`] for a coefficient closure, which lets
/// variational systems A(t) = Jf(t, path(t)) reuse the machinery.
pub fn integrate_transition_with<F>(
    coeff: &F,
    dim: usize,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<DMatrix<f64>, EvolutionError>
where
    F: Fn(f64) -> Result<DMatrix<f64>, EvolutionError>,
{
    check_tol(tol)?;
    if a < 0.0 {
        return Err(EvolutionError::NegativeTime(a));
    }
    if a > b {
        return Err(EvolutionError::ReversedInterval { a, b });
    }
    let id = DMatrix::identity(dim, dim);
    if a == b {
        return Ok(id);
    }
    let f = |t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>, EvolutionError> {
        Ok(coeff(t)? * y)
    };
    rk::rk45(&f, a, b, id, tol, None)
}

/// Fill all step matrices of `grid` for `sys` (parallel over steps).
pub fn build_grid(
    sys: &SystemDef,
    grid: TimeGrid,
    tol: f64,
) -> Result<EvolutionGrid, EvolutionError> {
    let n = sys.dim();
    build_grid_with(
        &|t| {
            sys.coefficient_matrix(t)
                .map_err(|source| EvolutionError::Coefficient { t, source })
        },
        n,
        grid,
        tol,
    )
}

/// [`build_grid`] for a coefficient closure.
pub fn build_grid_with<F>(
    coeff: &F,
    dim: usize,
    grid: TimeGrid,
    tol: f64,
) -> Result<EvolutionGrid, EvolutionError>
where
    F: Fn(f64) -> Result<DMatrix<f64>, EvolutionError> + Sync,
{
    check_tol(tol)?;
    let times = grid.times();
    let steps: Result<Vec<_>, EvolutionError> = (0..grid.num_steps())
        .into_par_iter()
        .map(|i| integrate_transition_with(coeff, dim, times[i], times[i + 1], tol))
        .collect();
    let steps = steps?;
    let max_step_cond = steps
        .iter()
        .map(step_condition)
        .fold(0.0f64, f64::max);
    Ok(EvolutionGrid {
        grid,
        dim,
        steps,
        tol,
        max_step_cond,
        step_lu: OnceLock::new(),
    })
}

fn step_condition(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 1 {
        return 1.0;
    }
    let sv = s.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

impl EvolutionGrid {
    pub(crate) fn from_parts(
        grid: TimeGrid,
        dim: usize,
        steps: Vec<DMatrix<f64>>,
        tol: f64,
        max_step_cond: f64,
    ) -> EvolutionGrid {
        EvolutionGrid {
            grid,
            dim,
            steps,
            tol,
            max_step_cond,
            step_lu: OnceLock::new(),
        }
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Worst per-step condition number seen during the build.
    pub fn max_step_cond(&self) -> f64 {
        self.max_step_cond
    }

    pub fn step(&self, i: usize) -> &DMatrix<f64> {
        &self.steps[i]
    }

    fn step_factors(&self) -> &Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        self.step_lu
            .get_or_init(|| self.steps.iter().map(|s| s.clone().lu()).collect())
    }

    /// Transition matrix T(t_i, t_j) between grid nodes.
    ///
    /// Forward (`i >= j`) is the exact product of cached steps; reverse is
    /// obtained by linear solves against the forward factors and reports the
    /// condition estimate when the product is singular to tolerance.
    pub fn transition(&self, i: usize, j: usize) -> Result<DMatrix<f64>, EvolutionError> {
        let id = DMatrix::identity(self.dim, self.dim);
        if i == j {
            return Ok(id);
        }
        if i > j {
            let mut acc = self.steps[j].clone();
            for k in (j + 1)..i {
                acc = &self.steps[k] * acc;
            }
            return Ok(acc);
        }
        // i < j: successively undo steps j-1, j-2, ..., i.
        let lus = self.step_factors();
        let mut acc = id;
        for k in (i..j).rev() {
            acc = lus[k].solve(&acc).ok_or_else(|| EvolutionError::Singular {
                cond: step_condition(&self.steps[k]),
            })?;
        }
        if !acc.iter().all(|v| v.is_finite()) {
            let cond: f64 = (i..j).map(|k| step_condition(&self.steps[k])).product();
            return Err(EvolutionError::Singular { cond });
        }
        Ok(acc)
    }

    /// Visit T(t_i, t_j) for fixed source `j` and all `i = j..N`, computed
    /// incrementally (one matrix product per node).
    pub fn scan_forward(&self, j: usize, mut visit: impl FnMut(usize, &DMatrix<f64>)) {
        let mut acc = DMatrix::identity(self.dim, self.dim);
        visit(j, &acc);
        for i in (j + 1)..self.num_nodes() {
            acc = &self.steps[i - 1] * acc;
            visit(i, &acc);
        }
    }

    /// Visit T(t_i, t_j) for fixed source `j` and all `i = j..0`, computed
    /// incrementally by per-step solves.
    pub fn scan_backward(
        &self,
        j: usize,
        mut visit: impl FnMut(usize, &DMatrix<f64>),
    ) -> Result<(), EvolutionError> {
        let lus = self.step_factors();
        let mut acc = DMatrix::identity(self.dim, self.dim);
        visit(j, &acc);
        for i in (0..j).rev() {
            acc = lus[i].solve(&acc).ok_or_else(|| EvolutionError::Singular {
                cond: step_condition(&self.steps[i]),
            })?;
            visit(i, &acc);
        }
        Ok(())
    }

    /// Grid for the coefficient matrix scaled by `e^{-lambda (t - s)}`, i.e.
    /// for the shifted system `x' = [A(t) - lambda I] x`. Pure rescaling of
    /// the cached steps, no re-integration.
    pub fn shifted(&self, lambda: f64) -> EvolutionGrid {
        let times = self.grid.times();
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| s * (-lambda * (times[i + 1] - times[i])).exp())
            .collect();
        EvolutionGrid {
            grid: self.grid.clone(),
            dim: self.dim,
            steps,
            tol: self.tol,
            max_step_cond: self.max_step_cond,
            step_lu: OnceLock::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(name: &str, a: &str) -> SystemDef {
        SystemDef::linear(name, 1, &[vec![a.to_string()]], false, None).unwrap()
    }

    #[test]
    fn zero_coefficient_gives_identity() {
        let sys = scalar("zero", "0");
        let t = integrate_transition(&sys, 0.0, 7.0, 1e-10).unwrap();
        assert_eq!(t[(0, 0)], 1.0);
    }

    #[test]
    fn autonomous_diagonal_matches_exponential() {
        let sys = SystemDef::linear(
            "diag",
            2,
            &[
                vec!["-1".to_string(), "0".to_string()],
                vec!["0".to_string(), "-2".to_string()],
            ],
            false,
            None,
        )
        .unwrap();
        let t = integrate_transition(&sys, 0.0, 1.0, 1e-10).unwrap();
        assert_relative_eq!(t[(0, 0)], (-1.0f64).exp(), max_relative = 1e-8);
        assert_relative_eq!(t[(1, 1)], (-2.0f64).exp(), max_relative = 1e-8);
        assert!(t[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn scalar_antiderivative_oracle() {
        // a(t) = -1 - t sin t, antiderivative F(t) = -t + t cos t - sin t
        let sys = scalar("bv-ish", "-1 - t*sin(t)");
        let t = integrate_transition(&sys, 0.0, 2.0, 1e-10).unwrap();
        let expect = (-2.0 + 2.0 * 2.0f64.cos() - 2.0f64.sin()).exp();
        assert_relative_eq!(t[(0, 0)], expect, max_relative = 1e-8);
    }

    #[test]
    fn grid_build_and_cocycle() {
        let sys = scalar("unit", "-1");
        let grid = TimeGrid::uniform(0.0, 10.0, 0.1).unwrap();
        let eg = build_grid(&sys, grid, 1e-10).unwrap();
        assert_eq!(eg.num_steps(), 100);
        for s in 0..eg.num_steps() {
            assert_relative_eq!(eg.step(s)[(0, 0)], (-0.1f64).exp(), max_relative = 1e-9);
        }
        // reverse direction over one unit of time
        let rev = eg.transition(0, 10).unwrap();
        assert_relative_eq!(rev[(0, 0)], 1.0f64.exp(), max_relative = 1e-8);
        // cocycle residual on a few triples
        let t_ik = eg.transition(80, 20).unwrap();
        let t_ij = eg.transition(80, 50).unwrap();
        let t_jk = eg.transition(50, 20).unwrap();
        let resid = spectral_norm(&(&t_ij * &t_jk - &t_ik));
        assert!(resid <= 1e-10 * (1.0 + spectral_norm(&t_ik)));
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(matches!(
            TimeGrid::uniform(0.0, 0.0, 0.1),
            Err(EvolutionError::EmptyGrid)
        ));
        assert!(TimeGrid::from_times(vec![0.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::from_times(vec![-1.0, 0.0]).is_err());
    }

    #[test]
    fn tolerance_range_is_enforced() {
        let sys = scalar("unit", "-1");
        assert!(matches!(
            integrate_transition(&sys, 0.0, 1.0, 1e-14),
            Err(EvolutionError::BadTolerance(_))
        ));
        assert!(matches!(
            integrate_transition(&sys, 0.0, 1.0, 0.5),
            Err(EvolutionError::BadTolerance(_))
        ));
    }

    #[test]
    fn coefficient_domain_error_is_reported() {
        let sys = scalar("bad", "log(t - 1)");
        let err = integrate_transition(&sys, 0.0, 2.0, 1e-9).unwrap_err();
        assert!(matches!(err, EvolutionError::Coefficient { .. }));
    }

    #[test]
    fn shifted_grid_rescales_steps() {
        let sys = scalar("unit", "-1");
        let eg = build_grid(&sys, TimeGrid::uniform(0.0, 5.0, 0.1).unwrap(), 1e-10).unwrap();
        // lambda = -1 cancels the decay exactly
        let shifted = eg.shifted(-1.0);
        for i in 0..shifted.num_steps() {
            assert_relative_eq!(shifted.step(i)[(0, 0)], 1.0, max_relative = 1e-9);
        }
        // lambda = 0 is the identity transformation
        let same = eg.shifted(0.0);
        for i in 0..eg.num_steps() {
            assert_eq!(same.step(i), eg.step(i));
        }
    }

    #[test]
    fn auto_grid_respects_norm_rule() {
        let sys = scalar("fast", "-40");
        let g = TimeGrid::auto(&sys, 0.0, 2.0).unwrap();
        let h = g.uniform_step().unwrap();
        assert!(h <= 0.2 / 40.0 + 1e-12);
        assert!(g.num_steps() >= 400);
    }
}
