//! Bounded least-squares refinement.
//!
//! Levenberg-Marquardt on a numerically differentiated Jacobian (central
//! differences, one-sided at active bounds), with every candidate projected
//! onto the feasible box. Steps are accepted only when they strictly reduce
//! the sum of squares, so the SSE trace is non-increasing and the iterate
//! never leaves the bounds. When the damped normal equations cannot be
//! solved the step falls back to a scaled negative gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    pub max_iterations: usize,
    /// Converged when an accepted step is shorter than
    /// `step_tol * (1 + |x|)`.
    pub step_tol: f64,
    /// Converged when the max-norm of the SSE gradient falls below this.
    pub gradient_tol: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tol: 1e-10,
            gradient_tol: 1e-10,
        }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !self.step_tol.is_finite()
            || self.step_tol <= 0.0
            || !self.gradient_tol.is_finite()
            || self.gradient_tol <= 0.0
        {
            return Err(Error::Config("local tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub x: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    /// True when a step- or gradient-tolerance criterion fired (as opposed
    /// to running out of iterations or stalling).
    pub converged: bool,
}

const RELATIVE_DIFF_STEP: f64 = 1e-6;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_GROW: f64 = 4.0;
const LAMBDA_SHRINK: f64 = 3.0;
const LAMBDA_MAX: f64 = 1e14;

/// Minimizes `sum(r_k^2)` starting from `start`, never leaving `bounds`.
///
/// `residuals` writes the residual vector for a parameter vector into its
/// output slice. Returns the refined point; `outcome.sse <= sse(start)`
/// always holds.
#[allow(clippy::needless_range_loop)]
pub fn refine<F>(
    residuals: F,
    n_residuals: usize,
    start: &[f64],
    bounds: &[(f64, f64)],
    cfg: &LocalConfig,
) -> LocalOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = start.len();
    let m = n_residuals;
    let mut x: Vec<f64> = start
        .iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
        .collect();

    let sse_of = |r: &[f64]| -> f64 {
        let mut acc = 0.0;
        for &v in r {
            acc += v * v;
        }
        if acc.is_finite() {
            acc
        } else {
            f64::INFINITY
        }
    };

    let mut r = vec![0.0; m];
    residuals(&x, &mut r);
    let mut sse = sse_of(&r);

    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    let mut jac = vec![vec![0.0; dim]; m];
    let mut r_hi = vec![0.0; m];
    let mut r_lo = vec![0.0; m];
    let mut r_cand = vec![0.0; m];

    'outer: while iterations < cfg.max_iterations {
        iterations += 1;

        // Jacobian column by column; steps shortened at the box edge so the
        // residual function is never evaluated outside the bounds.
        for j in 0..dim {
            let (lo, hi) = bounds[j];
            let h = RELATIVE_DIFF_STEP * x[j].abs().max(RELATIVE_DIFF_STEP);
            let h_up = h.min(hi - x[j]);
            let h_down = h.min(x[j] - lo);
            let span = h_up + h_down;
            if span <= 0.0 {
                for k in 0..m {
                    jac[k][j] = 0.0;
                }
                continue;
            }
            let mut probe = x.clone();
            probe[j] = x[j] + h_up;
            residuals(&probe, &mut r_hi);
            probe[j] = x[j] - h_down;
            residuals(&probe, &mut r_lo);
            for k in 0..m {
                let d = (r_hi[k] - r_lo[k]) / span;
                jac[k][j] = if d.is_finite() { d } else { 0.0 };
            }
        }

        // Gradient of SSE/2 and the Gauss-Newton normal matrix.
        let mut grad = vec![0.0; dim];
        let mut jtj = vec![vec![0.0; dim]; dim];
        for k in 0..m {
            for j in 0..dim {
                grad[j] += jac[k][j] * r[k];
                for l in j..dim {
                    jtj[j][l] += jac[k][j] * jac[k][l];
                }
            }
        }
        for j in 0..dim {
            for l in 0..j {
                jtj[j][l] = jtj[l][j];
            }
        }

        let grad_norm = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_norm < cfg.gradient_tol {
            converged = true;
            break;
        }

        let max_diag = (0..dim).fold(0.0f64, |acc, j| acc.max(jtj[j][j]));

        // Inflate the damping until a step improves the SSE.
        loop {
            let mut a = jtj.clone();
            for j in 0..dim {
                // floor keeps the system solvable when a column vanishes
                let d = jtj[j][j].max(1e-12 * max_diag).max(1e-300);
                a[j][j] += lambda * d;
            }
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = solve(a, rhs).unwrap_or_else(|| {
                // singular even with damping: scaled steepest descent
                let scale = 1.0 / (lambda * max_diag.max(1.0));
                grad.iter().map(|g| -g * scale).collect()
            });

            let cand: Vec<f64> = x
                .iter()
                .zip(&step)
                .zip(bounds)
                .map(|((&xj, &sj), &(lo, hi))| (xj + sj).clamp(lo, hi))
                .collect();
            let step_norm: f64 = cand
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();

            residuals(&cand, &mut r_cand);
            let sse_cand = sse_of(&r_cand);

            if sse_cand < sse {
                x = cand;
                std::mem::swap(&mut r, &mut r_cand);
                sse = sse_cand;
                lambda = (lambda / LAMBDA_SHRINK).max(1e-12);
                let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if step_norm < cfg.step_tol * (1.0 + x_norm) {
                    converged = true;
                    break 'outer;
                }
                break;
            }

            lambda *= LAMBDA_GROW;
            if lambda > LAMBDA_MAX {
                // No direction improves: either at a minimum (flat gradient
                // handled above) or pinned by the bounds.
                break 'outer;
            }
        }
    }

    LocalOutcome {
        x,
        sse,
        iterations,
        converged,
    }
}

/// Gaussian elimination with partial pivoting; `None` when the system is
/// numerically singular.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // residuals of a quadratic bowl with minimum at (1, -2)
    fn bowl(x: &[f64], out: &mut [f64]) {
        out[0] = x[0] - 1.0;
        out[1] = x[1] + 2.0;
        out[2] = 0.5 * (x[0] - 1.0) * (x[1] + 2.0);
    }

    #[test]
    fn converges_to_interior_minimum() {
        let bounds = [(-10.0, 10.0), (-10.0, 10.0)];
        let out = refine(bowl, 3, &[5.0, 5.0], &bounds, &LocalConfig::default());
        assert!(out.converged);
        assert!(out.sse < 1e-18, "sse {}", out.sse);
        assert!((out.x[0] - 1.0).abs() < 1e-8);
        assert!((out.x[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn start_at_minimum_stays_put() {
        let bounds = [(-10.0, 10.0), (-10.0, 10.0)];
        let out = refine(bowl, 3, &[1.0, -2.0], &bounds, &LocalConfig::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-9);
        assert!((out.x[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn never_increases_sse_and_respects_bounds() {
        // minimum (1, -2) lies outside this box
        let bounds = [(2.0, 4.0), (0.0, 3.0)];
        let start = [3.5, 2.5];
        let mut r = vec![0.0; 3];
        bowl(&start, &mut r);
        let start_sse: f64 = r.iter().map(|v| v * v).sum();

        let out = refine(bowl, 3, &start, &bounds, &LocalConfig::default());
        assert!(out.sse <= start_sse);
        assert!(out.x[0] >= 2.0 && out.x[0] <= 4.0);
        assert!(out.x[1] >= 0.0 && out.x[1] <= 3.0);
        // best point in the box is its corner nearest the minimum
        assert!((out.x[0] - 2.0).abs() < 1e-6);
        assert!((out.x[1] - 0.0).abs() < 1e-6);
    }

    #[test]
    fn flat_residuals_terminate_on_gradient() {
        let bounds = [(-1.0, 1.0)];
        let out = refine(
            |_, out| out[0] = 3.0,
            1,
            &[0.25],
            &bounds,
            &LocalConfig::default(),
        );
        assert!(out.converged);
        assert_eq!(out.x[0], 0.25);
        assert_eq!(out.sse, 9.0);
    }

    #[test]
    fn solve_rejects_singular_systems() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(a, vec![1.0, 2.0]).is_none());
    }
}
