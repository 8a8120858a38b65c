//! Bordered Newton for the scalar constrained problem.
//!
//! Unknowns are the interior nodal values plus the multiplier `lambda`;
//! equations are the lumped finite-element rows divided by their lumped
//! weights, `(S u)_j / l_j = lambda u_j + f(u_j)`, together with the
//! measured-mass constraint `sum w_j u_j^2 = a^2`. The Jacobian is
//! tridiagonal bordered by one column (`-u`) and one row (`2 w u`), solved
//! through the banded LU plus a rank-one Schur complement.

use std::sync::Arc;

use crate::error::SolverError;
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::linalg::{solve_bordered, BandMatrix};
use crate::nonlinearity::Nonlinearity;
use crate::Result;

/// Outcome bookkeeping for a Newton run.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Scaled sup-norm residuals per iteration (including the initial one).
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the scaled sup-norm residual.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            tolerance: 1e-11,
            max_halvings: 12,
        }
    }
}

struct Workspace<'a> {
    grid: &'a Arc<RadialGrid>,
    nl: &'a Nonlinearity,
    mass_target: f64,
}

impl Workspace<'_> {
    /// Residual vector (interior rows then the mass row) together with its
    /// scaled sup norm. Each PDE row is divided by its lumped weight so all
    /// rows share the `1/h^2` stiffness scale; without this equilibration the
    /// radial volume factors spread the rows over many orders of magnitude
    /// and the LU forward error caps Newton at a linear tail. The norm
    /// divides the PDE rows by `|lambda| sup + max |f|` and the mass row by
    /// its target.
    fn residual(&self, u: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let grid = self.grid;
        let n = grid.len();
        let su = grid.stiffness_apply(u);
        let lumped = grid.lumped_weights();
        let mut f = vec![0.0; n];
        let mut fmax: f64 = 0.0;
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n - 1 {
            let fu = self.nl.f(u[j]);
            fmax = fmax.max(fu.abs());
            f[j] = su[j] / lumped[j] - (lambda * u[j] + fu);
        }
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        f[n - 1] = grid.integrate(&sq) - self.mass_target;
        let scale = (lambda.abs() * umax + fmax).max(1e-300);
        let mut worst: f64 = 0.0;
        for j in 0..n - 1 {
            worst = worst.max(f[j].abs() / scale);
        }
        let norm = worst.max(f[n - 1].abs() / self.mass_target);
        (f, norm)
    }
}

/// Polishes `(u, lambda)` to a solution of the discrete constrained problem.
/// The Dirichlet value at `r_max` stays pinned to zero.
pub fn polish(
    seed: &RadialField,
    lambda0: f64,
    nl: &Nonlinearity,
    mass_target: f64,
    opts: &NewtonOptions,
) -> Result<(RadialField, f64, NewtonReport)> {
    let grid = Arc::clone(seed.grid());
    let n = grid.len();
    let ws = Workspace {
        grid: &grid,
        nl,
        mass_target,
    };
    let mut u = seed.values().to_vec();
    u[n - 1] = 0.0;
    let mut lambda = lambda0;

    let (mut f, norm0) = ws.residual(&u, lambda);
    let mut history = vec![norm0];
    let mut converged = false;
    let mut stalls = 0usize;
    let mut iterations = 0usize;
    // The measured-mass row accumulates O(n eps) summation round-off, so the
    // attainable scaled residual grows with the grid; floor the tolerance.
    let tolerance = opts.tolerance.max(8.0 * f64::EPSILON * n as f64);

    for _ in 0..opts.max_iterations {
        if history.last().copied().unwrap() < tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        // Assemble the bordered Jacobian on the interior unknowns.
        let m = n - 1;
        let h2 = grid.spacing() * grid.spacing();
        let cv = grid.cell_volumes();
        let lumped = grid.lumped_weights();
        let w = grid.weights();
        let mut band = BandMatrix::zeros(m, 1, 1);
        for j in 0..m {
            // Row j of the equilibrated stiffness; the volume ratios keep
            // every entry on the uniform 1/h^2 scale, at the cost of symmetry.
            let s_diag = if j == 0 {
                cv[0] / h2
            } else {
                (cv[j - 1] + cv[j]) / h2
            } / lumped[j];
            band.set(j, j, s_diag - (lambda + nl.f_prime(u[j])));
            if j >= 1 {
                band.set(j, j - 1, -cv[j - 1] / h2 / lumped[j]);
            }
            if j + 1 < m {
                band.set(j, j + 1, -cv[j] / h2 / lumped[j]);
            }
        }
        let column: Vec<f64> = (0..m).map(|j| -u[j]).collect();
        let row: Vec<f64> = (0..m).map(|j| 2.0 * w[j] * u[j]).collect();
        let rhs: Vec<f64> = (0..m).map(|j| -f[j]).collect();
        let lu = band.factor()?;
        let (du, dl) = solve_bordered(
            &lu,
            &[column],
            &[row],
            &[vec![0.0]],
            &rhs,
            &[-f[n - 1]],
        )?;

        // Damped update on the scaled residual norm.
        let current = history.last().copied().unwrap();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut u_try = u.clone();
            for j in 0..m {
                u_try[j] += t * du[j];
            }
            let lambda_try = lambda + t * dl[0];
            let (f_try, norm_try) = ws.residual(&u_try, lambda_try);
            if norm_try < (1.0 - 1e-4 * t) * current || norm_try < tolerance {
                u = u_try;
                lambda = lambda_try;
                f = f_try;
                history.push(norm_try);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalls += 1;
            if stalls >= 3 {
                return Err(SolverError::Diverged(format!(
                    "scalar Newton stalled at scaled residual {current:.3e}"
                )));
            }
            history.push(current);
        } else {
            stalls = 0;
        }
    }
    if !converged && history.last().copied().unwrap() < tolerance {
        converged = true;
    }
    if !converged {
        return Err(SolverError::Diverged(format!(
            "scalar Newton did not reach {:.1e} within {} iterations (last residual {:.3e})",
            tolerance,
            opts.max_iterations,
            history.last().unwrap()
        )));
    }
    let field = RadialField::new(grid, u)?;
    Ok((
        field,
        lambda,
        NewtonReport {
            iterations,
            residual_history: history,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::shoot::{separatrix_profile, ShootConfig};
    use approx::assert_relative_eq;

    #[test]
    fn polishes_resampled_soliton_and_recovers_multiplier() {
        let nl = Nonlinearity::cubic(3, 1.0).unwrap();
        let q = separatrix_profile(-1.0, &nl, 3, 0, &ShootConfig::default()).unwrap();
        let grid = Arc::new(RadialGrid::new(3, q.decay_radius(1e-10), 3001).unwrap());
        let seed = RadialField::from_fn(Arc::clone(&grid), |r| q.eval(r));
        let mass = seed.mass();
        // Perturb the multiplier; Newton pulls it back to -1 up to the
        // discretization's quadratic truncation.
        let (u, lambda, report) =
            polish(&seed, -1.08, &nl, mass, &NewtonOptions::default()).unwrap();
        assert!(report.converged);
        assert!(
            report.iterations <= 10,
            "took {} iterations",
            report.iterations
        );
        assert_relative_eq!(lambda, -1.0, max_relative = 2e-3);
        assert_relative_eq!(u.mass(), mass, max_relative = 1e-12);
        // The discrete system itself is solved far more tightly.
        let h = &report.residual_history;
        assert!(h[h.len() - 1] < 1e-11);
    }

    #[test]
    fn multiplier_error_shrinks_quadratically_with_the_grid() {
        let nl = Nonlinearity::cubic(3, 1.0).unwrap();
        let q = separatrix_profile(-1.0, &nl, 3, 0, &ShootConfig::default()).unwrap();
        let r_max = q.decay_radius(1e-10);
        let mut errs = Vec::new();
        for n in [1501usize, 3001] {
            let grid = Arc::new(RadialGrid::new(3, r_max, n).unwrap());
            let seed = RadialField::from_fn(Arc::clone(&grid), |r| q.eval(r));
            let mass = seed.mass();
            let (_, lambda, _) =
                polish(&seed, -1.0, &nl, mass, &NewtonOptions::default()).unwrap();
            errs.push((lambda + 1.0).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            ratio > 3.0 && ratio < 5.5,
            "refinement ratio {ratio} (errors {errs:?})"
        );
    }
}
