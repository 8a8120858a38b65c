//! Uniform radial grids with quadrature tuned for smooth decaying profiles.
//!
//! All integrals over `R^N` of radial integrands `g(|x|)` reduce to
//! `omega_N * \int_0^{R} g(r) r^{N-1} dr`. Two quadratures coexist:
//!
//! - the *measurement* weights ([`RadialGrid::weights`]) apply composite
//!   Simpson to the full integrand `g(r) r^{N-1}`. For smooth even profiles
//!   that decay below round-off before `r_max` the composite error terms
//!   telescope, so measured moments of resolved fields are accurate far
//!   beyond the nominal fourth order;
//! - the *lumped* weights ([`RadialGrid::lumped_weights`]) integrate the
//!   piecewise-linear hat functions exactly against `r^{N-1}`. They are
//!   strictly positive (including at the origin) and are what the implicit
//!   solvers use for diagonal mass terms.
//!
//! The number of nodes is kept odd so Simpson panels tile the domain.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::Result;

/// Uniform grid on `[0, r_max]` for radial functions in `R^N`, Dirichlet at `r_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialGrid {
    dim: u32,
    r_max: f64,
    n_points: usize,
    h: f64,
    omega: f64,
    nodes: Vec<f64>,
    /// Simpson weights for the full integrand `omega r^{N-1} dr`; `weights[0] = 0`.
    weights: Vec<f64>,
    /// Exact hat-function weights against `omega r^{N-1} dr`; all positive.
    lumped: Vec<f64>,
    /// Exact cell volumes `omega (r_{j+1}^N - r_j^N)/N`, one per interval.
    cell_volumes: Vec<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.r_max == other.r_max && self.n_points == other.n_points
    }
}

/// Surface area of the unit sphere in `R^N`: `2 pi^{N/2} / Gamma(N/2)`.
pub fn unit_sphere_area(dim: u32) -> f64 {
    let n = dim as f64;
    let pi = std::f64::consts::PI;
    if dim % 2 == 0 {
        // Gamma(k) = (k-1)! for N = 2k.
        let k = (dim / 2) as usize;
        let mut gamma = 1.0;
        for i in 1..k {
            gamma *= i as f64;
        }
        2.0 * pi.powf(n / 2.0) / gamma
    } else {
        // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!) for N = 2k + 1.
        let k = ((dim - 1) / 2) as usize;
        let mut num = 1.0;
        for i in 1..=2 * k {
            num *= i as f64;
        }
        let mut den = 1.0;
        for i in 1..=k {
            den *= i as f64;
        }
        let gamma = num * pi.sqrt() / (4.0_f64.powi(k as i32) * den);
        2.0 * pi.powf(n / 2.0) / gamma
    }
}

impl RadialGrid {
    /// Builds a grid; `n_points` is rounded up to the next odd value so that
    /// the Simpson panels close.
    pub fn new(dim: u32, r_max: f64, n_points: usize) -> Result<Self> {
        if dim < 2 {
            return Err(SolverError::InvalidGrid(format!(
                "dimension must be >= 2, got {dim}"
            )));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(SolverError::InvalidGrid(format!(
                "r_max must be positive and finite, got {r_max}"
            )));
        }
        if n_points < 5 {
            return Err(SolverError::InvalidGrid(format!(
                "need at least 5 points, got {n_points}"
            )));
        }
        let n_points = if n_points % 2 == 0 {
            n_points + 1
        } else {
            n_points
        };
        let h = r_max / (n_points - 1) as f64;
        let omega = unit_sphere_area(dim);
        let nodes: Vec<f64> = (0..n_points).map(|j| j as f64 * h).collect();

        let nf = dim as f64;
        let pow_n = |r: f64| r.powi(dim as i32);

        // Composite Simpson on g(r) r^{N-1}: coefficients 1,4,2,...,4,1 (h/3).
        let mut weights = vec![0.0; n_points];
        for (j, w) in weights.iter_mut().enumerate() {
            let c = if j == 0 || j == n_points - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            *w = c * h / 3.0 * omega * nodes[j].powi(dim as i32 - 1);
        }

        // Exact integrals of the hat functions against omega r^{N-1}.
        let mut lumped = vec![0.0; n_points];
        let m_up = |a: f64, b: f64| (pow_n(b) * b - pow_n(a) * a) / (nf + 1.0);
        let m_lo = |a: f64, b: f64| (pow_n(b) - pow_n(a)) / nf;
        for j in 0..n_points {
            let mut w = 0.0;
            if j + 1 < n_points {
                // right half: (r_{j+1} - r)/h on [r_j, r_{j+1}]
                let (a, b) = (nodes[j], nodes[j + 1]);
                w += (b * m_lo(a, b) - m_up(a, b)) / h;
            }
            if j > 0 {
                // left half: (r - r_{j-1})/h on [r_{j-1}, r_j]
                let (a, b) = (nodes[j - 1], nodes[j]);
                w += (m_up(a, b) - a * m_lo(a, b)) / h;
            }
            lumped[j] = omega * w;
        }

        let cell_volumes: Vec<f64> = (0..n_points - 1)
            .map(|j| omega * (pow_n(nodes[j + 1]) - pow_n(nodes[j])) / nf)
            .collect();

        Ok(Self {
            dim,
            r_max,
            n_points,
            h,
            omega,
            nodes,
            weights,
            lumped,
            cell_volumes,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Surface area of the unit sphere in the grid's dimension.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lumped_weights(&self) -> &[f64] {
        &self.lumped
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// Volume of the ball of radius `r_max`.
    pub fn ball_volume(&self) -> f64 {
        self.omega * self.r_max.powi(self.dim as i32) / self.dim as f64
    }

    /// Integrates nodal samples of `g(r)` against `omega r^{N-1} dr`.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.n_points);
        self.weights
            .iter()
            .zip(samples)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Same integral with the lumped (hat-exact) weights.
    pub fn integrate_lumped(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.n_points);
        self.lumped.iter().zip(samples).map(|(w, v)| w * v).sum()
    }

    /// Applies the piecewise-linear stiffness operator: row `j` of the exact
    /// Dirichlet form `\int grad(I_h u) . grad(I_h phi_j)` with hat functions
    /// `phi_j`. The Dirichlet boundary row is the caller's responsibility.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.n_points);
        let n = self.n_points;
        let h2 = self.h * self.h;
        let cv = &self.cell_volumes;
        let mut out = vec![0.0; n];
        out[0] = cv[0] * (u[0] - u[1]) / h2;
        for j in 1..n - 1 {
            out[j] = (cv[j - 1] * (u[j] - u[j - 1]) - cv[j] * (u[j + 1] - u[j])) / h2;
        }
        out[n - 1] = cv[n - 2] * (u[n - 1] - u[n - 2]) / h2;
        out
    }

    /// Kinetic energy of the piecewise-linear interpolant (the quadratic form
    /// of [`Self::stiffness_apply`]); exact for the interpolant.
    pub fn fem_kinetic(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n_points);
        let h2 = self.h * self.h;
        self.cell_volumes
            .iter()
            .enumerate()
            .map(|(j, cv)| {
                let d = u[j + 1] - u[j];
                cv * d * d / h2
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas_match_closed_forms() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(unit_sphere_area(2), 2.0 * pi, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * pi, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * pi * pi, max_relative = 1e-14);
        assert_relative_eq!(
            unit_sphere_area(5),
            8.0 * pi * pi / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn weights_sum_to_ball_volume() {
        for dim in [2u32, 3, 4] {
            let g = RadialGrid::new(dim, 2.5, 401).unwrap();
            let total: f64 = g.weights().iter().sum();
            // Simpson integrates r^{N-1} exactly for N <= 4.
            assert_relative_eq!(total, g.ball_volume(), max_relative = 1e-12);
            let lumped_total: f64 = g.lumped_weights().iter().sum();
            assert_relative_eq!(lumped_total, g.ball_volume(), max_relative = 1e-12);
        }
        // N = 5: quartic integrand, fourth-order error only.
        let g = RadialGrid::new(5, 2.5, 401).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert_relative_eq!(total, g.ball_volume(), max_relative = 1e-9);
    }

    #[test]
    fn linear_polynomials_integrate_exactly() {
        let g = RadialGrid::new(3, 1.7, 201).unwrap();
        let r_max = g.r_max();
        for (c0, c1) in [(1.0, 0.0), (0.3, -2.0), (-1.5, 0.7)] {
            let samples: Vec<f64> = g.nodes().iter().map(|&r| c0 + c1 * r).collect();
            let exact = g.omega() * (c0 * r_max.powi(3) / 3.0 + c1 * r_max.powi(4) / 4.0);
            assert_relative_eq!(g.integrate(&samples), exact, max_relative = 1e-13);
            assert_relative_eq!(g.integrate_lumped(&samples), exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn weight_signs() {
        let g = RadialGrid::new(3, 3.0, 301).unwrap();
        assert_eq!(g.weights()[0], 0.0);
        assert!(g.weights()[1..].iter().all(|&w| w > 0.0));
        assert!(g.lumped_weights().iter().all(|&w| w > 0.0));
        assert!(g.cell_volumes().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn even_point_counts_round_up() {
        let g = RadialGrid::new(3, 1.0, 100).unwrap();
        assert_eq!(g.len(), 101);
        assert_relative_eq!(g.spacing(), 0.01, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RadialGrid::new(1, 1.0, 101).is_err());
        assert!(RadialGrid::new(3, -1.0, 101).is_err());
        assert!(RadialGrid::new(3, 1.0, 3).is_err());
    }
}
