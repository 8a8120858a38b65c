//! Two-component constrained states: a bordered Newton iteration for the
//! coupled cubic system, mountain-pass path deformation on the natural
//! constraint set, and continuation in the inter-species coupling.
//!
//! States are pairs `(u1, u2)` on one shared radial grid with both masses
//! pinned, solving
//! `-lap u_i = lambda_i u_i + mu_i u_i^3 + beta u_{3-i}^2 u_i`
//! with the multipliers recovered as constraint unknowns. Accepted solutions
//! carry measured certificates: masses at round-off, the dilation-stationarity
//! identity after projection, negative multipliers, and a continuum residual
//! from high-order stencils.

pub mod mountain_pass;
pub mod newton;
pub mod path;

use std::sync::Arc;

use crate::error::SolverError;
use crate::field::RadialField;
use crate::functionals::{CouplingParams, StatePair};
use crate::grid::RadialGrid;
use crate::scalar::{canonical_soliton, ScalarOptions};
use crate::Result;

pub use mountain_pass::{
    constrained_gradient, j_covector, mountain_pass, tangent_project, ConstrainedGradient,
    MountainPassReport, SaddleSearch,
};
pub use newton::{polish_pair, PairNewtonReport};

/// Tolerances and grid knobs for the two-component solvers.
#[derive(Debug, Clone, Copy)]
pub struct SystemOptions {
    /// Grid sizing and Newton knobs shared with the scalar stack.
    pub scalar: ScalarOptions,
    /// Relative mass defect allowed on accepted solutions.
    pub mass_tol: f64,
    /// Continuum residual bound enforced on accepted solutions.
    pub res_tol: f64,
    /// Constraint quality demanded of projected path nodes.
    pub proj_tol: f64,
    /// Post-projection bound on `|G|/K` demanded of accepted solutions.
    pub pohozaev_cap: f64,
    /// Optional pinned domain `(r_max, n)`; when absent, domains are sized
    /// from the decay and stiffness scales of the states they must carry.
    pub grid: Option<(f64, usize)>,
    /// Node-count ceiling for self-sized path domains, which must also
    /// resolve the concentrated states produced by fiber-projecting the
    /// annular middle of the segregated path.
    pub path_n_max: usize,
    /// Relative constrained-gradient norm below which the highest path node
    /// is handed to the Newton polish.
    pub mp_tol: f64,
    /// Deformation sweep budget before the search reports stagnation.
    pub mp_max_sweeps: usize,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self {
            scalar: ScalarOptions::default(),
            mass_tol: 1e-9,
            res_tol: 1e-3,
            proj_tol: 1e-10,
            pohozaev_cap: 1e-8,
            grid: None,
            path_n_max: 800_001,
            mp_tol: 1e-3,
            mp_max_sweeps: 400,
        }
    }
}

/// An accepted two-component constrained state with its measurements.
#[derive(Debug, Clone)]
pub struct SystemSolution {
    pub pair: StatePair,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Energy `J` at the solution.
    pub energy: f64,
    pub kinetic: f64,
    /// `|G|/K` after the final manifold projection.
    pub constraint_residual: f64,
    /// `|G|/K` before projection; tracks the measurement truncation.
    pub raw_constraint_residual: f64,
    /// Largest (over the two components) relative weighted-L2 residual of the
    /// continuum system, measured with fourth-order stencils.
    pub el_residual: f64,
    /// `\int u1^2 u2^2`, the segregation observable.
    pub overlap: f64,
    pub newton: PairNewtonReport,
    /// Total fiber shift applied by the final projection.
    pub projection_shift: f64,
}

impl SystemSolution {
    pub fn params(&self) -> &CouplingParams {
        self.pair.params()
    }

    /// Largest relative excursion below zero across both components
    /// (zero for componentwise nonnegative states).
    pub fn negativity(&self) -> f64 {
        let comp = |u: &RadialField| (-u.min_value() / u.sup_norm()).max(0.0);
        comp(self.pair.u1()).max(comp(self.pair.u2()))
    }
}

/// Multiplier estimates from the weak form of each equation tested against
/// its own component: `lambda_i = (K_i - mu_i \int u_i^4 - beta ov) / a_i^2`.
pub fn multiplier_estimates(pair: &StatePair) -> (f64, f64) {
    let p = pair.params();
    let ov = pair.overlap();
    let l1 = (pair.u1().grad_norm_sq() - p.mu1 * pair.u1().quartic() - p.beta * ov)
        / (p.a1 * p.a1);
    let l2 = (pair.u2().grad_norm_sq() - p.mu2 * pair.u2().quartic() - p.beta * ov)
        / (p.a2 * p.a2);
    (l1, l2)
}

/// Relative weighted-L2 residual of the coupled continuum system, measured
/// per component with fourth-order stencils; returns the larger of the two.
pub fn continuum_el_residual_pair(pair: &StatePair, lambda1: f64, lambda2: f64) -> f64 {
    let p = pair.params();
    let comp = |u: &RadialField, v: &RadialField, lambda: f64, mu: f64| -> f64 {
        let lap = u.apply_laplacian_hi();
        let uv = u.values();
        let vv = v.values();
        let n = uv.len();
        let mut res_sq = vec![0.0; n];
        let mut rhs_sq = vec![0.0; n];
        for j in 0..n - 1 {
            let rhs = lambda * uv[j] + mu * uv[j].powi(3) + p.beta * vv[j] * vv[j] * uv[j];
            let r = lap.values()[j] - rhs;
            res_sq[j] = r * r;
            rhs_sq[j] = rhs * rhs;
        }
        let num = u.grid().integrate(&res_sq).max(0.0).sqrt();
        let den = u.grid().integrate(&rhs_sq).max(0.0).sqrt();
        num / den.max(f64::MIN_POSITIVE)
    };
    let r1 = comp(pair.u1(), pair.u2(), lambda1, p.mu1);
    let r2 = comp(pair.u2(), pair.u1(), lambda2, p.mu2);
    r1.max(r2)
}

/// Shared epilogue for polished pairs: measure the pre-projection constraint
/// defect, project onto the natural set, enforce the mass, multiplier-sign,
/// and continuum-residual invariants, and collect measurements.
pub fn finish_pair(
    pair: StatePair,
    lambda1: f64,
    lambda2: f64,
    report: PairNewtonReport,
    opts: &SystemOptions,
) -> Result<SystemSolution> {
    let raw = pair.pohozaev().abs() / pair.kinetic();
    let proj = pair.project()?;
    let pair = proj.pair;
    let kinetic = pair.kinetic();
    let constraint_residual = pair.pohozaev().abs() / kinetic;
    if constraint_residual > opts.pohozaev_cap {
        return Err(SolverError::Diverged(format!(
            "projected constraint residual {constraint_residual:.3e} above cap {:.1e}",
            opts.pohozaev_cap
        )));
    }
    let p = *pair.params();
    let (m1, m2) = pair.masses();
    for (mass, target) in [(m1, p.a1 * p.a1), (m2, p.a2 * p.a2)] {
        let defect = (mass / target - 1.0).abs();
        if defect > opts.mass_tol {
            return Err(SolverError::Diverged(format!(
                "relative mass defect {defect:.3e} above {:.1e}",
                opts.mass_tol
            )));
        }
    }
    for (component, lambda) in [(1usize, lambda1), (2usize, lambda2)] {
        if !(lambda < 0.0) {
            return Err(SolverError::LiouvilleSuspect {
                component,
                lambda,
                beta: p.beta,
            });
        }
    }
    let el_residual = continuum_el_residual_pair(&pair, lambda1, lambda2);
    if el_residual > opts.res_tol {
        return Err(SolverError::Diverged(format!(
            "continuum residual {el_residual:.3e} above {:.1e}",
            opts.res_tol
        )));
    }
    let energy = pair.energy();
    let overlap = pair.overlap();
    Ok(SystemSolution {
        pair,
        lambda1,
        lambda2,
        energy,
        kinetic,
        constraint_residual,
        raw_constraint_residual: raw,
        el_residual,
        overlap,
        newton: report,
        projection_shift: proj.total_shift,
    })
}

/// Newton polish of a seed pair followed by the acceptance epilogue.
pub fn polish_to_solution(
    seed: &StatePair,
    lambda0: (f64, f64),
    opts: &SystemOptions,
) -> Result<SystemSolution> {
    let (pair, l1, l2, report) = polish_pair(seed, lambda0, &opts.scalar.newton)?;
    finish_pair(pair, l1, l2, report, opts)
}

/// Decoupled product of rescaled canonical solitons on one shared grid sized
/// for the stiffer component: the exact solution at `beta = 0` and a warm
/// start for mild couplings.
pub fn decoupled_seed_pair(params: &CouplingParams, opts: &ScalarOptions) -> Result<StatePair> {
    let q = canonical_soliton();
    let c1 = q.mass / (params.mu1 * params.a1 * params.a1);
    let c2 = q.mass / (params.mu2 * params.a2 * params.a2);
    let r_core = q.decay_radius(opts.tail_cut);
    let r_max = (r_core / c1).max(r_core / c2);
    let stiffness = q.stiffness * c1.max(c2).powi(2);
    let n = ((r_max * stiffness.sqrt() / opts.theta).ceil() as usize).clamp(opts.n_min, opts.n_max);
    let grid = Arc::new(RadialGrid::new(3, r_max, n)?);
    let u1 = RadialField::from_fn(Arc::clone(&grid), |r| c1 / params.mu1.sqrt() * q.eval(c1 * r))
        .renormalized_to_mass(params.a1 * params.a1)?;
    let u2 = RadialField::from_fn(Arc::clone(&grid), |r| c2 / params.mu2.sqrt() * q.eval(c2 * r))
        .renormalized_to_mass(params.a2 * params.a2)?;
    StatePair::new(u1, u2, *params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::scaling_oracle;

    #[test]
    fn positive_multiplier_is_rejected_as_liouville_suspect() {
        // Distinct masses keep the pair strictly inside the dilation cone even
        // at beta = -1 (equal components would sit exactly on its boundary).
        let params = CouplingParams::new(1.0, 1.0, -1.0, 1.0, 1.3).unwrap();
        let pair = decoupled_seed_pair(&params, &ScalarOptions::default()).unwrap();
        let pair = pair.project().unwrap().pair;
        let report = PairNewtonReport {
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
        };
        let err = finish_pair(pair, -1.0, 0.25, report, &SystemOptions::default()).unwrap_err();
        match err {
            SolverError::LiouvilleSuspect {
                component, lambda, ..
            } => {
                assert_eq!(component, 2);
                assert_eq!(lambda, 0.25);
            }
            other => panic!("expected a Liouville rejection, got {other}"),
        }
    }

    #[test]
    fn decoupled_seed_pair_estimates_match_the_scaling_oracles() {
        let params = CouplingParams::new(1.0, 2.0, 0.0, 1.0, 1.3).unwrap();
        let pair = decoupled_seed_pair(&params, &ScalarOptions::default()).unwrap();
        let (l1, l2) = multiplier_estimates(&pair);
        let o1 = scaling_oracle(1.0, 1.0, 0).unwrap();
        let o2 = scaling_oracle(1.3, 2.0, 0).unwrap();
        assert!((l1 / o1.lambda - 1.0).abs() < 1e-4, "l1 = {l1}");
        assert!((l2 / o2.lambda - 1.0).abs() < 1e-4, "l2 = {l2}");
        let el = continuum_el_residual_pair(&pair, l1, l2);
        assert!(el < 1e-5, "seed residual {el}");
    }
}
