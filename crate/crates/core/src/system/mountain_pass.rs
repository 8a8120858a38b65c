//! Saddle search over the segregated two-leg path: a damped string
//! deformation on the natural constraint set followed by a Newton polish of
//! the highest node.
//!
//! Every interior node takes backtracked steps along the negative gradient of
//! `J` projected onto the tangent space of the constraint set (both mass
//! spheres and the dilation-stationarity surface). Gradients are represented
//! in a shifted `H^1` metric whose shift tracks the node's multiplier
//! estimates, so step sizes are set by the physical curvature of the
//! landscape rather than by the grid spacing. After each sweep the nodes are
//! re-spread along the polyline with an energy weight that clusters them near
//! the running maximum; this keeps the discrete path connected while its
//! ceiling descends, and the ceiling node converges to the saddle.
//!
//! The polished level must agree with the final discrete ceiling to within a
//! fixed margin; otherwise the search re-runs on a denser path before
//! reporting the polished critical point with the check marked failed.

use std::sync::Arc;

use crate::error::SolverError;
use crate::field::RadialField;
use crate::functionals::{CouplingParams, StatePair};
use crate::grid::RadialGrid;
use crate::linalg::{solve_dense_small, solve_tridiagonal};
use crate::scalar::canonical_soliton;
use crate::system::path::PathOnP;
use crate::system::{multiplier_estimates, polish_to_solution, SystemOptions, SystemSolution};
use crate::Result;

/// Initial per-node damping for the tangent descent steps.
const TAU_INIT: f64 = 0.25;
/// Ceiling on the per-node damping.
const TAU_MAX: f64 = 4.0;
/// Floor below which a backtracking line search gives up.
const TAU_MIN: f64 = 1e-12;
const TAU_GROW: f64 = 1.6;
const TAU_SHRINK: f64 = 0.5;
/// Backtracking budget per descent step.
const MAX_BACKTRACKS: usize = 30;
/// Sufficient-decrease fraction of the predicted first-order drop.
const ARMIJO: f64 = 1e-4;
/// Descent steps granted to the current ceiling node each sweep; other
/// interior nodes take one step.
const CEILING_STEPS: usize = 6;
/// Sweeps without ceiling progress before the search stops.
const STALL_SWEEPS: usize = 60;
/// Relative ceiling decrease that counts as progress.
const STALL_REL: f64 = 1e-10;
/// A stalled ceiling still counts as converged when the ceiling node's
/// relative gradient is within this factor of the target: the string is
/// stationary and only the node placement limits the measured gradient.
const STALL_GRAD_FACTOR: f64 = 10.0;
/// Accepted relative gap between the polished level and the discrete ceiling.
const LEVEL_GAP_REL: f64 = 0.05;
/// Largest measured-over-predicted level ratio tolerated when a step or a
/// blend is re-projected; a larger ratio means the projected state outran
/// the grid resolution and the candidate is rejected.
const PROJ_AGREE: f64 = 1.25;
/// Per-pass clamp on applied fiber shifts, inside the dilation range; large
/// shifts are applied in chunks.
const SHIFT_CLAMP: f64 = 4.5;
/// Fiber-shift magnitude below which a mid-deformation node counts as
/// projected (the polish re-projects to full precision at the end).
const FAST_PROJECT_TOL: f64 = 1e-4;
const FAST_PROJECT_PASSES: usize = 6;
/// Ceiling-to-endpoint level ratio below which the deformation tries to
/// move onto the relaxed grid.
const HANDOFF_TRIGGER: f64 = 10.0;
/// Sweeps between speculative handoff attempts while the ceiling is still
/// above the trigger ratio.
const HANDOFF_PERIOD: usize = 5;
/// Level agreement demanded from every node when re-measured on the relaxed
/// grid before the deformation moves there.
const HANDOFF_AGREE: f64 = 0.05;
/// Curvature headroom of the relaxed grid over the endpoint scale, allowing
/// moderately concentrated transients.
const HEADROOM: f64 = 4.0;
/// Densified re-runs allowed when the level gap check fails.
const MAX_DENSIFY: usize = 2;
/// Extra re-spread weight at the energy ceiling (segments at the running
/// maximum attract up to `1 + SPREAD_WEIGHT` times the node density).
const SPREAD_WEIGHT: f64 = 3.0;
/// Fewest interior nodes for which the discrete minimax is attempted.
const MIN_INTERIOR: usize = 16;

/// Two-component nodal data: one coefficient vector per component.
type Fields2 = (Vec<f64>, Vec<f64>);

/// The `J`-gradient at a pair, represented in the shifted `H^1` metric,
/// together with its projection onto the tangent space of the constraint set.
#[derive(Debug, Clone)]
pub struct ConstrainedGradient {
    /// Metric representative of the full differential of `J`.
    pub riesz: Fields2,
    /// Tangential part of `riesz` after removing the three constraint
    /// normals (two masses and the dilation-stationarity surface).
    pub tangent: Fields2,
    /// Differential paired by `tangent`: `<tangent_covector, v>` is the
    /// directional derivative of `J` along any constraint-tangent `v`.
    pub tangent_covector: Fields2,
    /// Squared metric norm of the tangential part.
    pub tangent_norm_sq: f64,
    /// Tangential fraction `|tangent|_M / |riesz|_M` of the gradient; the
    /// descent observable driven below `mp_tol`.
    pub rel_norm: f64,
}

/// Convergence record of one saddle search.
#[derive(Debug, Clone)]
pub struct MountainPassReport {
    /// Deformation sweeps used by the accepted run.
    pub sweeps: usize,
    /// Final ceiling of the discrete path.
    pub discrete_level: f64,
    /// Level of the polished critical point.
    pub polished_level: f64,
    /// `|polished - discrete| / discrete`.
    pub level_gap_rel: f64,
    /// Whether the polished level agrees with the discrete ceiling.
    pub level_check: bool,
    /// Densified re-runs taken before acceptance.
    pub densifications: usize,
    /// Relative tangential gradient of the ceiling node at exit.
    pub final_grad_rel: f64,
    /// Ceiling level after each sweep of the accepted run.
    pub level_history: Vec<f64>,
}

/// A polished saddle with its minimax level and convergence record.
#[derive(Debug, Clone)]
pub struct SaddleSearch {
    pub solution: SystemSolution,
    /// Minimax level `c`: the energy of the polished saddle.
    pub level: f64,
    pub report: MountainPassReport,
}

/// Exact nodal partial derivatives of the discrete kinetic moment
/// `\int |u'|^2`: the transpose of the differentiation stencils applied to
/// the quadrature-weighted discrete derivative.
fn kinetic_covector(u: &RadialField) -> Vec<f64> {
    let grid = u.grid();
    let n = grid.len();
    assert!(n >= 5, "differentiation stencils need at least five nodes");
    let w = grid.weights();
    let d = u.derivative();
    let inv12h = 1.0 / (12.0 * grid.spacing());
    let mut out = vec![0.0; n];
    // Row 0 of the derivative is identically zero. Row 1 carries the even
    // extension across the origin.
    let c = 2.0 * w[1] * d[1] * inv12h;
    out[0] -= 8.0 * c;
    out[1] += c;
    out[2] += 8.0 * c;
    out[3] -= c;
    for j in 2..n - 2 {
        let c = 2.0 * w[j] * d[j] * inv12h;
        out[j - 2] += c;
        out[j - 1] -= 8.0 * c;
        out[j + 1] += 8.0 * c;
        out[j + 2] -= c;
    }
    let j = n - 2;
    let c = 2.0 * w[j] * d[j] * inv12h;
    out[j - 3] -= c;
    out[j - 2] += 6.0 * c;
    out[j - 1] -= 18.0 * c;
    out[j] += 10.0 * c;
    out[j + 1] += 3.0 * c;
    let j = n - 1;
    let c = 2.0 * w[j] * d[j] * inv12h;
    out[j - 4] += 3.0 * c;
    out[j - 3] -= 16.0 * c;
    out[j - 2] += 36.0 * c;
    out[j - 1] -= 48.0 * c;
    out[j] += 25.0 * c;
    out
}

/// Exact nodal partial derivatives of `J` for both components.
pub fn j_covector(pair: &StatePair) -> Fields2 {
    let p = *pair.params();
    let w = pair.grid().weights().to_vec();
    let comp = |u: &RadialField, v: &RadialField, mu: f64| -> Vec<f64> {
        let mut c = kinetic_covector(u);
        let uv = u.values();
        let vv = v.values();
        for j in 0..c.len() {
            c[j] = 0.5 * c[j] - w[j] * (mu * uv[j].powi(3) + p.beta * vv[j] * vv[j] * uv[j]);
        }
        c
    };
    (
        comp(pair.u1(), pair.u2(), p.mu1),
        comp(pair.u2(), pair.u1(), p.mu2),
    )
}

/// Differentials of the three constraints (mass of each component and the
/// dilation-stationarity functional `G`), one covector pair per constraint.
fn constraint_covectors(pair: &StatePair) -> [Fields2; 3] {
    let p = *pair.params();
    let w = pair.grid().weights();
    let n = pair.grid().len();
    let u1 = pair.u1().values();
    let u2 = pair.u2().values();
    let mass = |u: &[f64]| -> Vec<f64> { (0..n).map(|j| 2.0 * w[j] * u[j]).collect() };
    let g_comp = |field: &RadialField, u: &[f64], v: &[f64], mu: f64| -> Vec<f64> {
        let mut c = kinetic_covector(field);
        for j in 0..n {
            c[j] -= 3.0 * w[j] * (mu * u[j].powi(3) + p.beta * v[j] * v[j] * u[j]);
        }
        c
    };
    [
        (mass(u1), vec![0.0; n]),
        (vec![0.0; n], mass(u2)),
        (
            g_comp(pair.u1(), u1, u2, p.mu1),
            g_comp(pair.u2(), u2, u1, p.mu2),
        ),
    ]
}

/// Metric shift: the multiplier magnitudes track the curvature scale of the
/// state, so the shifted `H^1` metric damps exactly the modes the state does
/// not resolve.
fn metric_shift(pair: &StatePair) -> f64 {
    let (l1, l2) = multiplier_estimates(pair);
    let shift = 1.0 + l1.abs() + l2.abs();
    if shift.is_finite() {
        shift
    } else {
        1.0
    }
}

/// Solves `(S + sigma L) g = cov` for the metric representative of a
/// covector, with the outer node held at zero; `S` is the radial stiffness
/// form and `L` the (positive) lumped quadrature weights.
fn sobolev_riesz(grid: &RadialGrid, cov: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let h2 = grid.spacing() * grid.spacing();
    let cv = grid.cell_volumes();
    let lw = grid.lumped_weights();
    let m = n - 1;
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m - 1];
    diag[0] = cv[0] / h2 + sigma * lw[0];
    for j in 1..m {
        diag[j] = (cv[j - 1] + cv[j]) / h2 + sigma * lw[j];
    }
    for j in 0..m - 1 {
        off[j] = -cv[j] / h2;
    }
    let mut g = solve_tridiagonal(&off, &diag, &off, &cov[..m])?;
    g.push(0.0);
    Ok(g)
}

fn dot2(a: &Fields2, b: &Fields2) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    d(&a.0, &b.0) + d(&a.1, &b.1)
}

/// Constraint frame at a pair: normal covectors, their metric
/// representatives, and the Gram matrix of the normals.
struct Frame {
    normals: [Fields2; 3],
    nu: [Fields2; 3],
    gram: [[f64; 3]; 3],
}

impl Frame {
    fn new(pair: &StatePair, sigma: f64) -> Result<Self> {
        Self::with_normals(pair.grid(), constraint_covectors(pair), sigma)
    }

    fn with_normals(grid: &RadialGrid, normals: [Fields2; 3], sigma: f64) -> Result<Self> {
        let riesz = |c: &Fields2| -> Result<Fields2> {
            Ok((
                sobolev_riesz(grid, &c.0, sigma)?,
                sobolev_riesz(grid, &c.1, sigma)?,
            ))
        };
        let nu = [
            riesz(&normals[0])?,
            riesz(&normals[1])?,
            riesz(&normals[2])?,
        ];
        let mut gram = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                gram[i][j] = dot2(&normals[i], &nu[j]);
            }
        }
        Ok(Self { normals, nu, gram })
    }

    /// Removes the normal components from a direction, leaving it tangent to
    /// all three constraints; also returns the normal coefficients.
    fn project(&self, dir: &Fields2) -> Result<(Fields2, [f64; 3])> {
        let mut a: Vec<Vec<f64>> = self.gram.iter().map(|row| row.to_vec()).collect();
        let mut b: Vec<f64> = (0..3).map(|i| dot2(&self.normals[i], dir)).collect();
        let coef = solve_dense_small(&mut a, &mut b)?;
        let mut t = dir.clone();
        for i in 0..3 {
            for (out, nu) in t.0.iter_mut().zip(&self.nu[i].0) {
                *out -= coef[i] * nu;
            }
            for (out, nu) in t.1.iter_mut().zip(&self.nu[i].1) {
                *out -= coef[i] * nu;
            }
        }
        Ok((t, [coef[0], coef[1], coef[2]]))
    }
}

/// Gradient of `J` at a pair in the shifted `H^1` metric, split into its
/// constraint-normal and constraint-tangent parts. The kinetic covectors and
/// nonlinear terms are assembled once and shared between the differential of
/// `J`, the constraint normals, and the metric shift.
pub fn constrained_gradient(pair: &StatePair) -> Result<ConstrainedGradient> {
    let grid = pair.grid();
    let p = *pair.params();
    let n = grid.len();
    let w = grid.weights();
    let u1 = pair.u1().values();
    let u2 = pair.u2().values();
    let kc1 = kinetic_covector(pair.u1());
    let kc2 = kinetic_covector(pair.u2());
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let (mut q1, mut q2, mut ov) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let (a, b) = (u1[j], u2[j]);
        f1[j] = p.mu1 * a * a * a + p.beta * b * b * a;
        f2[j] = p.mu2 * b * b * b + p.beta * a * a * b;
        q1 += w[j] * a * a * a * a;
        q2 += w[j] * b * b * b * b;
        ov += w[j] * a * a * b * b;
    }
    let cov: Fields2 = (
        (0..n).map(|j| 0.5 * kc1[j] - w[j] * f1[j]).collect(),
        (0..n).map(|j| 0.5 * kc2[j] - w[j] * f2[j]).collect(),
    );
    let normals: [Fields2; 3] = [
        ((0..n).map(|j| 2.0 * w[j] * u1[j]).collect(), vec![0.0; n]),
        (vec![0.0; n], (0..n).map(|j| 2.0 * w[j] * u2[j]).collect()),
        (
            (0..n).map(|j| kc1[j] - 3.0 * w[j] * f1[j]).collect(),
            (0..n).map(|j| kc2[j] - 3.0 * w[j] * f2[j]).collect(),
        ),
    ];
    let l1 = (pair.u1().grad_norm_sq() - p.mu1 * q1 - p.beta * ov) / (p.a1 * p.a1);
    let l2 = (pair.u2().grad_norm_sq() - p.mu2 * q2 - p.beta * ov) / (p.a2 * p.a2);
    let sigma = {
        let shift = 1.0 + l1.abs() + l2.abs();
        if shift.is_finite() {
            shift
        } else {
            1.0
        }
    };
    let frame = Frame::with_normals(grid, normals, sigma)?;
    let riesz = (
        sobolev_riesz(grid, &cov.0, sigma)?,
        sobolev_riesz(grid, &cov.1, sigma)?,
    );
    let (tangent, coef) = frame.project(&riesz)?;
    let mut tangent_covector = cov.clone();
    for i in 0..3 {
        for (out, nc) in tangent_covector.0.iter_mut().zip(&frame.normals[i].0) {
            *out -= coef[i] * nc;
        }
        for (out, nc) in tangent_covector.1.iter_mut().zip(&frame.normals[i].1) {
            *out -= coef[i] * nc;
        }
    }
    let tangent_norm_sq = dot2(&tangent, &tangent_covector).max(0.0);
    let full_norm_sq = dot2(&riesz, &cov).max(0.0);
    let rel_norm = (tangent_norm_sq / full_norm_sq.max(f64::MIN_POSITIVE)).sqrt();
    Ok(ConstrainedGradient {
        riesz,
        tangent,
        tangent_covector,
        tangent_norm_sq,
        rel_norm,
    })
}

/// Projects a direction onto the tangent space of the constraint set at
/// `pair` (both mass spheres and the dilation-stationarity surface), in the
/// same metric the deformation uses.
pub fn tangent_project(pair: &StatePair, dir: (&[f64], &[f64])) -> Result<Fields2> {
    let frame = Frame::new(pair, metric_shift(pair))?;
    let owned = (dir.0.to_vec(), dir.1.to_vec());
    let (t, _) = frame.project(&owned)?;
    Ok(t)
}

/// Iterated fiber projection with per-pass shift clamping: reaches fiber
/// optima beyond the single-dilation range by applying the measured shift in
/// chunks, and stops at a mid-deformation tolerance. Projection quality at
/// the accepted critical point is restored by the final polish.
fn fast_project(pair: StatePair) -> Result<StatePair> {
    let mut cur = pair;
    for _ in 0..FAST_PROJECT_PASSES {
        let s = cur.fiber_shift()?;
        if s.abs() < FAST_PROJECT_TOL {
            return Ok(cur);
        }
        cur = cur.dilate(s.clamp(-SHIFT_CLAMP, SHIFT_CLAMP))?.renormalized()?;
    }
    let s = cur.fiber_shift()?;
    if s.abs() < 0.5 {
        // Close enough for level bookkeeping; the residual shift is a
        // second-order level error.
        return Ok(cur);
    }
    Err(SolverError::Diverged(format!(
        "fiber projection still shifting by {s:.3e} after {FAST_PROJECT_PASSES} passes"
    )))
}

/// One trial step: move against the tangent direction, restore
/// nonnegativity by componentwise absolute values, and renormalize the
/// masses. The returned level is the fiber ceiling `(8/27) K^3 / P^2` of the
/// stepped state, evaluated from raw moments without constructing the
/// dilated state.
fn trial_fields(node: &StatePair, t: &Fields2, tau: f64) -> Result<(RadialField, RadialField, f64)> {
    let p = *node.params();
    let grid = node.grid();
    let stepped = |u: &RadialField, d: &[f64], target: f64| -> Result<RadialField> {
        let values: Vec<f64> = u
            .values()
            .iter()
            .zip(d)
            .map(|(v, g)| (v - tau * g).abs())
            .collect();
        RadialField::new(Arc::clone(grid), values)?.renormalized_to_mass(target)
    };
    let u1 = stepped(node.u1(), &t.0, p.a1 * p.a1)?;
    let u2 = stepped(node.u2(), &t.1, p.a2 * p.a2)?;
    let kinetic = u1.grad_norm_sq() + u2.grad_norm_sq();
    let interaction =
        p.mu1 * u1.quartic() + p.mu2 * u2.quartic() + 2.0 * p.beta * u1.overlap(&u2)?;
    if !(interaction > 0.0) {
        return Err(SolverError::NotInCone { p: interaction });
    }
    let level = 8.0 / 27.0 * kinetic.powi(3) / (interaction * interaction);
    Ok((u1, u2, level))
}

/// Up to `steps` damped descent steps on one node. Each step recomputes the
/// constrained gradient, then backtracks until the fiber ceiling of the
/// stepped state shows the sufficient decrease. The accepted state is stored
/// as stepped — the ceiling is dilation-invariant, so the expensive fiber
/// projection is deferred to the re-spread, the grid handoff, and the final
/// polish, which re-measure true levels anyway. Returns the relative
/// gradient seen at the last evaluation.
fn descend_node(
    node: &mut StatePair,
    level: &mut f64,
    tau: &mut f64,
    steps: usize,
) -> Result<f64> {
    let mut rel = f64::INFINITY;
    for _ in 0..steps {
        let cg = constrained_gradient(node)?;
        rel = cg.rel_norm;
        let mut trial = *tau;
        let mut accepted = false;
        for attempt in 0..MAX_BACKTRACKS {
            let accept = trial_fields(node, &cg.tangent, trial).and_then(|(u1, u2, closed)| {
                if closed <= *level - ARMIJO * trial * cg.tangent_norm_sq {
                    Ok(Some((StatePair::new(u1, u2, *node.params())?, closed)))
                } else {
                    Ok(None)
                }
            });
            match accept {
                Ok(Some((cand, closed))) => {
                    *level = closed;
                    *node = cand;
                    *tau = if attempt == 0 {
                        (trial * TAU_GROW).min(TAU_MAX)
                    } else {
                        trial
                    };
                    accepted = true;
                    break;
                }
                _ => {
                    trial *= TAU_SHRINK;
                    if trial < TAU_MIN {
                        break;
                    }
                }
            }
        }
        if !accepted {
            *tau = (*tau * TAU_SHRINK).max(TAU_MIN);
            break;
        }
    }
    Ok(rel)
}

/// Linear blend of two neighboring nodes at parameter `theta`, renormalized
/// to the component masses, together with its fiber ceiling. The blend stays
/// unprojected; levels throughout the deformation are fiber ceilings, which
/// dilation cannot change.
fn blend_node(a: &StatePair, b: &StatePair, theta: f64) -> Result<(StatePair, f64)> {
    let p = *a.params();
    let u1 = a
        .u1()
        .scaled(1.0 - theta)
        .axpy(theta, b.u1())?
        .renormalized_to_mass(p.a1 * p.a1)?;
    let u2 = a
        .u2()
        .scaled(1.0 - theta)
        .axpy(theta, b.u2())?
        .renormalized_to_mass(p.a2 * p.a2)?;
    let kinetic = u1.grad_norm_sq() + u2.grad_norm_sq();
    let interaction =
        p.mu1 * u1.quartic() + p.mu2 * u2.quartic() + 2.0 * p.beta * u1.overlap(&u2)?;
    if !(interaction > 0.0) {
        return Err(SolverError::NotInCone { p: interaction });
    }
    let level = 8.0 / 27.0 * kinetic.powi(3) / (interaction * interaction);
    Ok((StatePair::new(u1, u2, p)?, level))
}

/// Re-spreads the nodes along the polyline by weighted arclength, with extra
/// weight near the energy ceiling so node density follows the running
/// maximum. Endpoints stay fixed.
fn respread(nodes: &[StatePair], levels: &[f64]) -> Result<(Vec<StatePair>, Vec<f64>)> {
    let m = nodes.len() - 1;
    let lw = nodes[0].grid().lumped_weights().to_vec();
    let dist = |a: &StatePair, b: &StatePair| -> f64 {
        let comp = |x: &RadialField, y: &RadialField| -> f64 {
            x.values()
                .iter()
                .zip(y.values())
                .zip(&lw)
                .map(|((p, q), w)| w * (p - q) * (p - q))
                .sum::<f64>()
        };
        (comp(a.u1(), b.u1()) + comp(a.u2(), b.u2())).sqrt()
    };
    let e_min = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let e_max = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (e_max - e_min).max(f64::MIN_POSITIVE);
    let mut cum = vec![0.0; m + 1];
    for k in 0..m {
        let peak = levels[k].max(levels[k + 1]);
        let weight = 1.0 + SPREAD_WEIGHT * (peak - e_min) / span;
        cum[k + 1] = cum[k] + weight * dist(&nodes[k], &nodes[k + 1]);
    }
    let total = cum[m];
    if !(total > 0.0) {
        return Ok((nodes.to_vec(), levels.to_vec()));
    }
    let mut out = Vec::with_capacity(m + 1);
    let mut out_levels = Vec::with_capacity(m + 1);
    out.push(nodes[0].clone());
    out_levels.push(levels[0]);
    for j in 1..m {
        let target = total * j as f64 / m as f64;
        let k = cum
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(m - 1);
        let seg = cum[k + 1] - cum[k];
        let theta = if seg > 0.0 { (target - cum[k]) / seg } else { 0.0 };
        // A chord between curve points may overshoot the local landscape;
        // cap the blend at the segment's own ceiling (and never above the
        // global one) so redistribution cannot raise the path maximum, and
        // fall back to the nearer parent on a degenerate blend (such as one
        // leaving the dilation cone).
        let cap = (levels[k].max(levels[k + 1]) * PROJ_AGREE).min(e_max);
        let fallback = || {
            if theta < 0.5 {
                (nodes[k].clone(), levels[k])
            } else {
                (nodes[k + 1].clone(), levels[k + 1])
            }
        };
        let (node, level) = match blend_project(&nodes[k], &nodes[k + 1], theta) {
            Ok(node) => {
                let level = node.energy();
                if level <= cap {
                    (node, level)
                } else {
                    fallback()
                }
            }
            Err(_) => fallback(),
        };
        out_levels.push(level);
        out.push(node);
    }
    out.push(nodes[m].clone());
    out_levels.push(levels[m]);
    Ok((out, out_levels))
}

/// Working grid for the relaxation tail: same domain, but stepped by the
/// soliton curvature rule with a safety factor instead of the much finer
/// spacing the concentrated endpoint construction demands.
fn relaxed_grid(
    params: &CouplingParams,
    r_max: f64,
    opts: &SystemOptions,
) -> Result<Arc<RadialGrid>> {
    let q = canonical_soliton();
    let c1 = q.mass / (params.mu1 * params.a1 * params.a1);
    let c2 = q.mass / (params.mu2 * params.a2 * params.a2);
    let kappa = q.stiffness.sqrt() * c1.max(c2) * HEADROOM;
    let n = ((r_max * kappa / opts.scalar.theta).ceil() as usize)
        .clamp(opts.scalar.n_min, opts.scalar.n_max);
    Ok(Arc::new(RadialGrid::new(3, r_max, n)?))
}

/// Moves every node of the string onto `grid`, re-normalizing and
/// re-projecting each one. Succeeds only if every node's level survives the
/// move within `HANDOFF_AGREE`; otherwise the string is still too sharp for
/// the coarse step and the caller keeps the fine grid.
fn try_handoff(
    nodes: &[StatePair],
    levels: &[f64],
    grid: &Arc<RadialGrid>,
) -> Option<(Vec<StatePair>, Vec<f64>)> {
    let p = *nodes[0].params();
    let mut moved = Vec::with_capacity(nodes.len());
    let mut moved_levels = Vec::with_capacity(nodes.len());
    for (node, &level) in nodes.iter().zip(levels) {
        let u1 = node
            .u1()
            .resample_to(Arc::clone(grid))
            .renormalized_to_mass(p.a1 * p.a1)
            .ok()?;
        let u2 = node
            .u2()
            .resample_to(Arc::clone(grid))
            .renormalized_to_mass(p.a2 * p.a2)
            .ok()?;
        let pair = fast_project(StatePair::new(u1, u2, p).ok()?).ok()?;
        let here = pair.energy();
        if ((here - level) / level).abs() > HANDOFF_AGREE {
            return None;
        }
        moved_levels.push(here);
        moved.push(pair);
    }
    Some((moved, moved_levels))
}

fn interior_argmax(levels: &[f64]) -> usize {
    let mut k_max = 1;
    for k in 1..levels.len() - 1 {
        if levels[k] > levels[k_max] {
            k_max = k;
        }
    }
    k_max
}

/// One full deformation run on a fixed path: sweeps until the ceiling node's
/// relative gradient passes the target, then polishes the ceiling node.
fn run_deformation(path: &PathOnP, opts: &SystemOptions) -> Result<SaddleSearch> {
    let src = path.nodes();
    let mut nodes: Vec<StatePair> = src.to_vec();
    let mut levels: Vec<f64> = nodes.iter().map(StatePair::energy).collect();
    let mut taus = vec![TAU_INIT; nodes.len()];
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut final_rel = f64::INFINITY;
    let mut converged = false;
    let endpoint_scale = levels[0].max(levels[levels.len() - 1]);
    // Once the ceiling has come within sight of the endpoint levels the
    // string has shed its concentrated features, and the relaxation tail can
    // run on a soliton-scale grid. A pinned domain keeps its grid.
    let relaxed = if opts.grid.is_none() {
        let grid = relaxed_grid(nodes[0].params(), nodes[0].grid().r_max(), opts)?;
        (grid.len() * 2 < nodes[0].grid().len()).then_some(grid)
    } else {
        None
    };
    let mut handed_off = false;
    for sweep in 0..opts.mp_max_sweeps {
        let sweep_start = std::time::Instant::now();
        if let Some(grid) = relaxed.as_ref() {
            let due = sweep % HANDOFF_PERIOD == 0
                || levels[interior_argmax(&levels)] <= HANDOFF_TRIGGER * endpoint_scale;
            if !handed_off && due {
                if let Some((moved, moved_levels)) = try_handoff(&nodes, &levels, grid) {
                    nodes = moved;
                    levels = moved_levels;
                    taus.iter_mut().for_each(|t| *t = TAU_INIT);
                    handed_off = true;
                    if std::env::var_os("MP_TRACE").is_some() {
                        eprintln!("handoff to relaxed grid n = {}", grid.len());
                    }
                }
            }
        }
        let mut order: Vec<usize> = (1..nodes.len() - 1).collect();
        order.sort_by(|&a, &b| levels[b].total_cmp(&levels[a]));
        let ceiling = order[0];
        for &k in &order {
            let steps = if k == ceiling { CEILING_STEPS } else { 1 };
            descend_node(&mut nodes[k], &mut levels[k], &mut taus[k], steps)?;
        }
        let (new_nodes, new_levels) = respread(&nodes, &levels)?;
        nodes = new_nodes;
        levels = new_levels;
        let k_max = interior_argmax(&levels);
        let ceiling_level = levels[k_max];
        history.push(ceiling_level);
        final_rel = constrained_gradient(&nodes[k_max])?.rel_norm;
        if std::env::var_os("MP_TRACE").is_some() {
            eprintln!(
                "sweep {:4}  ceiling {:13.6e} at {:2}  grad_rel {:9.3e}  [{:.2?}]",
                history.len(),
                ceiling_level,
                k_max,
                final_rel,
                sweep_start.elapsed()
            );
        }
        if final_rel < opts.mp_tol {
            converged = true;
            break;
        }
        if ceiling_level < best * (1.0 - STALL_REL) {
            best = ceiling_level;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_SWEEPS {
                // A frozen ceiling with a near-target gradient means the
                // string is stationary and only the finite node spacing
                // limits the measurement; hand the node to the polish.
                if final_rel < STALL_GRAD_FACTOR * opts.mp_tol {
                    converged = true;
                    break;
                }
                return Err(SolverError::Stagnation(format!(
                    "ceiling frozen near {best:.6e} for {STALL_SWEEPS} sweeps \
                     with relative gradient {final_rel:.3e} above {:.1e}",
                    opts.mp_tol
                )));
            }
        }
    }
    if !converged {
        return Err(SolverError::Stagnation(format!(
            "sweep budget {} exhausted with relative gradient {final_rel:.3e} \
             above {:.1e}",
            opts.mp_max_sweeps, opts.mp_tol
        )));
    }
    let k_max = interior_argmax(&levels);
    // Descent stores nodes without re-projecting (levels are fiber
    // ceilings); pin the seed back onto the constraint set so the discrete
    // level and the polish start from a genuine constrained state.
    let seed = &fast_project(nodes[k_max].clone())?;
    let discrete_level = seed.energy();
    let solution = polish_to_solution(seed, multiplier_estimates(seed), opts)?;
    let polished_level = solution.energy;
    let level_gap_rel = ((polished_level - discrete_level) / discrete_level).abs();
    Ok(SaddleSearch {
        level: polished_level,
        report: MountainPassReport {
            sweeps: history.len(),
            discrete_level,
            polished_level,
            level_gap_rel,
            level_check: level_gap_rel <= LEVEL_GAP_REL,
            densifications: 0,
            final_grad_rel: final_rel,
            level_history: history,
        },
        solution,
    })
}

/// Minimax saddle search: deform the path until its ceiling is stationary,
/// polish the ceiling node to a critical point, and accept only when the
/// polished level matches the discrete ceiling; otherwise re-run on a
/// denser path.
pub fn mountain_pass(path: &PathOnP, opts: &SystemOptions) -> Result<SaddleSearch> {
    if path.nodes().len() < MIN_INTERIOR + 2 {
        return Err(SolverError::InvalidInput(format!(
            "saddle search needs at least {MIN_INTERIOR} interior nodes, got {}",
            path.nodes().len().saturating_sub(2)
        )));
    }
    let mut owned: Vec<PathOnP> = Vec::new();
    let mut densifications = 0usize;
    loop {
        let current: &PathOnP = owned.last().unwrap_or(path);
        match run_deformation(current, opts) {
            Ok(mut result) => {
                result.report.densifications = densifications;
                if result.report.level_check || densifications == MAX_DENSIFY {
                    return Ok(result);
                }
            }
            Err(err @ SolverError::Stagnation(_)) => return Err(err),
            Err(err) => {
                if densifications == MAX_DENSIFY {
                    return Err(err);
                }
            }
        }
        let denser = owned.last().unwrap_or(path).densified(2, opts)?;
        owned.push(denser);
        densifications += 1;
    }
}
