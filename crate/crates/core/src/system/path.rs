//! Disjoint-support endpoint states and the connecting path on the dilation
//! constraint set.
//!
//! One endpoint concentrates component 1 in a truncated ground-state bump at
//! the origin while component 2 sits in a far annulus; the other endpoint
//! swaps the roles, with component 1's annulus one e-fold farther out so the
//! two annuli never meet. The connecting path runs in two legs: first
//! component 1 morphs from its bump to its annulus while component 2 stays
//! parked, then component 2 morphs from its annulus to its bump while
//! component 1 stays parked. Every interpolant keeps the componentwise
//! product identically zero on the grid, so all levels along the path are
//! independent of the coupling strength.
//!
//! Path nodes are carried to the constraint set by the joint mass-preserving
//! dilation. Near the middle of the path both components are annular, the
//! maximizing dilation is large, and the projected state concentrates into
//! thin shells around a shrunken core; two measures keep that step sound:
//!
//! * the projection re-evaluates the analytic bump profiles at dilated radii
//!   instead of resampling grid data, so no interpolation error accumulates
//!   across passes;
//! * the grid is sized in advance from closed-form blend moments (disjoint
//!   supports make every node's kinetic and quartic integrals exact
//!   functions of six endpoint scalars), so the dilated cores and shells
//!   stay resolved and the fiber fixed point remains contractive.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::SolverError;
use crate::field::RadialField;
use crate::functionals::{CouplingParams, StatePair, PROJECTION_SHIFT_TOL};
use crate::grid::RadialGrid;
use crate::scalar::{canonical_soliton, scaling_oracle, ShotProfile};
use crate::system::SystemOptions;
use crate::Result;

/// Fraction of the soliton's sup below which the central bump is truncated
/// to zero; sets the bump's support radius.
const TRUNCATION_LEVEL: f64 = 1e-7;
/// Padding between the outer annulus edge and the domain boundary.
const DOMAIN_PAD: f64 = 1.05;
/// Interpolation intervals per leg (nodes = 2 * intervals + 1).
const DEFAULT_SEGMENT_INTERVALS: usize = 9;
/// How many times the annulus pair may move one e-fold outward while chasing
/// the endpoint energy budget.
const MAX_PLACEMENT_STEPS: usize = 20;
/// Fiber fixed-point passes allowed for one analytic projection.
const MAX_PROJECTION_PASSES: usize = 48;
/// Grid steps demanded across a fiber-projected annulus shell.
const SHELL_POINTS: f64 = 24.0;
/// Grid step allowed per curvature length of a fiber-projected soliton core.
const CORE_RESOLUTION: f64 = 1.0;
/// Kinetic fraction below which a node's soliton core no longer constrains
/// the grid step.
const CORE_MIN_FRACTION: f64 = 0.02;

/// Analytic radial bump: either a truncated soliton at the origin or a
/// `sin^2` annulus.
#[derive(Debug, Clone, Copy)]
enum Shape {
    /// `(q(scale r) - floor)^+` with `q` the canonical soliton profile.
    Central { scale: f64, floor: f64 },
    /// `sin^2(pi (r - inner) / (outer - inner))` supported on `(inner, outer)`.
    Annulus { inner: f64, outer: f64 },
}

impl Shape {
    fn eval(&self, q: &ShotProfile, r: f64) -> f64 {
        match *self {
            Shape::Central { scale, floor } => {
                let v = q.eval(scale * r) - floor;
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Shape::Annulus { inner, outer } => {
                if r <= inner || r >= outer {
                    0.0
                } else {
                    let x = (r - inner) / (outer - inner);
                    (PI * x).sin().powi(2)
                }
            }
        }
    }
}

/// One normalized endpoint component `alpha e^{3s/2} shape(e^s r)`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    shape: Shape,
    alpha: f64,
    s: f64,
}

impl Profile {
    fn eval(&self, q: &ShotProfile, r: f64) -> f64 {
        self.alpha * (1.5 * self.s).exp() * self.shape.eval(q, self.s.exp() * r)
    }
}

/// Kinetic and quartic moments of the four normalized endpoint bumps, plus
/// the scales needed to predict each node's resolution demand in closed
/// form (supports are disjoint, so blend moments have no cross terms).
#[derive(Debug, Clone, Copy)]
struct BlendMoments {
    k_bump1: f64,
    k_ann1: f64,
    k_ann2: f64,
    k_bump2: f64,
    q_bump1: f64,
    q_ann1: f64,
    q_ann2: f64,
    q_bump2: f64,
    mu1: f64,
    mu2: f64,
    /// `sqrt(stiffness) * c_i`: reciprocal curvature length of each
    /// undilated soliton core.
    kappa1: f64,
    kappa2: f64,
    /// Width of the thinnest raw annulus shell.
    shell_width: f64,
}

impl BlendMoments {
    /// `(K, P, core kinetic fraction, core curvature scale)` of the raw
    /// node at `(leg, t)`.
    fn node_moments(&self, leg: usize, t: f64) -> (f64, f64, f64, f64) {
        let rho2 = 1.0 / ((1.0 - t) * (1.0 - t) + t * t);
        let rho4 = rho2 * rho2;
        let om = (1.0 - t) * (1.0 - t);
        let tm = t * t;
        match leg {
            0 => {
                let k1 = rho2 * (om * self.k_bump1 + tm * self.k_ann1);
                let k = k1 + self.k_ann2;
                let p = self.mu1 * rho4 * (om * om * self.q_bump1 + tm * tm * self.q_ann1)
                    + self.mu2 * self.q_ann2;
                (k, p, rho2 * om * self.k_bump1 / k, self.kappa1)
            }
            _ => {
                let k2 = rho2 * (om * self.k_ann2 + tm * self.k_bump2);
                let k = self.k_ann1 + k2;
                let p = self.mu1 * self.q_ann1
                    + self.mu2 * rho4 * (om * om * self.q_ann2 + tm * tm * self.q_bump2);
                (k, p, rho2 * tm * self.k_bump2 / k, self.kappa2)
            }
        }
    }

    /// Largest grid step that keeps the fiber-projected node at `(leg, t)`
    /// resolved: the dilated soliton core (when it still carries kinetic
    /// weight) and the dilated annulus shells both constrain the step.
    fn step_demand(&self, leg: usize, t: f64) -> f64 {
        let (k, p, core_fraction, kappa) = self.node_moments(leg, t);
        let dilation = 4.0 * k / (3.0 * p);
        let mut h = self.shell_width / dilation / SHELL_POINTS;
        if core_fraction > CORE_MIN_FRACTION {
            h = h.min(CORE_RESOLUTION / (kappa * dilation));
        }
        h
    }
}

/// Everything needed to rebuild path nodes at any interpolation density.
#[derive(Debug, Clone)]
struct PathRecipe {
    grid: Arc<RadialGrid>,
    q: Arc<ShotProfile>,
    params: CouplingParams,
    /// `[bump_1, annulus_2, annulus_1, bump_2]`: components of the first
    /// endpoint, then of the second.
    profiles: [Profile; 4],
    moments: BlendMoments,
    intervals: usize,
}

impl PathRecipe {
    /// The node at parameter `t` of leg `leg` (0: component 1 morphs,
    /// 1: component 2 morphs), projected to the constraint set.
    fn node(&self, leg: usize, t: f64) -> Result<(StatePair, f64)> {
        let [bump1, ann2, ann1, bump2] = self.profiles;
        let q = &*self.q;
        match leg {
            0 => project_analytic(
                &self.grid,
                &self.params,
                |r| (1.0 - t) * bump1.eval(q, r) + t * ann1.eval(q, r),
                |r| ann2.eval(q, r),
            ),
            _ => project_analytic(
                &self.grid,
                &self.params,
                |r| ann1.eval(q, r),
                |r| (1.0 - t) * ann2.eval(q, r) + t * bump2.eval(q, r),
            ),
        }
    }
}

/// A discrete path of projected states joining the two segregated endpoints,
/// together with the raw (pre-projection) endpoint records.
#[derive(Debug, Clone)]
pub struct PathOnP {
    nodes: Vec<StatePair>,
    raw_a: StatePair,
    raw_b: StatePair,
    recipe: PathRecipe,
    reference_level: f64,
}

impl PathOnP {
    /// Projected path nodes; the first and last are the projected endpoints.
    pub fn nodes(&self) -> &[StatePair] {
        &self.nodes
    }

    /// The raw disjoint-support endpoint pairs before dilation, kept as
    /// construction witnesses (componentwise nonnegative, compact supports).
    pub fn raw_endpoints(&self) -> (&StatePair, &StatePair) {
        (&self.raw_a, &self.raw_b)
    }

    /// Maximal level along the path: a coupling-independent upper bound for
    /// every saddle level obtained by deforming this path. Dominated by the
    /// all-annulus middle, so it is a coarse bound by design.
    pub fn reference_level(&self) -> f64 {
        self.reference_level
    }

    /// Rebuilds the path with up to `factor` times as many intervals per
    /// leg. New nodes are only inserted where the current grid resolves
    /// their fiber projection, so the treacherous near-middle region keeps
    /// its base spacing while the flanks (which host the saddle) densify.
    pub fn densified(&self, factor: usize, opts: &SystemOptions) -> Result<Self> {
        let intervals = self.recipe.intervals * factor.max(1);
        let nodes = build_nodes(&self.recipe, intervals, opts)?;
        let reference_level = nodes.iter().map(StatePair::energy).fold(f64::MIN, f64::max);
        Ok(Self {
            nodes,
            raw_a: self.raw_a.clone(),
            raw_b: self.raw_b.clone(),
            recipe: self.recipe.clone(),
            reference_level,
        })
    }
}

/// Projects the analytic pair `(g1, g2)` onto the constraint set through the
/// joint dilation `u_i(r) = alpha_i e^{3s/2} g_i(e^s r)`, iterating the
/// closed-form fiber maximizer with a fresh analytic evaluation at every
/// pass. Returns the projected pair and the accumulated dilation.
fn project_analytic<F1, F2>(
    grid: &Arc<RadialGrid>,
    params: &CouplingParams,
    g1: F1,
    g2: F2,
) -> Result<(StatePair, f64)>
where
    F1: Fn(f64) -> f64,
    F2: Fn(f64) -> f64,
{
    let mut s = 0.0_f64;
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_PROJECTION_PASSES {
        let e = s.exp();
        let amp = (1.5 * s).exp();
        let u1 = RadialField::from_fn(Arc::clone(grid), |r| amp * g1(e * r))
            .renormalized_to_mass(params.a1 * params.a1)?;
        let u2 = RadialField::from_fn(Arc::clone(grid), |r| amp * g2(e * r))
            .renormalized_to_mass(params.a2 * params.a2)?;
        let pair = StatePair::new(u1, u2, *params)?;
        let shift = pair.fiber_shift()?;
        if shift.abs() < PROJECTION_SHIFT_TOL {
            return Ok((pair, s));
        }
        // A contraction never grows the shift; growth beyond round-off
        // means the dilated state has fallen below grid resolution.
        if shift.abs() > prev && shift.abs() > 0.05 {
            return Err(SolverError::Diverged(format!(
                "fiber projection diverging at dilation {s:.3} (shift \
                 {shift:.3e} after {prev:.3e}): state unresolved on this grid"
            )));
        }
        prev = shift.abs();
        s += shift;
    }
    Err(SolverError::Diverged(format!(
        "analytic fiber projection did not settle: shift {prev:.3e} at \
         accumulated dilation {s:.3}"
    )))
}

/// Builds the projected nodes of both legs at `intervals` intervals per leg
/// and checks the support separation and projection quality of every node.
/// Interval endpoints the base spacing already covers are always kept; extra
/// interior nodes are kept only where the grid resolves them.
fn build_nodes(
    recipe: &PathRecipe,
    intervals: usize,
    opts: &SystemOptions,
) -> Result<Vec<StatePair>> {
    let base = recipe.intervals;
    let h = recipe.grid.spacing();
    let mut nodes = Vec::new();
    for leg in 0..2 {
        let start = if leg == 0 { 0 } else { 1 };
        for k in start..=intervals {
            let t = k as f64 / intervals as f64;
            let on_base_grid = (k * base) % intervals == 0;
            if !on_base_grid && recipe.moments.step_demand(leg, t) < h {
                continue;
            }
            let (pair, _) = recipe.node(leg, t)?;
            if pair.overlap() != 0.0 {
                return Err(SolverError::SupportOverlap(format!(
                    "path node (leg {leg}, t = {t:.3}) has coupled supports \
                     (overlap {:.3e})",
                    pair.overlap()
                )));
            }
            let residual =
                pair.pohozaev().abs() / (pair.kinetic() + pair.interaction().abs());
            if residual > opts.proj_tol {
                return Err(SolverError::Diverged(format!(
                    "path node (leg {leg}, t = {t:.3}) projection residual \
                     {residual:.3e} exceeds {:.1e}",
                    opts.proj_tol
                )));
            }
            nodes.push(pair);
        }
    }
    Ok(nodes)
}

/// Builds the two segregated endpoint states and the connecting path.
///
/// The annulus pair starts at the smallest integer e-fold whose inner edge
/// clears twice the wider bump's support radius and moves outward (shedding
/// kinetic energy `~ e^{-2m}`) until each endpoint's level fits its
/// scalar-level budget `level(a_i, mu_i) + eps`. On a pinned domain the
/// escalation stops when the annuli no longer fit, reporting the achieved
/// excess.
pub fn build_endpoints(
    params: &CouplingParams,
    eps: f64,
    opts: &SystemOptions,
) -> Result<(StatePair, StatePair, PathOnP)> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(SolverError::InvalidInput(format!(
            "endpoint energy budget eps must be positive, got {eps}"
        )));
    }
    let q = canonical_soliton();
    let c1 = q.mass / (params.mu1 * params.a1 * params.a1);
    let c2 = q.mass / (params.mu2 * params.a2 * params.a2);
    let r_decay = q.decay_radius(TRUNCATION_LEVEL);
    let support_radius = (r_decay / c1).max(r_decay / c2);
    let level1 = scaling_oracle(params.a1, params.mu1, 0)?.energy;
    let level2 = scaling_oracle(params.a2, params.mu2, 0)?.energy;
    let floor = TRUNCATION_LEVEL * q.amplitude;
    let stiffness = q.stiffness * c1.max(c2).powi(2);

    let mut m = support_radius.ln().ceil() as i64;
    let mut worst_excess = f64::INFINITY;
    for step in 0..MAX_PLACEMENT_STEPS {
        let inner2 = 2.0 * (m as f64).exp();
        let outer2 = 3.0 * (m as f64).exp();
        let inner1 = 2.0 * ((m + 1) as f64).exp();
        let outer1 = 3.0 * ((m + 1) as f64).exp();
        let needed = outer1 * DOMAIN_PAD;
        let shapes = [
            Shape::Central { scale: c1, floor },
            Shape::Annulus {
                inner: inner2,
                outer: outer2,
            },
            Shape::Annulus {
                inner: inner1,
                outer: outer1,
            },
            Shape::Central { scale: c2, floor },
        ];
        let (a1sq, a2sq) = (params.a1 * params.a1, params.a2 * params.a2);
        let raw_profiles = |grid: &Arc<RadialGrid>| -> Result<[RadialField; 4]> {
            let build = |shape: Shape, mass: f64| -> Result<RadialField> {
                RadialField::from_fn(Arc::clone(grid), |r| shape.eval(&q, r))
                    .renormalized_to_mass(mass)
            };
            Ok([
                build(shapes[0], a1sq)?,
                build(shapes[1], a2sq)?,
                build(shapes[2], a1sq)?,
                build(shapes[3], a2sq)?,
            ])
        };

        let grid = match opts.grid {
            Some((r_max, n)) => {
                if needed > r_max {
                    if step == 0 {
                        return Err(SolverError::SupportOverlap(format!(
                            "domain r_max = {r_max} cannot host the annulus \
                             pair (outer edge {needed:.3} with padding)"
                        )));
                    }
                    return Err(SolverError::EnergyBudgetExceeded {
                        level: worst_excess,
                        budget: eps,
                    });
                }
                Arc::new(RadialGrid::new(3, r_max, n)?)
            }
            None => {
                // First size for the raw bumps alone, then tighten the step
                // until every node's fiber projection stays resolved.
                let n_theta = ((needed * stiffness.sqrt() / opts.scalar.theta).ceil()
                    as usize)
                    .clamp(opts.scalar.n_min, opts.scalar.n_max);
                let coarse = Arc::new(RadialGrid::new(3, needed, n_theta)?);
                let fields = raw_profiles(&coarse)?;
                let moments = blend_moments(params, &fields, (m as f64).exp(), c1, c2, &q);
                let mut h_req = opts.scalar.theta / stiffness.sqrt();
                for leg in 0..2 {
                    for k in 0..=DEFAULT_SEGMENT_INTERVALS {
                        let t = k as f64 / DEFAULT_SEGMENT_INTERVALS as f64;
                        h_req = h_req.min(moments.step_demand(leg, t));
                    }
                }
                let n = ((needed / h_req).ceil() as usize)
                    .clamp(n_theta, opts.path_n_max.max(opts.scalar.n_min));
                if n == n_theta {
                    coarse
                } else {
                    Arc::new(RadialGrid::new(3, needed, n)?)
                }
            }
        };
        let fields = raw_profiles(&grid)?;
        let moments = blend_moments(params, &fields, (m as f64).exp(), c1, c2, &q);
        let [bump1, ann2, ann1, bump2] = fields;
        let raw_a = StatePair::new(bump1, ann2, *params)?;
        let raw_b = StatePair::new(ann1, bump2, *params)?;
        for (name, raw) in [("first", &raw_a), ("second", &raw_b)] {
            if raw.overlap() != 0.0 {
                return Err(SolverError::SupportOverlap(format!(
                    "{name} endpoint supports meet on the grid (overlap {:.3e})",
                    raw.overlap()
                )));
            }
        }

        // Project each endpoint analytically; both components share the
        // endpoint's accumulated dilation, recorded for the interpolants.
        let (pair_a, s_a) = project_analytic(
            &grid,
            params,
            |r| shapes[0].eval(&q, r),
            |r| shapes[1].eval(&q, r),
        )?;
        let (pair_b, s_b) = project_analytic(
            &grid,
            params,
            |r| shapes[2].eval(&q, r),
            |r| shapes[3].eval(&q, r),
        )?;
        let j_a = pair_a.energy();
        let j_b = pair_b.energy();
        worst_excess = (j_a - level1).max(j_b - level2);
        if j_a <= level1 + eps && j_b <= level2 + eps {
            // Recover the normalization constants of the projected endpoint
            // components so the interpolants blend the projected states.
            let alpha = |field: &RadialField, shape: Shape, s: f64| -> f64 {
                let amp = (1.5 * s).exp();
                let (mut num, mut den) = (0.0, 0.0);
                for (&r, &v) in grid.nodes().iter().zip(field.values()) {
                    let base = amp * shape.eval(&q, s.exp() * r);
                    num += v * base;
                    den += base * base;
                }
                num / den
            };
            let profiles = [
                Profile {
                    shape: shapes[0],
                    alpha: alpha(pair_a.u1(), shapes[0], s_a),
                    s: s_a,
                },
                Profile {
                    shape: shapes[1],
                    alpha: alpha(pair_a.u2(), shapes[1], s_a),
                    s: s_a,
                },
                Profile {
                    shape: shapes[2],
                    alpha: alpha(pair_b.u1(), shapes[2], s_b),
                    s: s_b,
                },
                Profile {
                    shape: shapes[3],
                    alpha: alpha(pair_b.u2(), shapes[3], s_b),
                    s: s_b,
                },
            ];
            let recipe = PathRecipe {
                grid,
                q: Arc::clone(&q),
                params: *params,
                profiles,
                moments,
                intervals: DEFAULT_SEGMENT_INTERVALS,
            };
            let nodes = build_nodes(&recipe, DEFAULT_SEGMENT_INTERVALS, opts)?;
            let reference_level =
                nodes.iter().map(StatePair::energy).fold(f64::MIN, f64::max);
            let path = PathOnP {
                nodes,
                raw_a,
                raw_b,
                recipe,
                reference_level,
            };
            return Ok((pair_a, pair_b, path));
        }
        m += 1;
    }
    Err(SolverError::EnergyBudgetExceeded {
        level: worst_excess,
        budget: eps,
    })
}

/// Measures the endpoint-bump moments that determine every blend node's
/// kinetic and quartic integrals.
fn blend_moments(
    params: &CouplingParams,
    fields: &[RadialField; 4],
    shell_width: f64,
    c1: f64,
    c2: f64,
    q: &ShotProfile,
) -> BlendMoments {
    BlendMoments {
        k_bump1: fields[0].grad_norm_sq(),
        k_ann2: fields[1].grad_norm_sq(),
        k_ann1: fields[2].grad_norm_sq(),
        k_bump2: fields[3].grad_norm_sq(),
        q_bump1: fields[0].quartic(),
        q_ann2: fields[1].quartic(),
        q_ann1: fields[2].quartic(),
        q_bump2: fields[3].quartic(),
        mu1: params.mu1,
        mu2: params.mu2,
        kappa1: q.stiffness.sqrt() * c1,
        kappa2: q.stiffness.sqrt() * c2,
        shell_width,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_opts() -> SystemOptions {
        let mut opts = SystemOptions::default();
        // The endpoint bumps live on a domain an order of magnitude wider
        // than a single soliton core; a coarser resolution target keeps the
        // node count tame while levels stay accurate to ~1e-4 relative.
        opts.scalar.theta = 0.05;
        opts
    }

    fn test_params(beta: f64) -> CouplingParams {
        CouplingParams::new(1.0, 1.0, beta, 1.5, 1.5).unwrap()
    }

    #[test]
    fn endpoints_are_disjoint_and_within_the_level_budget() {
        let params = test_params(-1.0);
        let opts = test_opts();
        let eps = 2.5;
        let (ep_a, ep_b, path) = build_endpoints(&params, eps, &opts).unwrap();
        let (raw_a, raw_b) = path.raw_endpoints();
        assert_eq!(raw_a.overlap(), 0.0);
        assert_eq!(raw_b.overlap(), 0.0);
        assert_eq!(ep_a.overlap(), 0.0);
        assert_eq!(ep_b.overlap(), 0.0);
        for raw in [raw_a, raw_b] {
            assert!(raw.u1().min_value() >= 0.0 && raw.u2().min_value() >= 0.0);
        }
        let level = scaling_oracle(1.5, 1.0, 0).unwrap().energy;
        assert!(ep_a.energy() <= level + eps, "J_a = {}", ep_a.energy());
        assert!(ep_b.energy() <= level + eps, "J_b = {}", ep_b.energy());
        // Each endpoint is a near-soliton plus a low-energy far annulus, so
        // its level cannot sit far below the scalar level either.
        assert!(ep_a.energy() > 0.95 * level, "J_a = {}", ep_a.energy());
        assert!(ep_b.energy() > 0.95 * level, "J_b = {}", ep_b.energy());
    }

    #[test]
    fn tighter_budget_pushes_the_annuli_farther_out() {
        let params = test_params(-1.0);
        let opts = test_opts();
        let (_, _, loose) = build_endpoints(&params, 2.5, &opts).unwrap();
        let (ep_a, _, tight) = build_endpoints(&params, 0.25, &opts).unwrap();
        let level = scaling_oracle(1.5, 1.0, 0).unwrap().energy;
        assert!(ep_a.energy() <= level + 0.25);
        // The domain must have grown to host the farther annuli.
        let r_loose = loose.raw_endpoints().0.u1().grid().r_max();
        let r_tight = tight.raw_endpoints().0.u1().grid().r_max();
        assert!(
            r_tight > 2.0 * r_loose,
            "r_tight = {r_tight}, r_loose = {r_loose}"
        );
    }

    #[test]
    fn path_nodes_sit_on_the_constraint_with_vanishing_products() {
        let params = test_params(-1.0);
        let opts = test_opts();
        let (_, _, path) = build_endpoints(&params, 2.5, &opts).unwrap();
        assert_eq!(path.nodes().len(), 19);
        let level = scaling_oracle(1.5, 1.0, 0).unwrap().energy;
        for node in path.nodes() {
            assert_eq!(node.overlap(), 0.0);
            assert!(node.in_cone());
            let k = node.kinetic();
            let g = k - 0.75 * node.interaction();
            assert!(g.abs() <= 1e-10 * k, "|G|/K = {:.3e}", g.abs() / k);
            let (m1, m2) = node.masses();
            assert!((m1 / (1.5 * 1.5) - 1.0).abs() < 1e-12);
            assert!((m2 / (1.5 * 1.5) - 1.0).abs() < 1e-12);
        }
        // The path must cross a barrier above the endpoint levels; the
        // all-annulus middle concentrates under the fiber dilation into a
        // level far above it.
        let peak = path.reference_level();
        assert!(peak > 1.5 * level, "peak {peak} vs level {level}");
        assert!(peak.is_finite());
        // The middle node is the all-annulus state and carries the peak.
        let mid = path.nodes().len() / 2;
        assert_eq!(
            path.nodes()[mid].energy(),
            peak,
            "peak should sit at the junction"
        );
    }

    #[test]
    fn path_levels_do_not_depend_on_the_coupling() {
        let opts = test_opts();
        let (_, _, path) = build_endpoints(&test_params(-1.0), 2.5, &opts).unwrap();
        let (_, _, strong) = build_endpoints(&test_params(-500.0), 2.5, &opts).unwrap();
        for (a, b) in path.nodes().iter().zip(strong.nodes()) {
            assert_eq!(a.energy(), b.energy());
        }
        assert_eq!(path.reference_level(), strong.reference_level());
    }

    #[test]
    fn densified_path_refines_where_the_grid_allows() {
        let params = test_params(-1.0);
        let opts = test_opts();
        let (_, _, path) = build_endpoints(&params, 2.5, &opts).unwrap();
        let dense = path.densified(2, &opts).unwrap();
        assert!(
            dense.nodes().len() > path.nodes().len(),
            "no nodes inserted: {} vs {}",
            dense.nodes().len(),
            path.nodes().len()
        );
        assert!(dense.reference_level() >= path.reference_level() - 1e-9);
        for node in dense.nodes() {
            assert_eq!(node.overlap(), 0.0);
        }
    }

    #[test]
    fn pinned_domain_too_small_reports_support_overlap() {
        let params = test_params(-1.0);
        let mut opts = test_opts();
        opts.grid = Some((4.0, 2001));
        let err = build_endpoints(&params, 2.5, &opts).unwrap_err();
        assert!(matches!(err, SolverError::SupportOverlap(_)), "{err}");
    }

    #[test]
    fn pinned_domain_blocks_budget_escalation() {
        let params = test_params(-1.0);
        let mut opts = test_opts();
        // Hosts the first annulus placement but not the next e-fold, and the
        // demanded budget needs that escalation. Enough points to keep the
        // first placement's path nodes resolved.
        opts.grid = Some((30.0, 250_001));
        let err = build_endpoints(&params, 1e-6, &opts).unwrap_err();
        match err {
            SolverError::EnergyBudgetExceeded { level, budget } => {
                assert!(level > 1e-6, "achieved excess {level}");
                assert_eq!(budget, 1e-6);
            }
            other => panic!("expected budget error, got {other}"),
        }
    }
}
