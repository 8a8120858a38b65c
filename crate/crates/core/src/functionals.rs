//! Energies, Pohozaev constraints, fiber maps, and manifold projections.
//!
//! Two settings share the same geometry:
//!
//! - the coupled cubic system in `R^3` with state `(u1, u2)`, kinetic term
//!   `K = sum \int |grad u_i|^2` and quartic interaction
//!   `P = mu1 \int u1^4 + mu2 \int u2^4 + 2 beta \int u1^2 u2^2`; energy
//!   `J = K/2 - P/4`, constraint `G = K - (3/4) P`;
//! - a scalar problem with a general power-sum nonlinearity, energy
//!   `I = K/2 - \int F(u)` and constraint `G = K - (N/2) \int Ft(u)`.
//!
//! Along the mass-preserving dilation the energy becomes an explicit function
//! of the dilation parameter (the *fiber map*); its strict maximizer gives the
//! projection onto the natural constraint set. Projections iterate
//! dilate/renormalize until the measured constraint residual is at round-off
//! level of the quadrature, so projected states satisfy the constraint as a
//! *measured* quantity, not merely in cached arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::field::RadialField;
use crate::nonlinearity::Nonlinearity;
use crate::Result;

/// Physical parameters of the two-component problem: self-interactions
/// `mu_i > 0`, inter-species coupling `beta`, and mass radii `a_i > 0`
/// (the constraints read `\int u_i^2 = a_i^2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub a1: f64,
    pub a2: f64,
}

impl CouplingParams {
    pub fn new(mu1: f64, mu2: f64, beta: f64, a1: f64, a2: f64) -> Result<Self> {
        for (name, v) in [("mu1", mu1), ("mu2", mu2), ("a1", a1), ("a2", a2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !beta.is_finite() {
            return Err(SolverError::InvalidInput("beta must be finite".into()));
        }
        Ok(Self {
            mu1,
            mu2,
            beta,
            a1,
            a2,
        })
    }

    /// With `beta > -sqrt(mu1 mu2)` the interaction term is positive on every
    /// nontrivial state, so the dilation cone is the whole constraint sphere.
    pub fn admits_full_cone(&self) -> bool {
        self.beta > -(self.mu1 * self.mu2).sqrt()
    }

    /// Component-swapped parameters (for symmetry checks).
    pub fn swapped(&self) -> Self {
        Self {
            mu1: self.mu2,
            mu2: self.mu1,
            beta: self.beta,
            a1: self.a2,
            a2: self.a1,
        }
    }
}

/// A two-component state on a shared three-dimensional radial grid.
#[derive(Debug, Clone)]
pub struct StatePair {
    u1: RadialField,
    u2: RadialField,
    params: CouplingParams,
}

/// Result of projecting a pair onto the natural constraint set.
#[derive(Debug, Clone)]
pub struct PairProjection {
    pub pair: StatePair,
    /// Accumulated dilation parameter over all projection passes.
    pub total_shift: f64,
    pub passes: usize,
    /// Measured `|G| / (K + |P|)` of the returned pair.
    pub residual: f64,
    /// Largest relative mass drift the dilation introduced before renormalization.
    pub mass_drift: f64,
}

/// Number of dilate/renormalize passes after which projection gives up.
pub(crate) const PROJECTION_MAX_PASSES: usize = 6;
/// Dilation parameters below this are treated as converged.
pub(crate) const PROJECTION_SHIFT_TOL: f64 = 5e-13;

impl StatePair {
    pub fn new(u1: RadialField, u2: RadialField, params: CouplingParams) -> Result<Self> {
        u1.check_same_grid(&u2)?;
        if u1.grid().dim() != 3 {
            return Err(SolverError::InvalidInput(
                "the quartic two-component problem is posed in dimension 3".into(),
            ));
        }
        Ok(Self { u1, u2, params })
    }

    pub fn u1(&self) -> &RadialField {
        &self.u1
    }

    pub fn u2(&self) -> &RadialField {
        &self.u2
    }

    pub fn params(&self) -> &CouplingParams {
        &self.params
    }

    pub fn grid(&self) -> &std::sync::Arc<crate::grid::RadialGrid> {
        self.u1.grid()
    }

    /// Swaps the two components together with their parameters.
    pub fn swapped(&self) -> Self {
        Self {
            u1: self.u2.clone(),
            u2: self.u1.clone(),
            params: self.params.swapped(),
        }
    }

    pub fn kinetic(&self) -> f64 {
        self.u1.grad_norm_sq() + self.u2.grad_norm_sq()
    }

    /// Quartic interaction `P`, the scale-cubed part of the energy.
    pub fn interaction(&self) -> f64 {
        let p = &self.params;
        let cross = self
            .u1
            .overlap(&self.u2)
            .expect("components share a grid by construction");
        p.mu1 * self.u1.quartic() + p.mu2 * self.u2.quartic() + 2.0 * p.beta * cross
    }

    /// `\int u1^2 u2^2`.
    pub fn overlap(&self) -> f64 {
        self.u1
            .overlap(&self.u2)
            .expect("components share a grid by construction")
    }

    pub fn masses(&self) -> (f64, f64) {
        (self.u1.mass(), self.u2.mass())
    }

    /// `J = K/2 - P/4`.
    pub fn energy(&self) -> f64 {
        0.5 * self.kinetic() - 0.25 * self.interaction()
    }

    /// Per-component share of `J`, with the cross term split evenly; the two
    /// shares sum to `energy()` and swap under component exchange.
    pub fn component_energies(&self) -> (f64, f64) {
        let p = &self.params;
        let cross = 0.25 * p.beta * self.overlap();
        let comp = |u: &RadialField, mu: f64| 0.5 * u.grad_norm_sq() - 0.25 * mu * u.quartic();
        (
            comp(&self.u1, p.mu1) - cross,
            comp(&self.u2, p.mu2) - cross,
        )
    }

    /// Pohozaev constraint `G = K - (3/4) P`; zero on the natural manifold.
    pub fn pohozaev(&self) -> f64 {
        self.kinetic() - 0.75 * self.interaction()
    }

    /// Whether the pair lies in the dilation cone `P > 0`.
    pub fn in_cone(&self) -> bool {
        self.interaction() > 0.0
    }

    /// Energy along the dilation fiber, in cached-moment arithmetic:
    /// `Psi(s) = e^{2s} K / 2 - e^{3s} P / 4`.
    pub fn fiber_energy(&self, s: f64) -> f64 {
        0.5 * (2.0 * s).exp() * self.kinetic() - 0.25 * (3.0 * s).exp() * self.interaction()
    }

    /// The unique maximizer of the fiber map, `e^{s} = 4K / (3P)`.
    pub fn fiber_shift(&self) -> Result<f64> {
        let k = self.kinetic();
        let p = self.interaction();
        if !(p > 0.0) {
            return Err(SolverError::NotInCone { p });
        }
        if k <= 0.0 {
            return Err(SolverError::ZeroField(
                "fiber projection of a state with zero kinetic energy".into(),
            ));
        }
        Ok((4.0 * k / (3.0 * p)).ln())
    }

    /// Applies the same dilation to both components.
    pub fn dilate(&self, s: f64) -> Result<Self> {
        Ok(Self {
            u1: self.u1.dilate(s)?,
            u2: self.u2.dilate(s)?,
            params: self.params,
        })
    }

    /// Rescales each component's amplitude to its target mass `a_i^2`.
    pub fn renormalized(&self) -> Result<Self> {
        Ok(Self {
            u1: self.u1.renormalized_to_mass(self.params.a1 * self.params.a1)?,
            u2: self.u2.renormalized_to_mass(self.params.a2 * self.params.a2)?,
            params: self.params,
        })
    }

    /// Projects onto the natural constraint set by iterating the fiber shift
    /// with mass renormalization until the *measured* constraint vanishes.
    pub fn project(&self) -> Result<PairProjection> {
        let mut cur = self.clone();
        let mut total = 0.0;
        let mut drift: f64 = 0.0;
        let mut passes = 0;
        for pass in 0..PROJECTION_MAX_PASSES {
            let s = cur.fiber_shift()?;
            if s.abs() < PROJECTION_SHIFT_TOL {
                break;
            }
            let dilated = cur.dilate(s)?;
            let (a1sq, a2sq) = (
                self.params.a1 * self.params.a1,
                self.params.a2 * self.params.a2,
            );
            let (m1, m2) = dilated.masses();
            drift = drift
                .max((m1 / a1sq - 1.0).abs())
                .max((m2 / a2sq - 1.0).abs());
            cur = dilated.renormalized()?;
            total += s;
            passes = pass + 1;
        }
        let k = cur.kinetic();
        let p = cur.interaction();
        let residual = (k - 0.75 * p).abs() / (k + p.abs());
        Ok(PairProjection {
            pair: cur,
            total_shift: total,
            passes,
            residual,
            mass_drift: drift,
        })
    }

    /// Replaces the components (used by solvers that update nodal data).
    pub fn with_components(&self, u1: RadialField, u2: RadialField) -> Result<Self> {
        Self::new(u1, u2, self.params)
    }
}

// ---------------------------------------------------------------------------
// Scalar functionals
// ---------------------------------------------------------------------------

/// Scalar energy `I = K/2 - \int F(u)`.
pub fn scalar_energy(u: &RadialField, nl: &Nonlinearity) -> f64 {
    let f_samples: Vec<f64> = u.values().iter().map(|&v| nl.big_f(v)).collect();
    0.5 * u.grad_norm_sq() - u.grid().integrate(&f_samples)
}

/// Scalar Pohozaev constraint `G = K - (N/2) \int Ft(u)`.
pub fn scalar_pohozaev(u: &RadialField, nl: &Nonlinearity) -> f64 {
    let n = u.grid().dim() as f64;
    let ft: Vec<f64> = u.values().iter().map(|&v| nl.tilde_f(v)).collect();
    u.grad_norm_sq() - 0.5 * n * u.grid().integrate(&ft)
}

/// Per-term moments `\int |u|^{p_i}` reused across fiber evaluations.
fn power_moments(u: &RadialField, nl: &Nonlinearity) -> Vec<f64> {
    nl.terms().iter().map(|t| u.abs_moment(t.p)).collect()
}

/// Scalar fiber map `Psi(s) = I(s * u)` in cached-moment arithmetic.
pub fn scalar_fiber_energy(u: &RadialField, nl: &Nonlinearity, s: f64) -> f64 {
    let n = u.grid().dim() as f64;
    let k = u.grad_norm_sq();
    let moments = power_moments(u, nl);
    let mut value = 0.5 * (2.0 * s).exp() * k;
    for (t, m) in nl.terms().iter().zip(&moments) {
        let theta = n * (t.p - 2.0) / 2.0;
        value -= t.mu / t.p * (theta * s).exp() * m;
    }
    value
}

/// Maximizer of the scalar fiber map. Closed form for the cubic power;
/// otherwise a safeguarded bisection bracketing the unique root of `Psi'`,
/// finished with two Newton steps.
pub fn scalar_fiber_shift(u: &RadialField, nl: &Nonlinearity) -> Result<f64> {
    let n = u.grid().dim() as f64;
    let k = u.grad_norm_sq();
    if k <= 0.0 {
        return Err(SolverError::ZeroField(
            "fiber projection of a state with zero kinetic energy".into(),
        ));
    }
    if let Some(mu) = nl.as_cubic() {
        let m4 = u.abs_moment(4.0);
        if !(m4 > 0.0) {
            return Err(SolverError::ZeroField("vanishing quartic moment".into()));
        }
        // G(s * u) = e^{2s} K - (3 mu / 4) e^{3s} m4 = 0 (N = 3).
        return Ok((4.0 * k / (3.0 * mu * m4)).ln());
    }
    // psi(s) = sum c_i e^{(theta_i - 2) s} - K with c_i > 0 and theta_i > 2:
    // strictly increasing, so the root is unique.
    let moments = power_moments(u, nl);
    let coeffs: Vec<(f64, f64)> = nl
        .terms()
        .iter()
        .zip(&moments)
        .map(|(t, m)| {
            let theta = n * (t.p - 2.0) / 2.0;
            (t.mu * theta / t.p * m, theta - 2.0)
        })
        .collect();
    if coeffs.iter().all(|(c, _)| *c <= 0.0) {
        return Err(SolverError::ZeroField("vanishing nonlinear moments".into()));
    }
    let psi = |s: f64| -> f64 {
        coeffs
            .iter()
            .map(|(c, e)| c * (e * s).exp())
            .sum::<f64>()
            - k
    };
    let psi_prime = |s: f64| -> f64 {
        coeffs
            .iter()
            .map(|(c, e)| c * e * (e * s).exp())
            .sum::<f64>()
    };
    let (mut lo, mut hi);
    if psi(0.0) < 0.0 {
        hi = 1.0;
        while psi(hi) < 0.0 {
            hi += 1.0;
            if hi > 60.0 {
                return Err(SolverError::BracketFailure(
                    "scalar fiber root beyond s = 60".into(),
                ));
            }
        }
        lo = hi - 1.0;
    } else {
        lo = -1.0;
        while psi(lo) > 0.0 {
            lo -= 1.0;
            if lo < -60.0 {
                return Err(SolverError::BracketFailure(
                    "scalar fiber root beyond s = -60".into(),
                ));
            }
        }
        hi = lo + 1.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..2 {
        let d = psi_prime(s);
        if d.abs() > 0.0 {
            s -= psi(s) / d;
        }
    }
    Ok(s)
}

/// Result of projecting a scalar field onto the natural constraint set.
#[derive(Debug, Clone)]
pub struct ScalarProjection {
    pub field: RadialField,
    pub total_shift: f64,
    pub passes: usize,
    /// Measured `|G| / K` of the returned field.
    pub residual: f64,
}

/// Projects a scalar field onto `G = 0` at fixed mass, iterating the fiber
/// shift until the measured constraint is at quadrature round-off.
pub fn project_scalar(u: &RadialField, nl: &Nonlinearity) -> Result<ScalarProjection> {
    let target_mass = u.mass();
    if !(target_mass > 0.0) {
        return Err(SolverError::ZeroField("projecting the zero field".into()));
    }
    let mut cur = u.clone();
    let mut total = 0.0;
    let mut passes = 0;
    for pass in 0..PROJECTION_MAX_PASSES {
        let s = scalar_fiber_shift(&cur, nl)?;
        if s.abs() < PROJECTION_SHIFT_TOL {
            break;
        }
        cur = cur.dilate(s)?.renormalized_to_mass(target_mass)?;
        total += s;
        passes = pass + 1;
    }
    let residual = scalar_pohozaev(&cur, nl).abs() / cur.grad_norm_sq();
    Ok(ScalarProjection {
        field: cur,
        total_shift: total,
        passes,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn grid(n: usize, r_max: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(3, r_max, n).unwrap())
    }

    fn params() -> CouplingParams {
        CouplingParams::new(1.0, 2.0, -3.0, 1.0, 1.5).unwrap()
    }

    fn bump_pair(g: &Arc<RadialGrid>) -> StatePair {
        let u1 = RadialField::from_fn(Arc::clone(g), |r| (-r * r).exp());
        let u2 = RadialField::from_fn(Arc::clone(g), |r| r * r * (-(r - 1.0) * (r - 1.0)).exp());
        StatePair::new(u1, u2, params()).unwrap()
    }

    #[test]
    fn gaussian_pair_energy_matches_closed_form() {
        // u2 = 0, u1 = e^{-r^2}: J = K/2 - mu1 q/4 with
        // K = (3/2) pi sqrt(pi/2), q = pi^{3/2}/8.
        let g = grid(2001, 8.0);
        let u1 = RadialField::from_fn(Arc::clone(&g), |r| (-r * r).exp());
        let u2 = RadialField::zeros(Arc::clone(&g));
        let pair = StatePair::new(u1, u2, params()).unwrap();
        let pi = std::f64::consts::PI;
        let k = 1.5 * pi * (pi / 2.0).sqrt();
        let q = pi.powf(1.5) / 8.0;
        assert_relative_eq!(pair.energy(), 0.5 * k - 0.25 * q, max_relative = 1e-9);
        assert_relative_eq!(pair.pohozaev(), k - 0.75 * q, max_relative = 1e-9);
    }

    #[test]
    fn fiber_energy_tracks_dilated_energy() {
        let g = grid(4001, 10.0);
        let pair = bump_pair(&g);
        for s in [-0.8, -0.3, 0.2, 0.6] {
            let direct = pair.dilate(s).unwrap().energy();
            let fiber = pair.fiber_energy(s);
            assert_relative_eq!(direct, fiber, max_relative = 2e-4);
        }
    }

    #[test]
    fn fiber_shift_maximizes_fiber_energy() {
        let g = grid(801, 8.0);
        let pair = bump_pair(&g);
        let s_star = pair.fiber_shift().unwrap();
        let top = pair.fiber_energy(s_star);
        for i in 0..=400 {
            let s = s_star - 2.0 + 4.0 * i as f64 / 400.0;
            assert!(pair.fiber_energy(s) <= top + 1e-12 * top.abs());
        }
    }

    #[test]
    fn projection_lands_on_manifold_measurably() {
        let g = grid(4001, 10.0);
        let pair = bump_pair(&g);
        let proj = pair.project().unwrap();
        assert!(
            proj.residual < 1e-10,
            "measured constraint residual {:.3e}",
            proj.residual
        );
        let (m1, m2) = proj.pair.masses();
        assert_relative_eq!(m1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(m2, 2.25, max_relative = 1e-12);
        // On the manifold J = K/6.
        assert_relative_eq!(
            proj.pair.energy(),
            proj.pair.kinetic() / 6.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn projection_outside_cone_is_rejected() {
        // Strongly overlapping components with beta << -sqrt(mu1 mu2).
        let g = grid(801, 6.0);
        let u1 = RadialField::from_fn(Arc::clone(&g), |r| (-r * r).exp());
        let u2 = RadialField::from_fn(Arc::clone(&g), |r| (-r * r).exp());
        let p = CouplingParams::new(1.0, 1.0, -50.0, 1.0, 1.0).unwrap();
        let pair = StatePair::new(u1, u2, p).unwrap();
        assert!(!pair.in_cone());
        assert!(matches!(
            pair.project(),
            Err(SolverError::NotInCone { .. })
        ));
    }

    #[test]
    fn energy_even_in_each_component() {
        let g = grid(801, 6.0);
        let pair = bump_pair(&g);
        let flipped = pair
            .with_components(pair.u1().scaled(-1.0), pair.u2().clone())
            .unwrap();
        assert_eq!(pair.energy(), flipped.energy());
        assert_eq!(pair.pohozaev(), flipped.pohozaev());
    }

    #[test]
    fn swap_symmetry() {
        let g = grid(801, 6.0);
        let pair = bump_pair(&g);
        let swapped = pair.swapped();
        assert_eq!(pair.energy(), swapped.energy());
        assert_eq!(pair.pohozaev(), swapped.pohozaev());
        assert_eq!(pair.overlap(), swapped.overlap());
    }

    #[test]
    fn scalar_cubic_closed_form_shift_matches_general_solver() {
        let g = grid(2001, 8.0);
        let u = RadialField::from_fn(Arc::clone(&g), |r| (-r * r).exp() * (1.0 + 0.2 * r));
        let cubic = Nonlinearity::cubic(3, 1.7).unwrap();
        // Same physics written as a "sum" that is not detected as cubic:
        let split = Nonlinearity::new(
            3,
            vec![
                crate::nonlinearity::PowerTerm { mu: 0.9, p: 4.0 },
                crate::nonlinearity::PowerTerm { mu: 0.8, p: 4.0 },
            ],
        )
        .unwrap();
        let s1 = scalar_fiber_shift(&u, &cubic).unwrap();
        let s2 = scalar_fiber_shift(&u, &split).unwrap();
        assert_relative_eq!(s1, s2, epsilon = 1e-11);
    }

    #[test]
    fn scalar_projection_measured_residual() {
        let g = grid(4001, 10.0);
        let u = RadialField::from_fn(Arc::clone(&g), |r| (-0.7 * r * r).exp());
        let nl = Nonlinearity::new(
            3,
            vec![
                crate::nonlinearity::PowerTerm { mu: 1.0, p: 3.5 },
                crate::nonlinearity::PowerTerm { mu: 0.5, p: 4.5 },
            ],
        )
        .unwrap();
        let proj = project_scalar(&u, &nl).unwrap();
        assert!(
            proj.residual < 1e-10,
            "measured scalar residual {:.3e}",
            proj.residual
        );
        assert_relative_eq!(proj.field.mass(), u.mass(), max_relative = 1e-12);
        // Fiber maximality for the general nonlinearity.
        let top = scalar_fiber_energy(&proj.field, &nl, 0.0);
        for i in 0..=200 {
            let s = -1.0 + 2.0 * i as f64 / 200.0;
            assert!(scalar_fiber_energy(&proj.field, &nl, s) <= top + 1e-11 * top.abs());
        }
    }

    #[test]
    fn scalar_coercivity_on_manifold() {
        // On G = 0: I >= (N/4)(alpha - 2 - 4/N) \int F(u).
        let g = grid(2001, 8.0);
        let nl = Nonlinearity::new(
            3,
            vec![
                crate::nonlinearity::PowerTerm { mu: 0.8, p: 3.6 },
                crate::nonlinearity::PowerTerm { mu: 1.2, p: 4.8 },
            ],
        )
        .unwrap();
        for k in 0..5 {
            let w = 0.5 + 0.3 * k as f64;
            let u = RadialField::from_fn(Arc::clone(&g), move |r| (-w * r * r).exp());
            let proj = project_scalar(&u, &nl).unwrap();
            let f_int = {
                let s: Vec<f64> = proj.field.values().iter().map(|&v| nl.big_f(v)).collect();
                proj.field.grid().integrate(&s)
            };
            let lhs = scalar_energy(&proj.field, &nl);
            let rhs = 0.75 * (nl.alpha() - 2.0 - 4.0 / 3.0) * f_int;
            assert!(
                lhs >= rhs - 1e-9 * lhs.abs().max(1.0),
                "coercivity violated: I = {lhs}, bound = {rhs}"
            );
        }
    }
}
