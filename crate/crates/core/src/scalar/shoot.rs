//! Adaptive shooting for radial profiles `-u'' - (N-1)/r u' = lambda u + f(u)`.
//!
//! The integrator is an embedded Dormand–Prince 5(4) pair on the state
//! `(u, u', \int u^2, \int u^4, \int u'^2)` (quadrature accumulators ride
//! along at integrator accuracy). Integration starts from a fourth-order
//! series at the origin and watches for three events:
//!
//! - a sign change of `u` (node);
//! - a *regrowth* minimum: `u' = 0` with `u g(u) < 0`, i.e. the profile turns
//!   away from zero while the linear term dominates — the shot undershoots;
//! - amplitude passing the blow-up threshold — the shot overshoots.
//!
//! Separatrix amplitudes are located by bisection on the initial value; the
//! exponential tail `B r^{-(N-1)/2} e^{-kappa r}` is stitched on analytically
//! past the radius where the profile has decayed below a fixed fraction of
//! its peak, which removes the peel-off garbage every finite shot develops.

use crate::error::SolverError;
use crate::nonlinearity::Nonlinearity;
use crate::Result;

/// Trajectories whose amplitude exceeds this are classified as blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;
/// Fraction of the peak amplitude below which the analytic tail takes over.
const TAIL_SWITCH_FRACTION: f64 = 1e-7;

/// Outcome of a single shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShotOutcome {
    /// Counted the requested number of sign changes and stopped.
    Crossed { crossings: usize },
    /// Turned away from zero after the given number of sign changes.
    Regrew { crossings: usize },
    /// Exceeded the blow-up threshold after the given number of sign changes.
    BlewUp { crossings: usize },
    /// Reached the integration cap while still decaying.
    Decayed { crossings: usize },
}

impl ShotOutcome {
    pub fn crossings(&self) -> usize {
        match *self {
            ShotOutcome::Crossed { crossings }
            | ShotOutcome::Regrew { crossings }
            | ShotOutcome::BlewUp { crossings }
            | ShotOutcome::Decayed { crossings } => crossings,
        }
    }
}

/// One accepted integrator step: abscissa, profile, slope, running moments.
#[derive(Debug, Clone, Copy)]
struct Sample {
    r: f64,
    u: f64,
    v: f64,
    m2: f64,
    m4: f64,
    k2: f64,
}

/// Raw result of one shot.
#[derive(Debug, Clone)]
pub struct Shot {
    pub outcome: ShotOutcome,
    samples: Vec<Sample>,
}

/// One stored profile point with enough jet data for quintic re-evaluation:
/// value, slope, and the curvature supplied by the equation itself.
#[derive(Debug, Clone, Copy)]
struct SmoothSample {
    r: f64,
    u: f64,
    v: f64,
    w: f64,
}

/// A shot profile with its stitched exponential tail and exact-order moments.
#[derive(Debug, Clone)]
pub struct ShotProfile {
    /// Decay rate `sqrt(-lambda)`.
    pub kappa: f64,
    pub dim: u32,
    /// Amplitude at the origin that realizes the separatrix.
    pub amplitude: f64,
    /// Number of interior sign changes.
    pub node_count: usize,
    /// Jet samples from the origin to the tail switch radius.
    samples: Vec<SmoothSample>,
    /// Tail coefficient: `u ~ tail_b r^{-(N-1)/2} e^{-kappa r}` past `r_tail`.
    pub tail_b: f64,
    pub r_tail: f64,
    /// `\int u^2` including the tail contribution.
    pub mass: f64,
    /// `\int u^4` including the tail contribution.
    pub quartic: f64,
    /// `\int |grad u|^2` including the tail contribution.
    pub kinetic: f64,
    /// Largest `lambda + f'(|u|)` along the profile: the squared curvature
    /// scale of the core, used to pick resolutions.
    pub stiffness: f64,
}

/// Shooting configuration.
#[derive(Debug, Clone, Copy)]
pub struct ShootConfig {
    pub rel_tol: f64,
    pub abs_tol_scale: f64,
    /// Integration cap in units of `1/kappa`.
    pub r_cap_over_kappa: f64,
    pub max_steps: usize,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol_scale: 1e-13,
            r_cap_over_kappa: 60.0,
            max_steps: 200_000,
        }
    }
}

struct Rhs<'a> {
    lambda: f64,
    nl: &'a Nonlinearity,
    dim: f64,
    omega: f64,
}

impl Rhs<'_> {
    #[inline]
    fn g(&self, u: f64) -> f64 {
        self.lambda * u + self.nl.f(u)
    }

    #[inline]
    fn eval(&self, r: f64, y: &[f64; 5]) -> [f64; 5] {
        let [u, v, _, _, _] = *y;
        let w = self.omega * r.powi(self.dim as i32 - 1);
        [
            v,
            -(self.dim - 1.0) / r * v - self.g(u),
            w * u * u,
            w * u * u * u * u,
            w * v * v,
        ]
    }
}

const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates one shot from the origin; `stop_after` crossings turn the shot
/// into `Crossed` early (used while bisecting).
pub fn shoot(
    lambda: f64,
    nl: &Nonlinearity,
    dim: u32,
    amplitude: f64,
    stop_after: usize,
    cfg: &ShootConfig,
) -> Result<Shot> {
    if !(lambda < 0.0) {
        return Err(SolverError::InvalidInput(format!(
            "shooting requires lambda < 0, got {lambda}"
        )));
    }
    let kappa = (-lambda).sqrt();
    let rhs = Rhs {
        lambda,
        nl,
        dim: dim as f64,
        omega: crate::grid::unit_sphere_area(dim),
    };
    // Fourth-order series start away from the coordinate singularity.
    let nf = dim as f64;
    let r0 = (1e-4 / kappa.max(1.0)).min(1e-4);
    let g0 = rhs.g(amplitude);
    let g0_prime = lambda + rhs.nl.f_prime(amplitude);
    let c2 = -g0 / (2.0 * nf);
    let c4 = -g0_prime * c2 / (4.0 * (nf + 2.0));
    let u_start = amplitude + c2 * r0 * r0 + c4 * r0.powi(4);
    let v_start = 2.0 * c2 * r0 + 4.0 * c4 * r0.powi(3);
    // Moments on [0, r0] from the series (leading term only; r0 is tiny).
    let w0 = rhs.omega * r0.powi(dim as i32) / nf;
    let mut y = [
        u_start,
        v_start,
        w0 * amplitude * amplitude,
        w0 * amplitude.powi(4),
        0.0,
    ];
    let mut r = r0;
    let r_cap = cfg.r_cap_over_kappa / kappa;
    let mut h = 1e-3 / kappa.max(1.0);
    let mut samples = vec![
        Sample {
            r: 0.0,
            u: amplitude,
            v: 0.0,
            m2: 0.0,
            m4: 0.0,
            k2: 0.0,
        },
        Sample {
            r: r0,
            u: u_start,
            v: v_start,
            m2: y[2],
            m4: y[3],
            k2: y[4],
        },
    ];
    let mut crossings = 0usize;
    let a_tol = cfg.abs_tol_scale * amplitude.abs();

    for _step in 0..cfg.max_steps {
        if r >= r_cap {
            return Ok(Shot {
                outcome: ShotOutcome::Decayed { crossings },
                samples,
            });
        }
        h = h.min(r_cap - r).min(0.5 / kappa);
        // One embedded step.
        let mut k = [[0.0; 5]; 7];
        k[0] = rhs.eval(r, &y);
        for stage in 0..6 {
            let mut ys = y;
            for (i, yi) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    acc += DP_A[stage][j] * kj[i];
                }
                *yi += h * acc;
            }
            k[stage + 1] = rhs.eval(r + DP_C[stage] * h, &ys);
        }
        let mut y5 = y;
        let mut y4 = y;
        for i in 0..5 {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for j in 0..7 {
                s5 += DP_B5[j] * k[j][i];
                s4 += DP_B4[j] * k[j][i];
            }
            y5[i] += h * s5;
            y4[i] += h * s4;
        }
        let err = {
            let scale_u = a_tol + cfg.rel_tol * y[0].abs().max(y5[0].abs());
            let scale_v = a_tol * kappa + cfg.rel_tol * y[1].abs().max(y5[1].abs());
            let e_u = (y5[0] - y4[0]).abs() / scale_u;
            let e_v = (y5[1] - y4[1]).abs() / scale_v;
            e_u.max(e_v)
        };
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            continue;
        }
        let r_new = r + h;
        let (u_old, v_old) = (y[0], y[1]);
        let (u_new, v_new) = (y5[0], y5[1]);

        // Events within the step, located on the cubic Hermite interpolant.
        let interp = |theta: f64, f0: f64, d0: f64, f1: f64, d1: f64| -> f64 {
            let t2 = theta * theta;
            let t3 = t2 * theta;
            (2.0 * t3 - 3.0 * t2 + 1.0) * f0
                + (t3 - 2.0 * t2 + theta) * h * d0
                + (-2.0 * t3 + 3.0 * t2) * f1
                + (t3 - t2) * h * d1
        };
        let du_old = k[0][1];
        let du_new = rhs.eval(r_new, &y5)[1];
        // scan for the earliest event among u-crossing and u'-turning
        let mut event: Option<(f64, bool)> = None; // (theta, is_crossing)
        let scan = 16;
        let mut prev_u = u_old;
        let mut prev_v = v_old;
        for i in 1..=scan {
            let th = i as f64 / scan as f64;
            let cu = interp(th, u_old, v_old, u_new, v_new);
            let cv = interp(th, v_old, du_old, v_new, du_new);
            if prev_u != 0.0 && cu * prev_u < 0.0 {
                event = Some(((i as f64 - 0.5) / scan as f64, true));
                break;
            }
            if prev_v != 0.0 && cv * prev_v < 0.0 {
                // u' turned: regrowth if the profile bends away from zero
                let u_here = cu;
                if u_here * rhs.g(u_here) < 0.0 {
                    event = Some(((i as f64 - 0.5) / scan as f64, false));
                    break;
                }
            }
            prev_u = cu;
            prev_v = cv;
        }

        y = y5;
        r = r_new;
        samples.push(Sample {
            r,
            u: y[0],
            v: y[1],
            m2: y[2],
            m4: y[3],
            k2: y[4],
        });

        if let Some((_, is_crossing)) = event {
            if is_crossing {
                crossings += 1;
                if crossings >= stop_after {
                    return Ok(Shot {
                        outcome: ShotOutcome::Crossed { crossings },
                        samples,
                    });
                }
            } else {
                return Ok(Shot {
                    outcome: ShotOutcome::Regrew { crossings },
                    samples,
                });
            }
        }
        if y[0].abs() > BLOW_UP_THRESHOLD {
            return Ok(Shot {
                outcome: ShotOutcome::BlewUp { crossings },
                samples,
            });
        }
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }
    Err(SolverError::Diverged(
        "shooting exceeded the step budget".into(),
    ))
}

/// Locates the separatrix amplitude with exactly `k` sign changes followed by
/// decay, then builds the stitched profile.
pub fn separatrix_profile(
    lambda: f64,
    nl: &Nonlinearity,
    dim: u32,
    k: usize,
    cfg: &ShootConfig,
) -> Result<ShotProfile> {
    let kappa = (-lambda).sqrt();
    // Amplitude scale where the focusing term balances the linear one.
    let mut a_eq = 1.0;
    for _ in 0..80 {
        let f = nl.f(a_eq) + lambda * a_eq;
        let d = nl.f_prime(a_eq) + lambda;
        let step = if d.abs() > 1e-14 { f / d } else { 0.0 };
        a_eq -= step;
        if a_eq <= 0.0 {
            a_eq = 0.5;
        }
        if step.abs() < 1e-12 * a_eq.abs() {
            break;
        }
    }
    // Geometric ladder scan for a bracket around the k-separatrix.
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut a = 1.2 * a_eq;
    let classify = |outcome: ShotOutcome| -> bool {
        // true = high side (reached k+1 crossings)
        matches!(outcome, ShotOutcome::Crossed { crossings } if crossings > k)
    };
    for _ in 0..200 {
        let shot = shoot(lambda, nl, dim, a, k + 1, cfg)?;
        if classify(shot.outcome) {
            hi = Some(a);
            break;
        } else {
            lo = Some(a);
            a *= 1.5;
            if a > BLOW_UP_THRESHOLD {
                break;
            }
        }
    }
    let (mut lo, mut hi) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        _ => {
            return Err(SolverError::BracketFailure(format!(
                "no amplitude bracket for {k} sign changes at lambda = {lambda}"
            )))
        }
    };
    for _ in 0..200 {
        if (hi - lo) / hi < 1e-14 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let shot = shoot(lambda, nl, dim, mid, k + 1, cfg)?;
        if classify(shot.outcome) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let amplitude = 0.5 * (lo + hi);
    let shot = shoot(lambda, nl, dim, amplitude, usize::MAX, cfg)?;

    // Tail switch: last clean sample before the profile's floor.
    let sup = shot
        .samples
        .iter()
        .map(|s| s.u.abs())
        .fold(0.0, f64::max);
    let floor = TAIL_SWITCH_FRACTION * sup;
    let mut cut = shot.samples.len() - 1;
    for (i, s) in shot.samples.iter().enumerate() {
        if i > 0 && s.u.abs() < floor {
            cut = i;
            break;
        }
    }
    let tail = shot.samples[cut];
    if tail.u == 0.0 {
        return Err(SolverError::BracketFailure(
            "tail stitching hit an exact zero".into(),
        ));
    }
    let half = (dim as f64 - 1.0) / 2.0;
    let tail_b = tail.u * tail.r.powf(half) * (kappa * tail.r).exp();

    // Moments: accumulators up to the switch radius plus analytic tail.
    let omega = crate::grid::unit_sphere_area(dim);
    let e2 = (-2.0 * kappa * tail.r).exp();
    let mass_tail = omega * tail_b * tail_b * e2 / (2.0 * kappa);
    let kin_tail = omega * kappa * tail_b * tail_b * e2 / 2.0;
    let quart_tail = if dim == 3 {
        omega * tail_b.powi(4) * (-4.0 * kappa * tail.r).exp() / (4.0 * kappa * tail.r * tail.r)
    } else {
        0.0
    };
    // Jet samples: the curvature comes from the equation, so the stored data
    // reproduces the profile to quintic order between integrator steps.
    let nf = dim as f64;
    let g = |u: f64| lambda * u + nl.f(u);
    let samples: Vec<SmoothSample> = shot.samples[..=cut]
        .iter()
        .map(|s| {
            let w = if s.r == 0.0 {
                -g(s.u) / nf
            } else {
                -((nf - 1.0) / s.r * s.v + g(s.u))
            };
            SmoothSample {
                r: s.r,
                u: s.u,
                v: s.v,
                w,
            }
        })
        .collect();
    let stiffness = shot.samples[..=cut]
        .iter()
        .map(|s| lambda + nl.f_prime(s.u))
        .fold(-lambda, f64::max);
    Ok(ShotProfile {
        kappa,
        dim,
        amplitude,
        node_count: k,
        samples,
        tail_b,
        r_tail: tail.r,
        mass: tail.m2 + mass_tail,
        quartic: tail.m4 + quart_tail,
        kinetic: tail.k2 + kin_tail,
        stiffness,
    })
}

impl ShotProfile {
    /// Evaluates the stitched profile at any radius. Inside the sampled
    /// region this is a two-point quintic Hermite built from the stored value,
    /// slope, and equation-supplied curvature, so the evaluation reproduces
    /// the integrated solution to far below the integrator tolerance; past
    /// the switch radius the analytic tail takes over.
    pub fn eval(&self, r: f64) -> f64 {
        let last = self.samples.len() - 1;
        if r >= self.samples[last].r {
            let half = (self.dim as f64 - 1.0) / 2.0;
            return self.tail_b * r.powf(-half) * (-self.kappa * r).exp();
        }
        let i = match self
            .samples
            .binary_search_by(|s| s.r.partial_cmp(&r).unwrap())
        {
            Ok(i) => return self.samples[i].u,
            Err(i) => i.saturating_sub(1),
        };
        let a = self.samples[i];
        let b = self.samples[i + 1];
        let h = b.r - a.r;
        let t = (r - a.r) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        a.u * (1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5)
            + h * a.v * (t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5)
            + 0.5 * h * h * a.w * (t2 - 3.0 * t3 + 3.0 * t4 - t5)
            + b.u * (10.0 * t3 - 15.0 * t4 + 6.0 * t5)
            + h * b.v * (-4.0 * t3 + 7.0 * t4 - 3.0 * t5)
            + 0.5 * h * h * b.w * (t3 - 2.0 * t4 + t5)
    }

    /// Radius past which `|u| / sup |u|` drops below `rel`.
    pub fn decay_radius(&self, rel: f64) -> f64 {
        let sup = self.samples.iter().map(|s| s.u.abs()).fold(0.0, f64::max);
        let target = rel * sup;
        // solve tail_b r^{-half} e^{-kappa r} = target by fixed point on log
        let half = (self.dim as f64 - 1.0) / 2.0;
        let mut r = self.r_tail.max(1.0 / self.kappa);
        for _ in 0..60 {
            let val = (self.tail_b.abs() / target).ln() - half * r.ln();
            let r_new = (val / self.kappa).max(self.r_tail);
            if (r_new - r).abs() < 1e-10 * r {
                return r_new;
            }
            r = r_new;
        }
        r
    }
}
