//! Error types shared by every solver stage.

use thiserror::Error;

/// Failure modes of grid construction, projections, and the nonlinear solvers.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    /// Grid parameters are unusable (non-positive radius, too few points, ...).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two fields that must share a grid were built on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A field that must be nontrivial has (numerically) zero norm.
    #[error("zero field: {0}")]
    ZeroField(String),

    /// Requested dilation parameter exceeds the configured cap.
    #[error("dilation parameter {s} exceeds cap {cap}")]
    DilationOutOfRange { s: f64, cap: f64 },

    /// Fiber projection is undefined: the quartic interaction term is not positive.
    #[error("state outside the positivity cone: interaction term {p} <= 0")]
    NotInCone { p: f64 },

    /// A nonlinearity exponent violates the admissible mass-supercritical window.
    #[error("exponent {p} outside admissible window ({lo}, {hi})")]
    ExponentOutOfRange { p: f64, lo: f64, hi: f64 },

    /// Shooting could not bracket the requested separatrix.
    #[error("bracket failure: {0}")]
    BracketFailure(String),

    /// No shooting amplitude produced the requested number of sign changes.
    #[error("node target {k} unreachable: {reason}")]
    NodeTargetUnreachable { k: usize, reason: String },

    /// Mountain-pass endpoints could not be made disjointly supported on this grid.
    #[error("support overlap while building endpoints: {0}")]
    SupportOverlap(String),

    /// Endpoint energy exceeds the allotted budget above the scalar ground level.
    #[error("energy budget exceeded: endpoint level {level} > allowed {budget}")]
    EnergyBudgetExceeded { level: f64, budget: f64 },

    /// Path deformation stalled before reaching the gradient tolerance.
    #[error("mountain-pass deformation stalled: {0}")]
    Stagnation(String),

    /// Newton linear algebra hit a (numerically) singular matrix.
    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),

    /// An iteration left the trust region or exceeded its iteration budget.
    #[error("iteration diverged: {0}")]
    Diverged(String),

    /// Continuation could not advance even after step bisection.
    #[error("continuation stalled between beta = {from} and beta = {to}")]
    ContinuationStalled { from: f64, to: f64 },

    /// Converged system state has a non-negative multiplier, which is
    /// incompatible with a genuine localized two-component bound state; the
    /// candidate degenerates toward a one-component state and is rejected.
    #[error("Liouville-type rejection: lambda_{component} = {lambda} >= 0 at beta = {beta}")]
    LiouvilleSuspect {
        component: usize,
        lambda: f64,
        beta: f64,
    },

    /// Malformed run configuration or field file.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
