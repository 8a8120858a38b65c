//! Discrete radial fields and the measurements the solvers rely on.
//!
//! A [`RadialField`] stores nodal values of a radial profile on a shared
//! [`RadialGrid`]. Mass and kinetic moments are memoized per field (fields are
//! immutable; every operation returns a fresh field). The mass-preserving
//! dilation `(s * u)(x) = e^{Ns/2} u(e^s x)` resamples through the monotone
//! cubic interpolant and truncates at the grid boundary.

use std::sync::Arc;

use once_cell::sync::OnceCell;

use crate::error::SolverError;
use crate::grid::RadialGrid;
use crate::interp::Pchip;
use crate::Result;

/// Largest dilation parameter accepted by [`RadialField::dilate`]; beyond this
/// the resampled profile would collapse onto a few cells or fall off the grid.
pub const S_CAP: f64 = 5.0;

/// Nodal values of a radial profile, with memoized quadratic moments.
#[derive(Debug)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    mass: OnceCell<f64>,
    grad_sq: OnceCell<f64>,
}

impl Clone for RadialField {
    fn clone(&self) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.clone(),
            mass: self.mass.clone(),
            grad_sq: self.grad_sq.clone(),
        }
    }
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SolverError::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidInput(
                "field contains non-finite values".into(),
            ));
        }
        Ok(Self {
            grid,
            values,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self {
            grid,
            values,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `\int u^2` over `R^N` (quadrature on the shared grid).
    pub fn mass(&self) -> f64 {
        *self.mass.get_or_init(|| {
            let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
            self.grid.integrate(&sq)
        })
    }

    /// `\int |grad u|^2`, by fourth-order nodal differentiation plus quadrature.
    pub fn grad_norm_sq(&self) -> f64 {
        *self.grad_sq.get_or_init(|| {
            let d = self.derivative();
            let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
            self.grid.integrate(&sq)
        })
    }

    /// `\int |u|^p` for real `p > 0`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let samples: Vec<f64> = self.values.iter().map(|v| v.abs().powf(p)).collect();
        self.grid.integrate(&samples)
    }

    /// `\int u^4`; the quartic self-interaction moment.
    pub fn quartic(&self) -> f64 {
        let samples: Vec<f64> = self.values.iter().map(|v| v * v * v * v).collect();
        self.grid.integrate(&samples)
    }

    /// `\int u^2 v^2`; the cross-interaction overlap of two components.
    pub fn overlap(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        let samples: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * a * b * b)
            .collect();
        Ok(self.grid.integrate(&samples))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Ratio of the last interior nodal magnitude to the sup norm; a proxy for
    /// how much of the tail the grid truncates.
    pub fn boundary_ratio(&self) -> f64 {
        let sup = self.sup_norm();
        if sup == 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        self.values[n - 2].abs() / sup
    }

    /// Nodal radial derivative, fourth-order in the interior with an even
    /// extension across the origin; one-sided stencils at the outer edge.
    pub fn derivative(&self) -> Vec<f64> {
        let u = &self.values;
        let n = u.len();
        let h = self.grid.spacing();
        let mut d = vec![0.0; n];
        // r = 0: radial symmetry forces u'(0) = 0.
        d[0] = 0.0;
        if n >= 5 {
            // Even extension: u_{-1} = u_1.
            d[1] = (u[1] - 8.0 * u[0] + 8.0 * u[2] - u[3]) / (12.0 * h);
            for j in 2..n - 2 {
                d[j] = (u[j - 2] - 8.0 * u[j - 1] + 8.0 * u[j + 1] - u[j + 2]) / (12.0 * h);
            }
            let j = n - 2;
            d[j] = (-u[j - 3] + 6.0 * u[j - 2] - 18.0 * u[j - 1] + 10.0 * u[j] + 3.0 * u[j + 1])
                / (12.0 * h);
            let j = n - 1;
            d[j] = (3.0 * u[j - 4] - 16.0 * u[j - 3] + 36.0 * u[j - 2] - 48.0 * u[j - 1]
                + 25.0 * u[j])
                / (12.0 * h);
        } else {
            for j in 1..n - 1 {
                d[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
            }
            d[n - 1] = (u[n - 1] - u[n - 2]) / h;
        }
        d
    }

    /// `-(u'' + (N-1)/r u')` by second-order stencils; the symmetric limit
    /// `-N u''(0)` is used at the origin and the Dirichlet node is set to zero.
    pub fn apply_laplacian(&self) -> Self {
        let u = &self.values;
        let n = u.len();
        let h = self.grid.spacing();
        let h2 = h * h;
        let nf = self.grid.dim() as f64;
        let nodes = self.grid.nodes();
        let mut out = vec![0.0; n];
        out[0] = -nf * 2.0 * (u[1] - u[0]) / h2;
        for j in 1..n - 1 {
            let upp = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / h2;
            let up = (u[j + 1] - u[j - 1]) / (2.0 * h);
            out[j] = -(upp + (nf - 1.0) / nodes[j] * up);
        }
        out[n - 1] = 0.0;
        Self {
            grid: Arc::clone(&self.grid),
            values: out,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        }
    }

    /// Fourth-order evaluation of `-(u'' + (N-1)/r u')`, used when measuring
    /// how well a discrete profile satisfies the continuum equation. Falls
    /// back to second order on the cell nearest the outer boundary.
    pub fn apply_laplacian_hi(&self) -> Self {
        let u = &self.values;
        let n = u.len();
        let h = self.grid.spacing();
        let h2 = h * h;
        let nf = self.grid.dim() as f64;
        let nodes = self.grid.nodes();
        let mut out = self.apply_laplacian().values;
        if n >= 7 {
            // u''(0) from the even extension; the h^4 error term cancels.
            let upp0 = (16.0 * u[1] - u[2] - 15.0 * u[0]) / (6.0 * h2);
            out[0] = -nf * upp0;
            for j in 1..n - 2 {
                // Even extension across r = 0 supplies the ghost values at j = 1.
                let um2 = if j >= 2 { u[j - 2] } else { u[1] };
                let um1 = u[j - 1];
                let up1 = u[j + 1];
                let up2 = u[j + 2];
                let upp = (-um2 + 16.0 * um1 - 30.0 * u[j] + 16.0 * up1 - up2) / (12.0 * h2);
                let up = (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * h);
                out[j] = -(upp + (nf - 1.0) / nodes[j] * up);
            }
        }
        out[n - 1] = 0.0;
        Self {
            grid: Arc::clone(&self.grid),
            values: out,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        }
    }

    /// Mass-preserving dilation `e^{Ns/2} u(e^s r)`, resampled on the same
    /// grid; values carried past `r_max` are truncated to zero.
    pub fn dilate(&self, s: f64) -> Result<Self> {
        if !s.is_finite() || s.abs() > S_CAP {
            return Err(SolverError::DilationOutOfRange { s, cap: S_CAP });
        }
        if s == 0.0 {
            return Ok(self.clone());
        }
        let nf = self.grid.dim() as f64;
        let amp = (nf * s / 2.0).exp();
        let scale = s.exp();
        let p = Pchip::new(self.grid.nodes(), &self.values);
        let r_max = self.grid.r_max();
        let values: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&r| {
                let rq = scale * r;
                if rq > r_max {
                    0.0
                } else {
                    amp * p.eval(rq)
                }
            })
            .collect();
        let mut out = Self {
            grid: Arc::clone(&self.grid),
            values,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        };
        out.values[self.grid.len() - 1] = 0.0;
        Ok(out)
    }

    /// Interpolant of the nodal data (for export or cross-grid resampling).
    pub fn interpolant(&self) -> Pchip {
        Pchip::new(self.grid.nodes(), &self.values)
    }

    /// Resamples this field onto another grid, zero beyond the source support.
    pub fn resample_to(&self, grid: Arc<RadialGrid>) -> Self {
        let p = self.interpolant();
        let src_max = self.grid.r_max();
        let values: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| if r > src_max { 0.0 } else { p.eval(r) })
            .collect();
        let mut out = Self {
            grid,
            values,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        };
        let n = out.values.len();
        out.values[n - 1] = 0.0;
        out
    }

    /// Returns `alpha * self`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let values = self.values.iter().map(|v| alpha * v).collect();
        Self {
            grid: Arc::clone(&self.grid),
            values,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        }
    }

    /// Returns `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values,
            mass: OnceCell::new(),
            grad_sq: OnceCell::new(),
        })
    }

    /// Rescales amplitude so that the measured mass is exactly `target`.
    pub fn renormalized_to_mass(&self, target: f64) -> Result<Self> {
        let m = self.mass();
        if m <= 0.0 || !m.is_finite() {
            return Err(SolverError::ZeroField(
                "cannot renormalize a field with vanishing mass".into(),
            ));
        }
        Ok(self.scaled((target / m).sqrt()))
    }

    /// Largest radius at which `|u|` exceeds `rel_tol * sup|u|` (0 for the zero field).
    pub fn support_radius(&self, rel_tol: f64) -> f64 {
        let sup = self.sup_norm();
        if sup == 0.0 {
            return 0.0;
        }
        let thresh = rel_tol * sup;
        let nodes = self.grid.nodes();
        for j in (0..self.values.len()).rev() {
            if self.values[j].abs() > thresh {
                return nodes[j];
            }
        }
        0.0
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.as_ref() == other.grid.as_ref() {
            Ok(())
        } else {
            Err(SolverError::GridMismatch(
                "fields live on different grids".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, r_max: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(3, r_max, n).unwrap())
    }

    /// `C^infty` bump supported in `[0, r0)`; no closed-form moments, used for
    /// relative conservation checks.
    fn compact_bump(r: f64, r0: f64) -> f64 {
        let x = r / r0;
        if x >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - x * x)).exp()
        }
    }

    #[test]
    fn gaussian_mass_matches_closed_form() {
        // \int_{R^3} e^{-2 r^2} = (pi/2)^{3/2}.
        let g = grid(2001, 8.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp());
        let exact = (std::f64::consts::PI / 2.0).powf(1.5);
        assert_relative_eq!(u.mass(), exact, max_relative = 1e-10);
    }

    #[test]
    fn gaussian_kinetic_matches_closed_form() {
        // \int |grad e^{-r^2}|^2 = 3 pi (pi/2)^{1/2} / 2.
        let g = grid(2001, 8.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp());
        let exact = 1.5 * std::f64::consts::PI * (std::f64::consts::PI / 2.0).sqrt();
        assert_relative_eq!(u.grad_norm_sq(), exact, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_quartic_matches_closed_form() {
        // \int e^{-4 r^2} = (pi/4)^{3/2} = pi^{3/2}/8.
        let g = grid(2001, 8.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp());
        let exact = std::f64::consts::PI.powf(1.5) / 8.0;
        assert_relative_eq!(u.quartic(), exact, max_relative = 1e-10);
    }

    #[test]
    fn laplacian_of_gaussian_second_order() {
        // -(Delta e^{-r^2}) = (6 - 4 r^2) e^{-r^2} ... with the sign convention
        // -(u'' + 2/r u') = (6 - 4 r^2) e^{-r^2} * (-1)^0; check sup error O(h^2).
        let sup_err = |n: usize| -> f64 {
            let g = grid(n, 6.0);
            let u = RadialField::from_fn(Arc::clone(&g), |r| (-r * r).exp());
            let lap = u.apply_laplacian();
            g.nodes()
                .iter()
                .zip(lap.values())
                .take(n - 1)
                .map(|(&r, &v)| {
                    let exact = (6.0 - 4.0 * r * r) * (-r * r).exp();
                    (v - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (sup_err(401), sup_err(801));
        let ratio = e1 / e2;
        assert!(
            (3.0..5.5).contains(&ratio),
            "expected ~4x improvement, got {ratio} ({e1:.2e} -> {e2:.2e})"
        );
    }

    #[test]
    fn laplacian_annihilates_constants_in_interior() {
        let g = grid(201, 3.0);
        let u = RadialField::from_fn(g, |_| 2.5);
        let lap = u.apply_laplacian();
        for &v in &lap.values()[..200] {
            assert!(v.abs() < 1e-11, "constant field must map to zero, got {v}");
        }
    }

    #[test]
    fn laplacian_symmetric_in_quadrature_inner_product() {
        // <(-Delta)u, v> = <u, (-Delta)v> up to O(h^2) for compact smooth fields.
        let check = |n: usize| -> f64 {
            let g = grid(n, 3.0);
            let u = RadialField::from_fn(Arc::clone(&g), |r| compact_bump(r, 1.2));
            let v = RadialField::from_fn(Arc::clone(&g), |r| r * r * compact_bump(r, 1.5));
            let lu = u.apply_laplacian();
            let lv = v.apply_laplacian();
            let a: Vec<f64> = lu
                .values()
                .iter()
                .zip(v.values())
                .map(|(x, y)| x * y)
                .collect();
            let b: Vec<f64> = lv
                .values()
                .iter()
                .zip(u.values())
                .map(|(x, y)| x * y)
                .collect();
            (g.integrate(&a) - g.integrate(&b)).abs()
        };
        let (d1, d2) = (check(401), check(801));
        assert!(d2 < d1, "symmetry defect should shrink under refinement");
        assert!(d2 < 1e-4, "defect too large: {d2:.3e}");
    }

    #[test]
    fn dilation_preserves_mass_and_scales_moments() {
        let g = grid(4001, 5.0);
        let u = RadialField::from_fn(g, |r| compact_bump(r, 1.0));
        for s in [-0.7, -0.2, 0.4, 1.0] {
            let v = u.dilate(s).unwrap();
            assert_relative_eq!(v.mass(), u.mass(), max_relative = 1e-6);
            assert_relative_eq!(
                v.grad_norm_sq(),
                (2.0 * s).exp() * u.grad_norm_sq(),
                max_relative = 1e-4
            );
            assert_relative_eq!(
                v.quartic(),
                (3.0 * s).exp() * u.quartic(),
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn dilation_composes() {
        let g = grid(4001, 6.0);
        let u = RadialField::from_fn(g, |r| compact_bump(r, 1.3));
        let (s1, s2) = (0.35, -0.6);
        let a = u.dilate(s1).unwrap().dilate(s2).unwrap();
        let b = u.dilate(s1 + s2).unwrap();
        let diff: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y) * (x - y))
            .collect();
        let err = a.grid().integrate(&diff).sqrt() / u.mass().sqrt();
        assert!(err < 1e-5, "composition defect {err:.3e}");
    }

    #[test]
    fn zero_dilation_is_identity() {
        let g = grid(101, 2.0);
        let u = RadialField::from_fn(g, |r| (1.0 + r).recip());
        let v = u.dilate(0.0).unwrap();
        assert_eq!(u.values(), v.values());
    }

    #[test]
    fn dilation_cap_enforced() {
        let g = grid(101, 2.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp());
        assert!(matches!(
            u.dilate(5.5),
            Err(SolverError::DilationOutOfRange { .. })
        ));
    }

    #[test]
    fn renormalization_hits_target_mass() {
        let g = grid(801, 4.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp() * (1.0 + 0.3 * r));
        let v = u.renormalized_to_mass(2.7).unwrap();
        assert_relative_eq!(v.mass(), 2.7, max_relative = 1e-13);
    }
}
