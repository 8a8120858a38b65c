//! Power-sum focusing nonlinearities in the mass-supercritical, Sobolev-
//! subcritical window.
//!
//! `f(s) = sum_i mu_i |s|^{p_i - 2} s` with every exponent strictly between
//! `2 + 4/N` and the critical exponent `2N/(N-2)` (unbounded for `N = 2`).
//! The primitive `F`, the combination `Ft(s) = f(s) s - 2 F(s)` driving the
//! Pohozaev constraint, and the extreme exponents of the growth envelope are
//! all exposed.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::Result;

/// One focusing power term `mu |s|^{p-2} s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub mu: f64,
    pub p: f64,
}

/// A finite sum of admissible focusing powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    dim: u32,
    terms: Vec<PowerTerm>,
}

impl Nonlinearity {
    /// Validates the admissible window `2 + 4/N < p < 2N/(N-2)` per term.
    pub fn new(dim: u32, terms: Vec<PowerTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(SolverError::InvalidInput(
                "nonlinearity needs at least one power term".into(),
            ));
        }
        let (lo, hi) = Self::admissible_window(dim);
        for t in &terms {
            if !(t.p > lo && t.p < hi) {
                return Err(SolverError::ExponentOutOfRange { p: t.p, lo, hi });
            }
            if !(t.mu > 0.0 && t.mu.is_finite()) {
                return Err(SolverError::InvalidInput(format!(
                    "power coefficient must be positive, got {}",
                    t.mu
                )));
            }
        }
        Ok(Self { dim, terms })
    }

    /// The cubic case `f(s) = mu s^3` (admissible for `N = 3`).
    pub fn cubic(dim: u32, mu: f64) -> Result<Self> {
        Self::new(dim, vec![PowerTerm { mu, p: 4.0 }])
    }

    pub fn admissible_window(dim: u32) -> (f64, f64) {
        let n = dim as f64;
        let hi = if dim == 2 {
            f64::INFINITY
        } else {
            2.0 * n / (n - 2.0)
        };
        (2.0 + 4.0 / n, hi)
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }

    /// Smallest exponent (the lower growth envelope).
    pub fn alpha(&self) -> f64 {
        self.terms.iter().map(|t| t.p).fold(f64::INFINITY, f64::min)
    }

    /// Largest exponent (the upper growth envelope).
    pub fn beta_exp(&self) -> f64 {
        self.terms.iter().map(|t| t.p).fold(0.0, f64::max)
    }

    /// `Some(mu)` if the nonlinearity is the single cubic power.
    pub fn as_cubic(&self) -> Option<f64> {
        if self.terms.len() == 1 && (self.terms[0].p - 4.0).abs() < 1e-14 {
            Some(self.terms[0].mu)
        } else {
            None
        }
    }

    /// `f(s) = sum mu_i |s|^{p_i - 2} s`.
    pub fn f(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.mu * s.abs().powf(t.p - 2.0) * s)
            .sum()
    }

    /// `f'(s) = sum mu_i (p_i - 1) |s|^{p_i - 2}`.
    pub fn f_prime(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.mu * (t.p - 1.0) * s.abs().powf(t.p - 2.0))
            .sum()
    }

    /// `F(s) = sum mu_i |s|^{p_i} / p_i`.
    pub fn big_f(&self, s: f64) -> f64 {
        self.terms.iter().map(|t| t.mu * s.abs().powf(t.p) / t.p).sum()
    }

    /// `Ft(s) = f(s) s - 2 F(s) = sum mu_i (1 - 2/p_i) |s|^{p_i}`.
    pub fn tilde_f(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.mu * (1.0 - 2.0 / t.p) * s.abs().powf(t.p))
            .sum()
    }
}
