//! The confinement function `ρ(U, x, V) = ‖x‖²` and the scalar bundle that
//! keeps every iterate inside `{‖x‖² ≤ ρ1}`.
//!
//! Given `λ`, the rank `k` and `a = max a_ij²`, a step bound `κ` with
//! `0 < κ < λ / (4k + 2λ²)` determines
//!
//! ```text
//! ρ0 = (1 + 16kκ) a / (4λ − 16kκ − 8λ²κ)
//! ρ1 = max(‖x0‖², ρ0 + aκ + (16ka + 8λ²ρ0 + 16kρ0) κ²)
//! β  = (α / κ)^(2 / (1 + 2ε))
//! ```
//!
//! so that the adaptive learning rate starts at exactly `η0 = κ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, ProductTangent};
use crate::wlra::{entry_partials, EntrySample, SparseWeightedMatrix};

/// Absolute slack allowed on `ρ(p) ≤ ρ1` for floating point.
pub const CONFINEMENT_SLACK: f64 = 1e-9;

/// Fraction of the `κ` bound used when `κ` is not given.
pub const DEFAULT_KAPPA_FRACTION: f64 = 0.1;

const DERIVED_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementParams {
    pub lambda: f64,
    pub k: usize,
    /// Largest squared observed entry.
    pub a: f64,
    pub kappa: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub beta: f64,
}

impl ConfinementParams {
    /// Derives `ρ0`, `ρ1` and `β` from the user-facing constants and checks
    /// every invariant. `kappa = None` picks [`DEFAULT_KAPPA_FRACTION`] of
    /// the bound.
    pub fn derive(
        lambda: f64,
        k: usize,
        a: f64,
        kappa: Option<f64>,
        alpha: f64,
        epsilon: f64,
        x0_norm_sq: f64,
    ) -> Result<Self> {
        let bound = kappa_upper_bound(lambda, k)?;
        let kappa = kappa.unwrap_or(DEFAULT_KAPPA_FRACTION * bound);
        check_kappa(lambda, k, kappa)?;
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::Parameter(format!("a must be finite and non-negative, got {a}")));
        }
        let rho0 = derive_rho0(lambda, k, kappa, a)?;
        let rho1 = derive_rho1(rho0, kappa, lambda, k, a, x0_norm_sq);
        let beta = derive_beta(alpha, kappa, epsilon)?;
        let params = Self {
            lambda,
            k,
            a,
            kappa,
            rho0,
            rho1,
            alpha,
            epsilon,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    /// Raises `ρ0` and/or `ρ1` and re-validates.
    pub fn with_overrides(mut self, rho0: Option<f64>, rho1: Option<f64>) -> Result<Self> {
        if let Some(r0) = rho0 {
            if r0 < self.rho0 {
                return Err(Error::Parameter(format!(
                    "rho0 override {r0} is below the derived value {}",
                    self.rho0
                )));
            }
            self.rho0 = r0;
            self.rho1 = self.rho1.max(rho1_floor(r0, self.kappa, self.lambda, self.k, self.a));
        }
        if let Some(r1) = rho1 {
            if r1 < self.rho1 {
                return Err(Error::Parameter(format!(
                    "rho1 override {r1} is below the derived value {}",
                    self.rho1
                )));
            }
            self.rho1 = r1;
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks every invariant of the bundle, naming the first violated one.
    pub fn validate(&self) -> Result<()> {
        check_kappa(self.lambda, self.k, self.kappa)?;
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(Error::Parameter(format!(
                "0 < epsilon <= 1/2 violated: epsilon = {}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Parameter(format!(
                "alpha and beta must be positive and finite: alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        let rho0_min = rho0_formula(self.lambda, self.k, self.kappa, self.a);
        if self.rho0 < rho0_min * (1.0 - DERIVED_REL_TOL) {
            return Err(Error::Parameter(format!(
                "rho0 >= (1+16kκ)a/(4λ-16kκ-8λ²κ) violated: rho0 = {} < {rho0_min}",
                self.rho0
            )));
        }
        let rho1_min = rho1_floor(self.rho0, self.kappa, self.lambda, self.k, self.a);
        if self.rho1 < rho1_min * (1.0 - DERIVED_REL_TOL) {
            return Err(Error::Parameter(format!(
                "rho0 + aκ + (16ka + 8λ²ρ0 + 16kρ0)κ² <= rho1 violated: rho1 = {} < {rho1_min}",
                self.rho1
            )));
        }
        let eta0 = self.alpha / self.beta.powf(0.5 + self.epsilon);
        if ((eta0 - self.kappa) / self.kappa).abs() > DERIVED_REL_TOL {
            return Err(Error::Parameter(format!(
                "alpha / beta^(1/2+ε) = κ violated: {eta0:e} vs κ = {:e}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Upper bound `λ / (4k + 2λ²)` for this bundle.
    pub fn kappa_bound(&self) -> f64 {
        self.lambda / (4.0 * self.k as f64 + 2.0 * self.lambda * self.lambda)
    }

    /// One-line description used in error messages and metrics headers.
    pub fn describe(&self) -> String {
        format!(
            "lambda={:e} k={} a={:e} kappa={:e} kappa_bound={:e} rho0={:e} rho1={:e} alpha={:e} epsilon={:e} beta={:e}",
            self.lambda,
            self.k,
            self.a,
            self.kappa,
            self.kappa_bound(),
            self.rho0,
            self.rho1,
            self.alpha,
            self.epsilon,
            self.beta
        )
    }
}

fn check_kappa(lambda: f64, k: usize, kappa: f64) -> Result<()> {
    let bound = kappa_upper_bound(lambda, k)?;
    if !(kappa > 0.0 && kappa < bound) {
        return Err(Error::Parameter(format!(
            "0 < κ < λ/(4k+2λ²) violated: κ = {kappa:e}, bound = {bound:e} (λ = {lambda:e}, k = {k})"
        )));
    }
    Ok(())
}

/// `a = max a_ij²` over observed entries.
pub fn max_squared_entry(data: &SparseWeightedMatrix) -> Result<f64> {
    data.entries()
        .iter()
        .map(|e| e.value * e.value)
        .reduce(f64::max)
        .ok_or_else(|| Error::Config("no observed entries".into()))
}

/// `λ / (4k + 2λ²)`; `κ` must lie strictly below it.
pub fn kappa_upper_bound(lambda: f64, k: usize) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    if k == 0 {
        return Err(Error::Parameter("rank k must be at least 1".into()));
    }
    Ok(lambda / (4.0 * k as f64 + 2.0 * lambda * lambda))
}

fn rho0_formula(lambda: f64, k: usize, kappa: f64, a: f64) -> f64 {
    let k = k as f64;
    (1.0 + 16.0 * k * kappa) * a / (4.0 * lambda - 16.0 * k * kappa - 8.0 * lambda * lambda * kappa)
}

fn rho1_floor(rho0: f64, kappa: f64, lambda: f64, k: usize, a: f64) -> f64 {
    let k = k as f64;
    rho0 + a * kappa + (16.0 * k * a + 8.0 * lambda * lambda * rho0 + 16.0 * k * rho0) * kappa * kappa
}

/// `ρ0 = (1 + 16kκ) a / (4λ − 16kκ − 8λ²κ)`.
pub fn derive_rho0(lambda: f64, k: usize, kappa: f64, a: f64) -> Result<f64> {
    let kf = k as f64;
    let denom = 4.0 * lambda - 16.0 * kf * kappa - 8.0 * lambda * lambda * kappa;
    if !(denom > 0.0) {
        let bound = if lambda > 0.0 && k > 0 {
            lambda / (4.0 * kf + 2.0 * lambda * lambda)
        } else {
            f64::NAN
        };
        return Err(Error::Parameter(format!(
            "rho0 denominator 4λ-16kκ-8λ²κ = {denom:e} is not positive; κ = {kappa:e} must satisfy 0 < κ < λ/(4k+2λ²) = {bound:e}"
        )));
    }
    Ok(rho0_formula(lambda, k, kappa, a))
}

/// `ρ1 = max(‖x0‖², ρ0 + aκ + (16ka + 8λ²ρ0 + 16kρ0)κ²)`.
pub fn derive_rho1(rho0: f64, kappa: f64, lambda: f64, k: usize, a: f64, x0_norm_sq: f64) -> f64 {
    x0_norm_sq.max(rho1_floor(rho0, kappa, lambda, k, a))
}

/// `β = (α/κ)^(2/(1+2ε))`, making `α / β^(1/2+ε) = κ`.
pub fn derive_beta(alpha: f64, kappa: f64, epsilon: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(kappa > 0.0) || !(epsilon > 0.0) || epsilon > 0.5 {
        return Err(Error::Parameter(format!(
            "derive_beta needs alpha > 0, kappa > 0, 0 < epsilon <= 1/2 (got {alpha}, {kappa}, {epsilon})"
        )));
    }
    let beta = (alpha / kappa).powf(2.0 / (1.0 + 2.0 * epsilon));
    if !beta.is_finite() {
        return Err(Error::Parameter(format!(
            "beta overflows for alpha/kappa = {:e}",
            alpha / kappa
        )));
    }
    Ok(beta)
}

/// `ρ(U, x, V) = ‖x‖²`.
pub fn rho(p: &ProductPoint) -> f64 {
    p.x.norm_squared()
}

/// Riemannian gradient of `ρ`: `(0, 2x, 0)`.
pub fn rho_gradient(p: &ProductPoint) -> ProductTangent {
    let mut g = ProductTangent::zeros(p);
    g.xhat = &p.x * 2.0;
    g
}

/// `⟨∇ρ, ∇g_{τγ}⟩ = −4(a − p)p + 4λρ` in closed form.
pub fn confinement_pairing(p: &ProductPoint, s: EntrySample, data: &SparseWeightedMatrix, lambda: f64) -> Result<f64> {
    let d = entry_partials(p, s, data)?;
    let a = data.entries()[s.entry].value;
    let pv = a - d.residual;
    Ok(-4.0 * d.residual * pv + 4.0 * lambda * rho(p))
}

/// `Hess(ρ∘R)(∇g, ∇g) = 8 Σ_l (−(a − p) u_{τl} v_{γl} + λ x_l)²`.
pub fn hessian_quadratic_form(
    p: &ProductPoint,
    s: EntrySample,
    data: &SparseWeightedMatrix,
    lambda: f64,
) -> Result<f64> {
    let d = entry_partials(p, s, data)?;
    let u = p.u.matrix();
    let v = p.v.matrix();
    Ok(8.0
        * (0..p.k())
            .map(|l| {
                let t = -d.residual * u[(s.row, l)] * v[(s.col, l)] + lambda * p.x[l];
                t * t
            })
            .sum::<f64>())
}

/// Upper bound `16(2ka + 2k‖x‖² + λ²‖x‖²)` on the Hessian form.
pub fn hessian_upper_bound(p: &ProductPoint, a: f64, lambda: f64) -> f64 {
    let k = p.k() as f64;
    let r = rho(p);
    16.0 * (2.0 * k * a + 2.0 * k * r + lambda * lambda * r)
}

/// `ρ(p) ≤ ρ1 + 1e-9`.
pub fn check_confined(p: &ProductPoint, params: &ConfinementParams) -> bool {
    rho(p) <= params.rho1 + CONFINEMENT_SLACK
}
