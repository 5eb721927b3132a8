//! Operator parameters, coefficient functions and the ground-state envelope.
//!
//! The operator is `A u = a(|x|) Δu - |x|^beta u` on `R^N` with diffusion
//! coefficient `a(r) = 1 + r^alpha`. It is symmetric in `L^2(dμ)` with
//! `dμ = a(|x|)^{-1} dx`.
//!
//! Sanity mode admits parameters outside the range `alpha >= 2`,
//! `beta > alpha - 2` so that exactly solvable problems can be used as
//! oracles. In sanity mode a zero exponent switches its term off: `alpha = 0`
//! selects unit diffusion `a ≡ 1` and `beta = 0` selects `V ≡ 0`. This gives
//! the harmonic oscillator `Δ - |x|^2` for `(alpha, beta) = (0, 2)` and the
//! free Laplacian for `(0, 0)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Constants derived from `(N, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// `(beta - alpha)/2 + 1`
    pub xi: f64,
    /// `(beta - alpha + 2)/(beta + alpha - 2)`; infinite when `alpha + beta = 2`.
    pub b: f64,
    pub c0: f64,
    /// Power of `r` in the envelope, `-(N-1)/2 - (beta - alpha)/4`.
    pub power_exp: f64,
    /// Power of `r` inside the envelope exponential, `(beta - alpha + 2)/2`.
    pub phase_exp: f64,
    /// `2/(beta - alpha + 2)`
    pub phase_coeff: f64,
}

impl DerivedConstants {
    fn compute(dim: usize, alpha: f64, beta: f64) -> Self {
        let n = dim as f64;
        let xi = (beta - alpha) / 2.0 + 1.0;
        let half = (xi - 1.0) / 2.0;
        DerivedConstants {
            xi,
            b: (beta - alpha + 2.0) / (beta + alpha - 2.0),
            c0: half * half + half - (n - 1.0) * (n - 3.0) / 4.0,
            power_exp: -(n - 1.0) / 2.0 - (beta - alpha) / 4.0,
            phase_exp: (beta - alpha + 2.0) / 2.0,
            phase_coeff: 2.0 / (beta - alpha + 2.0),
        }
    }
}

/// Validated `(N, alpha, beta)` with eagerly computed derived constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorParams {
    dim: usize,
    alpha: f64,
    beta: f64,
    sanity_mode: bool,
    derived: DerivedConstants,
}

impl OperatorParams {
    pub fn new(dim: usize, alpha: f64, beta: f64, sanity_mode: bool) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "alpha and beta must be finite (got alpha={alpha}, beta={beta})"
            )));
        }
        if dim <= 2 {
            return Err(Error::InvalidParams(format!(
                "N > 2 required (got N={dim})"
            )));
        }
        if sanity_mode {
            if alpha < 0.0 || beta < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "sanity mode requires alpha >= 0 and beta >= 0 (got alpha={alpha}, beta={beta})"
                )));
            }
        } else {
            if alpha < 2.0 {
                return Err(Error::InvalidParams(format!(
                    "alpha < 2 violates hypothesis alpha >= 2 (got alpha={alpha})"
                )));
            }
            if beta <= alpha - 2.0 {
                return Err(Error::InvalidParams(format!(
                    "beta ≤ alpha−2 violates hypothesis beta > alpha-2 (got alpha={alpha}, beta={beta})"
                )));
            }
        }
        Ok(OperatorParams {
            dim,
            alpha,
            beta,
            sanity_mode,
            derived: DerivedConstants::compute(dim, alpha, beta),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sanity_mode(&self) -> bool {
        self.sanity_mode
    }

    pub fn derived(&self) -> &DerivedConstants {
        &self.derived
    }

    /// Whether `alpha >= 2` and `beta > alpha - 2`, i.e. the regime where the
    /// envelope and kernel bounds are claimed.
    pub fn hypotheses_hold(&self) -> bool {
        self.alpha >= 2.0 && self.beta > self.alpha - 2.0
    }

    /// Sanity mode with `alpha = 0` uses `a ≡ 1`.
    pub fn unit_diffusion(&self) -> bool {
        self.sanity_mode && self.alpha == 0.0
    }

    /// Diffusion coefficient `a(r)`.
    pub fn diffusion(&self, r: f64) -> f64 {
        if self.unit_diffusion() {
            1.0
        } else {
            1.0 + r.powf(self.alpha)
        }
    }

    /// `a'(r)` and `a''(r)`, valid for `r > 0`.
    pub fn diffusion_derivatives(&self, r: f64) -> (f64, f64) {
        if self.unit_diffusion() {
            (0.0, 0.0)
        } else {
            let a = self.alpha;
            (a * r.powf(a - 1.0), a * (a - 1.0) * r.powf(a - 2.0))
        }
    }

    /// Sanity mode with `beta = 0` uses `V ≡ 0`.
    pub fn zero_potential(&self) -> bool {
        self.sanity_mode && self.beta == 0.0
    }

    /// Potential `V(r) = r^beta`.
    pub fn potential(&self, r: f64) -> f64 {
        if self.zero_potential() {
            0.0
        } else {
            r.powf(self.beta)
        }
    }

    /// `h(r) = V(r)/a(r)`.
    pub fn potential_ratio(&self, r: f64) -> f64 {
        self.potential(r) / self.diffusion(r)
    }

    /// Radial density of μ per unit solid angle, `r^(N-1)/a(r)`.
    pub fn mu_density(&self, r: f64) -> f64 {
        r.powi(self.dim as i32 - 1) / self.diffusion(r)
    }

    pub fn coefficients(&self) -> Coefficients<'_> {
        Coefficients { params: self }
    }

    /// Surface area `ω_{N-1}` of the unit sphere in `R^N`.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.dim)
    }

    pub fn envelope_fn(&self) -> Envelope {
        Envelope {
            power_exp: self.derived.power_exp,
            phase_exp: self.derived.phase_exp,
            phase_coeff: self.derived.phase_coeff,
        }
    }

    /// `Φ(r) = r^q exp(-c r^p)`; see [`Envelope`].
    pub fn envelope(&self, r: f64) -> f64 {
        self.envelope_fn().eval(r)
    }

    /// `C(ε) = sup_r (r^ξ - ε r^β)`, the constant in `r^ξ <= ε r^β + C(ε)`.
    ///
    /// Attained at `r* = (ξ/(εβ))^(1/(β-ξ))` and equal to
    /// `r*^ξ (1 - ξ/β)`, which scales exactly like `ε^(-b)`.
    pub fn young_constant(&self, eps: f64) -> f64 {
        let xi = self.derived.xi;
        let beta = self.beta;
        let r_star = (xi / (eps * beta)).powf(1.0 / (beta - xi));
        r_star.powf(xi) * (1.0 - xi / beta)
    }
}

/// Evaluator bundle over the radial coefficient functions.
#[derive(Debug, Clone, Copy)]
pub struct Coefficients<'a> {
    params: &'a OperatorParams,
}

impl Coefficients<'_> {
    pub fn a(&self, r: f64) -> f64 {
        self.params.diffusion(r)
    }

    pub fn v(&self, r: f64) -> f64 {
        self.params.potential(r)
    }

    pub fn h(&self, r: f64) -> f64 {
        self.params.potential_ratio(r)
    }

    pub fn rho_mu(&self, r: f64) -> f64 {
        self.params.mu_density(r)
    }
}

/// Closed-form ground-state envelope `Φ(r) = r^q exp(-c r^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub power_exp: f64,
    pub phase_exp: f64,
    pub phase_coeff: f64,
}

impl Envelope {
    pub fn eval(&self, r: f64) -> f64 {
        self.log_eval(r).exp()
    }

    pub fn log_eval(&self, r: f64) -> f64 {
        self.power_exp * r.ln() - self.phase_coeff * r.powf(self.phase_exp)
    }

    /// The bounds are stated on `|x| >= 1`.
    pub fn in_guaranteed_range(r: f64) -> bool {
        r >= 1.0
    }

    /// Copy with the exponential rate multiplied by `scale` (negative control).
    pub fn with_phase_scale(&self, scale: f64) -> Self {
        Envelope {
            phase_coeff: self.phase_coeff * scale,
            ..*self
        }
    }
}

/// `ω_{N-1} = 2 π^{N/2} / Γ(N/2)`.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half_integer(dim)
}

/// `Γ(n/2)` for a positive integer `n`.
fn gamma_half_integer(n: usize) -> f64 {
    let (mut value, mut x) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while x < n as f64 / 2.0 - 0.25 {
        value *= x;
        x += 1.0;
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_constants_for_reference_params() {
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        let d = p.derived();
        assert_eq!(d.xi, 2.0);
        assert_eq!(d.b, 1.0);
        assert_eq!(d.c0, 0.75);
        assert_eq!(d.power_exp, -1.5);
        assert_eq!(d.phase_exp, 2.0);

        let p = OperatorParams::new(4, 4.0, 4.0, false).unwrap();
        let d = p.derived();
        assert_eq!(d.xi, 1.0);
        assert_relative_eq!(d.b, 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(d.c0, -0.75);
    }

    #[test]
    fn rejects_hypothesis_violations() {
        let err = OperatorParams::new(3, 2.0, 0.0, false).unwrap_err();
        assert!(err.to_string().contains("beta ≤ alpha−2"), "{err}");
        let err = OperatorParams::new(2, 2.0, 4.0, false).unwrap_err();
        assert!(err.to_string().contains("N > 2"), "{err}");
        let err = OperatorParams::new(3, 1.5, 4.0, false).unwrap_err();
        assert!(err.to_string().contains("alpha >= 2"), "{err}");
        assert!(OperatorParams::new(3, 0.0, 2.0, true).is_ok());
        assert!(OperatorParams::new(3, -1.0, 2.0, true).is_err());
    }

    #[test]
    fn coefficient_values() {
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        let c = p.coefficients();
        assert_eq!(c.h(1.0), 0.5);
        assert_eq!(c.v(0.0), 0.0);
        assert_eq!(c.a(0.0), 1.0);
        assert_eq!(c.rho_mu(0.0), 0.0);

        let p = OperatorParams::new(3, 2.0, 2.0, false).unwrap();
        let mut prev = p.potential_ratio(1.0);
        for i in 1..200 {
            let r = 1.0 + i as f64 * 0.5;
            let h = p.potential_ratio(r);
            assert!(h > prev && h < 1.0);
            prev = h;
        }
    }

    #[test]
    fn unit_diffusion_only_in_sanity_mode_with_zero_alpha() {
        let osc = OperatorParams::new(3, 0.0, 2.0, true).unwrap();
        assert!(osc.unit_diffusion());
        assert_eq!(osc.diffusion(5.0), 1.0);
        assert_eq!(osc.potential_ratio(3.0), 9.0);
        let free = OperatorParams::new(3, 0.0, 0.0, true).unwrap();
        assert!(free.zero_potential());
        assert_eq!(free.potential(2.0), 0.0);
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        assert!(!p.unit_diffusion());
    }

    #[test]
    fn envelope_values() {
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        assert_relative_eq!(p.envelope(1.0), (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(p.envelope(1.0), 0.606531, epsilon = 1e-6);
        assert_relative_eq!(p.envelope(2.0), 0.047849, epsilon = 1e-6);
        assert!(p.envelope(2.0) < p.envelope(1.0));
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(4), 2.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(5), 8.0 * PI * PI / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn young_constant_is_the_supremum() {
        let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
        for &eps in &[1e-3, 1e-2, 0.1, 1.0] {
            let c = p.young_constant(eps);
            let brute = (0..200_000)
                .map(|i| i as f64 * 1e-3)
                .map(|r| r.powf(2.0) - eps * r.powf(4.0))
                .fold(f64::MIN, f64::max);
            assert_relative_eq!(c, brute, max_relative = 1e-5);
        }
    }
}
