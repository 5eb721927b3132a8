//! Zonal spherical harmonics on `S^(N-1)`.
//!
//! `Z_ℓ(x̂·ŷ) = Σ_m Y_ℓm(x̂) Y_ℓm(ŷ)` for an orthonormal basis of degree-`ℓ`
//! harmonics. In terms of Gegenbauer polynomials with `λ = (N-2)/2`,
//!
//! ```text
//! Z_ℓ(t) = (2ℓ + N - 2) / ((N - 2) ω_{N-1}) · C_ℓ^λ(t)
//! ```
//!
//! so that `∫ Z_ℓ(x̂·ŷ) dσ(ŷ) = δ_ℓ0` and `ω_{N-1} Z_ℓ(1)` is the dimension
//! of the degree-`ℓ` harmonic space.

use crate::model::sphere_area;

/// Gegenbauer values `C_0^λ(t), ..., C_L^λ(t)` by the three-term recurrence.
pub fn gegenbauer(lambda: f64, l_max: usize, t: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(l_max + 1);
    c.push(1.0);
    if l_max >= 1 {
        c.push(2.0 * lambda * t);
    }
    for n in 2..=l_max {
        let nf = n as f64;
        let next = (2.0 * t * (nf + lambda - 1.0) * c[n - 1] - (nf + 2.0 * lambda - 2.0) * c[n - 2]) / nf;
        c.push(next);
    }
    c
}

/// `Z_0(t), ..., Z_L(t)` on `S^(N-1)`, `N >= 3`.
pub fn zonal_values(dim: usize, l_max: usize, t: f64) -> Vec<f64> {
    let lambda = (dim as f64 - 2.0) / 2.0;
    let omega = sphere_area(dim);
    gegenbauer(lambda, l_max, t)
        .into_iter()
        .enumerate()
        .map(|(l, c)| (2.0 * l as f64 + dim as f64 - 2.0) / ((dim as f64 - 2.0) * omega) * c)
        .collect()
}

/// `Z_ℓ(t)`.
pub fn zonal(dim: usize, ell: usize, t: f64) -> f64 {
    zonal_values(dim, ell, t)[ell]
}

/// Dimension of the space of degree-`ℓ` spherical harmonics in `R^N`.
pub fn harmonic_dimension(dim: usize, ell: usize) -> f64 {
    let binom = |n: usize, k: usize| -> f64 {
        if k > n {
            return 0.0;
        }
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let top = binom(ell + dim - 1, dim - 1);
    let low = if ell >= 2 { binom(ell + dim - 3, dim - 1) } else { 0.0 };
    top - low
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn three_dimensional_case_is_legendre() {
        for &t in &[-0.7, 0.0, 0.3, 1.0] {
            let z = zonal_values(3, 3, t);
            let p = [1.0, t, 0.5 * (3.0 * t * t - 1.0), 0.5 * (5.0 * t * t * t - 3.0 * t)];
            for l in 0..4 {
                assert_relative_eq!(z[l], (2 * l + 1) as f64 / (4.0 * PI) * p[l], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn value_at_one_counts_harmonics() {
        for dim in 3..7 {
            let omega = sphere_area(dim);
            let z = zonal_values(dim, 12, 1.0);
            for (l, v) in z.iter().enumerate() {
                assert_relative_eq!(v * omega, harmonic_dimension(dim, l), max_relative = 1e-12);
            }
        }
        assert_eq!(harmonic_dimension(3, 4), 9.0);
        assert_eq!(harmonic_dimension(4, 2), 9.0);
    }
}
