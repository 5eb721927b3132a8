//! Structural properties of the reconstructed heat kernel.

use kernel_bounds::heat::{KernelModel, MIN_EXPANSION_T};
use kernel_bounds::model::OperatorParams;
use kernel_bounds::quad::gauss_legendre;
use kernel_bounds::spectral::{build_grid, Grading, RMax};
use kernel_bounds::zonal::zonal_values;
use std::f64::consts::PI;

fn reference_model() -> KernelModel {
    let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
    let grid = build_grid(&p, RMax::Auto, 400, Grading::Uniform).unwrap();
    KernelModel::new(&p, &grid, 24, MIN_EXPANSION_T, 600).unwrap()
}

/// Sphere quadrature on `S²`: Gauss–Legendre in `cos θ`, trapezoid in `φ`.
fn sphere_rule(n_theta: usize, n_phi: usize) -> Vec<([f64; 3], f64)> {
    let (x, w) = gauss_legendre(n_theta);
    let mut out = Vec::new();
    for (c, wc) in x.iter().zip(&w) {
        let s = (1.0 - c * c).sqrt();
        for k in 0..n_phi {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            out.push(([s * phi.cos(), s * phi.sin(), *c], wc * 2.0 * PI / n_phi as f64));
        }
    }
    out
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[test]
fn zonal_harmonics_reproduce_under_convolution() {
    let rule = sphere_rule(24, 48);
    let x = [0.3, -0.4, (1.0f64 - 0.25).sqrt()];
    let z = [0.0, 0.6, 0.8];
    for l in 0..5 {
        for m in 0..5 {
            let integral: f64 = rule
                .iter()
                .map(|(y, w)| w * zonal_values(3, 5, dot(x, *y))[l] * zonal_values(3, 5, dot(*y, z))[m])
                .sum();
            let expected = if l == m { zonal_values(3, 5, dot(x, z))[l] } else { 0.0 };
            assert!((integral - expected).abs() < 1e-12, "l={l} m={m}: {integral} vs {expected}");
        }
    }
}

#[test]
fn angular_average_recovers_radial_sector() {
    let model = reference_model();
    let (s, w) = gauss_legendre(40);
    let t = 0.2;
    for (i, j) in [(40, 60), (80, 80), (20, 120)] {
        let averaged: f64 = s
            .iter()
            .zip(&w)
            .map(|(c, wc)| 2.0 * PI * wc * model.k_mu(t, i, j, *c, 1e-6).unwrap().value)
            .sum();
        let radial = model.sectors[0].value(t, i, j).unwrap();
        assert!((averaged - radial).abs() <= 1e-8 * radial.abs(), "{averaged} vs {radial}");
    }
}

#[test]
fn mass_is_sub_markovian_and_nonincreasing() {
    let model = reference_model();
    let mut last = f64::INFINITY;
    for t in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0] {
        let m = model.mass(t).unwrap();
        assert!(m <= 1.0 + 1e-6, "mass {m} at t={t}");
        assert!(m <= last + 1e-12, "mass grew at t={t}");
        last = m;
    }
}

#[test]
fn semigroup_and_symmetry() {
    let model = reference_model();
    let cols = [10, 50, 100, 200];
    for (t, s) in [(0.1, 0.1), (0.2, 0.5), (1.0, 0.3)] {
        assert!(model.chapman_kolmogorov(t, s, &cols).unwrap() < 1e-6);
    }
    let slice = model.slice(0.3, &[0.5, 1.0, 2.0, 3.0], &[1.0, 0.2, -0.7], 1e-6).unwrap();
    assert!(slice.symmetry_residual() < 1e-10);
    assert!(slice.k_mu.iter().all(|v| *v > 0.0));
}

#[test]
fn long_time_kernel_factorises_through_ground_state() {
    let model = reference_model();
    let t = 6.0;
    let psi = model.psi0();
    let omega = model.params.sphere_area();
    for (i, j) in [(30, 30), (30, 90), (60, 120)] {
        let k = model.k_mu(t, i, j, -0.3, 1e-6).unwrap().value;
        let expected = (model.lambda0() * t).exp() * psi[i] * psi[j] / omega;
        assert!((k - expected).abs() <= 1e-6 * expected, "{k} vs {expected}");
    }
}
