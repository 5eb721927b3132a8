//! Leading radial eigenvalue against an independent shooting oracle.
//!
//! The radial eigenproblem `a (ψ'' + (N-1)/r ψ') - V ψ = λ ψ` is integrated
//! outward with RK4 from the regular series `ψ ≈ 1 + λ r²/(2N)`. For `λ`
//! above the leading eigenvalue the solution stays positive and blows up,
//! below it the solution crosses zero, so bisection on the sign at a large
//! radius converges to the leading eigenvalue.

use kernel_bounds::model::OperatorParams;
use kernel_bounds::spectral::{ground_state, LadderOptions};

fn shoot(p: &OperatorParams, lambda: f64, r_end: f64, steps: usize) -> f64 {
    let n = p.dim() as f64;
    let r0 = 1e-4;
    let rhs = |r: f64, y: [f64; 2]| -> [f64; 2] {
        let acc = (lambda + p.potential(r)) / p.diffusion(r) * y[0] - (n - 1.0) / r * y[1];
        [y[1], acc]
    };
    let a0 = p.diffusion(0.0);
    let mut y = [1.0 + lambda / a0 * r0 * r0 / (2.0 * n), lambda / a0 * r0 / n];
    let h = (r_end - r0) / steps as f64;
    let mut r = r0;
    for _ in 0..steps {
        let k1 = rhs(r, y);
        let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        r += h;
        if y[0] < 0.0 {
            return -1.0;
        }
    }
    1.0
}

fn shooting_lambda0(p: &OperatorParams, lo: f64, hi: f64, r_end: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    assert!(shoot(p, lo, r_end, 40_000) < 0.0 && shoot(p, hi, r_end, 40_000) > 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(p, mid, r_end, 40_000) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn oscillator_shooting_recovers_minus_three() {
    let p = OperatorParams::new(3, 0.0, 2.0, true).unwrap();
    let lambda = shooting_lambda0(&p, -5.0, -1.0, 7.0);
    assert!((lambda + 3.0).abs() < 1e-7, "{lambda}");
}

#[test]
fn reference_ground_eigenvalue_matches_shooting() {
    let p = OperatorParams::new(3, 2.0, 4.0, false).unwrap();
    let oracle = shooting_lambda0(&p, -20.0, 0.0, 8.0);
    let gs = ground_state(&p, &LadderOptions::default()).unwrap();
    assert!((gs.lambda0 - oracle).abs() < 1e-6, "ladder {} vs shooting {oracle}", gs.lambda0);
}

#[test]
fn four_dimensional_ground_eigenvalue_matches_shooting() {
    let p = OperatorParams::new(4, 4.0, 4.0, false).unwrap();
    let oracle = shooting_lambda0(&p, -30.0, 0.0, 12.0);
    let gs = ground_state(&p, &LadderOptions::default()).unwrap();
    assert!((gs.lambda0 - oracle).abs() < 1e-6, "ladder {} vs shooting {oracle}", gs.lambda0);
}
