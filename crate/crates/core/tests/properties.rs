//! Property tests over randomly drawn operator parameters.

use kernel_bounds::model::OperatorParams;
use kernel_bounds::verify::{drift_verdict, Verdict};
use kernel_bounds::wkb::{default_order, phase_integral, wkb_coefficients};
use proptest::prelude::*;

fn admissible() -> impl Strategy<Value = (usize, f64, f64)> {
    (3usize..7, 2.0f64..6.0, 0.05f64..6.0).prop_map(|(n, a, gap)| (n, a, a - 2.0 + gap))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hypotheses_match_positive_xi(n in 3usize..7, a in 2.0f64..6.0, b in -2.0f64..8.0) {
        let p = OperatorParams::new(n, a, b, false);
        let xi = (b - a) / 2.0 + 1.0;
        prop_assert_eq!(p.is_ok(), xi > 0.0);
        if let Ok(p) = p {
            prop_assert!((p.derived().xi - xi).abs() < 1e-15);
        }
    }

    #[test]
    fn b_is_xi_over_beta_minus_xi((n, a, b) in admissible()) {
        let p = OperatorParams::new(n, a, b, false).unwrap();
        let d = p.derived();
        let alt = d.xi / (b - d.xi);
        prop_assert!((d.b - alt).abs() <= 1e-12 * alt.abs());
        prop_assert!((d.phase_coeff * d.phase_exp - 1.0).abs() < 1e-14);
        prop_assert!((d.phase_exp - d.xi).abs() < 1e-14);
    }

    #[test]
    fn young_inequality_holds((n, a, b) in admissible(), eps in 1e-3f64..1.0, r in 1e-3f64..1e3) {
        let p = OperatorParams::new(n, a, b, false).unwrap();
        let xi = p.derived().xi;
        let c = p.young_constant(eps);
        prop_assert!(r.powf(xi) <= eps * r.powf(b) + c * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn young_constant_scales_like_eps_to_minus_b((n, a, b) in admissible(), e1 in 1e-3f64..1.0, e2 in 1e-3f64..1.0) {
        let p = OperatorParams::new(n, a, b, false).unwrap();
        let bb = p.derived().b;
        let lhs = p.young_constant(e1) * e1.powf(bb);
        let rhs = p.young_constant(e2) * e2.powf(bb);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
    }

    #[test]
    fn recurrence_residuals_vanish((n, a, b) in admissible(), lambda in -20.0f64..20.0, extra in 0usize..4) {
        let p = OperatorParams::new(n, a, b, false).unwrap();
        let k = default_order(&p) + extra;
        let w = wkb_coefficients(&p, lambda, k).unwrap();
        let scale = 1f64.max(lambda.abs()).max(w.coeffs().iter().map(|c| c.abs()).fold(0.0, f64::max));
        for res in w.recurrence_residuals() {
            prop_assert!(res.abs() < 1e-12 * scale, "residual {res}");
        }
    }

    #[test]
    fn phase_integral_is_additive((n, a, b) in admissible(), r0 in 0.0f64..3.0, d1 in 0.0f64..5.0, d2 in 0.0f64..5.0) {
        let p = OperatorParams::new(n, a, b, false).unwrap();
        let (r1, r2) = (r0 + d1, r0 + d1 + d2);
        let whole = phase_integral(&p, r0, r2).unwrap();
        let split = phase_integral(&p, r0, r1).unwrap() + phase_integral(&p, r1, r2).unwrap();
        prop_assert!((whole - split).abs() <= 1e-9 * (1.0 + whole.abs()));
    }

    #[test]
    fn v_integral_converges_to_limit((n, a, b) in admissible(), lambda in -10.0f64..10.0) {
        let p = OperatorParams::new(n, a, b, false).unwrap();
        let w = wkb_coefficients(&p, lambda, default_order(&p)).unwrap();
        let limit = w.v_integral_limit();
        let xi = p.derived().xi;
        let far = 1e6f64.max(1e12f64.powf(1.0 / xi)).min(1e300);
        let scale: f64 = w.coeffs().iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        prop_assert!((w.v_integral(far).unwrap() - limit).abs() <= 1e-6 * scale);
        prop_assert_eq!(w.v_integral(w.base_radius()).unwrap(), 0.0);
    }

    #[test]
    fn drift_verdict_depends_only_on_ratio(before in 1e-6f64..1e6, scale in 1e-3f64..1e3, factor in 0.01f64..100.0) {
        let v = drift_verdict(before, before * factor);
        prop_assert_eq!(v, drift_verdict(before * scale, before * scale * factor));
        if !(0.1..=10.0).contains(&factor) {
            prop_assert_eq!(v, Verdict::Fail);
        } else if (factor - 1.0).abs() < 0.19 {
            prop_assert_eq!(v, Verdict::Pass);
        } else if (factor - 1.0).abs() > 0.21 {
            prop_assert_eq!(v, Verdict::InconclusiveWithDrift);
        }
    }
}
