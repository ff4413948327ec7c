use nalgebra::{Matrix2x1, Vector2};
use proptest::prelude::*;
use rowtsm_core::servo::{
    ibvs_control, p_control, pinv_column, IbvsConfig, PControllerConfig, ServoError,
};

/// omega minimising |J_w * omega + (lambda * e + J_v * v)| via SVD.
fn least_squares_omega(cfg: &IbvsConfig, e: [f64; 2]) -> f64 {
    let jw = Matrix2x1::new(cfg.jacobian_w[0], cfg.jacobian_w[1]);
    let rhs = -(Vector2::new(e[0], e[1]) * cfg.lambda
        + Vector2::new(cfg.jacobian_v[0], cfg.jacobian_v[1]) * cfg.v_star);
    jw.svd(true, true).solve(&rhs, 1e-300).unwrap()[0]
}

fn finite() -> impl Strategy<Value = f64> {
    -50.0f64..50.0
}

proptest! {
    #[test]
    fn ibvs_matches_explicit_least_squares(
        jw in (finite(), finite()).prop_filter("nonzero", |(a, b)| a.abs() + b.abs() > 1e-3),
        jv in (finite(), finite()),
        e in (finite(), finite()),
        lambda in 0.01f64..5.0,
        v in 0.0f64..2.0,
    ) {
        let cfg = IbvsConfig { lambda, v_star: v, jacobian_v: [jv.0, jv.1], jacobian_w: [jw.0, jw.1] };
        let err = ServoError { delta_lx2: e.0, delta_theta: e.1 };
        let got = ibvs_control(&err, &cfg).unwrap();
        let want = least_squares_omega(&cfg, [e.0, e.1]);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn pinv_is_a_left_inverse(a in finite(), b in finite()) {
        prop_assume!(a.abs() + b.abs() > 1e-6);
        let p = pinv_column([a, b]).unwrap();
        prop_assert!((p[0] * a + p[1] * b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_control_is_linear_in_the_error(
        t1 in finite(), l1 in finite(), t2 in finite(), l2 in finite(), k in -3.0f64..3.0,
    ) {
        let cfg = PControllerConfig::default();
        let a = ServoError { delta_theta: t1, delta_lx2: l1 };
        let b = ServoError { delta_theta: t2, delta_lx2: l2 };
        let sum = ServoError { delta_theta: t1 + t2, delta_lx2: l1 + l2 };
        prop_assert!((p_control(&sum, &cfg) - p_control(&a, &cfg) - p_control(&b, &cfg)).abs() < 1e-9);
        prop_assert!((p_control(&(a * k), &cfg) - k * p_control(&a, &cfg)).abs() < 1e-9);
    }

    #[test]
    fn joint_gain_rescaling_leaves_command_unchanged(t in finite(), l in finite(), k in 0.1f64..10.0) {
        let cfg = PControllerConfig { alpha: 0.3, w1: 1.2, w2: 0.05, v_star: 0.5 };
        let scaled = PControllerConfig { alpha: cfg.alpha * k, w1: cfg.w1 / k, w2: cfg.w2 / k, ..cfg };
        let e = ServoError { delta_theta: t, delta_lx2: l };
        prop_assert!((p_control(&e, &cfg) - p_control(&e, &scaled)).abs() < 1e-12);
    }
}

#[test]
fn zero_error_is_a_fixed_point() {
    let zero = ServoError {
        delta_theta: 0.0,
        delta_lx2: 0.0,
    };
    assert_eq!(p_control(&zero, &PControllerConfig::default()), 0.0);
    let cfg = IbvsConfig {
        lambda: 2.0,
        v_star: 0.0,
        jacobian_v: [3.0, 1.0],
        jacobian_w: [0.5, -2.0],
    };
    assert_eq!(ibvs_control(&zero, &cfg).unwrap(), 0.0);
}
