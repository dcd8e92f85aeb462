use eqfree_core::invariance::{estimate_operator_at, NewtonSettings};
use eqfree_core::oracle::couette_operator;
use eqfree_core::special::norm_cdf;
use eqfree_core::{
    solve_p, ClosedFormEstimator, Error, InvarianceProbe, OperatorEstimator, SimConfig, TestDensity,
};

const D: f64 = 5.0;

/// `∂F/∂t = −∫_{−∞}^x x' ∂²F/∂x'∂y dx' + (D²/2) ∂²F/∂x²`, by finite
/// differences of the CDF and midpoint quadrature.
fn operator_by_quadrature(f: &TestDensity, x: f64, y: f64) -> f64 {
    let cdf = |u: f64, v: f64| norm_cdf(u / f.sigma_x) * norm_cdf(v / f.sigma_y);
    let h = 1e-3;
    let mixed = |u: f64| {
        (cdf(u + h, y + h) - cdf(u + h, y - h) - cdf(u - h, y + h) + cdf(u - h, y - h))
            / (4.0 * h * h)
    };
    let lo = -12.0 * f.sigma_x;
    let n = 20_000;
    let dx = (x - lo) / n as f64;
    let shear: f64 = (0..n)
        .map(|i| {
            let u = lo + (i as f64 + 0.5) * dx;
            u * mixed(u) * dx
        })
        .sum();
    let xx = (cdf(x + h, y) - 2.0 * cdf(x, y) + cdf(x - h, y)) / (h * h);
    -shear + 0.5 * D * D * xx
}

#[test]
fn closed_form_operator_matches_quadrature() {
    for f in [
        TestDensity {
            sigma_x: 4.5,
            sigma_y: 4.5,
        },
        TestDensity {
            sigma_x: 9.0,
            sigma_y: 36.0,
        },
    ] {
        for (x, y) in [(-2.5, -2.5), (3.5, 3.5), (0.0, 1.0), (7.0, -20.0)] {
            let exact = couette_operator(f.sigma_x, f.sigma_y, D, x, y);
            let numeric = operator_by_quadrature(&f, x, y);
            assert!(
                (exact - numeric).abs() < 1e-6,
                "({x}, {y}): {exact} vs {numeric}"
            );
        }
    }
}

#[test]
fn closed_form_operator_is_scale_invariant_with_three_and_minus_two() {
    let base = TestDensity {
        sigma_x: 4.5,
        sigma_y: 4.5,
    };
    for a in [0.5, 2.0, 3.7] {
        let scaled = TestDensity::scaled((4.5, 4.5), a, 3.0);
        for u in [-6.0, -2.5, 0.3, 3.5] {
            for v in [-5.0, -1.0, 2.0, 3.5] {
                let lhs = couette_operator(scaled.sigma_x, scaled.sigma_y, D, u * a, v * a * a * a);
                let rhs = a.powf(-2.0) * couette_operator(base.sigma_x, base.sigma_y, D, u, v);
                assert!((lhs - rhs).abs() < 1e-10, "A = {a} at ({u}, {v})");
            }
        }
    }
}

#[test]
fn burst_estimates_agree_with_closed_form() {
    let probe = InvarianceProbe {
        copies: 20,
        particles: 50_000,
        seed: 3,
        ..Default::default()
    };
    let est = probe.burst_estimator(&SimConfig::default());
    let exact = ClosedFormEstimator { diffusion: D };
    for density in [probe.unscaled(), probe.scaled(3.0)] {
        let pts = if density == probe.unscaled() {
            probe.points
        } else {
            probe.scaled_points(3.0)
        };
        let mc = est.estimate(&density, &pts).unwrap();
        let cf = exact.estimate(&density, &pts).unwrap();
        for (m, c) in mc.iter().zip(&cf) {
            assert!(
                (m.value - c.value).abs() < 4.0 * m.std_error,
                "{m:?} vs {c:?}"
            );
        }
    }
}

#[test]
fn single_point_wrapper_matches_batch() {
    let exact = ClosedFormEstimator { diffusion: D };
    let f = TestDensity {
        sigma_x: 4.5,
        sigma_y: 4.5,
    };
    let one = estimate_operator_at(&exact, &f, (3.5, 3.5)).unwrap();
    assert!((one.value - (-0.0237217)).abs() < 1e-7);
}

#[test]
fn small_monte_carlo_newton_lands_near_three() {
    let probe = InvarianceProbe {
        copies: 20,
        particles: 100_000,
        seed: 5,
        ..Default::default()
    };
    let est = probe.burst_estimator(&SimConfig::default());
    let report = solve_p(&probe, &est, &NewtonSettings::default()).unwrap();
    assert!(report.converged);
    assert!((report.p_final - 3.0).abs() < 0.25, "{report:?}");
    assert!((report.a_final + 2.0).abs() < 0.25, "{report:?}");
}

#[test]
fn probe_beyond_all_particles_is_uninformative() {
    let probe = InvarianceProbe {
        copies: 4,
        particles: 1000,
        points: [(-500.0, -500.0), (-400.0, -400.0)],
        ..Default::default()
    };
    let est = probe.burst_estimator(&SimConfig::default());
    assert_eq!(
        solve_p(&probe, &est, &NewtonSettings::default()).unwrap_err(),
        Error::UninformativeProbe
    );
}

#[test]
fn start_outside_the_search_range_diverges() {
    let probe = InvarianceProbe::default();
    let exact = ClosedFormEstimator { diffusion: D };
    let settings = NewtonSettings {
        p0: 25.0,
        ..Default::default()
    };
    assert!(matches!(
        solve_p(&probe, &exact, &settings),
        Err(Error::Diverged { .. })
    ));
}
