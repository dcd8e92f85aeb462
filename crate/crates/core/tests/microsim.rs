use eqfree_core::oracle::GaussianLaw;
use eqfree_core::special::norm_cdf;
use eqfree_core::{ensemble_moments, step_ensemble, ParticleEnsemble, SimConfig};

/// Exact moments of the Euler-Maruyama chain after `n` steps from a point
/// source (y advances with the previous x).
fn scheme_moments(d: f64, dt: f64, n: usize) -> (f64, f64, f64) {
    let n = n as f64;
    let var_x = d * d * dt * n;
    let var_y = d * d * dt.powi(3) * (n - 1.0) * n * (2.0 * n - 1.0) / 6.0;
    let cov = d * d * dt * dt * (n - 1.0) * n / 2.0;
    (var_x, var_y, cov)
}

fn sample_covariance(ens: &ParticleEnsemble) -> (f64, f64, f64) {
    let n = ens.len() as f64;
    let mx = ens.xs.iter().sum::<f64>() / n;
    let my = ens.ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in ens.points() {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    (sxx / (n - 1.0), syy / (n - 1.0), sxy / (n - 1.0))
}

#[test]
fn point_source_moments_match_scheme_within_three_standard_errors() {
    let cfg = SimConfig {
        seed: 11,
        ..Default::default()
    };
    let n = 100_000;
    let steps = 100;
    let ens = step_ensemble(&ParticleEnsemble::point_mass(n, 0.0, 0.0), &cfg, steps).unwrap();
    let (vx, vy, cxy) = sample_covariance(&ens);
    let (ex, ey, ec) = scheme_moments(cfg.diffusion, cfg.dt, steps);
    let nf = n as f64;
    let se_x = ex * (2.0 / nf).sqrt();
    let se_y = ey * (2.0 / nf).sqrt();
    let se_c = ((ex * ey + ec * ec) / nf).sqrt();
    assert!((vx - ex).abs() < 3.0 * se_x, "var x {vx} vs {ex}");
    assert!((vy - ey).abs() < 3.0 * se_y, "var y {vy} vs {ey}");
    assert!((cxy - ec).abs() < 3.0 * se_c, "cov {cxy} vs {ec}");
}

#[test]
fn scheme_moments_approach_continuum() {
    // D² t, D² t³/3, D² t²/2 at t = 1 s; the O(Δt/t) gap is the scheme's
    let (vx, vy, c) = scheme_moments(5.0, 0.01, 100);
    assert!((vx - 25.0).abs() < 1e-12);
    assert!((vy / (25.0 / 3.0) - 1.0).abs() < 0.016);
    assert!((c / 12.5 - 1.0).abs() < 0.011);
    let (_, vy, _) = scheme_moments(5.0, 0.001, 1000);
    assert!((vy / (25.0 / 3.0) - 1.0).abs() < 0.0016);
}

#[test]
fn x_marginal_passes_kolmogorov_smirnov() {
    let cfg = SimConfig {
        seed: 4,
        ..Default::default()
    };
    let n = 20_000;
    let ens = step_ensemble(&ParticleEnsemble::point_mass(n, 0.0, 0.0), &cfg, 50).unwrap();
    let law = GaussianLaw::at(0.5, cfg.diffusion);
    let mut xs = ens.xs.clone();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = norm_cdf(x / law.sigma_x);
            (f - i as f64 / nf)
                .abs()
                .max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value
    assert!(d < 1.63 / nf.sqrt(), "KS statistic {d}");
}

#[test]
fn correlation_of_point_source_tends_to_root_three_over_two() {
    let cfg = SimConfig {
        seed: 2,
        ..Default::default()
    };
    let ens = step_ensemble(&ParticleEnsemble::point_mass(50_000, 0.0, 0.0), &cfg, 300).unwrap();
    let rho = ensemble_moments(&ens).unwrap().rho.unwrap();
    assert!((rho - 3f64.sqrt() / 2.0).abs() < 0.01, "{rho}");
}

#[test]
fn noise_is_keyed_by_start_time() {
    let cfg = SimConfig {
        seed: 9,
        ..Default::default()
    };
    let start = ParticleEnsemble::point_mass(1000, 0.5, -0.5);
    let mut later = start.clone();
    later.time = 1.0;
    let a = step_ensemble(&start, &cfg, 15).unwrap();
    let b = step_ensemble(&start, &cfg, 15).unwrap();
    let c = step_ensemble(&later, &cfg, 15).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.xs, c.xs);
    assert!((c.time - 1.15).abs() < 1e-12);
}

#[test]
fn particles_are_independent_of_ensemble_size() {
    let cfg = SimConfig {
        seed: 5,
        ..Default::default()
    };
    let small = step_ensemble(&ParticleEnsemble::point_mass(10, 0.0, 0.0), &cfg, 20).unwrap();
    let large = step_ensemble(&ParticleEnsemble::point_mass(100, 0.0, 0.0), &cfg, 20).unwrap();
    assert_eq!(small.xs[..], large.xs[..10]);
    assert_eq!(small.ys[..], large.ys[..10]);
}
